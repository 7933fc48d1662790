#pragma once

// Regularly varying correlation tails rho, their primitives I(t) = int_0^t rho,
// the decay-rate functional a(t) = t log I(t) / I(t), and numeric checks of
// the Karamata-type limits these objects satisfy.

#include <functional>
#include <limits>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace persistlab::rv {

inline constexpr double kDefaultTolerance = 1e-10;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Append-only cumulative integral of a positive function on [0, inf).
// Breakpoints are a fixed deterministic sequence (step 1/2 up to 8, then
// geometric with ratio 17/16), so I(t) is bit-identical regardless of the
// order in which callers query it. Safe for concurrent readers; appends
// take an exclusive lock.
class PrimitiveTable {
public:
    PrimitiveTable(std::function<double(double)> integrand, double tolerance);

    double operator()(double t) const;
    double tolerance() const { return tolerance_; }
    // Accumulated quadrature error bound at t.
    double error_bound(double t) const;

    struct Snapshot {
        std::vector<double> breakpoints;
        std::vector<double> values;
    };
    Snapshot snapshot() const;

private:
    static double next_breakpoint(double b);
    void extend_to(double t) const;
    double partial(double from, double to) const;

    std::function<double(double)> integrand_;
    double tolerance_;
    mutable std::shared_mutex mutex_;
    mutable std::vector<double> breakpoints_{0.0};
    mutable std::vector<double> values_{0.0};
    mutable std::vector<double> errors_{0.0};
};

enum class Family { PowerLaw, PowerLog, Reciprocal, Exponentialized };

std::string to_string(Family family);
Family family_from_string(const std::string& name);

// A correlation tail rho: [0, inf) -> (0, 1], regularly varying of order -alpha.
//
//   PowerLaw(alpha, scale)          (1 + x/scale)^-alpha
//   PowerLog(alpha, beta)           (1 + x)^-alpha (1 + log(1 + x))^-beta,  beta >= -alpha
//   Reciprocal                      1 / (1 + x)
//   Exponentialized(alpha, c, k)    (1 + x)^-alpha exp(-c log(1 + x)^k),    c >= 0, k in (0, 1)
class RegVarFn {
public:
    static RegVarFn power_law(double alpha, double scale = 1.0);
    static RegVarFn constant() { return power_law(0.0); }
    static RegVarFn power_log(double alpha, double beta);
    static RegVarFn reciprocal();
    static RegVarFn exponentialized(double alpha, double c, double kappa);

    static RegVarFn from_json(const nlohmann::json& spec);
    nlohmann::json to_json() const;

    Family family() const { return family_; }
    double alpha() const { return alpha_; }
    double param(std::size_t i) const { return params_.at(i); }

    double operator()(double x) const;
    // L(x) = x^alpha rho(x), slowly varying.
    double slowly_varying(double x) const;
    // Mixture of decaying exponentials, so rho(|s - t|) is positive definite.
    bool completely_monotone() const;
    // rho(x) -> 0 as x -> inf.
    bool vanishes_at_infinity() const;

    // Cached primitive at the default tolerance; shared between copies.
    const PrimitiveTable& primitive_table() const { return *table_; }

private:
    RegVarFn(Family family, double alpha, std::vector<double> params);

    Family family_;
    double alpha_;
    std::vector<double> params_;
    std::shared_ptr<PrimitiveTable> table_;
};

// I(t) with absolute error <= tol. Requests at or above the default tolerance
// are served from the cached table.
double primitive(const RegVarFn& f, double t, double tol = kDefaultTolerance);

struct TailResult {
    bool divergent = false;
    double value = kInfinity;  // I(inf) when finite
    double error = 0.0;
    double cutoff = 0.0;       // where the Karamata tail b rho(b)/(alpha-1) was attached
};

// I(inf). alpha > 1: quadrature to a cutoff plus the Karamata tail, with the
// cutoff pushed out until successive estimates agree to tol. alpha < 1:
// divergent. alpha == 1: divergent when the slowly varying factor has a
// positive limit or decays at most like 1/log; otherwise Undecided.
TailResult primitive_infty(const RegVarFn& f, double tol = kDefaultTolerance);

// a(t) = t log I(t) / I(t). Throws DomainTooSmall when I(t) <= 1.
double decay_rate(const RegVarFn& f, double t);

// max over lambda, t of |rho(lambda t)/rho(t) - lambda^-alpha|.
double rv_index_check(const RegVarFn& f, std::span<const double> lambdas,
                      std::span<const double> t_grid);

// Karamata-type ratio (I(b) - I(a)) / (L(b) (b^(1-alpha) - a^(1-alpha))), oriented so it
// is positive in both regimes: alpha < 1 needs 0 <= a < b, alpha > 1 needs
// b < a <= inf (a = inf uses I(inf)). Limit is 1/|1 - alpha|.
double karamata_ratio(const RegVarFn& f, double a, double b);
double karamata_limit(const RegVarFn& f);

// sup over a in a geometric grid of the regime's a-range of |ratio - limit|.
double karamata_sup_deviation(const RegVarFn& f, double b, int points = 64);

// sum_{l=1}^{ceil(T/M)} rho(l M) with M = mu I(T); tends to 1/mu.
double riemann_limit(const RegVarFn& f, double mu, double T);

}  // namespace persistlab::rv
