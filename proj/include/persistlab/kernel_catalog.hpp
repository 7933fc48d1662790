#pragma once

// Unit-variance correlation kernels A(s, t), Gram assembly with a bounded
// jitter policy, and the conditional Gaussian law given observed values.

#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "persistlab/lattice_walk.hpp"
#include "persistlab/rv_toolkit.hpp"

namespace persistlab::kernels {

enum class Variant { StationaryCM, Interface, LimitInterface, Lamperti, OU, FouStationary, LatticeGamma };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

// Immutable value type; copies share the underlying caches.
class Kernel {
public:
    // rho(|s - t|) for a completely monotone tail (positive definite by construction).
    static Kernel stationary_cm(rv::RegVarFn rho);
    // (I(s+t) - I(|s-t|)) / sqrt(I(2s) I(2t)) on [t_min, inf).
    static Kernel interface(rv::RegVarFn rho, double t_min = 1.0);
    // 1 - I(|s-t|) / I(inf); throws Divergent when I(inf) = inf.
    static Kernel limit_interface(rv::RegVarFn rho);
    // cosh(tau/2)^(1-g) - sinh(tau/2)^(1-g), g in [0, 1), stationary in log-time.
    static Kernel lamperti(double gamma);
    // exp(-rate |s - t|).
    static Kernel ou(double rate);
    // Stationary fractional OU correlation, H in (1/2, 1).
    static Kernel fou(double hurst);
    // Normalized lattice interface covariance on [t_min, inf).
    static Kernel lattice_gamma(walk::JumpKernel q, double t_min = 1.0);

    // {"variant": "...", "params": {...}}.
    static Kernel from_json(const nlohmann::json& spec);
    nlohmann::json to_json() const;

    Variant variant() const { return variant_; }
    double t_min() const { return t_min_; }
    // True when A(s, t) depends on |s - t| only.
    bool stationary() const;
    double corr(double s, double t) const;
    // A(0, tau) for stationary variants.
    double stationary_corr(double tau) const;

    const rv::RegVarFn* rho() const { return rho_.get(); }
    const walk::LatticeWalk* walk() const { return walk_.get(); }
    double param() const { return param_; }

private:
    Kernel() = default;

    Variant variant_ = Variant::OU;
    double param_ = 1.0;  // rate, gamma or hurst
    double t_min_ = -rv::kInfinity;
    double total_ = rv::kInfinity;  // I(inf) for LimitInterface
    std::shared_ptr<const rv::RegVarFn> rho_;
    std::shared_ptr<const walk::LatticeWalk> walk_;
};

inline double corr(const Kernel& k, double s, double t) { return k.corr(s, t); }

// Normalizer H Gamma(2H) of the fractional OU correlation, by double quadrature.
double fou_variance(double hurst);
// Lambda_H(0, tau).
double fou_corr(double hurst, double tau);

struct GramResult {
    Eigen::MatrixXd matrix;    // correlation matrix plus jitter_used on the diagonal
    Eigen::MatrixXd cholesky;  // lower triangular, matrix = L L^T
    double jitter_used = 0.0;
};

inline constexpr double kDefaultJitterCap = 1e-8;

// Correlation matrix on a strictly increasing grid and its Cholesky factor.
// On failure the diagonal jitter starts at 1e-12 and doubles up to the cap.
Eigen::MatrixXd correlation_matrix(const Kernel& k, const std::vector<double>& grid);
GramResult gram(const Kernel& k, const std::vector<double>& grid, double jitter_cap = kDefaultJitterCap);
// The jitter loop on its own, for an arbitrary symmetric matrix.
GramResult factor_with_jitter(const Eigen::MatrixXd& base, double jitter_cap = kDefaultJitterCap);

struct ConditionalLaw {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

// Law of the path on the grid given Z(grid[i]) = values for i in observed.
ConditionalLaw conditional_law(const Kernel& k, const std::vector<double>& grid,
                               const std::vector<int>& observed, const std::vector<double>& values);

struct VerificationWindow {
    double eta = 0.5;        // lower-bound pairs: tau <= eta t
    double eta_tilde = 0.5;  // upper-bound pairs: tau <= eta_tilde t
    std::vector<double> t_grid;
    std::vector<double> tau_grid;
};

struct EnvelopeBounds {
    double sup = 0.0;  // max A(t, t+tau) / rho(tau) over tau <= eta_tilde t
    double inf = rv::kInfinity;  // min over tau <= eta t
    int pairs = 0;
};

EnvelopeBounds envelope_check(const Kernel& k, const std::function<double(double)>& rho,
                              const VerificationWindow& window);

// Comma-separated rows, full precision.
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);

}  // namespace persistlab::kernels
