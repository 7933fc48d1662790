#include "persistlab/rv_toolkit.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "persistlab/error.hpp"
#include "persistlab/quadrature.hpp"

namespace persistlab::rv {

namespace {

// Panel budget: the per-panel tolerance is tol / kPanelShare, and the final
// partial panel gets tol / 2. The breakpoint sequence reaches 1e25 in fewer
// than kPanelShare / 2 panels.
constexpr double kPanelShare = 2048.0;
constexpr int kPanelMaxIntervals = 200;

void check_finite(double value, double x) {
    if (!std::isfinite(value)) {
        throw Error(ErrorKind::NonFinite, "rho evaluated to a non-finite value at x=" + std::to_string(x));
    }
}

double evaluate(Family family, double alpha, const std::vector<double>& p, double x) {
    switch (family) {
        case Family::PowerLaw: return std::pow(1.0 + x / p[0], -alpha);
        case Family::PowerLog: return std::pow(1.0 + x, -alpha) * std::pow(1.0 + std::log1p(x), -p[0]);
        case Family::Reciprocal: return 1.0 / (1.0 + x);
        case Family::Exponentialized:
            return std::pow(1.0 + x, -alpha) * std::exp(-p[0] * std::pow(std::log1p(x), p[1]));
    }
    return 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// PrimitiveTable

PrimitiveTable::PrimitiveTable(std::function<double(double)> integrand, double tolerance)
    : integrand_(std::move(integrand)), tolerance_(tolerance) {
    require(tolerance > 0.0, ErrorKind::InvalidArgument, "primitive tolerance must be positive");
}

double PrimitiveTable::next_breakpoint(double b) {
    if (b < 8.0) return b + 0.5;
    return b + b / 16.0;
}

double PrimitiveTable::partial(double from, double to) const {
    if (to <= from) return 0.0;
    const auto r = quad::integrate(integrand_, from, to, tolerance_ / 2.0, kPanelMaxIntervals);
    return r.value;
}

void PrimitiveTable::extend_to(double t) const {
    {
        std::shared_lock lock(mutex_);
        if (breakpoints_.back() >= t) return;
    }
    std::unique_lock lock(mutex_);
    while (breakpoints_.back() < t) {
        const double a = breakpoints_.back();
        const double b = next_breakpoint(a);
        const auto r = quad::integrate(integrand_, a, b, tolerance_ / kPanelShare, kPanelMaxIntervals);
        breakpoints_.push_back(b);
        values_.push_back(values_.back() + r.value);
        errors_.push_back(errors_.back() + r.error);
    }
}

double PrimitiveTable::operator()(double t) const {
    require(t >= 0.0, ErrorKind::InvalidArgument, "primitive requires t >= 0");
    if (!std::isfinite(t)) throw Error(ErrorKind::InvalidArgument, "primitive requires finite t; use primitive_infty");
    if (t == 0.0) return 0.0;
    extend_to(t);
    double base_point = 0.0;
    double base_value = 0.0;
    {
        std::shared_lock lock(mutex_);
        auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
        const auto idx = static_cast<std::size_t>(std::distance(breakpoints_.begin(), it)) - 1;
        base_point = breakpoints_[idx];
        base_value = values_[idx];
    }
    return base_value + partial(base_point, t);
}

double PrimitiveTable::error_bound(double t) const {
    extend_to(t);
    std::shared_lock lock(mutex_);
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
    const auto idx = static_cast<std::size_t>(std::distance(breakpoints_.begin(), it)) - 1;
    return errors_[idx] + tolerance_ / 2.0;
}

PrimitiveTable::Snapshot PrimitiveTable::snapshot() const {
    std::shared_lock lock(mutex_);
    return {breakpoints_, values_};
}

// ---------------------------------------------------------------------------
// RegVarFn

std::string to_string(Family family) {
    switch (family) {
        case Family::PowerLaw: return "PowerLaw";
        case Family::PowerLog: return "PowerLog";
        case Family::Reciprocal: return "Reciprocal";
        case Family::Exponentialized: return "Exponentialized";
    }
    return "Unknown";
}

Family family_from_string(const std::string& name) {
    if (name == "PowerLaw") return Family::PowerLaw;
    if (name == "PowerLog") return Family::PowerLog;
    if (name == "Reciprocal") return Family::Reciprocal;
    if (name == "Exponentialized") return Family::Exponentialized;
    throw Error(ErrorKind::InvalidArgument, "unknown regularly varying family '" + name + "'");
}

RegVarFn::RegVarFn(Family family, double alpha, std::vector<double> params)
    : family_(family), alpha_(alpha), params_(std::move(params)) {
    require(std::isfinite(alpha) && alpha >= 0.0, ErrorKind::InvalidArgument, "alpha must be finite and >= 0");
    // The table captures parameters by value so copies of RegVarFn can share it.
    table_ = std::make_shared<PrimitiveTable>(
        [fam = family_, a = alpha_, p = params_](double x) {
            const double v = evaluate(fam, a, p, x);
            check_finite(v, x);
            return v;
        },
        kDefaultTolerance);
}

RegVarFn RegVarFn::power_law(double alpha, double scale) {
    require(scale > 0.0 && std::isfinite(scale), ErrorKind::InvalidArgument, "PowerLaw scale must be positive");
    return RegVarFn(Family::PowerLaw, alpha, {scale});
}

RegVarFn RegVarFn::power_log(double alpha, double beta) {
    require(std::isfinite(beta) && beta >= -alpha, ErrorKind::InvalidArgument,
            "PowerLog needs beta >= -alpha so that rho <= 1");
    return RegVarFn(Family::PowerLog, alpha, {beta});
}

RegVarFn RegVarFn::reciprocal() { return RegVarFn(Family::Reciprocal, 1.0, {}); }

RegVarFn RegVarFn::exponentialized(double alpha, double c, double kappa) {
    require(c >= 0.0 && std::isfinite(c), ErrorKind::InvalidArgument, "Exponentialized c must be >= 0");
    require(kappa > 0.0 && kappa < 1.0, ErrorKind::InvalidArgument, "Exponentialized kappa must lie in (0,1)");
    return RegVarFn(Family::Exponentialized, alpha, {c, kappa});
}

double RegVarFn::operator()(double x) const {
    require(x >= 0.0, ErrorKind::InvalidArgument, "rho is defined on [0, inf)");
    const double v = evaluate(family_, alpha_, params_, x);
    check_finite(v, x);
    return v;
}

double RegVarFn::slowly_varying(double x) const {
    require(x > 0.0, ErrorKind::InvalidArgument, "L(x) needs x > 0");
    // Evaluated as (x/(1+x))^alpha times the log factor, avoiding x^alpha overflow.
    switch (family_) {
        case Family::PowerLaw: return std::pow(x / (1.0 + x / params_[0]), alpha_);
        case Family::PowerLog: return std::pow(x / (1.0 + x), alpha_) * std::pow(1.0 + std::log1p(x), -params_[0]);
        case Family::Reciprocal: return x / (1.0 + x);
        case Family::Exponentialized:
            return std::pow(x / (1.0 + x), alpha_) * std::exp(-params_[0] * std::pow(std::log1p(x), params_[1]));
    }
    return 0.0;
}

bool RegVarFn::completely_monotone() const {
    return family_ == Family::PowerLaw || family_ == Family::Reciprocal;
}

bool RegVarFn::vanishes_at_infinity() const {
    if (alpha_ > 0.0) return true;
    switch (family_) {
        case Family::PowerLaw: return false;
        case Family::PowerLog: return params_[0] > 0.0;
        case Family::Reciprocal: return true;
        case Family::Exponentialized: return params_[0] > 0.0;
    }
    return false;
}

nlohmann::json RegVarFn::to_json() const {
    nlohmann::json params = nlohmann::json::object();
    switch (family_) {
        case Family::PowerLaw: params["scale"] = params_[0]; break;
        case Family::PowerLog: params["beta"] = params_[0]; break;
        case Family::Reciprocal: break;
        case Family::Exponentialized:
            params["c"] = params_[0];
            params["kappa"] = params_[1];
            break;
    }
    return {{"family", to_string(family_)}, {"alpha", alpha_}, {"params", params}};
}

RegVarFn RegVarFn::from_json(const nlohmann::json& spec) {
    try {
        const Family fam = family_from_string(spec.at("family").get<std::string>());
        const nlohmann::json params = spec.value("params", nlohmann::json::object());
        switch (fam) {
            case Family::PowerLaw: return power_law(spec.at("alpha").get<double>(), params.value("scale", 1.0));
            case Family::PowerLog: return power_log(spec.at("alpha").get<double>(), params.at("beta").get<double>());
            case Family::Reciprocal: return reciprocal();
            case Family::Exponentialized:
                return exponentialized(spec.at("alpha").get<double>(), params.at("c").get<double>(),
                                       params.at("kappa").get<double>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("malformed family record: ") + e.what());
    }
    throw Error(ErrorKind::InvalidArgument, "malformed family record");
}

// ---------------------------------------------------------------------------
// Operations

double primitive(const RegVarFn& f, double t, double tol) {
    require(tol > 0.0, ErrorKind::InvalidArgument, "tolerance must be positive");
    require(t >= 0.0, ErrorKind::InvalidArgument, "primitive requires t >= 0");
    const auto& table = f.primitive_table();
    if (tol >= table.tolerance()) return table(t);
    PrimitiveTable fresh([&f](double x) { return f(x); }, tol);
    return fresh(t);
}

TailResult primitive_infty(const RegVarFn& f, double tol) {
    require(tol > 0.0, ErrorKind::InvalidArgument, "tolerance must be positive");
    const double alpha = f.alpha();
    TailResult out;
    if (alpha < 1.0) {
        out.divergent = true;
        return out;
    }
    if (alpha == 1.0) {
        bool divergent = false;
        switch (f.family()) {
            case Family::PowerLaw:
            case Family::Reciprocal: divergent = true; break;
            case Family::PowerLog: divergent = f.param(0) <= 1.0; break;
            case Family::Exponentialized: divergent = f.param(0) == 0.0; break;
        }
        if (divergent) {
            out.divergent = true;
            return out;
        }
        throw Error(ErrorKind::Undecided,
                    "alpha = 1 with an integrable slowly varying factor: the Karamata tail cannot close I(inf)");
    }
    auto estimate = [&](double b) {
        return primitive(f, b, std::min(tol, kDefaultTolerance)) + b * f(b) / (alpha - 1.0);
    };
    double b = 64.0;
    double previous = estimate(b);
    double diff = kInfinity;
    while (b < 1e15) {
        const double next_b = 4.0 * b;
        const double next = estimate(next_b);
        diff = std::abs(next - previous);
        previous = next;
        b = next_b;
        if (diff <= tol) break;
    }
    out.value = previous;
    out.error = diff + f.primitive_table().error_bound(b);
    out.cutoff = b;
    return out;
}

double decay_rate(const RegVarFn& f, double t) {
    const double integral = primitive(f, t);
    if (integral <= 1.0) {
        throw Error(ErrorKind::DomainTooSmall, "a_rho needs I(t) > 1, got I(" + std::to_string(t) +
                                                   ")=" + std::to_string(integral));
    }
    return t * std::log(integral) / integral;
}

double rv_index_check(const RegVarFn& f, std::span<const double> lambdas, std::span<const double> t_grid) {
    double worst = 0.0;
    for (double lambda : lambdas) {
        require(lambda > 0.0, ErrorKind::InvalidArgument, "lambda must be positive");
        const double target = std::pow(lambda, -f.alpha());
        for (double t : t_grid) {
            const double deviation = std::abs(f(lambda * t) / f(t) - target);
            worst = std::max(worst, deviation);
        }
    }
    return worst;
}

double karamata_limit(const RegVarFn& f) {
    require(f.alpha() != 1.0, ErrorKind::Unsupported, "Karamata ratio excludes alpha = 1");
    return 1.0 / std::abs(1.0 - f.alpha());
}

double karamata_ratio(const RegVarFn& f, double a, double b) {
    const double alpha = f.alpha();
    require(alpha != 1.0, ErrorKind::Unsupported, "Karamata ratio excludes alpha = 1");
    require(b > 0.0 && std::isfinite(b), ErrorKind::InvalidArgument, "b must be positive and finite");
    const double exponent = 1.0 - alpha;
    const double lb = f.slowly_varying(b);
    if (alpha < 1.0) {
        require(a >= 0.0 && a < b, ErrorKind::InvalidArgument, "alpha < 1 regime needs 0 <= a < b");
        const double num = primitive(f, b) - primitive(f, a);
        const double den = lb * (std::pow(b, exponent) - std::pow(a, exponent));
        return num / den;
    }
    require(a > b, ErrorKind::InvalidArgument, "alpha > 1 regime needs a > b");
    // Integrate [b, a] directly on doubling panels: I(a) - I(b) cancels
    // below the absolute tolerance once b is large.
    const double scale = b * f(b);
    double num = 0.0;
    double lo = b;
    for (int k = 0; k < 64 && lo < a; ++k) {
        const double hi = std::min(2.0 * lo, a);
        num += quad::integrate([&](double x) { return f(x); }, lo, hi, 1e-13 * scale).value;
        lo = hi;
    }
    double a_term = 0.0;
    if (std::isinf(a)) {
        num += lo * f(lo) / (alpha - 1.0);  // Karamata tail, relative error ~ 2^-64
    } else {
        a_term = std::pow(a, exponent);
    }
    return num / (lb * (std::pow(b, exponent) - a_term));
}

double karamata_sup_deviation(const RegVarFn& f, double b, int points) {
    require(points >= 2, ErrorKind::InvalidArgument, "need at least two a-points");
    const double limit = karamata_limit(f);
    double worst = 0.0;
    if (f.alpha() < 1.0) {
        for (int k = 0; k < points; ++k) {
            const double a = b * static_cast<double>(k) / points;
            worst = std::max(worst, std::abs(karamata_ratio(f, a, b) - limit));
        }
    } else {
        worst = std::abs(karamata_ratio(f, kInfinity, b) - limit);
        for (int k = 1; k < points; ++k) {
            const double a = b * std::pow(2.0, 0.25 * k);
            worst = std::max(worst, std::abs(karamata_ratio(f, a, b) - limit));
        }
    }
    return worst;
}

double riemann_limit(const RegVarFn& f, double mu, double T) {
    require(mu > 0.0, ErrorKind::InvalidArgument, "mu must be positive");
    require(T > 0.0, ErrorKind::InvalidArgument, "T must be positive");
    const double alpha = f.alpha();
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::Unsupported, "Riemann-sum limit needs alpha in [0,1]");
    if (alpha == 0.0) {
        require(f.vanishes_at_infinity(), ErrorKind::Unsupported, "alpha = 0 needs rho -> 0");
    }
    if (alpha == 1.0) {
        bool divergent = false;
        try {
            divergent = primitive_infty(f).divergent;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Undecided) throw;
        }
        require(divergent, ErrorKind::Unsupported, "alpha = 1 needs I(inf) = inf");
    }
    const double spacing = mu * primitive(f, T);
    const auto terms = static_cast<long long>(std::ceil(T / spacing));
    double sum = 0.0;
    for (long long l = 1; l <= terms; ++l) sum += f(static_cast<double>(l) * spacing);
    return sum;
}

}  // namespace persistlab::rv
