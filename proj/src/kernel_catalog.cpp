#include "persistlab/kernel_catalog.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>

#include <Eigen/Cholesky>

#include "persistlab/error.hpp"
#include "persistlab/quadrature.hpp"

namespace persistlab::kernels {

namespace {

constexpr double kFouCut = 40.0;  // e^-40 truncation of the inner integrals
constexpr double kFouTol = 1e-12;

void check_hurst(double hurst) {
    require(hurst > 0.5 && hurst < 1.0, ErrorKind::InvalidArgument, "Hurst index must lie in (1/2, 1)");
}

// int_a^b e^{shift + sign w} w^{2H-2} dw with w = x^k, k = 1/(2H-1), which
// turns the integrable singularity at w = 0 into a smooth integrand.
double weighted_gamma_segment(double hurst, double a, double b, double shift, double sign = -1.0) {
    const double k = 1.0 / (2.0 * hurst - 1.0);
    const double lo = std::pow(a, 1.0 / k);
    const double hi = std::pow(b, 1.0 / k);
    return quad::integrate([&](double x) { return k * std::exp(shift + sign * std::pow(x, k)); }, lo, hi, kFouTol)
        .value;
}

// R(s) = H(2H-1) int_0^40 e^{-v} (v + s)^{2H-2} dv.
double fou_cross(double hurst, double s) {
    return hurst * (2.0 * hurst - 1.0) * weighted_gamma_segment(hurst, s, s + kFouCut, s);
}

double log_cosh(double x) { return x + std::log1p(std::exp(-2.0 * x)) - std::log(2.0); }
double log_tanh(double x) {
    const double e = std::exp(-2.0 * x);
    return std::log1p(-2.0 * e / (1.0 + e));
}

double lamperti_corr(double gamma, double tau) {
    const double x = 0.5 * std::abs(tau);
    if (x == 0.0) return 1.0;
    const double p = 1.0 - gamma;
    // cosh^p - sinh^p = cosh^p (1 - tanh^p)
    return std::exp(p * log_cosh(x)) * -std::expm1(p * log_tanh(x));
}

bool nearly_uniform(const std::vector<double>& grid, double& step) {
    if (grid.size() < 3) return false;
    step = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
    const double scale = std::max(std::abs(grid.front()), std::abs(grid.back()));
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (std::abs(grid[i] - grid.front() - step * static_cast<double>(i)) > 1e-12 * std::max(scale, 1.0)) return false;
    }
    return true;
}

void check_grid(const Kernel& k, const std::vector<double>& grid) {
    require(!grid.empty(), ErrorKind::InvalidArgument, "grid must be non-empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        require(std::isfinite(grid[i]), ErrorKind::NonFinite, "grid point is not finite");
        if (i > 0) require(grid[i] > grid[i - 1], ErrorKind::InvalidArgument, "grid must be strictly increasing");
    }
    require(grid.front() >= k.t_min() - 1e-12, ErrorKind::InvalidArgument,
            "grid starts below the kernel domain t_min = " + std::to_string(k.t_min()));
}

}  // namespace

std::string to_string(Variant v) {
    switch (v) {
        case Variant::StationaryCM: return "stationary_cm";
        case Variant::Interface: return "interface";
        case Variant::LimitInterface: return "limit_interface";
        case Variant::Lamperti: return "lamperti";
        case Variant::OU: return "ou";
        case Variant::FouStationary: return "fou";
        case Variant::LatticeGamma: return "lattice_gamma";
    }
    return "unknown";
}

Variant variant_from_string(const std::string& name) {
    for (Variant v : {Variant::StationaryCM, Variant::Interface, Variant::LimitInterface, Variant::Lamperti,
                      Variant::OU, Variant::FouStationary, Variant::LatticeGamma}) {
        if (to_string(v) == name) return v;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown kernel variant '" + name + "'");
}

// ---------------------------------------------------------------------------
// Construction

Kernel Kernel::stationary_cm(rv::RegVarFn rho) {
    require(rho.completely_monotone(), ErrorKind::InvalidArgument,
            "stationary kernels need a completely monotone rho family");
    Kernel k;
    k.variant_ = Variant::StationaryCM;
    k.param_ = rho.alpha();
    k.rho_ = std::make_shared<const rv::RegVarFn>(std::move(rho));
    return k;
}

Kernel Kernel::interface(rv::RegVarFn rho, double t_min) {
    require(t_min > 0.0, ErrorKind::InvalidArgument, "interface kernel needs t_min > 0");
    Kernel k;
    k.variant_ = Variant::Interface;
    k.param_ = rho.alpha();
    k.t_min_ = t_min;
    k.rho_ = std::make_shared<const rv::RegVarFn>(std::move(rho));
    return k;
}

Kernel Kernel::limit_interface(rv::RegVarFn rho) {
    const auto tail = rv::primitive_infty(rho);
    if (tail.divergent) throw Error(ErrorKind::Divergent, "limit interface kernel needs a finite I(inf)");
    Kernel k;
    k.variant_ = Variant::LimitInterface;
    k.param_ = rho.alpha();
    k.total_ = tail.value;
    k.rho_ = std::make_shared<const rv::RegVarFn>(std::move(rho));
    return k;
}

Kernel Kernel::lamperti(double gamma) {
    require(gamma >= 0.0 && gamma < 1.0, ErrorKind::InvalidArgument, "Lamperti kernel needs gamma in [0, 1)");
    Kernel k;
    k.variant_ = Variant::Lamperti;
    k.param_ = gamma;
    return k;
}

Kernel Kernel::ou(double rate) {
    require(rate > 0.0 && std::isfinite(rate), ErrorKind::InvalidArgument, "OU rate must be positive");
    Kernel k;
    k.variant_ = Variant::OU;
    k.param_ = rate;
    return k;
}

Kernel Kernel::fou(double hurst) {
    check_hurst(hurst);
    fou_variance(hurst);  // warm the normalizer cache
    Kernel k;
    k.variant_ = Variant::FouStationary;
    k.param_ = hurst;
    return k;
}

Kernel Kernel::lattice_gamma(walk::JumpKernel q, double t_min) {
    require(t_min > 0.0, ErrorKind::InvalidArgument, "lattice kernel needs t_min > 0");
    Kernel k;
    k.variant_ = Variant::LatticeGamma;
    k.param_ = q.dimension();
    k.t_min_ = t_min;
    k.walk_ = std::make_shared<const walk::LatticeWalk>(std::move(q));
    return k;
}

Kernel Kernel::from_json(const nlohmann::json& spec) {
    try {
        const Variant v = variant_from_string(spec.at("variant").get<std::string>());
        const nlohmann::json params = spec.value("params", nlohmann::json::object());
        switch (v) {
            case Variant::StationaryCM: return stationary_cm(rv::RegVarFn::from_json(params.at("rho")));
            case Variant::Interface:
                return interface(rv::RegVarFn::from_json(params.at("rho")), params.value("t_min", 1.0));
            case Variant::LimitInterface: return limit_interface(rv::RegVarFn::from_json(params.at("rho")));
            case Variant::Lamperti: return lamperti(params.at("gamma").get<double>());
            case Variant::OU: return ou(params.value("rate", 1.0));
            case Variant::FouStationary: return fou(params.at("hurst").get<double>());
            case Variant::LatticeGamma:
                return lattice_gamma(walk::JumpKernel::from_json(params.at("jumps")), params.value("t_min", 1.0));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("malformed kernel spec: ") + e.what());
    }
    throw Error(ErrorKind::InvalidArgument, "malformed kernel spec");
}

nlohmann::json Kernel::to_json() const {
    nlohmann::json params = nlohmann::json::object();
    switch (variant_) {
        case Variant::StationaryCM:
        case Variant::LimitInterface: params["rho"] = rho_->to_json(); break;
        case Variant::Interface:
            params["rho"] = rho_->to_json();
            params["t_min"] = t_min_;
            break;
        case Variant::Lamperti: params["gamma"] = param_; break;
        case Variant::OU: params["rate"] = param_; break;
        case Variant::FouStationary: params["hurst"] = param_; break;
        case Variant::LatticeGamma:
            params["jumps"] = walk_->kernel().to_json();
            params["t_min"] = t_min_;
            break;
    }
    return {{"variant", to_string(variant_)}, {"params", params}};
}

// ---------------------------------------------------------------------------
// Evaluation

bool Kernel::stationary() const {
    return variant_ != Variant::Interface && variant_ != Variant::LatticeGamma;
}

double Kernel::stationary_corr(double tau) const {
    require(stationary(), ErrorKind::InvalidArgument, "kernel is not stationary");
    tau = std::abs(tau);
    if (tau == 0.0) return 1.0;
    switch (variant_) {
        case Variant::StationaryCM: return (*rho_)(tau);
        case Variant::LimitInterface: return std::max(0.0, 1.0 - rv::primitive(*rho_, tau) / total_);
        case Variant::Lamperti: return lamperti_corr(param_, tau);
        case Variant::OU: return std::exp(-param_ * tau);
        case Variant::FouStationary: return fou_corr(param_, tau);
        default: break;
    }
    throw Error(ErrorKind::InvalidArgument, "kernel is not stationary");
}

double Kernel::corr(double s, double t) const {
    require(std::isfinite(s) && std::isfinite(t), ErrorKind::NonFinite, "kernel arguments must be finite");
    if (stationary()) return stationary_corr(t - s);
    require(s >= t_min_ - 1e-12 && t >= t_min_ - 1e-12, ErrorKind::InvalidArgument,
            "kernel arguments below t_min = " + std::to_string(t_min_));
    if (s == t) return 1.0;
    if (variant_ == Variant::LatticeGamma) return std::clamp(walk_->gamma_normalized(s, t), 0.0, 1.0);
    const auto& f = *rho_;
    const double num = rv::primitive(f, s + t) - rv::primitive(f, std::abs(s - t));
    const double den = std::sqrt(rv::primitive(f, 2.0 * s) * rv::primitive(f, 2.0 * t));
    return std::clamp(num / den, 0.0, 1.0);
}

double fou_variance(double hurst) {
    check_hurst(hurst);
    static std::mutex mutex;
    static std::map<double, double> cache;
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find(hurst); it != cache.end()) return it->second;
    }
    // H(2H-1) int_0^inf int_0^inf e^{-u-v} |u - v|^{2H-2} du dv; the inner
    // integral splits at u = v into a near and a far part.
    const double far = weighted_gamma_segment(hurst, 0.0, kFouCut, 0.0);
    auto inner = [&](double v) {
        const double near = v > 0.0 ? weighted_gamma_segment(hurst, 0.0, v, -v, 1.0) : 0.0;
        return std::exp(-v) * (near + std::exp(-v) * far);
    };
    const double value = hurst * (2.0 * hurst - 1.0) * quad::integrate(inner, 0.0, kFouCut, kFouTol).value;
    std::lock_guard lock(mutex);
    cache.emplace(hurst, value);
    return value;
}

double fou_corr(double hurst, double tau) {
    check_hurst(hurst);
    require(std::isfinite(tau), ErrorKind::NonFinite, "lag must be finite");
    tau = std::abs(tau);
    if (tau == 0.0) return 1.0;
    const double var = fou_variance(hurst);
    // e^{-(tau - s)} makes everything below tau - 60 negligible.
    const double from = std::max(0.0, tau - 60.0);
    const double conv =
        quad::integrate([&](double s) { return std::exp(s - tau) * fou_cross(hurst, s); }, from, tau, 1e-11).value;
    return std::exp(-tau) + conv / var;
}

// ---------------------------------------------------------------------------
// Gram matrices

Eigen::MatrixXd correlation_matrix(const Kernel& k, const std::vector<double>& grid) {
    check_grid(k, grid);
    const auto n = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXd m(n, n);
    double step = 0.0;
    if (k.stationary() && nearly_uniform(grid, step)) {
        std::vector<double> lag(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) lag[i] = k.stationary_corr(step * static_cast<double>(i));
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) m(i, j) = lag[static_cast<std::size_t>(std::abs(i - j))];
        }
        return m;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        m(i, i) = 1.0;
        for (Eigen::Index j = 0; j < i; ++j) {
            m(i, j) = k.corr(grid[static_cast<std::size_t>(j)], grid[static_cast<std::size_t>(i)]);
            m(j, i) = m(i, j);
        }
    }
    return m;
}

GramResult gram(const Kernel& k, const std::vector<double>& grid, double jitter_cap) {
    return factor_with_jitter(correlation_matrix(k, grid), jitter_cap);
}

GramResult factor_with_jitter(const Eigen::MatrixXd& base, double jitter_cap) {
    require(jitter_cap >= 0.0, ErrorKind::InvalidArgument, "jitter cap must be >= 0");
    GramResult out;
    double jitter = 0.0;
    while (true) {
        out.matrix = base;
        out.matrix.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(out.matrix);
        if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0) {
            out.cholesky = llt.matrixL();
            out.jitter_used = jitter;
            return out;
        }
        jitter = jitter == 0.0 ? 1e-12 : 2.0 * jitter;
        if (jitter > jitter_cap) {
            throw Error(ErrorKind::NotPositiveDefinite,
                        "correlation matrix of size " + std::to_string(base.rows()) +
                            " is not positive definite within jitter cap " + std::to_string(jitter_cap));
        }
    }
}

ConditionalLaw conditional_law(const Kernel& k, const std::vector<double>& grid, const std::vector<int>& observed,
                               const std::vector<double>& values) {
    require(observed.size() == values.size(), ErrorKind::InvalidArgument, "observed indices and values differ in length");
    const Eigen::MatrixXd a = correlation_matrix(k, grid);
    const auto n = a.rows();
    const auto m = static_cast<Eigen::Index>(observed.size());
    std::vector<int> sorted = observed;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorKind::InvalidArgument,
            "observed indices must be distinct");
    for (int i : observed) require(i >= 0 && i < n, ErrorKind::InvalidArgument, "observed index out of range");

    ConditionalLaw out;
    if (m == 0) {
        out.mean = Eigen::VectorXd::Zero(n);
        out.covariance = a;
        return out;
    }
    Eigen::MatrixXd block(m, m);
    Eigen::MatrixXd cross(n, m);
    Eigen::VectorXd z(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        z(j) = values[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < m; ++i) block(i, j) = a(observed[i], observed[j]);
        cross.col(j) = a.col(observed[j]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(block);
    require(llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 1e-10,
            ErrorKind::SingularBlock, "observed block of the correlation matrix is singular");
    out.mean = cross * llt.solve(z);
    out.covariance = a - cross * llt.solve(cross.transpose());
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
    return out;
}

EnvelopeBounds envelope_check(const Kernel& k, const std::function<double(double)>& rho,
                              const VerificationWindow& window) {
    EnvelopeBounds out;
    for (double t : window.t_grid) {
        for (double tau : window.tau_grid) {
            const bool upper = tau <= window.eta_tilde * t;
            const bool lower = tau <= window.eta * t;
            if (!upper && !lower) continue;
            const double ratio = k.corr(t, t + tau) / rho(tau);
            if (upper) out.sup = std::max(out.sup, ratio);
            if (lower) out.inf = std::min(out.inf, ratio);
            ++out.pairs;
        }
    }
    return out;
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
    const auto old = out.precision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out << ',';
            out << m(i, j);
        }
        out << '\n';
    }
    out.precision(old);
}

}  // namespace persistlab::kernels
