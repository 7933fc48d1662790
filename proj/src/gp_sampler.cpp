#include "persistlab/gp_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <boost/math/distributions/normal.hpp>
#include <unsupported/Eigen/FFT>

#include "persistlab/error.hpp"
#include "persistlab/parallel.hpp"
#include "persistlab/quadrature.hpp"
#include "persistlab/rng.hpp"

namespace persistlab::sampler {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

const boost::math::normal_distribution<double> kStdNormal;

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// log Phi(u) without underflow in the far left tail.
double log_norm_cdf(double u) {
    if (u > -35.0) return std::log(norm_cdf(u));
    const double inv2 = 1.0 / (u * u);
    return -0.5 * u * u - std::log(-u) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log1p(-inv2 + 3.0 * inv2 * inv2);
}

// Draw from N(0,1) conditioned on (-inf, u).
double truncated_draw(double u, double log_mass, Stream& rng) {
    const double v = rng.uniform();
    if (u > -35.0) {
        const double p = v * std::exp(log_mass);
        if (p <= 0.0) return u;
        return std::min(boost::math::quantile(kStdNormal, p), u);
    }
    // Exponential tail approximation beyond 35 standard deviations.
    return u + std::log(v) / -u;
}

MCEstimate from_log_weights(const std::vector<double>& log_w, Method method, std::uint64_t seed, int grid_size) {
    const auto n = static_cast<std::int64_t>(log_w.size());
    double top = -rv::kInfinity;
    for (double lw : log_w) top = std::max(top, lw);
    MCEstimate est;
    est.method = method;
    est.seed = seed;
    est.n = n;
    est.grid_size = grid_size;
    require(std::isfinite(top), ErrorKind::AllExceeded, "every importance weight vanished");
    double s1 = 0.0, s2 = 0.0;
    for (double lw : log_w) {
        const double w = std::exp(lw - top);
        s1 += w;
        s2 += w * w;
    }
    const double mean = s1 / static_cast<double>(n);
    const double var = n > 1 ? std::max(0.0, (s2 / static_cast<double>(n) - mean * mean) * n / (n - 1.0)) : 0.0;
    const double se = std::sqrt(var / static_cast<double>(n));
    est.log_p = top + std::log(mean);
    est.p_hat = std::exp(est.log_p);
    est.rel_error = se / mean;
    est.std_error = est.p_hat * est.rel_error;
    return est;
}

void check_count(std::int64_t n) { require(n >= 1, ErrorKind::InvalidArgument, "replicate count must be >= 1"); }

// Eigenvalues of the circulant embedding of the first row; empty when the
// embedding is not PSD.
std::vector<double> circulant_eigenvalues(const kernels::Kernel& k, double step, int m) {
    const int big = 2 * (m - 1);
    std::vector<std::complex<double>> row(static_cast<std::size_t>(big));
    for (int j = 0; j < m; ++j) {
        const double c = k.stationary_corr(step * j);
        row[static_cast<std::size_t>(j)] = c;
        if (j > 0 && j < m - 1) row[static_cast<std::size_t>(big - j)] = c;
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spectrum;
    fft.fwd(spectrum, row);
    std::vector<double> lambda(spectrum.size());
    double top = 0.0;
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        lambda[i] = spectrum[i].real();
        top = std::max(top, lambda[i]);
    }
    for (double& l : lambda) {
        if (l < -1e-8 * top) return {};
        l = std::max(l, 0.0);
    }
    return lambda;
}

bool uniform_step(const std::vector<double>& grid, double& step) {
    if (grid.size() < 3) return false;
    step = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (std::abs(grid[i] - grid.front() - step * static_cast<double>(i)) > 1e-9 * step) return false;
    }
    return true;
}

}  // namespace

std::string to_string(Method m) { return m == Method::Crude ? "crude" : "seqis"; }

nlohmann::json MCEstimate::to_json() const {
    return {{"p_hat", p_hat}, {"stderr", std_error},  {"log_p", log_p},         {"rel_stderr", rel_error},
            {"n", n},         {"method", sampler::to_string(method)}, {"seed", seed}, {"grid_size", grid_size}};
}

std::vector<double> uniform_grid(double t0, double t1, double step) {
    require(step > 0.0 && t1 >= t0, ErrorKind::InvalidArgument, "uniform grid needs step > 0 and t1 >= t0");
    const auto count = static_cast<long long>(std::floor((t1 - t0) / step + 1e-9));
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(count) + 1);
    for (long long i = 0; i <= count; ++i) grid.push_back(t0 + step * static_cast<double>(i));
    return grid;
}

std::vector<double> log_grid(double t0, double t1, int points) {
    require(t0 > 0.0 && t1 > t0 && points >= 2, ErrorKind::InvalidArgument, "log grid needs 0 < t0 < t1, points >= 2");
    std::vector<double> grid(static_cast<std::size_t>(points));
    const double ratio = std::log(t1 / t0) / (points - 1);
    for (int i = 0; i < points; ++i) grid[static_cast<std::size_t>(i)] = t0 * std::exp(ratio * i);
    grid.back() = t1;
    return grid;
}

// ---------------------------------------------------------------------------
// Sampling

SampleResult sample(const kernels::Kernel& k, const std::vector<double>& grid, int n, std::uint64_t seed,
                    const SampleOptions& options) {
    check_count(n);
    const int m = static_cast<int>(grid.size());
    SampleResult out;
    out.paths.resize(n, m);
    double step = 0.0;
    if (options.allow_circulant && k.stationary() && uniform_step(grid, step)) {
        const auto lambda = circulant_eigenvalues(k, step, m);
        if (!lambda.empty()) {
            out.factor = "circulant";
            const std::size_t big = lambda.size();
            std::vector<double> scale(big);
            for (std::size_t i = 0; i < big; ++i) scale[i] = std::sqrt(lambda[i] / static_cast<double>(big));
            parallel_for(static_cast<std::size_t>(n), [&](std::size_t r) {
                Stream rng(seed, r);
                std::vector<std::complex<double>> xi(big), y;
                for (std::size_t i = 0; i < big; ++i) xi[i] = {scale[i] * rng.normal(), scale[i] * rng.normal()};
                Eigen::FFT<double> fft;
                fft.fwd(y, xi);
                for (int j = 0; j < m; ++j) out.paths(static_cast<Eigen::Index>(r), j) = y[static_cast<std::size_t>(j)].real();
            });
            return out;
        }
    }
    out.factor = "cholesky";
    const auto g = kernels::gram(k, grid, options.jitter_cap);
    const RowMatrix chol = g.cholesky;
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t r) {
        Stream rng(seed, r);
        Eigen::VectorXd z(m);
        for (int j = 0; j < m; ++j) z(j) = rng.normal();
        for (int j = 0; j < m; ++j) out.paths(static_cast<Eigen::Index>(r), j) = chol.row(j).head(j + 1).dot(z.head(j + 1));
    });
    return out;
}

MCEstimate persist_mc(const kernels::Kernel& k, const std::vector<double>& grid, double level, std::int64_t n,
                      std::uint64_t seed) {
    check_count(n);
    const auto g = kernels::gram(k, grid);
    const RowMatrix chol = g.cholesky;
    const int m = static_cast<int>(grid.size());
    std::vector<unsigned char> survived(static_cast<std::size_t>(n), 0);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t r) {
        Stream rng(seed, r);
        Eigen::VectorXd z(m);
        for (int j = 0; j < m; ++j) z(j) = rng.normal();
        for (int j = 0; j < m; ++j) {
            if (chol.row(j).head(j + 1).dot(z.head(j + 1)) >= level) return;
        }
        survived[r] = 1;
    });
    std::int64_t hits = 0;
    for (auto s : survived) hits += s;
    return wilson_estimate(hits, n, seed, m);
}

MCEstimate wilson_estimate(std::int64_t hits, std::int64_t n, std::uint64_t seed, int grid_size) {
    check_count(n);
    require(hits >= 0 && hits <= n, ErrorKind::InvalidArgument, "survivor count out of range");
    if (hits == 0) {
        throw Error(ErrorKind::AllExceeded,
                    "no path stayed below the level in " + std::to_string(n) + " replicates; use the GHK estimator");
    }
    MCEstimate est;
    est.method = Method::Crude;
    est.seed = seed;
    est.n = n;
    est.grid_size = grid_size;
    const double nn = static_cast<double>(n);
    const double z2 = 1.96 * 1.96;
    est.p_hat = static_cast<double>(hits) / nn;
    est.std_error = std::sqrt(static_cast<double>(hits) * (nn - static_cast<double>(hits)) / nn + z2 / 4.0) / (nn + z2);
    est.log_p = std::log(est.p_hat);
    est.rel_error = est.std_error / est.p_hat;
    return est;
}

MCEstimate ghk(const Eigen::MatrixXd& cholesky, double level, std::int64_t n, std::uint64_t seed,
               const GhkOptions& options, const std::vector<double>& neighbour_corr) {
    check_count(n);
    const int m = static_cast<int>(cholesky.rows());
    require(m >= 1 && cholesky.cols() == m, ErrorKind::InvalidArgument, "Cholesky factor must be square");
    require(std::isfinite(level), ErrorKind::NonFinite, "level must be finite");
    if (options.bridge) {
        require(static_cast<int>(neighbour_corr.size()) >= m - 1, ErrorKind::InvalidArgument,
                "bridge correction needs the neighbour correlations");
    }
    // Bridge exponent coefficient 2 A / (1 - A^2) per step.
    std::vector<double> bridge_coef(static_cast<std::size_t>(std::max(m - 1, 0)), 0.0);
    if (options.bridge) {
        for (int j = 0; j + 1 < m; ++j) {
            const double a = neighbour_corr[static_cast<std::size_t>(j)];
            bridge_coef[static_cast<std::size_t>(j)] = (a > 0.0 && a < 1.0) ? 2.0 * a / (1.0 - a * a) : 0.0;
        }
    }
    const RowMatrix chol = cholesky;
    std::vector<double> log_w(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t r) {
        Stream rng(seed, r);
        Eigen::VectorXd z(m);
        double lw = 0.0;
        double previous = 0.0;
        for (int j = 0; j < m; ++j) {
            const double mu = j > 0 ? chol.row(j).head(j).dot(z.head(j)) : 0.0;
            const double sd = chol(j, j);
            const double u = (level - mu) / sd;
            const double lm = log_norm_cdf(u);
            lw += lm;
            z(j) = truncated_draw(u, lm, rng);
            const double value = mu + sd * z(j);
            if (options.bridge && j > 0) {
                const double c = bridge_coef[static_cast<std::size_t>(j - 1)];
                if (c > 0.0) lw += std::log1p(-std::exp(-c * (level - previous) * (level - value)));
            }
            previous = value;
        }
        log_w[r] = lw;
    });
    return from_log_weights(log_w, Method::SeqIS, seed, m);
}

MCEstimate persist_ghk(const kernels::Kernel& k, const std::vector<double>& grid, double level, std::int64_t n,
                       std::uint64_t seed, const GhkOptions& options) {
    const auto g = kernels::gram(k, grid);
    std::vector<double> neighbours;
    for (Eigen::Index j = 0; j + 1 < g.matrix.rows(); ++j) neighbours.push_back(g.matrix(j, j + 1));
    return ghk(g.cholesky, level, n, seed, options, neighbours);
}

// ---------------------------------------------------------------------------
// Exact and analytic bounds

double orthant_exact_small(const Eigen::MatrixXd& corr) {
    const auto d = corr.rows();
    require(corr.cols() == d && d >= 1, ErrorKind::InvalidArgument, "correlation matrix must be square");
    require(d <= 3, ErrorKind::Unsupported, "exact orthant probabilities need dimension <= 3");
    Eigen::LLT<Eigen::MatrixXd> llt(corr);
    require(llt.info() == Eigen::Success, ErrorKind::NotPositiveDefinite, "orthant matrix is not positive definite");
    if (d == 1) return 0.5;
    if (d == 2) return 0.25 + std::asin(corr(0, 1)) / (2.0 * std::numbers::pi);

    const double r12 = corr(0, 1), r13 = corr(0, 2), r23 = corr(1, 2);
    const double s12 = std::sqrt(1.0 - r12 * r12), s13 = std::sqrt(1.0 - r13 * r13);
    const double partial = (r23 - r12 * r13) / (s12 * s13);
    const double sp = std::sqrt(std::max(0.0, 1.0 - partial * partial));
    auto bivariate = [&](double h, double k) {
        if (sp < 1e-12) return partial > 0 ? norm_cdf(std::min(h, k)) : std::max(0.0, norm_cdf(h) + norm_cdf(k) - 1.0);
        const double lo = -12.0;
        if (h <= lo) return 0.0;
        auto f = [&](double y) {
            return std::exp(-0.5 * y * y) / std::sqrt(2.0 * std::numbers::pi) * norm_cdf((k - partial * y) / sp);
        };
        return quad::integrate(f, lo, h, 1e-13).value;
    };
    auto outer = [&](double x) {
        const double h = -r12 * x / s12;
        const double k = -r13 * x / s13;
        return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi) * bivariate(h, k);
    };
    return quad::integrate(outer, -12.0, 0.0, 1e-11).value;
}

ProductBound slepian_product_bound(const kernels::Kernel& k, const std::vector<double>& grid,
                                   const std::vector<int>& boundaries, double level, std::int64_t n,
                                   std::uint64_t seed) {
    const Eigen::MatrixXd a = kernels::correlation_matrix(k, grid);
    require(a.minCoeff() >= -1e-12, ErrorKind::Unsupported, "product bound needs non-negative correlations");
    std::vector<int> cuts{0};
    for (int b : boundaries) {
        require(b > cuts.back() && b < static_cast<int>(grid.size()), ErrorKind::InvalidArgument,
                "block boundaries must be increasing and inside the grid");
        cuts.push_back(b);
    }
    cuts.push_back(static_cast<int>(grid.size()));
    ProductBound out;
    double rel2 = 0.0;
    for (std::size_t b = 0; b + 1 < cuts.size(); ++b) {
        const std::vector<double> sub(grid.begin() + cuts[b], grid.begin() + cuts[b + 1]);
        auto est = persist_ghk(k, sub, level, n, derive_seed(seed, b));
        out.log_value += est.log_p;
        rel2 += est.rel_error * est.rel_error;
        out.blocks.push_back(est);
    }
    out.value = std::exp(out.log_value);
    out.std_error = out.value * std::sqrt(rel2);
    return out;
}

double union_upper_bound(double eps, int n, double level) {
    require(eps >= 0.0 && eps < 5.0 / 9.0, ErrorKind::InvalidArgument, "union bound needs 0 <= eps < 5/9");
    require(n >= 1, ErrorKind::InvalidArgument, "union bound needs n >= 1");
    require(std::isfinite(level), ErrorKind::NonFinite, "level must be finite");
    double first;
    if (eps == 0.0) {
        first = level > 0.0 ? 0.0 : (level == 0.0 ? 0.5 : 1.0);
    } else {
        first = norm_cdf(-level / std::sqrt(eps));
    }
    return first + std::pow(norm_cdf(3.0 * level), n);
}

SupEstimate expected_sup(const kernels::Kernel& k, double s, double u, int n, std::uint64_t seed, int points) {
    require(u >= 0.0, ErrorKind::InvalidArgument, "window length must be >= 0");
    require(points >= 2, ErrorKind::InvalidArgument, "expected_sup needs >= 2 points");
    std::vector<double> grid;
    if (u == 0.0) {
        grid = {s};
    } else {
        for (int i = 0; i < points; ++i) grid.push_back(s + u * i / (points - 1));
    }
    const auto paths = sample(k, grid, n, seed).paths;
    const Eigen::VectorXd maxima = paths.rowwise().maxCoeff();
    SupEstimate out;
    out.mean = maxima.mean();
    const double var = n > 1 ? (maxima.array() - out.mean).square().sum() / (n - 1.0) : 0.0;
    out.std_error = std::sqrt(var / n);
    return out;
}

// ---------------------------------------------------------------------------
// Fitting

std::string to_string(FitMode m) {
    switch (m) {
        case FitMode::PerT: return "per_t";
        case FitMode::PerLogT: return "per_log_t";
        case FitMode::PerARho: return "per_a_rho";
    }
    return "unknown";
}

FitMode fit_mode_from_string(const std::string& name) {
    for (FitMode m : {FitMode::PerT, FitMode::PerLogT, FitMode::PerARho}) {
        if (to_string(m) == name) return m;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown fit mode '" + name + "'");
}

nlohmann::json FitResult::to_json() const {
    return {{"mode", sampler::to_string(mode)}, {"slope", slope},         {"intercept", intercept},
            {"ci_95", {ci_low, ci_high}},       {"window", {window_low, window_high}},
            {"ratios", ratios},                 {"ratio_min", ratio_min}, {"ratio_max", ratio_max}};
}

double regressor(FitMode mode, double T, const rv::RegVarFn* rho) {
    require(T > 0.0, ErrorKind::InvalidArgument, "T must be positive");
    switch (mode) {
        case FitMode::PerT: return T;
        case FitMode::PerLogT: return std::log(T);
        case FitMode::PerARho:
            require(rho != nullptr, ErrorKind::InvalidArgument, "a_rho regressor needs a rho family");
            return rv::decay_rate(*rho, T);
    }
    return T;
}

FitResult fit_exponent(const std::vector<FitPoint>& points, FitMode mode, const rv::RegVarFn* rho) {
    require(points.size() >= 4, ErrorKind::InvalidArgument, "fit needs at least 4 points");
    std::vector<double> ts;
    for (const auto& p : points) ts.push_back(p.T);
    std::sort(ts.begin(), ts.end());
    require(std::adjacent_find(ts.begin(), ts.end()) == ts.end(), ErrorKind::InvalidArgument,
            "fit needs distinct T values");
    const bool weighted = std::all_of(points.begin(), points.end(), [](const FitPoint& p) { return p.std_error > 0.0; });

    const std::size_t n = points.size();
    std::vector<double> x(n), y(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
        require(std::isfinite(points[i].log_p), ErrorKind::NonFinite, "log p must be finite");
        x[i] = regressor(mode, points[i].T, rho);
        y[i] = -points[i].log_p;
        w[i] = weighted ? 1.0 / (points[i].std_error * points[i].std_error) : 1.0;
    }
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    require(*hi - *lo > 1e-12 * std::max(1.0, std::abs(*hi)), ErrorKind::DegenerateRegressor,
            "regressor values have no spread");

    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
    }
    const double xbar = sx / sw, ybar = sy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += w[i] * (x[i] - xbar) * (x[i] - xbar);
        sxy += w[i] * (x[i] - xbar) * (y[i] - ybar);
    }
    FitResult out;
    out.mode = mode;
    out.slope = sxy / sxx;
    out.intercept = ybar - out.slope * xbar;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - out.intercept - out.slope * x[i];
        rss += w[i] * e * e;
    }
    const double se = std::sqrt(rss / (static_cast<double>(n) - 2.0) / sxx);
    out.ci_low = out.slope - 1.96 * se;
    out.ci_high = out.slope + 1.96 * se;
    out.window_low = ts.front();
    out.window_high = ts.back();
    out.ratio_min = rv::kInfinity;
    out.ratio_max = -rv::kInfinity;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] / x[i];
        out.ratios.push_back(r);
        out.ratio_min = std::min(out.ratio_min, r);
        out.ratio_max = std::max(out.ratio_max, r);
    }
    return out;
}

Refined refine_until_stable(const std::function<MCEstimate(double)>& estimate_at, double step, int max_halvings) {
    require(step > 0.0 && max_halvings >= 1, ErrorKind::InvalidArgument, "refinement needs step > 0, >= 1 halving");
    Refined out;
    MCEstimate previous = estimate_at(step);
    out.history.emplace_back(step, previous);
    for (int k = 0; k < max_halvings; ++k) {
        step *= 0.5;
        MCEstimate current = estimate_at(step);
        out.history.emplace_back(step, current);
        const double combined = std::hypot(previous.std_error, current.std_error);
        out.estimate = current;
        out.step = step;
        if (std::abs(previous.p_hat - current.p_hat) <= 2.0 * combined) {
            out.stable = true;
            return out;
        }
        previous = current;
    }
    return out;
}

}  // namespace persistlab::sampler
