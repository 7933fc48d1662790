#pragma once

// Gaussian paths on grids and estimators of the persistence probability
// P(max_i Z(t_i) < level): crude Monte Carlo, the sequential truncated-normal
// importance sampler (GHK), exact small orthants, analytic bounds, and
// weighted least-squares fits of -log p against T, log T or a_rho(T).

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "persistlab/kernel_catalog.hpp"
#include "persistlab/rv_toolkit.hpp"

namespace persistlab::sampler {

enum class Method { Crude, SeqIS };
std::string to_string(Method m);

struct MCEstimate {
    double p_hat = 0.0;
    double std_error = 0.0;
    double log_p = 0.0;       // log p_hat, finite even when p_hat underflows
    double rel_error = 0.0;  // std_error / p_hat
    std::int64_t n = 0;
    Method method = Method::Crude;
    std::uint64_t seed = 0;
    int grid_size = 0;

    nlohmann::json to_json() const;
};

// Uniform grid t0, t0 + step, ..., up to t1 (inclusive within 1e-9 step).
std::vector<double> uniform_grid(double t0, double t1, double step);
// Geometric grid with `points` points from t0 to t1.
std::vector<double> log_grid(double t0, double t1, int points);

struct SampleResult {
    Eigen::MatrixXd paths;  // one row per replicate
    std::string factor;     // "cholesky" or "circulant"
};

struct SampleOptions {
    bool allow_circulant = true;
    double jitter_cap = kernels::kDefaultJitterCap;
};

// n paths on the grid; replicate i depends only on (seed, i).
SampleResult sample(const kernels::Kernel& k, const std::vector<double>& grid, int n, std::uint64_t seed,
                    const SampleOptions& options = {});

// Crude estimate from a survivor count, with the Wilson score standard
// error (half-width / 1.96). Zero survivors throw AllExceeded.
MCEstimate wilson_estimate(std::int64_t hits, std::int64_t n, std::uint64_t seed, int grid_size);

// Fraction of paths with max < level. Standard error from the Wilson
// score interval; p_hat = 0 throws AllExceeded.
MCEstimate persist_mc(const kernels::Kernel& k, const std::vector<double>& grid, double level, std::int64_t n,
                      std::uint64_t seed);

struct GhkOptions {
    // Correct each grid step by the Gauss-Markov no-crossing probability
    // 1 - exp(-2 (r - x)(r - y) (A / (1 - A^2))) given the endpoint values,
    // A the correlation of the two neighbours. Exact for level 0 and
    // Markov kernels; a heuristic otherwise.
    bool bridge = false;
};

// Sequential conditioning importance sampler on a lower Cholesky factor.
// Each coordinate is drawn from its conditional normal truncated below
// `level`; the weight is the product of truncation probabilities, kept in
// log space. `neighbour_corr[j]` is the correlation of points j and j+1
// (only read when options.bridge).
MCEstimate ghk(const Eigen::MatrixXd& cholesky, double level, std::int64_t n, std::uint64_t seed,
               const GhkOptions& options = {}, const std::vector<double>& neighbour_corr = {});

MCEstimate persist_ghk(const kernels::Kernel& k, const std::vector<double>& grid, double level, std::int64_t n,
                       std::uint64_t seed, const GhkOptions& options = {});

// P(all coordinates < 0) for a correlation matrix of dimension <= 3.
double orthant_exact_small(const Eigen::MatrixXd& corr);

struct ProductBound {
    double value = 0.0;
    double std_error = 0.0;
    double log_value = 0.0;
    std::vector<MCEstimate> blocks;
};

// Product over blocks of the per-block GHK estimates. Blocks are given by
// boundary indices b_1 < ... < b_k splitting the grid into [0, b_1),
// [b_1, b_2), ... Requires non-negative correlations on the grid.
ProductBound slepian_product_bound(const kernels::Kernel& k, const std::vector<double>& grid,
                                   const std::vector<int>& boundaries, double level, std::int64_t n,
                                   std::uint64_t seed);

// Phi(-r / sqrt(eps)) + Phi(3 r)^n for pairwise correlations <= eps < 5/9.
double union_upper_bound(double eps, int n, double level);

struct SupEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

// E[max Z(t)] over `points` grid points spanning [s, s + u].
SupEstimate expected_sup(const kernels::Kernel& k, double s, double u, int n, std::uint64_t seed, int points = 51);

enum class FitMode { PerT, PerLogT, PerARho };
std::string to_string(FitMode m);
FitMode fit_mode_from_string(const std::string& name);

struct FitPoint {
    double T = 0.0;
    double log_p = 0.0;
    double std_error = 0.0;  // of log_p; zero means unweighted
};

struct FitResult {
    FitMode mode = FitMode::PerT;
    double slope = 0.0;
    double intercept = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double window_low = 0.0;
    double window_high = 0.0;
    // -log p / regressor at each point, and their extremes.
    std::vector<double> ratios;
    double ratio_min = 0.0;
    double ratio_max = 0.0;

    nlohmann::json to_json() const;
};

// Regressor value for a mode; PerARho needs rho.
double regressor(FitMode mode, double T, const rv::RegVarFn* rho = nullptr);

// Weighted least squares of -log p on the mode's regressor.
FitResult fit_exponent(const std::vector<FitPoint>& points, FitMode mode, const rv::RegVarFn* rho = nullptr);

struct Refined {
    MCEstimate estimate;  // at the finest step tried
    double step = 0.0;
    bool stable = false;  // consecutive steps agreed within 2 combined stderr
    std::vector<std::pair<double, MCEstimate>> history;
};

// Halves the grid step until estimates at h and h/2 agree.
Refined refine_until_stable(const std::function<MCEstimate(double)>& estimate_at, double step, int max_halvings);

}  // namespace persistlab::sampler
