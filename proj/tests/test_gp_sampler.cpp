#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "persistlab/error.hpp"
#include "persistlab/gp_sampler.hpp"
#include "persistlab/parallel.hpp"
#include "persistlab/rng.hpp"

using namespace persistlab;
using kernels::Kernel;
using sampler::GhkOptions;

namespace {

constexpr double kPi = std::numbers::pi;

double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// P(OU(1) < 0 on [0, T]) through the time change to Brownian motion.
double ou_below_zero(double T) { return std::asin(std::exp(-T)) / kPi; }

double two_point(double r) { return 0.25 + std::asin(r) / (2 * kPi); }

double three_point(double a, double b, double c) { return 0.125 + (std::asin(a) + std::asin(b) + std::asin(c)) / (4 * kPi); }

Eigen::MatrixXd corr3(double a, double b, double c) {
    Eigen::MatrixXd m(3, 3);
    m << 1, a, b, a, 1, c, b, c, 1;
    return m;
}

// Kernel whose Gram matrix on {0, 1} has the requested off-diagonal.
std::pair<Kernel, std::vector<double>> pair_with_corr(double r) {
    if (r == 0.0) return {Kernel::ou(1.0), {0.0, 100.0}};
    return {Kernel::ou(1.0), {0.0, -std::log(r)}};
}

}  // namespace

TEST_CASE("grid helpers") {
    const auto g = sampler::uniform_grid(0.0, 1.0, 0.25);
    REQUIRE(g.size() == 5);
    CHECK(g.back() == 1.0);
    const auto lg = sampler::log_grid(1.0, 100.0, 3);
    CHECK(lg[1] == doctest::Approx(10.0));
    CHECK(lg.back() == 100.0);
    CHECK_THROWS_AS(sampler::uniform_grid(0.0, 1.0, 0.0), Error);
}

TEST_CASE("sampled covariance matches the kernel") {
    const int n = 20000;
    // Far-apart points under a fast kernel are independent.
    for (bool circulant : {true, false}) {
        const auto grid = sampler::uniform_grid(0.0, 300.0, 100.0);
        const auto s = sampler::sample(Kernel::ou(1.0), grid, n, 5, {circulant});
        CHECK(s.factor == (circulant ? "circulant" : "cholesky"));
        const Eigen::MatrixXd cov = s.paths.transpose() * s.paths / n;
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) CHECK(std::abs(cov(i, j) - (i == j ? 1.0 : 0.0)) <= 4.0 / std::sqrt(n));
        }
    }
    const auto grid = sampler::uniform_grid(0.0, 3.0, 0.5);
    for (bool circulant : {true, false}) {
        const auto s = sampler::sample(Kernel::ou(1.0), grid, n, 9, {circulant});
        const Eigen::VectorXd a = s.paths.col(0), b = s.paths.col(2);
        const double r = a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
        const double se = (1 - std::exp(-2.0)) / std::sqrt(n);
        CHECK(std::abs(r - std::exp(-1.0)) <= 4 * se);
    }
}

TEST_CASE("sampling and estimators are reproducible across thread counts") {
    const auto grid = sampler::uniform_grid(0.0, 4.0, 0.1);
    set_thread_count(1);
    const auto a = sampler::sample(Kernel::ou(1.0), grid, 200, 42);
    const auto ga = sampler::persist_ghk(Kernel::ou(1.0), grid, 0.0, 3000, 42);
    set_thread_count(4);
    const auto b = sampler::sample(Kernel::ou(1.0), grid, 200, 42);
    const auto gb = sampler::persist_ghk(Kernel::ou(1.0), grid, 0.0, 3000, 42);
    set_thread_count(0);
    CHECK((a.paths.array() == b.paths.array()).all());
    CHECK(ga.p_hat == gb.p_hat);
    CHECK(ga.std_error == gb.std_error);
    const auto c = sampler::sample(Kernel::ou(1.0), grid, 200, 43);
    CHECK_FALSE((a.paths.array() == c.paths.array()).all());
}

TEST_CASE("crude Monte Carlo persistence") {
    const int n = 100000;
    const auto indep = sampler::persist_mc(Kernel::ou(1.0), {0.0, 100.0, 200.0}, 0.0, n, 1);
    CHECK(std::abs(indep.p_hat - 0.125) <= 4 * indep.std_error);
    auto [k, grid] = pair_with_corr(0.5);
    const auto half = sampler::persist_mc(k, grid, 0.0, n, 2);
    CHECK(std::abs(half.p_hat - 1.0 / 3.0) <= 4 * half.std_error);
    CHECK(sampler::persist_mc(Kernel::ou(1.0), {0.0, 1.0, 2.0}, 12.0, 1000, 3).p_hat == 1.0);
    try {
        sampler::persist_mc(Kernel::ou(1.0), {0.0, 1.0}, -12.0, 1000, 3);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::AllExceeded);
    }
}

TEST_CASE("GHK on two-point problems matches the arcsine formula") {
    for (double r : {0.0, 0.5, -0.5, 0.9}) {
        Eigen::MatrixXd c(2, 2);
        c << 1, r, r, 1;
        const Eigen::MatrixXd l = c.llt().matrixL();
        const auto est = sampler::ghk(l, 0.0, 20000, 17);
        CAPTURE(r);
        CHECK(std::abs(est.p_hat - two_point(r)) <= 3 * est.std_error + 1e-15);
    }
    // Slepian monotonicity in r.
    double previous = 0.0;
    for (double r = -0.9; r <= 0.95; r += 0.15) {
        const double v = sampler::orthant_exact_small((Eigen::MatrixXd(2, 2) << 1, r, r, 1).finished());
        CHECK(v >= previous);
        previous = v;
    }
}

TEST_CASE("GHK agrees with crude Monte Carlo") {
    const auto grid = sampler::uniform_grid(0.0, 3.0, 0.1);
    for (const auto& k : {Kernel::ou(1.0), Kernel::stationary_cm(rv::RegVarFn::power_law(0.5)), Kernel::lamperti(0.5)}) {
        const auto mc = sampler::persist_mc(k, grid, 0.0, 200000, 11);
        const auto is = sampler::persist_ghk(k, grid, 0.0, 20000, 12);
        REQUIRE(mc.p_hat >= 1e-3);
        CHECK(std::abs(mc.p_hat - is.p_hat) <= 3 * std::hypot(mc.std_error, is.std_error));
    }
}

TEST_CASE("GHK with the bridge correction recovers the OU continuum value") {
    const auto grid = sampler::uniform_grid(0.0, 6.0, 0.05);
    const auto est = sampler::persist_ghk(Kernel::ou(1.0), grid, 0.0, 40000, 21, GhkOptions{true});
    CHECK(std::abs(est.p_hat - ou_below_zero(6.0)) <= 3 * est.std_error);
    // Without it the grid skeleton overestimates.
    const auto raw = sampler::persist_ghk(Kernel::ou(1.0), grid, 0.0, 40000, 21);
    CHECK(raw.p_hat > est.p_hat);
}

TEST_CASE("GHK is unbiased on a 50-dimensional block problem") {
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> unif(0.0, 0.8);
    // 16 three-point blocks plus one correlated pair; the reference is the
    // product of the closed-form block orthants.
    Eigen::MatrixXd c = Eigen::MatrixXd::Identity(50, 50);
    double reference = 1.0;
    for (int b = 0; b < 16; ++b) {
        const double x = unif(gen), y = unif(gen), z = unif(gen) * 0.5;
        const Eigen::MatrixXd block = corr3(x, y, z);
        if (block.llt().info() != Eigen::Success) {
            reference *= 0.125;
            continue;
        }
        c.block(3 * b, 3 * b, 3, 3) = block;
        reference *= three_point(x, y, z);
    }
    c(48, 49) = c(49, 48) = 0.3;
    reference *= two_point(0.3);

    const Eigen::MatrixXd l = c.llt().matrixL();
    std::vector<double> estimates;
    for (int seed = 0; seed < 30; ++seed) estimates.push_back(sampler::ghk(l, 0.0, 2000, 1000 + seed).p_hat);
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= 30.0;
    double var = 0.0;
    for (double e : estimates) var += (e - mean) * (e - mean);
    const double se = std::sqrt(var / 29.0 / 30.0);
    CHECK(std::abs(mean - reference) <= 3 * se);
}

TEST_CASE("exact small orthants") {
    CHECK(sampler::orthant_exact_small(Eigen::MatrixXd::Identity(1, 1)) == 0.5);
    CHECK(sampler::orthant_exact_small(Eigen::MatrixXd::Identity(2, 2)) == 0.25);
    CHECK(sampler::orthant_exact_small((Eigen::MatrixXd(2, 2) << 1, 0.5, 0.5, 1).finished()) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(std::abs(sampler::orthant_exact_small(Eigen::MatrixXd::Identity(3, 3)) - 0.125) <= 1e-9);
    for (auto [a, b, c] : {std::tuple{0.5, 0.5, 0.5}, std::tuple{0.9, 0.2, 0.1}, std::tuple{-0.3, 0.4, 0.6}, std::tuple{0.95, 0.9, 0.85}}) {
        CHECK(std::abs(sampler::orthant_exact_small(corr3(a, b, c)) - three_point(a, b, c)) <= 1e-8);
    }
    CHECK_THROWS_AS(sampler::orthant_exact_small(Eigen::MatrixXd::Identity(4, 4)), Error);
    CHECK_THROWS_AS(sampler::orthant_exact_small(corr3(0.9, -0.9, 0.9)), Error);
}

TEST_CASE("Slepian product bound") {
    const auto ou = Kernel::ou(1.0);
    const auto grid = sampler::uniform_grid(0.0, 4.0, 0.05);
    const auto whole = sampler::persist_ghk(ou, grid, 0.0, 20000, derive_seed(5, 0));
    const auto single = sampler::slepian_product_bound(ou, grid, {}, 0.0, 20000, 5);
    CHECK(single.value == doctest::Approx(whole.p_hat).epsilon(1e-12));

    // Closed-form ordering for the split at 2.
    CHECK(ou_below_zero(2.0) * ou_below_zero(2.0) <= ou_below_zero(4.0));
    const auto split = sampler::slepian_product_bound(ou, grid, {40}, 0.0, 20000, 6);
    CHECK(split.blocks.size() == 2);
    CHECK(split.value <= whole.p_hat + 3 * std::hypot(split.std_error, whole.std_error));

    // Independent blocks: the product is exact.
    const std::vector<double> far{0.0, 0.5, 100.0, 100.5};
    const auto prod = sampler::slepian_product_bound(ou, far, {2}, 0.0, 20000, 7);
    const double exact = two_point(std::exp(-0.5)) * two_point(std::exp(-0.5));
    CHECK(std::abs(prod.value - exact) <= 3 * prod.std_error);

    // Random grids and splits over non-negative catalog kernels.
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> unif(1.0, 6.0);
    for (const auto& k : {Kernel::ou(1.0), Kernel::interface(rv::RegVarFn::power_law(0.5)), Kernel::lamperti(0.3)}) {
        std::vector<double> g(20);
        for (auto& x : g) x = unif(gen);
        std::sort(g.begin(), g.end());
        const int cut = 3 + static_cast<int>(gen() % 14);
        const auto bound = sampler::slepian_product_bound(k, g, {cut}, 0.0, 10000, gen());
        const auto full = sampler::persist_ghk(k, g, 0.0, 10000, gen());
        CHECK(bound.value <= full.p_hat + 3 * std::hypot(bound.std_error, full.std_error));
    }
    CHECK_THROWS_AS(sampler::slepian_product_bound(ou, grid, {0}, 0.0, 100, 1), Error);
}

TEST_CASE("union upper bound") {
    CHECK(sampler::union_upper_bound(0.25, 1, 1.0) == doctest::Approx(phi(-2.0) + phi(3.0)).epsilon(1e-14));
    CHECK(phi(-2.0) + phi(3.0) == doctest::Approx(0.0228 + 0.99865).epsilon(1e-4));
    CHECK(sampler::union_upper_bound(1e-6, 5, 1.0) == doctest::Approx(std::pow(phi(3.0), 5)).epsilon(1e-12));
    const int m = 10000;
    const double r = std::sqrt(0.05 * std::log(double(m)));
    const double second = sampler::union_upper_bound(1e-9, m, r) - phi(-r / std::sqrt(1e-9));
    CHECK(second <= std::exp(-std::sqrt(double(m))));
    CHECK_THROWS_AS(sampler::union_upper_bound(5.0 / 9.0, 3, 1.0), Error);
}

TEST_CASE("expected supremum over small windows") {
    const auto ou = Kernel::ou(1.0);
    const auto point = sampler::expected_sup(ou, 2.0, 0.0, 20000, 1);
    CHECK(std::abs(point.mean) <= 4 * point.std_error);
    const auto a = sampler::expected_sup(ou, 0.0, 1.0, 20000, 2);
    const auto b = sampler::expected_sup(ou, 7.0, 1.0, 20000, 3);
    CHECK(std::abs(a.mean - b.mean) <= 3 * std::hypot(a.std_error, b.std_error));
    double previous = -1.0;
    for (double u : {0.1, 0.5, 1.0, 2.0}) {
        const auto e = sampler::expected_sup(ou, 0.0, u, 20000, 4);
        CHECK(e.mean >= previous - 3 * e.std_error);
        previous = e.mean;
    }
}

TEST_CASE("Borell-TIS concentration of the supremum") {
    const int n = 20000;
    const auto grid = sampler::uniform_grid(0.0, 5.0, 0.1);
    for (const auto& k : {Kernel::ou(1.0), Kernel::stationary_cm(rv::RegVarFn::power_law(0.5))}) {
        const auto paths = sampler::sample(k, grid, n, 31).paths;
        const Eigen::VectorXd sup = paths.rowwise().maxCoeff();
        const double mean = sup.mean();
        for (double x : {1.0, 2.0, 3.0}) {
            const double freq = ((sup.array() - mean) > x).cast<double>().mean();
            const double bound = std::exp(-x * x / 2);
            CHECK(freq <= bound + 3 * std::sqrt(bound * (1 - bound) / n));
        }
    }
}

TEST_CASE("exponent fits") {
    std::vector<sampler::FitPoint> linear, power, ou;
    for (double T : {2.0, 4.0, 6.0, 8.0, 10.0}) {
        linear.push_back({T, -2 * T, 0.0});
        power.push_back({T, -0.5 * std::log(T), 0.0});
        ou.push_back({T, std::log(ou_below_zero(T)), 0.01});
    }
    const auto f1 = sampler::fit_exponent(linear, sampler::FitMode::PerT);
    CHECK(f1.slope == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(f1.ci_low <= f1.slope);
    CHECK(f1.ci_high >= f1.slope);
    const auto f2 = sampler::fit_exponent(power, sampler::FitMode::PerLogT);
    CHECK(f2.slope == doctest::Approx(0.5).epsilon(1e-12));
    const auto f3 = sampler::fit_exponent(ou, sampler::FitMode::PerT);
    CHECK(std::abs(f3.slope - 1.0) <= 0.1);
    CHECK(f3.window_low == 2.0);
    CHECK(f3.window_high == 10.0);

    const auto rho = rv::RegVarFn::power_law(0.5);
    std::vector<sampler::FitPoint> rate;
    for (double T : {50.0, 100.0, 200.0, 400.0}) rate.push_back({T, -3.0 * rv::decay_rate(rho, T), 0.0});
    const auto f4 = sampler::fit_exponent(rate, sampler::FitMode::PerARho, &rho);
    CHECK(f4.ratio_min == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(f4.ratio_max == doctest::Approx(3.0).epsilon(1e-12));

    CHECK_THROWS_AS(sampler::fit_exponent({linear.begin(), linear.begin() + 3}, sampler::FitMode::PerT), Error);
    std::vector<sampler::FitPoint> flat{{1.0, -1, 0}, {1.0 + 1e-14, -1, 0}, {1.0 + 2e-14, -1, 0}, {1.0 + 3e-14, -1, 0}};
    try {
        sampler::fit_exponent(flat, sampler::FitMode::PerT);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateRegressor);
    }
    CHECK_THROWS_AS(sampler::fit_exponent(rate, sampler::FitMode::PerARho), Error);
    CHECK(sampler::fit_mode_from_string("per_log_t") == sampler::FitMode::PerLogT);
}

TEST_CASE("grid refinement stops when consecutive steps agree") {
    int calls = 0;
    auto fake = [&](double h) {
        ++calls;
        sampler::MCEstimate e;
        e.p_hat = 0.1 + h;  // bias proportional to the step
        e.std_error = 0.01;
        return e;
    };
    const auto r = sampler::refine_until_stable(fake, 0.4, 6);
    CHECK(r.stable);
    CHECK(r.step <= 0.025);
    CHECK(calls == static_cast<int>(r.history.size()));
    const auto never = sampler::refine_until_stable([](double h) {
        sampler::MCEstimate e;
        e.p_hat = h;
        e.std_error = 1e-9;
        return e;
    }, 1.0, 3);
    CHECK_FALSE(never.stable);
}
