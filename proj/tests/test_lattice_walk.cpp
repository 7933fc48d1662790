#include <doctest.h>

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>

#include "persistlab/error.hpp"
#include "persistlab/lattice_walk.hpp"
#include "persistlab/quadrature.hpp"

using namespace persistlab;
using walk::JumpKernel;
using walk::LatticeWalk;

namespace {

// Nearest-neighbour walk factorizes over coordinates, each a rate-1/d
// one-dimensional walk: rho(u) = (e^{-u/d} I_0(u/d))^d.
double srw_bessel(int d, double u) {
    const double v = u / d;
    return std::pow(std::exp(-v) * boost::math::cyl_bessel_i(0, v), d);
}

double binom(int n, int k) { return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)); }

// G_0 for the cubic lattice, closed form in Gamma values.
double watson_g0() {
    using boost::math::tgamma;
    return std::sqrt(6.0) / (32.0 * std::pow(std::numbers::pi, 3)) * tgamma(1.0 / 24) * tgamma(5.0 / 24) *
           tgamma(7.0 / 24) * tgamma(11.0 / 24);
}

}  // namespace

TEST_CASE("discrete return probabilities match binomial counts") {
    const auto t1 = walk::step_return_probs(JumpKernel::simple(1), 40);
    CHECK(t1.p[1] == 0.0);
    CHECK(t1.p[2] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(t1.p[4] == doctest::Approx(3.0 / 8.0).epsilon(1e-15));
    for (int m = 1; m <= 20; ++m) CHECK(t1.p[2 * m] == doctest::Approx(binom(2 * m, m) / std::pow(2.0, 2 * m)).epsilon(1e-12));

    const auto t2 = walk::step_return_probs(JumpKernel::simple(2), 40);
    CHECK(t2.p[2] == doctest::Approx(0.25).epsilon(1e-15));
    for (int m = 1; m <= 20; ++m) {
        const double c = binom(2 * m, m) / std::pow(2.0, 2 * m);
        CHECK(t2.p[2 * m] == doctest::Approx(c * c).epsilon(1e-12));
    }
}

TEST_CASE("spectral table agrees with box convolution") {
    const auto q = JumpKernel::simple(3);
    const LatticeWalk w(q);
    const int cap = w.box_capacity();
    REQUIRE(cap >= 100);
    const auto box = walk::step_return_probs(q, cap);
    const auto spec = walk::step_return_probs(q, cap + 20);
    CHECK(box.method == "box");
    CHECK(spec.method == "spectral");
    for (int n = 0; n <= cap; ++n) CHECK(std::abs(box.p[n] - spec.p[n]) <= 1e-13);
}

TEST_CASE("continuous-time return probability matches Bessel form") {
    for (int d : {1, 2, 3}) {
        const LatticeWalk w(JumpKernel::simple(d));
        double worst = 0.0;
        for (double u = 0.0; u <= 50.0; u += 0.5) worst = std::max(worst, std::abs(w.return_prob(u) - srw_bessel(d, u)));
        CHECK(worst <= 1e-10);
    }
    const LatticeWalk w1(JumpKernel::simple(1));
    CHECK(w1.return_prob(1.0) == doctest::Approx(0.46576).epsilon(1e-4));
    CHECK(w1.return_prob(0.0) == 1.0);
    CHECK_THROWS_AS(w1.return_prob(-1.0), Error);
}

TEST_CASE("local CLT plateau u^{d/2} rho(u) on [200, 400]") {
    for (int d : {1, 2, 3}) {
        const LatticeWalk w(JumpKernel::simple(d));
        double lo = 1e300, hi = 0.0;
        for (double u = 200.0; u <= 400.0; u += 25.0) {
            const double v = std::pow(u, 0.5 * d) * w.return_prob(u);
            CHECK(std::abs(w.return_prob(u) - srw_bessel(d, u)) <= 1e-10);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK((hi - lo) / hi < 0.02);
        // Each coordinate has variance u/d, so the limit is (d / (2 pi))^{d/2}.
        CHECK(hi == doctest::Approx(std::pow(d / (2.0 * std::numbers::pi), 0.5 * d)).epsilon(0.02));
    }
}

TEST_CASE("Green function of the cubic lattice") {
    const double exact = watson_g0();
    CHECK(exact == doctest::Approx(1.516386).epsilon(1e-6));

    // Independent route: G_0 = int_0^inf rho(u) du with the Bessel form,
    // plus the local-CLT tail beyond the cutoff.
    // e^{-x} I_0(x) ~ (2 pi x)^{-1/2} (1 + 1/(8x)) gives the tail.
    const double cut = 2000.0;
    const auto body = quad::integrate([](double u) { return srw_bessel(3, u); }, 0.0, cut, 1e-10, 20000);
    const double amp = std::pow(3.0 / (2.0 * std::numbers::pi), 1.5);
    const double tail = amp * (2.0 / std::sqrt(cut) + 0.75 * std::pow(cut, -1.5));
    CHECK(body.value + tail == doctest::Approx(exact).epsilon(1e-4));

    const LatticeWalk w(JumpKernel::simple(3));
    const auto g0 = w.green(0);
    CHECK(std::abs(g0.value - exact) <= 1e-3);
    CHECK(g0.upper_bound >= exact);
    CHECK(g0.partial_sum <= exact);
    double prev = g0.value;
    for (int k : {1, 2, 5, 10, 50, 100, 500}) {
        const double g = w.green(k).value;
        CHECK(g <= prev);  // equal at odd steps of a bipartite walk
        CHECK(g > 0.0);
        prev = g;
    }
    // G_1 = G_0 - 1 since p_0 = 1.
    CHECK(w.green(1).value == doctest::Approx(g0.value - 1.0).epsilon(1e-12));
    // d = 3: G_k ~ C k^{-1/2}.
    const double r = std::sqrt(2000.0) * w.green(2000).value / (std::sqrt(500.0) * w.green(500).value);
    CHECK(r == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("Green function in d = 4 decays like 1/k and recurrent walks diverge") {
    const LatticeWalk w(JumpKernel::simple(4));
    for (int k : {20, 100, 1000, 10000}) {
        const double v = k * w.green(k).value;
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    CHECK_THROWS_AS(LatticeWalk(JumpKernel::simple(2)).green(0), Error);
    try {
        LatticeWalk(JumpKernel::simple(1)).green(3);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Divergent);
    }
    CHECK_THROWS_AS(LatticeWalk{JumpKernel::simple(5)}, Error);
}

TEST_CASE("interface covariance Gamma_q") {
    const LatticeWalk w(JumpKernel::simple(1));
    auto primitive = [](double t) {
        return quad::integrate([](double u) { return srw_bessel(1, u); }, 0.0, t, 1e-13).value;
    };
    const double oracle = primitive(3.0) - primitive(1.0);
    CHECK(w.gamma(1.0, 2.0) == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(w.gamma(1.0, 2.0) == doctest::Approx(0.645811).epsilon(1e-5));
    CHECK(w.gamma(2.0, 1.0) == w.gamma(1.0, 2.0));
    const auto gv = walk::gamma_corr(JumpKernel::simple(1), 1.0, 2.0);
    CHECK(gv.correlation == doctest::Approx(oracle / std::sqrt(primitive(2.0) * primitive(4.0))).epsilon(1e-9));
    CHECK(w.gamma_normalized(3.0, 3.0) == 1.0);
    CHECK(w.gamma_normalized(1.0, 50.0) < w.gamma_normalized(1.0, 5.0));
}

TEST_CASE("limit interface correlation respects its sandwich") {
    const LatticeWalk w(JumpKernel::simple(3));
    const double g0 = w.green(0).value;
    CHECK(w.limit_interface_corr(0.0) == 1.0);
    double prev = 1.0;
    for (double tau : {0.1, 0.5, 1.0, 2.0, 5.0, 20.0}) {
        const double c = w.limit_interface_corr(tau);
        const double hit = 1.0 - std::exp(-tau);
        CHECK(c >= 1.0 - hit);
        CHECK(c <= 1.0 - hit / g0 + 1e-12);
        CHECK(c < prev);
        prev = c;
    }
    CHECK_THROWS_AS(walk::limit_interface_corr(JumpKernel::simple(2), 1.0), Error);
}

TEST_CASE("jump kernel validation reports each clause") {
    CHECK(walk::validate(JumpKernel::simple(3)).ok());

    const auto asym = JumpKernel::from_json(nlohmann::json::parse(R"([[[1],0.7],[[-1],0.3]])"));
    auto r = walk::validate(asym);
    CHECK_FALSE(r.symmetric);
    CHECK_FALSE(r.ok());

    const auto unnorm = JumpKernel::from_json(nlohmann::json::parse(R"([[[1],0.4],[[-1],0.4]])"));
    r = walk::validate(unnorm);
    CHECK_FALSE(r.normalized);

    const auto self = JumpKernel::from_json(nlohmann::json::parse(R"([[[0],0.5],[[1],0.25],[[-1],0.25]])"));
    CHECK_FALSE(walk::validate(self).origin_absent);

    // Steps of 2 generate 2Z only.
    const auto even = JumpKernel::from_json(nlohmann::json::parse(R"([[[2],0.5],[[-2],0.5]])"));
    r = walk::validate(even);
    CHECK(r.symmetric);
    CHECK_FALSE(r.generates_lattice);

    // Diagonal steps in d = 2 generate an index-2 sublattice.
    const auto diag = JumpKernel::from_json(nlohmann::json::parse(
        R"([[[1,1],0.25],[[-1,-1],0.25],[[1,-1],0.25],[[-1,1],0.25]])"));
    CHECK_FALSE(walk::validate(diag).generates_lattice);

    // Steps 2 and 3 generate Z.
    const auto mixed = JumpKernel::from_json(nlohmann::json::parse(
        R"([[[2],0.25],[[-2],0.25],[[3],0.25],[[-3],0.25]])"));
    CHECK(walk::validate(mixed).ok());
    CHECK_FALSE(mixed.bipartite());
    CHECK(JumpKernel::simple(2).bipartite());

    CHECK_THROWS_AS(LatticeWalk{even}, Error);
    CHECK_THROWS_AS(walk::step_return_probs(asym, 10), Error);
    CHECK_THROWS_AS(JumpKernel::from_json(nlohmann::json::parse(R"([[[1,2],0.5],[[1],0.5]])")), Error);
}

TEST_CASE("non-bipartite range-2 walk") {
    const auto q = JumpKernel::from_json(nlohmann::json::parse(
        R"([[[1],0.25],[[-1],0.25],[[2],0.25],[[-2],0.25]])"));
    const LatticeWalk w(q);
    const auto t = w.table(3);
    CHECK(t.p[1] == 0.0);
    CHECK(t.p[2] == doctest::Approx(0.25).epsilon(1e-15));
    // Three-step returns: permutations of (1,1,-2) and (-1,-1,2).
    CHECK(t.p[3] == doctest::Approx(6.0 / 64.0).epsilon(1e-15));
    CHECK(w.return_prob(2.0) < w.return_prob(1.0));
    CHECK(JumpKernel::from_json(q.to_json()).to_json() == q.to_json());
}

TEST_CASE("queries are reproducible regardless of order") {
    const auto q = JumpKernel::simple(2);
    const LatticeWalk a(q), b(q);
    const double a1 = a.return_prob(3.0);
    const double a2 = a.return_prob(300.0);
    const double b2 = b.return_prob(300.0);
    const double b1 = b.return_prob(3.0);
    CHECK(a1 == b1);
    CHECK(a2 == b2);
}
