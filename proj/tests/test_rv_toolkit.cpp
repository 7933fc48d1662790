#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "persistlab/error.hpp"
#include "persistlab/quadrature.hpp"
#include "persistlab/rv_toolkit.hpp"

using namespace persistlab;
using namespace persistlab::rv;

namespace {

// Closed-form primitive of (1 + s)^-alpha, alpha != 1.
double power_law_primitive(double alpha, double t) {
    return (std::pow(1.0 + t, 1.0 - alpha) - 1.0) / (1.0 - alpha);
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected persistlab::Error");
    return ErrorKind::Io;
}

}  // namespace

TEST_CASE("quadrature integrates smooth and kinked integrands to the requested tolerance") {
    const auto r = quad::integrate([](double x) { return std::exp(-x) * std::cos(3 * x); }, 0.0, 10.0, 1e-12);
    const double exact = (1.0 + std::exp(-10.0) * (3 * std::sin(30.0) - std::cos(30.0))) / 10.0;
    CHECK(r.converged);
    CHECK(std::abs(r.value - exact) < 1e-12);

    const auto kink = quad::integrate([](double x) { return std::sqrt(std::abs(x - 0.3)); }, 0.0, 1.0, 1e-10);
    const double kink_exact = (2.0 / 3.0) * (std::pow(0.3, 1.5) + std::pow(0.7, 1.5));
    CHECK(std::abs(kink.value - kink_exact) < 1e-9);

    CHECK(kind_of([] { quad::integrate([](double) { return std::nan(""); }, 0.0, 1.0, 1e-8); }) ==
          ErrorKind::NonFinite);
}

TEST_CASE("primitive matches closed-form antiderivatives") {
    CHECK(primitive(RegVarFn::constant(), 5.0) == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(std::abs(primitive(RegVarFn::power_law(0.5), 3.0) - 2.0) < 1e-10);
    CHECK(std::abs(primitive(RegVarFn::reciprocal(), std::numbers::e - 1.0) - 1.0) < 1e-10);
    CHECK(primitive(RegVarFn::power_law(0.5), 0.0) == 0.0);

    // Far out on the geometric breakpoints.
    const double t = 1e8;
    CHECK(std::abs(primitive(RegVarFn::power_law(0.5), t) - power_law_primitive(0.5, t)) < 1e-8);
    CHECK(std::abs(primitive(RegVarFn::reciprocal(), t) - std::log1p(t)) < 1e-9);

    // A tighter tolerance bypasses the cache but agrees.
    CHECK(std::abs(primitive(RegVarFn::power_law(1.5), 7.3, 1e-13) - power_law_primitive(1.5, 7.3)) < 1e-12);
    CHECK(kind_of([] { primitive(RegVarFn::constant(), -1.0); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([] { primitive(RegVarFn::constant(), 1.0, 0.0); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("primitive is monotone and bit-reproducible regardless of query order") {
    const auto f = RegVarFn::power_log(0.7, 0.5);
    const auto g = RegVarFn::power_log(0.7, 0.5);  // independent table
    const std::vector<double> ts = {0.1, 3.7, 12.0, 250.0, 1e4, 2.5e5};
    std::vector<double> forward;
    for (double t : ts) forward.push_back(primitive(f, t));
    std::vector<double> backward(ts.size());
    for (std::size_t i = ts.size(); i-- > 0;) backward[i] = primitive(g, ts[i]);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        CHECK(forward[i] == backward[i]);
        if (i > 0) CHECK(forward[i] > forward[i - 1]);
    }
}

TEST_CASE("primitive_infty: Karamata-closed tails and divergence") {
    const auto two = primitive_infty(RegVarFn::power_law(2.0));
    CHECK_FALSE(two.divergent);
    CHECK(std::abs(two.value - 1.0) < 1e-9);
    CHECK(two.error < 1e-8);

    const auto three = primitive_infty(RegVarFn::power_law(3.0));
    CHECK(std::abs(three.value - 0.5) < 1e-9);

    CHECK(primitive_infty(RegVarFn::power_law(0.5)).divergent);
    CHECK(primitive_infty(RegVarFn::reciprocal()).divergent);
    CHECK(primitive_infty(RegVarFn::power_log(1.0, 1.0)).divergent);
    CHECK(kind_of([] { primitive_infty(RegVarFn::power_log(1.0, 2.0)); }) == ErrorKind::Undecided);
    CHECK(kind_of([] { primitive_infty(RegVarFn::exponentialized(1.0, 1.0, 0.5)); }) == ErrorKind::Undecided);

    // Values stay below I(inf).
    CHECK(primitive(RegVarFn::power_law(2.0), 1e6) < two.value);
}

TEST_CASE("decay_rate examples") {
    const double t = std::exp(std::numbers::e) - 1.0;
    CHECK(decay_rate(RegVarFn::reciprocal(), t) == doctest::Approx(t / std::numbers::e).epsilon(1e-9));
    CHECK(decay_rate(RegVarFn::reciprocal(), t) == doctest::Approx(5.2071).epsilon(1e-4));
    CHECK(decay_rate(RegVarFn::power_law(0.5), 3.0) == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-9));
    CHECK(kind_of([] { decay_rate(RegVarFn::power_law(0.5), 0.5); }) == ErrorKind::DomainTooSmall);

    // Reciprocal rho: a(T) = T loglog(1+T) / log(1+T) exactly.
    for (double T : {1e2, 1e4, 1e6}) {
        const double L = std::log1p(T);
        CHECK(decay_rate(RegVarFn::reciprocal(), T) == doctest::Approx(T * std::log(L) / L).epsilon(1e-9));
    }
}

TEST_CASE("rv_index_check") {
    const std::vector<double> two = {2.0};
    const std::vector<double> far = {1e6};
    const double dev = rv_index_check(RegVarFn::power_law(0.5), two, far);
    const double oracle = std::abs(std::sqrt((1.0 + 1e6) / (1.0 + 2e6)) - std::sqrt(0.5));
    CHECK(dev == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(dev < 1e-3);

    const std::vector<double> lambdas = {0.1, 0.5, 3.0, 17.0};
    const std::vector<double> grid = {1.0, 10.0, 1e3};
    CHECK(rv_index_check(RegVarFn::constant(), lambdas, grid) == 0.0);

    // PowerLog(1, 1): the log factor makes convergence logarithmic.
    const std::vector<double> four = {4.0};
    const std::vector<double> t8 = {1e8};
    const double t = 1e8;
    const double log_oracle =
        std::abs((1.0 + t) / (1.0 + 4 * t) * (1.0 + std::log1p(t)) / (1.0 + std::log1p(4 * t)) - 0.25);
    const double log_dev = rv_index_check(RegVarFn::power_log(1.0, 1.0), four, t8);
    CHECK(log_dev == doctest::Approx(log_oracle).epsilon(1e-9));
    CHECK(log_dev < 2e-2);

    // Shifting the grid right decreases the deviation.
    double previous = 1.0;
    for (double start : {1e2, 1e4, 1e6, 1e8}) {
        const std::vector<double> g = {start, 2 * start, 4 * start};
        const double d = rv_index_check(RegVarFn::power_log(1.0, 1.0), four, g);
        CHECK(d < previous);
        previous = d;
    }
}

TEST_CASE("karamata_ratio converges to 1/|1-alpha|") {
    CHECK(karamata_ratio(RegVarFn::power_law(0.5), 0.0, 1e6) == doctest::Approx(2.0).epsilon(0.01));
    CHECK(karamata_ratio(RegVarFn::power_law(2.0), kInfinity, 1e6) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(karamata_ratio(RegVarFn::power_law(1.5), kInfinity, 1e6) == doctest::Approx(2.0).epsilon(0.01));

    // Closed form at finite a.
    const double a = 5e5;
    const double b = 1e6;
    const auto f = RegVarFn::power_law(0.5);
    const double closed =
        (power_law_primitive(0.5, b) - power_law_primitive(0.5, a)) /
        (std::sqrt(b / (1.0 + b)) * (std::sqrt(b) - std::sqrt(a)));
    CHECK(karamata_ratio(f, a, b) == doctest::Approx(closed).epsilon(1e-9));

    CHECK(kind_of([] { karamata_ratio(RegVarFn::reciprocal(), 0.0, 10.0); }) == ErrorKind::Unsupported);
    CHECK(kind_of([] { karamata_ratio(RegVarFn::power_law(0.5), 10.0, 5.0); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([] { karamata_ratio(RegVarFn::power_law(2.0), 1.0, 5.0); }) == ErrorKind::InvalidArgument);

    // The uniform-in-a deviation shrinks as b grows.
    const auto g = RegVarFn::power_law(0.3);
    CHECK(karamata_sup_deviation(g, 1e6) < karamata_sup_deviation(g, 1e3));
}

TEST_CASE("riemann_limit tends to 1/mu") {
    const auto f = RegVarFn::power_law(0.5);
    CHECK(riemann_limit(f, 1.0, 1e8) == doctest::Approx(1.0).epsilon(0.02));
    CHECK(riemann_limit(f, 2.0, 1e8) == doctest::Approx(0.5).epsilon(0.02));
    double previous = std::numeric_limits<double>::infinity();
    for (double mu : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
        const double s = riemann_limit(f, mu, 1e6);
        CHECK(s < previous);
        previous = s;
    }
    CHECK(kind_of([] { riemann_limit(RegVarFn::power_law(2.0), 1.0, 1e4); }) == ErrorKind::Unsupported);
    CHECK(kind_of([] { riemann_limit(RegVarFn::constant(), 1.0, 1e4); }) == ErrorKind::Unsupported);
    CHECK(kind_of([] { riemann_limit(RegVarFn::power_log(1.0, 2.0), 1.0, 1e4); }) == ErrorKind::Unsupported);
}

TEST_CASE("regular variation of I and a") {
    for (double alpha : {0.0, 0.3, 0.5, 0.8, 1.5}) {
        const auto f = RegVarFn::power_law(alpha);
        const double order = std::max(0.0, 1.0 - alpha);
        double previous_gap = std::numeric_limits<double>::infinity();
        for (double T : {1e2, 1e4, 1e6, 1e8}) {
            const double gap = std::abs(primitive(f, 2 * T) / primitive(f, T) - std::pow(2.0, order));
            CHECK(gap <= previous_gap);
            previous_gap = gap;
        }
        CHECK(previous_gap < 1e-2);
    }
    for (double alpha : {0.3, 0.5, 0.8}) {
        const auto f = RegVarFn::power_law(alpha);
        const double T = 1e10;
        CHECK(primitive(f, T) / (T * f(T)) == doctest::Approx(1.0 / (1.0 - alpha)).epsilon(0.02));
        const double a_ratio = decay_rate(f, 2 * T) / decay_rate(f, T);
        CHECK(a_ratio == doctest::Approx(std::pow(2.0, alpha)).epsilon(0.02));
    }
}

TEST_CASE("family records round-trip through JSON") {
    const std::vector<RegVarFn> fams = {RegVarFn::power_law(0.4, 2.5), RegVarFn::power_log(1.0, 1.0),
                                        RegVarFn::reciprocal(), RegVarFn::exponentialized(0.5, 0.7, 0.5)};
    for (const auto& f : fams) {
        const auto back = RegVarFn::from_json(f.to_json());
        CHECK(back.to_json() == f.to_json());
        for (double x : {0.0, 0.5, 7.0, 1e3}) {
            CHECK(back(x) == f(x));
            CHECK(f(x) > 0.0);
            CHECK(f(x) <= 1.0);
        }
    }
    CHECK(kind_of([] { RegVarFn::from_json({{"family", "Nope"}}); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([] { RegVarFn::power_log(0.5, -1.0); }) == ErrorKind::InvalidArgument);
}
