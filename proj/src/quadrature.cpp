#include "persistlab/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include "persistlab/error.hpp"

namespace persistlab::quad {

namespace {

constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a;
    double b;
    double value;
    double error;
    bool operator<(const Panel& other) const { return error < other.error; }
};

}  // namespace

QuadResult gauss_kronrod15(const Integrand& f, double a, double b) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(center);
    double kronrod = fc * kWgk[7];
    double gauss = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = half * kXgk[j];
        const double f1 = f(center - dx);
        const double f2 = f(center + dx);
        kronrod += kWgk[j] * (f1 + f2);
        if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
    }
    QuadResult out;
    out.value = kronrod * half;
    const double diff = std::abs((kronrod - gauss) * half);
    // QUADPACK-style sharpening of the raw |K - G| estimate.
    out.error = diff > 0.0 ? std::min(diff, 200.0 * diff * std::sqrt(200.0 * diff / std::max(std::abs(out.value), 1e-300)))
                           : 0.0;
    out.error = std::max(out.error, 50.0 * std::numeric_limits<double>::epsilon() * std::abs(out.value));
    out.intervals = 1;
    out.converged = true;
    if (!std::isfinite(out.value)) {
        throw Error(ErrorKind::NonFinite, "integrand evaluated to a non-finite value");
    }
    return out;
}

QuadResult integrate(const Integrand& f, double a, double b, double abs_tol, int max_intervals) {
    require(abs_tol > 0.0, ErrorKind::InvalidArgument, "quadrature tolerance must be positive");
    QuadResult out;
    if (a == b) {
        out.converged = true;
        return out;
    }
    const double sign = b > a ? 1.0 : -1.0;
    if (sign < 0.0) std::swap(a, b);

    std::priority_queue<Panel> panels;
    const QuadResult first = gauss_kronrod15(f, a, b);
    panels.push({a, b, first.value, first.error});
    double total_error = first.error;
    int count = 1;
    while (total_error > abs_tol && count < max_intervals) {
        const Panel worst = panels.top();
        const double mid = 0.5 * (worst.a + worst.b);
        if (mid <= worst.a || mid >= worst.b) break;  // interval exhausted at double precision
        panels.pop();
        const QuadResult left = gauss_kronrod15(f, worst.a, mid);
        const QuadResult right = gauss_kronrod15(f, mid, worst.b);
        panels.push({worst.a, mid, left.value, left.error});
        panels.push({mid, worst.b, right.value, right.error});
        total_error += left.error + right.error - worst.error;
        ++count;
    }
    // Sum in left-to-right order so the result does not depend on heap layout.
    std::vector<Panel> all;
    all.reserve(panels.size());
    while (!panels.empty()) {
        all.push_back(panels.top());
        panels.pop();
    }
    std::sort(all.begin(), all.end(), [](const Panel& x, const Panel& y) { return x.a < y.a; });
    double value = 0.0;
    double error = 0.0;
    for (const auto& p : all) {
        value += p.value;
        error += p.error;
    }
    out.value = sign * value;
    out.error = error;
    out.intervals = count;
    out.converged = error <= abs_tol;
    return out;
}

}  // namespace persistlab::quad
