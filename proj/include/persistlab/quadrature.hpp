#pragma once

#include <functional>

namespace persistlab::quad {

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    int intervals = 0;
    bool converged = false;
};

using Integrand = std::function<double(double)>;

// Single 15-point Kronrod panel with the embedded 7-point Gauss estimate.
QuadResult gauss_kronrod15(const Integrand& f, double a, double b);

// Globally adaptive Gauss-Kronrod on [a, b] with an absolute tolerance.
// Bisects the panel with the largest error until the summed error estimate
// drops below abs_tol or max_intervals is hit (converged == false).
QuadResult integrate(const Integrand& f, double a, double b, double abs_tol,
                     int max_intervals = 2000);

}  // namespace persistlab::quad
