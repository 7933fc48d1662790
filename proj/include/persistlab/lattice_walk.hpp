#pragma once

// Continuous-time random walk on Z^d with a finite symmetric jump law q:
// return probabilities rho_q(u) = P(S_u = 0), the discrete Green function
// G_k, and the interface covariance Gamma_q(s,t) = int_{|s-t|}^{s+t} rho_q.

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "persistlab/rv_toolkit.hpp"

namespace persistlab::walk {

struct Jump {
    std::vector<int> offset;
    double rate = 0.0;
};

class JumpKernel {
public:
    JumpKernel() = default;
    JumpKernel(int dimension, std::vector<Jump> support);

    // Nearest-neighbour walk, q(+-e_i) = 1/(2d).
    static JumpKernel simple(int dimension);

    // JSON list of [offsets, rate] pairs, e.g. [[[1],0.5],[[-1],0.5]].
    static JumpKernel from_json(const nlohmann::json& spec);
    nlohmann::json to_json() const;

    int dimension() const { return dimension_; }
    const std::vector<Jump>& support() const { return support_; }
    // max |x|_inf over the support.
    int range() const;
    // Largest per-coordinate second moment sum_x q(x) x_i^2.
    double max_coordinate_variance() const;
    // True when some parity character maps every jump to an odd number.
    bool bipartite() const;

private:
    int dimension_ = 0;
    std::vector<Jump> support_;
};

struct ValidationReport {
    bool symmetric = true;
    bool finite_range = true;
    bool normalized = true;
    bool origin_absent = true;
    bool positive_rates = true;
    bool generates_lattice = true;
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
};

// Checks the jump-rate assumptions clause by clause: symmetry, finite range,
// unit total rate without a self-jump, and generation of Z^d as a group
// (Hermite reduction of the support matrix must have unit index).
ValidationReport validate(const JumpKernel& q);

struct ReturnProbTable {
    std::vector<double> p;  // p[n] = P(X_n = 0) for the embedded discrete walk
    // Bound on sum_{n > n_max} p_n(0) from the fitted local-CLT envelope
    // (x1.5); infinite for recurrent walks (d <= 2).
    double truncation_error = 0.0;
    double wrap_error = 0.0;  // zero for the exact box method
    std::string method;       // "box" or "spectral"
    bool bipartite = false;
};

// p_n(0), n = 0..n_max. Exact box convolution (p_{2m} = sum_x P_m(x)^2,
// p_{2m+1} = sum_x P_m(x) P_{m+1}(x)) while the box fits the memory budget;
// beyond that a torus Fourier sum with a side chosen so wrap-around is
// below double precision. d > 4 is rejected.
ReturnProbTable step_return_probs(const JumpKernel& q, int n_max);

struct GreenResult {
    double value = 0.0;         // partial sum + fitted local-CLT tail
    double partial_sum = 0.0;   // sum of tabulated p_n for n >= k
    double tail = 0.0;          // fitted tail estimate
    double upper_bound = 0.0;   // partial sum + 1.5 x tail
};

// Shared, lazily extended evaluation state for one jump kernel. All
// queries are deterministic functions of (q, arguments); caches only grow.
class LatticeWalk {
public:
    explicit LatticeWalk(JumpKernel q);

    const JumpKernel& kernel() const { return q_; }

    // rho_q(u) by uniformization sum_n e^-u u^n/n! p_n, truncated at
    // n = u + 12 sqrt(u) + 50; large u past the box budget switches to the
    // spectral torus sum of exp(-u (1 - phi(k))).
    double return_prob(double u, double tol = 1e-12) const;

    // I_q(t) = int_0^t rho_q, cached.
    double return_prob_primitive(double t) const;

    // Gamma_q(s, t) and Gamma_q(s, t) / sqrt(Gamma_q(s,s) Gamma_q(t,t)).
    double gamma(double s, double t) const;
    double gamma_normalized(double s, double t) const;

    // G_k = sum_{n >= k} p_n(0). Needs d >= 3.
    GreenResult green(int k) const;

    // E[G_{N_tau}] / G_0 for a unit-rate Poisson N_tau. Needs d >= 3.
    double limit_interface_corr(double tau) const;

    // Discrete table, extended on demand to at least n_max.
    ReturnProbTable table(int n_max) const;

    // Largest n the exact box method handles within the memory budget.
    int box_capacity() const;

private:
    double uniformized(double u, const std::vector<double>& p) const;
    double spectral(double u) const;
    void fit_tail() const;
    void compute_tail_fit() const;

    JumpKernel q_;
    mutable std::mutex mutex_;
    mutable std::shared_ptr<const ReturnProbTable> table_;
    mutable std::vector<double> spectral_psi_;  // 1 - phi(k) on the largest torus built so far
    mutable int spectral_side_ = 0;
    mutable std::once_flag tail_once_;
    mutable double tail_c_ = 0.0;
    mutable double tail_cd_ = 0.0;
    mutable int tail_last_ = 0;
    mutable int tail_period_ = 1;
    std::shared_ptr<rv::PrimitiveTable> primitive_;
};

struct GammaValue {
    double covariance = 0.0;   // Gamma_q(s, t)
    double correlation = 0.0;  // normalized kernel
};

// Free-function forms; each builds a fresh LatticeWalk, so prefer the class
// when evaluating many points.
double return_prob_ct(const JumpKernel& q, double u, double tol = 1e-12);
GreenResult green(const JumpKernel& q, int k);
GammaValue gamma_corr(const JumpKernel& q, double s, double t);
double limit_interface_corr(const JumpKernel& q, double tau);

}  // namespace persistlab::walk
