#pragma once

// Euler-Maruyama simulation of the linear interface dynamics
//   d phi_t(x) = (-phi_t(x) + sum_y q(y) phi_t(x + y)) dt + sqrt(2) dB_t(x)
// on the periodic box (Z / L Z)^d started from phi_0 = 0, observed at the
// origin g_t = phi_t(0).

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "persistlab/gp_sampler.hpp"
#include "persistlab/lattice_walk.hpp"

namespace persistlab::langevin {

struct LangevinConfig {
    int d = 1;
    int L = 64;
    walk::JumpKernel q = walk::JumpKernel::simple(1);
    double dt = 0.01;
    double t_max = 1.0;
    int replicates = 1000;
    std::uint64_t seed = 1;
    std::vector<std::pair<double, double>> cov_pairs;
    double persist_t0 = 1.0;
    double persist_t1 = 1.0;
    int persist_stride = 1;  // check g every this many steps

    int steps() const;
    // dt <= 0.05, L >= 4 R (or the degenerate L = 1), time grid consistent.
    void validate() const;

    // [langevin] table: d, L, dt, t_max, replicates, seed, cov_pairs = [[s, t], ...],
    // persist = [t0, t1], persist_stride, and optional [[langevin.jumps]]
    // entries {offset = [...], rate = ...}; defaults to the nearest-neighbour walk.
    static LangevinConfig from_toml(const std::string& text);
    static LangevinConfig from_toml_file(const std::filesystem::path& path);
};

// Jump law folded onto the torus, with per-site neighbour indices.
class TorusWalk {
public:
    TorusWalk(const walk::JumpKernel& q, int L);

    int sites() const { return sites_; }
    int dimension() const { return d_; }
    int side() const { return L_; }
    // out(x) = sum_y q(y) in(x + y mod L).
    void convolve(const std::vector<double>& in, std::vector<double>& out) const;

private:
    int d_;
    int L_;
    int sites_;
    std::vector<double> rates_;
    std::vector<int> neighbours_;  // sites_ x rates_.size()
};

struct FieldState {
    std::vector<double> values;
    double time = 0.0;
    std::int64_t step = 0;

    static FieldState zero(const TorusWalk& torus) { return {std::vector<double>(static_cast<std::size_t>(torus.sites()), 0.0), 0.0, 0}; }
};

// phi <- phi + dt (-phi + q * phi) + sqrt(2 dt) noise.
void step(FieldState& state, const TorusWalk& torus, double dt, const std::vector<double>& noise);

// g_t at steps 0..steps() for replicate r; a pure function of (config, r).
std::vector<double> origin_trajectory(const LangevinConfig& config, const TorusWalk& torus, std::int64_t r);

struct CovEstimate {
    double s = 0.0;
    double t = 0.0;
    double cov = 0.0;
    double std_error = 0.0;
    std::int64_t n = 0;
};

// Empirical E[g_s g_t] over replicates (the field is centered).
std::vector<CovEstimate> run_cov(const LangevinConfig& config);

struct Moments {
    double t = 0.0;
    double mean = 0.0;
    double variance = 0.0;
    double skewness = 0.0;
    double skewness_se = 0.0;
    double excess_kurtosis = 0.0;
    double kurtosis_se = 0.0;
};

// Sample moments of g_t across replicates.
std::vector<Moments> run_moments(const LangevinConfig& config, const std::vector<double>& times);

// P(g < 0 at every checked step in [t0, t]) for each t in `ends`, all from
// the same replicates. Each entry uses the Wilson standard error; a zero
// count throws AllExceeded.
std::vector<sampler::MCEstimate> run_persistence_curve(const LangevinConfig& config, double t0,
                                                       const std::vector<double>& ends);
sampler::MCEstimate run_persistence(const LangevinConfig& config, double t0, double t1);

// Times checked by the persistence observers: t0, t0 + stride dt, ..., <= t1.
std::vector<double> persistence_grid(const LangevinConfig& config, double t0, double t1);

// Little-endian binary file: "PHI1", int32 d, int32 L, float64 dt,
// int64 steps, int64 replicates, then steps + 1 float64 values of g per
// replicate.
void write_trajectories(const std::filesystem::path& path, const LangevinConfig& config, int replicates);

struct TrajectoryFile {
    int d = 0;
    int L = 0;
    double dt = 0.0;
    std::int64_t steps = 0;
    std::vector<std::vector<double>> trajectories;
};
TrajectoryFile read_trajectories(const std::filesystem::path& path);

}  // namespace persistlab::langevin
