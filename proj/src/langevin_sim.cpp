#include "persistlab/langevin_sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "persistlab/error.hpp"
#include "persistlab/parallel.hpp"
#include "persistlab/rng.hpp"

namespace persistlab::langevin {

namespace {

constexpr double kGridTol = 1e-9;

std::int64_t step_index(double t, double dt) {
    const double k = t / dt;
    const auto idx = static_cast<std::int64_t>(std::llround(k));
    require(std::abs(k - static_cast<double>(idx)) <= kGridTol * std::max(1.0, k), ErrorKind::Validation,
            "time " + std::to_string(t) + " is not a multiple of dt");
    return idx;
}

std::string walk_problems(const walk::JumpKernel& q) {
    const auto report = walk::validate(q);
    std::string out;
    for (const auto& v : report.violations) out += (out.empty() ? "" : "; ") + v;
    return out;
}

// Simulates replicate r, calling observe(step, g) after every step
// (including step 0); stops as soon as observe returns false.
template <class Observer>
void simulate(const LangevinConfig& config, const TorusWalk& torus, std::int64_t r, Observer&& observe) {
    Stream rng(config.seed, static_cast<std::uint64_t>(r));
    FieldState state = FieldState::zero(torus);
    std::vector<double> noise(static_cast<std::size_t>(torus.sites()));
    if (!observe(std::int64_t{0}, state.values[0])) return;
    const int total = config.steps();
    for (int k = 1; k <= total; ++k) {
        for (auto& x : noise) x = rng.normal();
        step(state, torus, config.dt, noise);
        if (!observe(state.step, state.values[0])) return;
    }
}

template <class T>
void put(std::ofstream& out, T value) {
    static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    require(static_cast<bool>(in), ErrorKind::Io, "trajectory file truncated");
    return value;
}

}  // namespace

// ---------------------------------------------------------------------------
// config

int LangevinConfig::steps() const { return static_cast<int>(step_index(t_max, dt)); }

void LangevinConfig::validate() const {
    require(d >= 1, ErrorKind::Validation, "d must be >= 1");
    require(q.dimension() == d, ErrorKind::Validation, "jump law dimension does not match d");
    const auto problems = walk_problems(q);
    require(problems.empty(), ErrorKind::Validation, "jump law: " + problems);
    require(dt > 0.0 && dt <= 0.05, ErrorKind::Validation, "dt must lie in (0, 0.05]");
    require(t_max > 0.0, ErrorKind::Validation, "t_max must be positive");
    require(L == 1 || L >= 4 * q.range(), ErrorKind::Validation,
            "box side L must be >= 4 x jump range (or exactly 1)");
    require(replicates >= 1, ErrorKind::Validation, "replicates must be >= 1");
    require(persist_stride >= 1, ErrorKind::Validation, "persist_stride must be >= 1");
    steps();
    for (const auto& [s, t] : cov_pairs) {
        require(s >= 0.0 && t >= 0.0 && s <= t_max && t <= t_max, ErrorKind::Validation,
                "covariance times must lie in [0, t_max]");
        step_index(s, dt);
        step_index(t, dt);
    }
    require(persist_t0 >= 0.0 && persist_t1 >= persist_t0 && persist_t1 <= t_max, ErrorKind::Validation,
            "persist window must satisfy 0 <= t0 <= t1 <= t_max");
    step_index(persist_t0, dt);
    step_index(persist_t1, dt);
}

LangevinConfig LangevinConfig::from_toml(const std::string& text) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        throw Error(ErrorKind::Validation, std::string("TOML: ") + std::string(e.description()));
    }
    const auto* tbl = root["langevin"].as_table();
    require(tbl != nullptr, ErrorKind::Validation, "missing [langevin] table");
    const toml::node_view<const toml::node> node{tbl};

    LangevinConfig c;
    c.d = node["d"].value_or(c.d);
    c.L = node["L"].value_or(c.L);
    c.dt = node["dt"].value_or(c.dt);
    c.t_max = node["t_max"].value_or(c.t_max);
    c.replicates = node["replicates"].value_or(c.replicates);
    c.seed = static_cast<std::uint64_t>(node["seed"].value_or(static_cast<std::int64_t>(c.seed)));
    c.persist_stride = node["persist_stride"].value_or(c.persist_stride);
    if (const auto* pairs = node["cov_pairs"].as_array()) {
        for (const auto& item : *pairs) {
            const auto* pair = item.as_array();
            require(pair && pair->size() == 2, ErrorKind::Validation, "cov_pairs entries must be [s, t]");
            c.cov_pairs.emplace_back((*pair)[0].value<double>().value_or(-1.0),
                                     (*pair)[1].value<double>().value_or(-1.0));
        }
    }
    if (const auto* window = node["persist"].as_array()) {
        require(window->size() == 2, ErrorKind::Validation, "persist must be [t0, t1]");
        c.persist_t0 = (*window)[0].value<double>().value_or(-1.0);
        c.persist_t1 = (*window)[1].value<double>().value_or(-1.0);
    } else {
        c.persist_t0 = std::min(1.0, c.t_max);
        c.persist_t1 = c.t_max;
    }
    if (const auto* jumps = node["jumps"].as_array()) {
        std::vector<walk::Jump> support;
        for (const auto& item : *jumps) {
            const auto* entry = item.as_table();
            require(entry != nullptr, ErrorKind::Validation, "jumps entries must be tables");
            walk::Jump j;
            const auto* offset = (*entry)["offset"].as_array();
            require(offset != nullptr, ErrorKind::Validation, "jump entry lacks offset");
            for (const auto& o : *offset) j.offset.push_back(static_cast<int>(o.value<std::int64_t>().value_or(0)));
            j.rate = (*entry)["rate"].value_or(0.0);
            support.push_back(std::move(j));
        }
        c.q = walk::JumpKernel(c.d, std::move(support));
    } else {
        c.q = walk::JumpKernel::simple(c.d);
    }
    c.validate();
    return c;
}

LangevinConfig LangevinConfig::from_toml_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_toml(buffer.str());
}

// ---------------------------------------------------------------------------
// torus

TorusWalk::TorusWalk(const walk::JumpKernel& q, int L) : d_(q.dimension()), L_(L) {
    require(L >= 1 && d_ >= 1, ErrorKind::InvalidArgument, "torus needs L >= 1 and d >= 1");
    double cells = std::pow(static_cast<double>(L), d_);
    require(cells <= 1e7, ErrorKind::InvalidArgument, "torus has too many sites");
    sites_ = static_cast<int>(cells);
    for (const auto& j : q.support()) rates_.push_back(j.rate);
    const std::size_t width = rates_.size();
    neighbours_.resize(static_cast<std::size_t>(sites_) * width);
    std::vector<int> coord(static_cast<std::size_t>(d_));
    for (int x = 0; x < sites_; ++x) {
        int rest = x;
        for (int i = d_ - 1; i >= 0; --i) {
            coord[static_cast<std::size_t>(i)] = rest % L_;
            rest /= L_;
        }
        for (std::size_t k = 0; k < width; ++k) {
            const auto& off = q.support()[k].offset;
            int idx = 0;
            for (int i = 0; i < d_; ++i) {
                const int c = ((coord[static_cast<std::size_t>(i)] + off[static_cast<std::size_t>(i)]) % L_ + L_) % L_;
                idx = idx * L_ + c;
            }
            neighbours_[static_cast<std::size_t>(x) * width + k] = idx;
        }
    }
}

void TorusWalk::convolve(const std::vector<double>& in, std::vector<double>& out) const {
    const std::size_t width = rates_.size();
    out.assign(static_cast<std::size_t>(sites_), 0.0);
    for (int x = 0; x < sites_; ++x) {
        const int* nb = &neighbours_[static_cast<std::size_t>(x) * width];
        double acc = 0.0;
        for (std::size_t k = 0; k < width; ++k) acc += rates_[k] * in[static_cast<std::size_t>(nb[k])];
        out[static_cast<std::size_t>(x)] = acc;
    }
}

void step(FieldState& state, const TorusWalk& torus, double dt, const std::vector<double>& noise) {
    require(noise.size() == state.values.size(), ErrorKind::InvalidArgument, "noise has the wrong size");
    std::vector<double> averaged;
    torus.convolve(state.values, averaged);
    const double amp = std::sqrt(2.0 * dt);
    for (std::size_t x = 0; x < state.values.size(); ++x) {
        state.values[x] += dt * (averaged[x] - state.values[x]) + amp * noise[x];
    }
    state.step += 1;
    state.time = static_cast<double>(state.step) * dt;
}

std::vector<double> origin_trajectory(const LangevinConfig& config, const TorusWalk& torus, std::int64_t r) {
    std::vector<double> g;
    g.reserve(static_cast<std::size_t>(config.steps()) + 1);
    simulate(config, torus, r, [&](std::int64_t, double value) {
        g.push_back(value);
        return true;
    });
    return g;
}

// ---------------------------------------------------------------------------
// estimators

std::vector<CovEstimate> run_cov(const LangevinConfig& config) {
    config.validate();
    const TorusWalk torus(config.q, config.L);
    const auto n = static_cast<std::size_t>(config.replicates);
    const std::size_t pairs = config.cov_pairs.size();
    std::vector<std::pair<std::int64_t, std::int64_t>> idx;
    std::int64_t last = 0;
    for (const auto& [s, t] : config.cov_pairs) {
        idx.emplace_back(step_index(s, config.dt), step_index(t, config.dt));
        last = std::max({last, idx.back().first, idx.back().second});
    }
    std::vector<double> products(n * pairs);
    parallel_for(n, [&](std::size_t r) {
        std::vector<double> g;
        simulate(config, torus, static_cast<std::int64_t>(r), [&](std::int64_t k, double value) {
            g.push_back(value);
            return k < last;
        });
        for (std::size_t p = 0; p < pairs; ++p) {
            products[r * pairs + p] = g[static_cast<std::size_t>(idx[p].first)] * g[static_cast<std::size_t>(idx[p].second)];
        }
    });
    std::vector<CovEstimate> out;
    for (std::size_t p = 0; p < pairs; ++p) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double v = products[r * pairs + p];
            s1 += v;
            s2 += v * v;
        }
        const double nn = static_cast<double>(n);
        const double mean = s1 / nn;
        const double var = n > 1 ? std::max(0.0, (s2 - nn * mean * mean) / (nn - 1.0)) : 0.0;
        out.push_back({config.cov_pairs[p].first, config.cov_pairs[p].second, mean, std::sqrt(var / nn),
                       static_cast<std::int64_t>(n)});
    }
    return out;
}

std::vector<Moments> run_moments(const LangevinConfig& config, const std::vector<double>& times) {
    config.validate();
    const TorusWalk torus(config.q, config.L);
    const auto n = static_cast<std::size_t>(config.replicates);
    std::vector<std::int64_t> idx;
    std::int64_t last = 0;
    for (double t : times) {
        require(t >= 0.0 && t <= config.t_max, ErrorKind::Validation, "moment time outside [0, t_max]");
        idx.push_back(step_index(t, config.dt));
        last = std::max(last, idx.back());
    }
    const std::size_t m = times.size();
    std::vector<double> values(n * m);
    parallel_for(n, [&](std::size_t r) {
        std::vector<double> g;
        simulate(config, torus, static_cast<std::int64_t>(r), [&](std::int64_t k, double value) {
            g.push_back(value);
            return k < last;
        });
        for (std::size_t j = 0; j < m; ++j) values[r * m + j] = g[static_cast<std::size_t>(idx[j])];
    });
    const double nn = static_cast<double>(n);
    std::vector<Moments> out;
    for (std::size_t j = 0; j < m; ++j) {
        Moments mo;
        mo.t = times[j];
        for (std::size_t r = 0; r < n; ++r) mo.mean += values[r * m + j];
        mo.mean /= nn;
        double m2 = 0.0, m3 = 0.0, m4 = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double c = values[r * m + j] - mo.mean;
            m2 += c * c;
            m3 += c * c * c;
            m4 += c * c * c * c;
        }
        m2 /= nn;
        m3 /= nn;
        m4 /= nn;
        mo.variance = m2 * nn / std::max(1.0, nn - 1.0);
        mo.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
        mo.excess_kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
        mo.skewness_se = std::sqrt(6.0 / nn);
        mo.kurtosis_se = std::sqrt(24.0 / nn);
        out.push_back(mo);
    }
    return out;
}

std::vector<double> persistence_grid(const LangevinConfig& config, double t0, double t1) {
    const auto i0 = step_index(t0, config.dt);
    const auto i1 = step_index(t1, config.dt);
    require(i1 >= i0, ErrorKind::InvalidArgument, "persistence window needs t1 >= t0");
    std::vector<double> grid;
    for (auto k = i0; k <= i1; k += config.persist_stride) grid.push_back(static_cast<double>(k) * config.dt);
    return grid;
}

std::vector<sampler::MCEstimate> run_persistence_curve(const LangevinConfig& config, double t0,
                                                       const std::vector<double>& ends) {
    config.validate();
    require(!ends.empty(), ErrorKind::InvalidArgument, "no end times given");
    const TorusWalk torus(config.q, config.L);
    const auto i0 = step_index(t0, config.dt);
    std::int64_t last = i0;
    std::vector<std::int64_t> end_idx;
    for (double t : ends) {
        require(t >= t0 && t <= config.t_max, ErrorKind::Validation, "end time outside [t0, t_max]");
        end_idx.push_back(step_index(t, config.dt));
        last = std::max(last, end_idx.back());
    }
    const auto stride = static_cast<std::int64_t>(config.persist_stride);
    const auto n = static_cast<std::size_t>(config.replicates);
    constexpr auto kSurvived = std::numeric_limits<std::int64_t>::max();
    // First checked step with g >= 0, or kSurvived.
    std::vector<std::int64_t> first_fail(n, kSurvived);
    parallel_for(n, [&](std::size_t r) {
        simulate(config, torus, static_cast<std::int64_t>(r), [&](std::int64_t k, double value) {
            if (k >= i0 && (k - i0) % stride == 0 && value >= 0.0) {
                first_fail[r] = k;
                return false;
            }
            return k < last;
        });
    });
    std::vector<sampler::MCEstimate> out;
    for (std::size_t e = 0; e < ends.size(); ++e) {
        std::int64_t hits = 0;
        for (auto f : first_fail) hits += f > end_idx[e] ? 1 : 0;
        const auto checked = static_cast<int>((end_idx[e] - i0) / stride + 1);
        out.push_back(sampler::wilson_estimate(hits, static_cast<std::int64_t>(n), config.seed, checked));
    }
    return out;
}

sampler::MCEstimate run_persistence(const LangevinConfig& config, double t0, double t1) {
    return run_persistence_curve(config, t0, {t1}).front();
}

// ---------------------------------------------------------------------------
// trajectory files

void write_trajectories(const std::filesystem::path& path, const LangevinConfig& config, int replicates) {
    config.validate();
    require(replicates >= 1, ErrorKind::InvalidArgument, "replicates must be >= 1");
    const TorusWalk torus(config.q, config.L);
    std::vector<std::vector<double>> paths(static_cast<std::size_t>(replicates));
    parallel_for(paths.size(), [&](std::size_t r) { paths[r] = origin_trajectory(config, torus, static_cast<std::int64_t>(r)); });
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
    out.write("PHI1", 4);
    put<std::int32_t>(out, config.d);
    put<std::int32_t>(out, config.L);
    put<double>(out, config.dt);
    put<std::int64_t>(out, config.steps());
    put<std::int64_t>(out, replicates);
    for (const auto& g : paths) {
        for (double v : g) put<double>(out, v);
    }
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

TrajectoryFile read_trajectories(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    require(static_cast<bool>(in) && std::memcmp(magic, "PHI1", 4) == 0, ErrorKind::Io, "not a PHI1 trajectory file");
    TrajectoryFile f;
    f.d = get<std::int32_t>(in);
    f.L = get<std::int32_t>(in);
    f.dt = get<double>(in);
    f.steps = get<std::int64_t>(in);
    const auto reps = get<std::int64_t>(in);
    require(f.steps >= 0 && reps >= 0, ErrorKind::Io, "corrupt trajectory header");
    f.trajectories.resize(static_cast<std::size_t>(reps));
    for (auto& g : f.trajectories) {
        g.resize(static_cast<std::size_t>(f.steps) + 1);
        for (auto& v : g) v = get<double>(in);
    }
    return f;
}

}  // namespace persistlab::langevin
