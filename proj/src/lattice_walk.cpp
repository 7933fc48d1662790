#include "persistlab/lattice_walk.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <numbers>

#include "persistlab/error.hpp"

namespace persistlab::walk {

namespace {

constexpr double kBoxCellBudget = 4e6;
constexpr double kSpectralCellBudget = 1.6e7;
constexpr int kMaxDimension = 4;

double poisson_log_weight(int n, double u) {
    if (u == 0.0) return n == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return -u + n * std::log(u) - std::lgamma(n + 1.0);
}

int poisson_cutoff(double u) { return static_cast<int>(std::ceil(u + 12.0 * std::sqrt(u) + 50.0)); }

// Iterates every point of the cube [-radius, radius]^d inside a box of the
// given half-width, calling fn(flat_index). Order is lexicographic.
template <class Fn>
void for_each_in_cube(int d, int radius, int half_width, Fn&& fn) {
    const long long side = 2LL * half_width + 1;
    std::vector<int> coord(d, -radius);
    while (true) {
        long long idx = 0;
        for (int i = 0; i < d; ++i) idx = idx * side + (coord[i] + half_width);
        fn(idx);
        int i = d - 1;
        while (i >= 0 && coord[i] == radius) {
            coord[i] = -radius;
            --i;
        }
        if (i < 0) break;
        ++coord[i];
    }
}

ReturnProbTable box_table(const JumpKernel& q, int n_max) {
    const int d = q.dimension();
    const int R = q.range();
    const int steps = (n_max + 2) / 2;  // P_m needed for m <= ceil((n_max+1)/2)
    const int half_width = R * steps;
    const long long side = 2LL * half_width + 1;
    long long cells = 1;
    for (int i = 0; i < d; ++i) cells *= side;

    std::vector<long long> shifts;
    std::vector<double> rates;
    for (const auto& jump : q.support()) {
        long long off = 0;
        for (int i = 0; i < d; ++i) off = off * side + jump.offset[i];
        shifts.push_back(off);
        rates.push_back(jump.rate);
    }

    std::vector<double> current(static_cast<std::size_t>(cells), 0.0);
    std::vector<double> next(static_cast<std::size_t>(cells), 0.0);
    long long origin = 0;
    for (int i = 0; i < d; ++i) origin = origin * side + half_width;
    current[origin] = 1.0;

    ReturnProbTable out;
    out.method = "box";
    out.bipartite = q.bipartite();
    out.p.assign(static_cast<std::size_t>(n_max) + 1, 0.0);
    out.p[0] = 1.0;
    for (int m = 0; m < steps; ++m) {
        // next = P_{m+1}
        std::fill(next.begin(), next.end(), 0.0);
        for_each_in_cube(d, R * m, half_width, [&](long long idx) {
            const double mass = current[idx];
            if (mass == 0.0) return;
            for (std::size_t j = 0; j < shifts.size(); ++j) next[idx + shifts[j]] += rates[j] * mass;
        });
        double same = 0.0;   // sum P_{m+1}(x)^2 -> p_{2m+2}
        double cross = 0.0;  // sum P_m(x) P_{m+1}(x) -> p_{2m+1}
        for_each_in_cube(d, R * (m + 1), half_width, [&](long long idx) {
            same += next[idx] * next[idx];
            cross += current[idx] * next[idx];
        });
        if (2 * m + 1 <= n_max) out.p[2 * m + 1] = out.bipartite ? 0.0 : cross;
        if (2 * m + 2 <= n_max) out.p[2 * m + 2] = same;
        std::swap(current, next);
    }
    return out;
}

// 1 - phi(k) on an N^d torus grid, phi(k) = sum_x q(x) cos(k.x).
std::vector<double> torus_symbol(const JumpKernel& q, int side) {
    const int d = q.dimension();
    long long cells = 1;
    for (int i = 0; i < d; ++i) cells *= side;
    std::vector<double> psi(static_cast<std::size_t>(cells));
    std::vector<int> coord(d, 0);
    const double step = 2.0 * std::numbers::pi / side;
    for (long long idx = 0; idx < cells; ++idx) {
        double phi = 0.0;
        for (const auto& jump : q.support()) {
            double dot = 0.0;
            for (int i = 0; i < d; ++i) dot += coord[i] * jump.offset[i];
            phi += jump.rate * std::cos(step * dot);
        }
        psi[idx] = 1.0 - phi;
        for (int i = d - 1; i >= 0; --i) {
            if (++coord[i] < side) break;
            coord[i] = 0;
        }
    }
    return psi;
}

// Torus side N: the first image term is ~exp(-N^2 / (2 s^2)), about e^-50
// relative for N = 10 s.
int torus_side(const JumpKernel& q, double spread) {
    const double s = std::sqrt(spread * q.max_coordinate_variance());
    int side = static_cast<int>(std::ceil(10.0 * s + 4.0 * q.range() + 4.0));
    side = (side + 15) / 16 * 16;
    return side;
}

ReturnProbTable spectral_table(const JumpKernel& q, int n_max) {
    const int side = torus_side(q, n_max);
    const double cells = std::pow(static_cast<double>(side), q.dimension());
    require(cells <= kSpectralCellBudget, ErrorKind::Unsupported,
            "return-probability table too large for the spectral budget");
    const auto psi = torus_symbol(q, side);
    std::vector<double> phi(psi.size());
    std::vector<double> power(psi.size(), 1.0);
    for (std::size_t i = 0; i < psi.size(); ++i) phi[i] = 1.0 - psi[i];
    ReturnProbTable out;
    out.method = "spectral";
    out.bipartite = q.bipartite();
    out.p.assign(static_cast<std::size_t>(n_max) + 1, 0.0);
    out.p[0] = 1.0;
    for (int n = 1; n <= n_max; ++n) {
        double sum = 0.0;
        for (std::size_t i = 0; i < psi.size(); ++i) {
            power[i] *= phi[i];
            sum += power[i];
        }
        out.p[n] = (out.bipartite && n % 2 == 1) ? 0.0 : std::max(0.0, sum / cells);
    }
    out.wrap_error = 1e-16;
    return out;
}

int box_capacity_for(const JumpKernel& q) {
    const double side = std::floor(std::pow(kBoxCellBudget, 1.0 / q.dimension()));
    const int half_width = static_cast<int>((side - 1.0) / 2.0);
    const int steps = half_width / q.range();
    return std::max(1, 2 * steps - 2);
}

// Integer span of the rows equals Z^d iff the Hermite-reduced matrix has
// full rank with unit pivots.
bool generates_integer_lattice(int d, const std::vector<Jump>& support) {
    std::vector<std::vector<long long>> rows;
    for (const auto& jump : support) rows.emplace_back(jump.offset.begin(), jump.offset.end());
    std::size_t pivot_row = 0;
    long long index = 1;
    for (int col = 0; col < d; ++col) {
        while (true) {
            // Smallest nonzero |entry| in this column among remaining rows.
            std::size_t best = rows.size();
            for (std::size_t r = pivot_row; r < rows.size(); ++r) {
                if (rows[r][col] != 0 && (best == rows.size() || std::llabs(rows[r][col]) < std::llabs(rows[best][col]))) {
                    best = r;
                }
            }
            if (best == rows.size()) return false;  // rank deficient
            std::swap(rows[pivot_row], rows[best]);
            bool reduced = true;
            for (std::size_t r = pivot_row + 1; r < rows.size(); ++r) {
                const long long factor = rows[r][col] / rows[pivot_row][col];
                if (factor != 0) {
                    for (int c = 0; c < d; ++c) rows[r][c] -= factor * rows[pivot_row][c];
                }
                if (rows[r][col] != 0) reduced = false;
            }
            if (reduced) break;
        }
        index *= std::llabs(rows[pivot_row][col]);
        ++pivot_row;
    }
    return index == 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// JumpKernel

JumpKernel::JumpKernel(int dimension, std::vector<Jump> support)
    : dimension_(dimension), support_(std::move(support)) {
    require(dimension >= 1, ErrorKind::InvalidArgument, "lattice dimension must be >= 1");
    for (const auto& jump : support_) {
        require(static_cast<int>(jump.offset.size()) == dimension, ErrorKind::InvalidArgument,
                "jump offset dimension mismatch");
    }
}

JumpKernel JumpKernel::simple(int dimension) {
    std::vector<Jump> support;
    for (int i = 0; i < dimension; ++i) {
        for (int sign : {1, -1}) {
            Jump jump;
            jump.offset.assign(dimension, 0);
            jump.offset[i] = sign;
            jump.rate = 1.0 / (2.0 * dimension);
            support.push_back(jump);
        }
    }
    return JumpKernel(dimension, std::move(support));
}

JumpKernel JumpKernel::from_json(const nlohmann::json& spec) {
    try {
        const nlohmann::json& list = spec.is_object() ? spec.at("jumps") : spec;
        require(list.is_array() && !list.empty(), ErrorKind::InvalidArgument, "jump kernel needs a non-empty list");
        std::vector<Jump> support;
        int d = -1;
        for (const auto& entry : list) {
            Jump jump;
            jump.offset = entry.at(0).get<std::vector<int>>();
            jump.rate = entry.at(1).get<double>();
            if (d < 0) d = static_cast<int>(jump.offset.size());
            support.push_back(std::move(jump));
        }
        return JumpKernel(d, std::move(support));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("malformed jump kernel: ") + e.what());
    }
}

nlohmann::json JumpKernel::to_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& jump : support_) list.push_back({jump.offset, jump.rate});
    return list;
}

int JumpKernel::range() const {
    int r = 0;
    for (const auto& jump : support_) {
        for (int x : jump.offset) r = std::max(r, std::abs(x));
    }
    return std::max(r, 1);
}

double JumpKernel::max_coordinate_variance() const {
    double best = 0.0;
    for (int i = 0; i < dimension_; ++i) {
        double v = 0.0;
        for (const auto& jump : support_) v += jump.rate * jump.offset[i] * jump.offset[i];
        best = std::max(best, v);
    }
    return best;
}

bool JumpKernel::bipartite() const {
    for (unsigned mask = 1; mask < (1u << dimension_); ++mask) {
        bool all_odd = true;
        for (const auto& jump : support_) {
            int parity = 0;
            for (int i = 0; i < dimension_; ++i) {
                if (mask & (1u << i)) parity += jump.offset[i];
            }
            if (std::abs(parity) % 2 == 0) {
                all_odd = false;
                break;
            }
        }
        if (all_odd) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// validate

ValidationReport validate(const JumpKernel& q) {
    ValidationReport report;
    const auto& support = q.support();
    auto rate_at = [&](const std::vector<int>& x) {
        double total = 0.0;
        for (const auto& jump : support) {
            if (jump.offset == x) total += jump.rate;
        }
        return total;
    };
    double total = 0.0;
    for (const auto& jump : support) {
        total += jump.rate;
        if (!(jump.rate > 0.0) || !std::isfinite(jump.rate)) report.positive_rates = false;
        if (std::all_of(jump.offset.begin(), jump.offset.end(), [](int v) { return v == 0; })) {
            report.origin_absent = false;
        }
        std::vector<int> mirrored(jump.offset.size());
        std::transform(jump.offset.begin(), jump.offset.end(), mirrored.begin(), [](int v) { return -v; });
        if (std::abs(rate_at(mirrored) - rate_at(jump.offset)) > 1e-12) report.symmetric = false;
    }
    report.finite_range = !support.empty();
    report.normalized = std::abs(total - 1.0) <= 1e-12;
    report.generates_lattice = generates_integer_lattice(q.dimension(), support);

    if (!report.symmetric) report.violations.push_back("symmetry: q(x) != q(-x)");
    if (!report.finite_range) report.violations.push_back("finite range: empty support");
    if (!report.normalized) report.violations.push_back("normalization: sum of rates is " + std::to_string(total));
    if (!report.origin_absent) report.violations.push_back("normalization: q(0) must be absent");
    if (!report.positive_rates) report.violations.push_back("rates must be positive and finite");
    if (!report.generates_lattice) report.violations.push_back("generation: support does not span Z^d");
    return report;
}

// ---------------------------------------------------------------------------
// step_return_probs

namespace {
void require_valid(const JumpKernel& q) {
    const auto report = validate(q);
    if (!report.ok()) throw Error(ErrorKind::Validation, "jump kernel fails validation: " + report.violations.front());
}
}  // namespace

ReturnProbTable step_return_probs(const JumpKernel& q, int n_max) {
    require(n_max >= 1, ErrorKind::InvalidArgument, "n_max must be >= 1");
    require(q.dimension() <= kMaxDimension, ErrorKind::Unsupported, "return-probability tables need d <= 4");
    require_valid(q);
    if (n_max <= box_capacity_for(q)) return box_table(q, n_max);
    return spectral_table(q, n_max);
}

// ---------------------------------------------------------------------------
// LatticeWalk

LatticeWalk::LatticeWalk(JumpKernel q) : q_(std::move(q)) {
    require(q_.dimension() <= kMaxDimension, ErrorKind::Unsupported, "lattice walks need d <= 4");
    require_valid(q_);
    primitive_ = std::make_shared<rv::PrimitiveTable>([this](double u) { return return_prob(u); },
                                                      rv::kDefaultTolerance);
}

int LatticeWalk::box_capacity() const { return box_capacity_for(q_); }

ReturnProbTable LatticeWalk::table(int n_max) const {
    std::lock_guard lock(mutex_);
    if (!table_ || static_cast<int>(table_->p.size()) <= n_max) {
        const int current = table_ ? static_cast<int>(table_->p.size()) - 1 : 0;
        const int target = std::max(n_max, std::min(2 * current, box_capacity()));
        table_ = std::make_shared<const ReturnProbTable>(step_return_probs(q_, target));
    }
    ReturnProbTable copy = *table_;
    copy.p.resize(static_cast<std::size_t>(n_max) + 1);
    return copy;
}

double LatticeWalk::uniformized(double u, const std::vector<double>& p) const {
    const int cutoff = poisson_cutoff(u);
    double sum = 0.0;
    for (int n = 0; n <= cutoff; ++n) {
        if (p[n] == 0.0) continue;
        sum += std::exp(poisson_log_weight(n, u)) * p[n];
    }
    return sum;
}

double LatticeWalk::spectral(double u) const {
    const int side = torus_side(q_, u);
    const double cells = std::pow(static_cast<double>(side), q_.dimension());
    require(cells <= kSpectralCellBudget, ErrorKind::ToleranceUnreachable,
            "rho_q(u) at u=" + std::to_string(u) + " exceeds the spectral grid budget");
    std::vector<double> psi;
    {
        std::lock_guard lock(mutex_);
        if (spectral_side_ != side) {
            spectral_psi_ = torus_symbol(q_, side);
            spectral_side_ = side;
        }
        psi = spectral_psi_;
    }
    double sum = 0.0;
    for (double v : psi) sum += std::exp(-u * v);
    return sum / cells;
}

double LatticeWalk::return_prob(double u, double tol) const {
    require(u >= 0.0 && std::isfinite(u), ErrorKind::InvalidArgument, "return probability needs finite u >= 0");
    require(tol > 0.0, ErrorKind::InvalidArgument, "tolerance must be positive");
    if (u == 0.0) return 1.0;
    const int cutoff = poisson_cutoff(u);
    // The cutoff's Poisson tail is below 1e-12 for u <= 1e3; tighter requests
    // or larger u need the spectral route.
    if (cutoff <= box_capacity() && (tol >= 1e-12 || u <= 1.0)) {
        std::shared_ptr<const ReturnProbTable> snapshot;
        {
            std::lock_guard lock(mutex_);
            snapshot = table_;
        }
        if (!snapshot || static_cast<int>(snapshot->p.size()) <= cutoff) {
            table(cutoff);
            std::lock_guard lock(mutex_);
            snapshot = table_;
        }
        return uniformized(u, snapshot->p);
    }
    return spectral(u);
}

double LatticeWalk::return_prob_primitive(double t) const { return (*primitive_)(t); }

double LatticeWalk::gamma(double s, double t) const {
    require(s > 0.0 && t > 0.0, ErrorKind::InvalidArgument, "Gamma_q needs s, t > 0");
    return return_prob_primitive(s + t) - return_prob_primitive(std::abs(s - t));
}

double LatticeWalk::gamma_normalized(double s, double t) const {
    if (s == t) return 1.0;
    return gamma(s, t) / std::sqrt(return_prob_primitive(2.0 * s) * return_prob_primitive(2.0 * t));
}

void LatticeWalk::fit_tail() const { std::call_once(tail_once_, [this] { compute_tail_fit(); }); }

// Uses a fixed-size table so the fit does not depend on earlier queries.
void LatticeWalk::compute_tail_fit() const {
    const int d = q_.dimension();
    const int n_table = std::min(box_capacity(), 4000);
    const ReturnProbTable tab = step_return_probs(q_, n_table);
    const int period = tab.bipartite ? 2 : 1;
    int last = n_table;
    if (period == 2 && last % 2 == 1) --last;
    int first = last / 2;
    if (period == 2 && first % 2 == 1) --first;
    const double s = 0.5 * d;
    const double y1 = std::pow(last, s) * tab.p[last];
    const double y0 = std::pow(first, s) * tab.p[first];
    const double cd = (y1 - y0) / (1.0 / last - 1.0 / first);
    const double c = y1 - cd / last;

    std::lock_guard lock(mutex_);
    if (!table_ || table_->p.size() < tab.p.size()) table_ = std::make_shared<const ReturnProbTable>(tab);
    tail_c_ = c;
    tail_cd_ = cd;
    tail_last_ = last;
    tail_period_ = period;
}

GreenResult LatticeWalk::green(int k) const {
    require(k >= 0, ErrorKind::InvalidArgument, "Green index must be >= 0");
    if (q_.dimension() <= 2) throw Error(ErrorKind::Divergent, "Green function diverges for recurrent walks (d <= 2)");
    fit_tail();
    std::shared_ptr<const ReturnProbTable> snapshot;
    {
        std::lock_guard lock(mutex_);
        snapshot = table_;
    }
    const double s = 0.5 * q_.dimension();
    auto envelope = [&](double n) { return tail_c_ * std::pow(n, -s) + tail_cd_ * std::pow(n, -s - 1.0); };
    // Sum of the envelope over n = start, start + period, ...
    auto tail_from = [&](int start) {
        constexpr int kDirect = 20000;
        double sum = 0.0;
        for (int j = 0; j < kDirect; ++j) sum += envelope(start + static_cast<double>(j) * tail_period_);
        const double x = start + (kDirect - 0.5) * tail_period_;
        sum += (tail_c_ * std::pow(x, 1.0 - s) / (s - 1.0) + tail_cd_ * std::pow(x, -s) / s) / tail_period_;
        return sum;
    };
    GreenResult out;
    if (k <= tail_last_) {
        for (int n = tail_last_; n >= k; --n) out.partial_sum += snapshot->p[n];
        out.tail = tail_from(tail_last_ + tail_period_);
    } else {
        int start = k;
        while ((start - tail_last_) % tail_period_ != 0) ++start;
        out.tail = tail_from(start);
    }
    out.value = out.partial_sum + out.tail;
    out.upper_bound = out.partial_sum + 1.5 * out.tail;
    return out;
}

double LatticeWalk::limit_interface_corr(double tau) const {
    require(tau >= 0.0, ErrorKind::InvalidArgument, "tau must be >= 0");
    if (q_.dimension() <= 2) throw Error(ErrorKind::Divergent, "limit kernel needs a transient walk (d >= 3)");
    if (tau == 0.0) return 1.0;
    const double g0 = green(0).value;
    const int cutoff = poisson_cutoff(tau);
    double sum = 0.0;
    for (int k = 0; k <= cutoff; ++k) sum += std::exp(poisson_log_weight(k, tau)) * green(k).value;
    return sum / g0;
}

// ---------------------------------------------------------------------------
// Free functions

double return_prob_ct(const JumpKernel& q, double u, double tol) { return LatticeWalk(q).return_prob(u, tol); }

GreenResult green(const JumpKernel& q, int k) { return LatticeWalk(q).green(k); }

GammaValue gamma_corr(const JumpKernel& q, double s, double t) {
    const LatticeWalk walk(q);
    return {walk.gamma(s, t), walk.gamma_normalized(s, t)};
}

double limit_interface_corr(const JumpKernel& q, double tau) { return LatticeWalk(q).limit_interface_corr(tau); }

}  // namespace persistlab::walk
