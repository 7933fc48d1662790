#pragma once

// Spec-driven experiment runner: persistence estimates over a list of
// horizons, exponent fits, verification suites and envelope tables.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "persistlab/gp_sampler.hpp"
#include "persistlab/kernel_catalog.hpp"
#include "persistlab/langevin_sim.hpp"
#include "persistlab/rv_toolkit.hpp"

namespace persistlab::experiments {

struct GridSpec {
    double t0 = 0.0;
    double step = 0.05;      // uniform spacing
    double log_step = 0.0;   // > 0 switches to a geometric grid (spacing in log t)
    int max_halvings = 0;    // > 0 refines each horizon until h and h/2 agree
};

// Grid on [t0, T] for one horizon.
std::vector<double> grid_for(const GridSpec& grid, double T, double step_override = 0.0);

struct EstimatorSpec {
    sampler::Method method = sampler::Method::SeqIS;
    std::int64_t n = 10000;
    std::uint64_t seed = 1;
    double level = 0.0;
    bool bridge = false;
};

struct FitSpec {
    std::optional<sampler::FitMode> mode;
    std::vector<double> horizons;
};

struct ExperimentSpec {
    std::string name;
    std::optional<kernels::Kernel> kernel;
    std::optional<langevin::LangevinConfig> langevin;
    std::optional<rv::RegVarFn> rho;  // regressor for per_a_rho; defaults to the kernel's tail
    GridSpec grid;
    EstimatorSpec estimator;
    FitSpec fit;

    void validate() const;

    // One [[experiment]] array of tables. Keys: name, kernel (inline table,
    // same shape as the kernel JSON) or langevin (same keys as the
    // [langevin] table), rho, grid = {t0, step | log_step, max_halvings},
    // estimator = {method, n, seed, level, bridge}, fit = {mode, T}.
    static std::vector<ExperimentSpec> from_toml(const std::string& text);
    static std::vector<ExperimentSpec> from_toml_file(const std::filesystem::path& path);
};

struct ReportRow {
    std::string experiment;
    double T = 0.0;
    sampler::MCEstimate estimate;
    double regressor = 0.0;
    double ratio = 0.0;  // -log p / regressor
    double step = 0.0;   // grid step used (0 for geometric grids)
    bool stable = true;  // h vs h/2 agreement when refinement was requested
};

struct Report {
    std::string name;
    std::vector<ReportRow> rows;  // in T order
    std::optional<sampler::FitResult> fit;

    nlohmann::json to_json() const;
};

// Errors from the modules are rethrown with the experiment name prefixed.
Report run(const ExperimentSpec& spec);

inline constexpr const char* kCsvHeader = "experiment,T,p_hat,stderr,log_p,regressor,ratio";
void write_csv(std::ostream& out, const std::vector<Report>& reports);

struct Check {
    std::string suite;
    std::string name;
    double measured = 0.0;
    double bound = 0.0;
    std::string relation;  // how measured compares to bound, e.g. "<=" or ">="
    bool pass = false;

    std::string line() const;
};

const std::vector<std::string>& suite_names();
// Runs one suite, or every suite for "all". Unknown names throw.
std::vector<Check> verify(const std::string& suite, std::uint64_t seed = 1);

struct EnvelopeRow {
    double T = 0.0;
    double a_rho = 0.0;
    double lower = 0.0;  // c T^alpha (alpha < 1) or c T / log T (alpha = 1)
    double upper = 0.0;  // c T^alpha log T (alpha < 1) or c T (alpha = 1)
};

// Classical envelopes for -log p next to a_rho(T); alpha must lie in (0, 1].
std::vector<EnvelopeRow> envelope_tables(const std::vector<double>& horizons, const rv::RegVarFn& rho,
                                         double c = 1.0);
void write_envelope_csv(std::ostream& out, const std::vector<EnvelopeRow>& rows);

}  // namespace persistlab::experiments
