// Command-line front end: rv, kernel, walk, persist, fit, langevin, verify, envelopes.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "persistlab/error.hpp"
#include "persistlab/experiments.hpp"
#include "persistlab/parallel.hpp"

namespace fs = std::filesystem;
using namespace persistlab;
using nlohmann::json;

namespace {

struct Globals {
    std::string spec;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out = "out";
    unsigned threads = 0;
};

fs::path out_dir(const Globals& g) {
    fs::path dir(g.out);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::Io, "cannot write " + path.string());
    f << text;
}

std::vector<experiments::ExperimentSpec> load_specs(const Globals& g) {
    require(!g.spec.empty(), ErrorKind::InvalidArgument, "--spec <path> is required");
    auto specs = experiments::ExperimentSpec::from_toml_file(g.spec);
    if (g.seed_given) {
        for (auto& s : specs) {
            s.estimator.seed = g.seed;
            if (s.langevin) s.langevin->seed = g.seed;
        }
    }
    return specs;
}

std::vector<experiments::Report> run_all(const Globals& g) {
    std::vector<experiments::Report> reports;
    for (const auto& s : load_specs(g)) reports.push_back(experiments::run(s));
    return reports;
}

int cmd_rv(const Globals&, const std::string& rho_json, const std::vector<double>& ts) {
    const auto rho = rv::RegVarFn::from_json(json::parse(rho_json));
    json rows = json::array();
    for (double t : ts) {
        json row{{"t", t}, {"rho", rho(t)}, {"I", rv::primitive(rho, t)}};
        try {
            row["a_rho"] = rv::decay_rate(rho, t);
        } catch (const Error&) {
            row["a_rho"] = nullptr;
        }
        rows.push_back(row);
    }
    std::cout << json{{"rho", rho.to_json()}, {"rows", rows}}.dump(2) << '\n';
    return 0;
}

int cmd_kernel(const Globals& g, const std::string& kernel_json, double t0, double t1, double step) {
    const auto k = kernels::Kernel::from_json(json::parse(kernel_json));
    const auto grid = sampler::uniform_grid(t0, t1, step);
    const auto gram = kernels::gram(k, grid);
    const auto path = out_dir(g) / "kernel_matrix.csv";
    std::ofstream f(path);
    kernels::write_matrix_csv(f, gram.matrix);
    std::cout << json{{"kernel", k.to_json()}, {"points", grid.size()}, {"jitter_used", gram.jitter_used},
                      {"matrix_csv", path.string()}}
                     .dump(2)
              << '\n';
    return 0;
}

int cmd_walk(const Globals&, int d, const std::string& jumps_json, const std::vector<double>& us) {
    const auto q = jumps_json.empty() ? walk::JumpKernel::simple(d) : walk::JumpKernel::from_json(json::parse(jumps_json));
    const auto report = walk::validate(q);
    if (!report.ok()) {
        for (const auto& v : report.violations) std::cerr << "jump law: " << v << '\n';
        return 2;
    }
    const walk::LatticeWalk w(q);
    json rows = json::array();
    for (double u : us) rows.push_back({{"u", u}, {"return_prob", w.return_prob(u)}});
    json out{{"jumps", q.to_json()}, {"rows", rows}};
    if (q.dimension() >= 3) {
        const auto g0 = w.green(0);
        out["green0"] = {{"value", g0.value}, {"upper_bound", g0.upper_bound}};
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_persist(const Globals& g) {
    const auto reports = run_all(g);
    std::ostringstream csv;
    experiments::write_csv(csv, reports);
    const auto dir = out_dir(g);
    write_text(dir / "persist.csv", csv.str());
    json all = json::array();
    for (const auto& r : reports) all.push_back(r.to_json());
    write_text(dir / "persist.json", all.dump(2) + "\n");
    std::cout << csv.str();
    return 0;
}

int cmd_fit(const Globals& g) {
    const auto reports = run_all(g);
    json fits = json::array();
    for (const auto& r : reports) {
        fits.push_back({{"experiment", r.name}, {"fit", r.fit ? r.fit->to_json() : json(nullptr)}});
    }
    write_text(out_dir(g) / "fit.json", fits.dump(2) + "\n");
    std::cout << fits.dump(2) << '\n';
    return 0;
}

int cmd_langevin(const Globals& g, int trajectories) {
    require(!g.spec.empty(), ErrorKind::InvalidArgument, "--spec <path> is required");
    auto config = langevin::LangevinConfig::from_toml_file(g.spec);
    if (g.seed_given) config.seed = g.seed;
    json out;
    json cov = json::array();
    for (const auto& c : langevin::run_cov(config)) {
        cov.push_back({{"s", c.s}, {"t", c.t}, {"cov", c.cov}, {"stderr", c.std_error}, {"n", c.n}});
    }
    out["cov"] = cov;
    try {
        out["persistence"] = langevin::run_persistence(config, config.persist_t0, config.persist_t1).to_json();
        out["persistence"]["window"] = {config.persist_t0, config.persist_t1};
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::AllExceeded) throw;
        out["persistence"] = {{"error", e.what()}};
    }
    const auto dir = out_dir(g);
    if (trajectories > 0) {
        const auto path = dir / "trajectories.phi1";
        langevin::write_trajectories(path, config, trajectories);
        out["trajectories"] = path.string();
    }
    write_text(dir / "langevin.json", out.dump(2) + "\n");
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_verify(const Globals& g, const std::string& suite) {
    const auto checks = experiments::verify(suite, g.seed_given ? g.seed : 1);
    bool ok = true;
    std::ostringstream log;
    for (const auto& c : checks) {
        log << c.line() << '\n';
        ok = ok && c.pass;
    }
    std::cout << log.str() << (ok ? "ALL PASS" : "SOME CHECKS FAILED") << '\n';
    write_text(out_dir(g) / ("verify_" + suite + ".txt"), log.str());
    return ok ? 0 : 1;
}

int cmd_envelopes(const Globals& g, const std::string& rho_json, const std::vector<double>& ts, double c) {
    const auto rows = experiments::envelope_tables(ts, rv::RegVarFn::from_json(json::parse(rho_json)), c);
    std::ostringstream csv;
    experiments::write_envelope_csv(csv, rows);
    write_text(out_dir(g) / "envelopes.csv", csv.str());
    std::cout << csv.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"persistence probability experiments"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--spec", g.spec, "experiment or langevin TOML file");
    auto* seed_opt = app.add_option("--seed", g.seed, "master seed, overrides the spec");
    app.add_option("--out", g.out, "output directory")->envname("PERSISTLAB_OUT")->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads (0 = all cores)");

    std::string rho_json = R"({"family":"PowerLaw","alpha":0.5})";
    std::vector<double> ts{10, 100, 1000};
    auto* rv_cmd = app.add_subcommand("rv", "primitive and decay rate of a tail function");
    rv_cmd->add_option("--rho", rho_json, "tail as JSON")->capture_default_str();
    rv_cmd->add_option("--t", ts, "evaluation points");

    std::string kernel_json = R"({"variant":"ou","params":{"rate":1.0}})";
    double t0 = 0.0, t1 = 5.0, step = 0.5;
    auto* kernel_cmd = app.add_subcommand("kernel", "correlation matrix of a kernel on a uniform grid");
    kernel_cmd->add_option("--kernel", kernel_json, "kernel as JSON")->capture_default_str();
    kernel_cmd->add_option("--t0", t0);
    kernel_cmd->add_option("--t1", t1);
    kernel_cmd->add_option("--step", step);

    int dim = 1;
    std::string jumps_json;
    std::vector<double> us{0.5, 1.0, 10.0};
    auto* walk_cmd = app.add_subcommand("walk", "return probabilities of a lattice walk");
    walk_cmd->add_option("--d", dim, "dimension of the nearest-neighbour walk");
    walk_cmd->add_option("--jumps", jumps_json, "jump law as JSON, overrides --d");
    walk_cmd->add_option("--u", us, "times");

    app.add_subcommand("persist", "run every experiment in --spec, CSV + JSON out");
    app.add_subcommand("fit", "run every experiment in --spec and report exponent fits");

    int trajectories = 0;
    auto* lang_cmd = app.add_subcommand("langevin", "simulate the lattice field from a [langevin] TOML");
    lang_cmd->add_option("--trajectories", trajectories, "also write this many origin trajectories (PHI1)");

    std::string suite = "all";
    auto* verify_cmd = app.add_subcommand("verify", "property suites; exit 0 iff all pass");
    verify_cmd->add_option("suite", suite, "rv, kernels, walk, sampler, langevin or all")->capture_default_str();

    double env_c = 1.0;
    std::vector<double> env_ts{10, 100, 1000, 10000};
    auto* env_cmd = app.add_subcommand("envelopes", "classical envelopes next to a_rho(T)");
    env_cmd->add_option("--rho", rho_json, "tail as JSON")->capture_default_str();
    env_cmd->add_option("--T", env_ts, "horizons");
    env_cmd->add_option("--c", env_c, "envelope constant")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    g.seed_given = seed_opt->count() > 0;
    set_thread_count(g.threads);

    try {
        const auto* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        if (name == "rv") return cmd_rv(g, rho_json, ts);
        if (name == "kernel") return cmd_kernel(g, kernel_json, t0, t1, step);
        if (name == "walk") return cmd_walk(g, dim, jumps_json, us);
        if (name == "persist") return cmd_persist(g);
        if (name == "fit") return cmd_fit(g);
        if (name == "langevin") return cmd_langevin(g, trajectories);
        if (name == "verify") return cmd_verify(g, suite);
        if (name == "envelopes") return cmd_envelopes(g, rho_json, env_ts, env_c);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
