#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "penfsi/diagnose.hpp"
#include "penfsi/io.hpp"
#include "penfsi/run.hpp"
#include "penfsi/sweep.hpp"

namespace fs = std::filesystem;
using namespace penfsi;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

int env_threads(int flag) {
    if (flag > 0) return flag;
    const std::string v = env_or("PENFSI_THREADS", "");
    if (v.empty()) return 0;
    try {
        const int n = std::stoi(v);
        if (n > 0) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError("PENFSI_THREADS must be a positive integer, got '" + v + "'");
}

/// Relative output paths live under PENFSI_OUTPUT_ROOT when it is set; with
/// no --out the directory is named after the input file.
std::string output_dir(const std::string& flag, const std::string& input) {
    const fs::path root = env_or("PENFSI_OUTPUT_ROOT", "runs");
    if (flag.empty()) return (root / fs::path(input).stem()).string();
    const fs::path p(flag);
    if (p.is_relative() && std::getenv("PENFSI_OUTPUT_ROOT")) return (root / p).string();
    return p.string();
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int cmd_run(const std::string& config, const std::string& out, int threads, const std::optional<unsigned long long>& seed,
            const std::string& restart) {
    const Config c = load_config_file(config);
    RunOptions o;
    o.out_dir = output_dir(out, config);
    o.threads = env_threads(threads);
    o.seed = seed;
    o.restart = restart;
    const RunManifest m = run_simulation(c, o);
    for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << m.message << " (steps " << m.first_step << ".." << m.last_step << ", " << m.wall_clock << " s) -> "
              << o.out_dir << '\n';
    if (m.exit_code != kExitOk) std::cerr << "error: " << m.message << '\n';
    return m.exit_code;
}

int cmd_sweep(const std::string& plan_path, const std::string& out, int threads) {
    SweepPlan plan = load_sweep_plan(read_text(plan_path), fs::path(plan_path).parent_path().string());
    if (const int t = env_threads(threads); t > 0) plan.threads_per_run = t;
    const std::string dir = output_dir(out, plan_path);
    const SweepSummary s = run_sweep(plan, dir);
    for (const auto& r : s.runs)
        std::cout << "run " << r.index << " eps=" << r.epsilon << " delta_cells=" << r.delta_cells << " N=" << r.cells
                  << ": " << r.status << (r.status == "ok" ? "" : " (" + r.message + ")") << '\n';
    for (const auto& g : s.leakage_slopes)
        std::cout << "leakage slope (delta_cells=" << g.delta_cells << ", N=" << g.cells << ", " << g.points
                  << " points): " << g.slope << '\n';
    std::cout << "wrote " << (fs::path(dir) / "sweep.csv").string() << '\n';
    return s.failed > 0 ? kExitFailure : kExitOk;
}

int cmd_diagnose(const std::string& dir, const std::string& checks) {
    const auto results = run_diagnose(dir, parse_checks(checks));
    bool all = true;
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.summary << '\n';
        all = all && r.passed;
    }
    return all ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Penalized fluid / rigid-body solver on the periodic box"};
    app.require_subcommand(1);

    std::string config, out, restart, checks = "all", run_dir, snap_path;
    int threads = 0;
    unsigned long long seed = 0;

    auto* run = app.add_subcommand("run", "Run one configured simulation");
    run->add_option("--config", config, "Config document (JSON)")->required();
    run->add_option("--out", out, "Output directory");
    run->add_option("--threads", threads, "OpenMP threads (overrides PENFSI_THREADS)");
    auto* seed_opt = run->add_option("--seed", seed, "Seed of the random initial velocity (overrides the config)");
    run->add_option("--restart", restart, "Resume from a snapshot");

    auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
    sweep->add_option("--config,plan", config, "Sweep plan (JSON)")->required();
    sweep->add_option("--out", out, "Output directory");
    sweep->add_option("--threads", threads, "OpenMP threads per run");

    auto* diag = app.add_subcommand("diagnose", "Check the outputs of a run");
    diag->add_option("run_dir", run_dir, "Run directory")->required();
    diag->add_option("--checks", checks, "Comma list of energy, decay, gravity, weak, kp (or all)");

    auto* info = app.add_subcommand("snapshot-info", "Print the metadata of a snapshot");
    info->add_option("path", snap_path, "Snapshot file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) {
            std::optional<unsigned long long> s;
            if (*seed_opt) s = seed;
            return cmd_run(config, out, threads, s, restart);
        }
        if (*sweep) return cmd_sweep(config, out, threads);
        if (*diag) return cmd_diagnose(run_dir, checks);
        if (*info) {
            std::cout << snapshot_metadata(snap_path) << '\n';
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const SnapshotError& e) {
        std::cerr << "snapshot error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DiagnoseError& e) {
        std::cerr << "diagnose error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitOk;
}
