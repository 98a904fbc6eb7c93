#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "penfsi/config.hpp"
#include "penfsi/diagnostics.hpp"
#include "penfsi/rigidbody.hpp"
#include "penfsi/solver.hpp"

namespace penfsi {

enum class Termination { horizon, contact_halt, numerical_error };
std::string to_string(Termination t);

/// Process exit codes of the command-line driver.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // checks failed (diagnose) or runs failed (sweep)
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct OutputFile {
    std::string path;  // relative to the run directory
    std::uintmax_t bytes = 0;
    std::uint32_t crc32 = 0;
};

struct RunManifest {
    std::string config_json;
    std::string version;
    std::string restart_from;
    int threads = 1;
    double wall_clock = 0.0;  // seconds
    long first_step = 0;
    long last_step = 0;
    double t_final = 0.0;
    Termination termination = Termination::horizon;
    std::string message;
    int exit_code = kExitOk;
    std::vector<std::string> warnings;
    std::vector<OutputFile> files;
};

/// Per-sample data handed to observers.
struct Sample {
    const Problem* problem = nullptr;
    const FluidState* state = nullptr;
    LedgerRow ledger;
    std::vector<RigidState> bodies;         // orientation filled in
    std::vector<double> rigidity_deficit;  // per body, same order
};

struct RunOptions {
    /// Output directory; empty writes nothing.
    std::string out_dir;
    /// Snapshot to resume from. The configured horizon still applies.
    std::string restart;
    int threads = 0;  // 0: leave the OpenMP default
    std::optional<unsigned long long> seed;
    /// Called after every step (and once for the initial state with report null).
    std::function<void(const Problem&, const FluidState&, const StepReport*)> on_step;
    /// Called at every output sample (every `output.every` steps and at the end).
    std::function<void(const Sample&)> on_sample;
    /// Called for every logged event.
    std::function<void(const std::string& kind, const ContactEvent&)> on_event;
};

/// energy.csv, bodies.csv and events.csv column headers.
std::string bodies_csv_header();
std::string events_csv_header();

/// Builds the problem and the initial state (or reads the restart snapshot),
/// runs to the horizon and writes config.json, energy.csv, bodies.csv,
/// events.csv, snapshots/snap_<step>.bin and manifest.json. Configuration
/// problems throw ConfigError. Solver failures do not throw: the last valid
/// state is saved and the manifest reports a numerical abort with exit code 3.
RunManifest run_simulation(const Config& c, const RunOptions& o);

/// Manifest as JSON text.
std::string manifest_json(const RunManifest& m);

}  // namespace penfsi
