#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace penfsi {

/// A requested check cannot run on the given outputs (for example weak
/// residuals without snapshots).
class DiagnoseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string summary;      // one line
    std::string report_json;  // full report
};

struct DiagnoseOptions {
    /// Relative tolerance of the weak-residual check.
    double weak_tol = 0.05;
    /// Korn-Poincare penalty parameter; the estimate is repeated at 10x.
    double eps_kp = 1e-6;
    /// Energy check tolerance factor on C dt^2.
    double energy_factor = 10.0;
};

/// Known check names, in the order they run.
const std::vector<std::string>& known_checks();

/// Parses "energy,decay" (or "all") into check names; unknown names throw
/// std::invalid_argument.
std::vector<std::string> parse_checks(const std::string& list);

/// Runs the checks on a run directory and writes reports/<check>.json and
/// summary.json into it. Unreadable outputs raise std::runtime_error (a
/// corrupted energy.csv names its line); a check that needs data the run did
/// not record raises DiagnoseError.
std::vector<CheckResult> run_diagnose(const std::string& run_dir, const std::vector<std::string>& checks,
                                      const DiagnoseOptions& opt = {});

}  // namespace penfsi
