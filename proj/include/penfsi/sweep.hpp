#pragma once

#include <optional>
#include <string>
#include <vector>

#include "penfsi/run.hpp"

namespace penfsi {

/// Base config (JSON text) and value lists for the swept parameters. An
/// absent axis keeps the base value; a present axis must be nonempty.
struct SweepPlan {
    std::string base_config;
    std::vector<double> epsilon;
    std::vector<double> delta_cells;
    std::vector<int> cells;
    int parallel = 1;
    int threads_per_run = 1;
    /// Decay-fit window as fractions of the horizon.
    double decay_from = 0.5;
    double decay_to = 1.0;
};

/// Parses a plan document: {"base": {...} | "base_config": "path",
/// "axes": {"epsilon": [...], "delta_cells": [...], "cells": [...]},
/// "parallel": n, "threads_per_run": n, "decay_window": [f1, f2]}.
/// A relative base_config path is resolved against `plan_dir`.
SweepPlan load_sweep_plan(const std::string& text, const std::string& plan_dir = ".");

struct SweepRun {
    int index = 0;
    double epsilon = 0.0;
    double delta_cells = 0.0;
    int cells = 0;
    std::string status = "ok";  // ok | halted | numerical_abort | failed
    std::string message;
    double leakage_integral = 0.0;   // int_0^T int_{outside} |u|^2
    double rigidity_deficit = 0.0;   // sum over bodies at the final sample
    double mu_min = 0.0;
    double mu_delta_min = 0.0;
    double decay_rate = 0.0;
    double decay_residual = 0.0;     // relative to the log range
    double body_mass_error = 0.0;    // worst relative error of int a rho at t = 0
    double ke_final = 0.0;
};

struct SweepGroupSlope {
    double delta_cells = 0.0;
    int cells = 0;
    double slope = 0.0;
    int points = 0;
};

struct SweepSummary {
    std::vector<SweepRun> runs;
    std::vector<SweepGroupSlope> leakage_slopes;
    int failed = 0;
};

/// Config JSON of one point of the plan.
std::string sweep_point_config(const std::string& base, std::optional<double> epsilon,
                               std::optional<double> delta_cells, std::optional<int> cells);

/// Runs every combination (runs are independent and run concurrently,
/// `parallel` at a time). Run k writes to out_dir/run_<k> (nothing when
/// out_dir is empty); sweep.csv and sweep_summary.json go to out_dir. A
/// failing run is recorded and the sweep continues.
SweepSummary run_sweep(const SweepPlan& plan, const std::string& out_dir);

std::string sweep_csv_header();
std::string sweep_csv_row(const SweepRun& r);

/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace penfsi
