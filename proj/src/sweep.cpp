#include "penfsi/sweep.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace penfsi {

namespace {

template <class T>
std::vector<T> axis_values(const json& axes, const char* key) {
    if (!axes.contains(key)) return {};
    const json& a = axes.at(key);
    if (!a.is_array() || a.empty()) throw ConfigError(std::string("axes.") + key + ": must be a nonempty array");
    std::vector<T> v;
    for (const auto& x : a) {
        if (!x.is_number()) throw ConfigError(std::string("axes.") + key + ": entries must be numbers");
        v.push_back(x.get<T>());
    }
    return v;
}

std::string g17(double x) {
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

SweepPlan load_sweep_plan(const std::string& text, const std::string& plan_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("sweep plan is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("sweep plan must be an object");
    static const std::set<std::string> known{"base", "base_config", "axes", "parallel", "threads_per_run",
                                             "decay_window"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw ConfigError("sweep plan: unknown key '" + k + "'");
    SweepPlan p;
    if (j.contains("base") == j.contains("base_config"))
        throw ConfigError("sweep plan: exactly one of 'base' and 'base_config' is required");
    if (j.contains("base")) {
        p.base_config = j.at("base").dump();
    } else {
        fs::path path = j.at("base_config").get<std::string>();
        if (path.is_relative()) path = fs::path(plan_dir) / path;
        std::ifstream in(path);
        if (!in) throw ConfigError("sweep plan: cannot read base_config " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        p.base_config = ss.str();
    }
    load_config(p.base_config);  // validate early
    if (j.contains("axes")) {
        const json& a = j.at("axes");
        if (!a.is_object()) throw ConfigError("sweep plan: axes must be an object");
        for (const auto& [k, v] : a.items())
            if (k != "epsilon" && k != "delta_cells" && k != "cells")
                throw ConfigError("sweep plan: unknown axis '" + k + "'");
        p.epsilon = axis_values<double>(a, "epsilon");
        p.delta_cells = axis_values<double>(a, "delta_cells");
        p.cells = axis_values<int>(a, "cells");
    }
    p.parallel = j.value("parallel", 1);
    p.threads_per_run = j.value("threads_per_run", 1);
    if (p.parallel < 1) throw ConfigError("sweep plan: parallel must be >= 1");
    if (p.threads_per_run < 1) throw ConfigError("sweep plan: threads_per_run must be >= 1");
    if (j.contains("decay_window")) {
        const auto w = j.at("decay_window").get<std::vector<double>>();
        if (w.size() != 2 || !(0.0 <= w[0] && w[0] < w[1] && w[1] <= 1.0))
            throw ConfigError("sweep plan: decay_window must be [f1, f2] with 0 <= f1 < f2 <= 1");
        p.decay_from = w[0];
        p.decay_to = w[1];
    }
    return p;
}

std::string sweep_point_config(const std::string& base, std::optional<double> epsilon,
                               std::optional<double> delta_cells, std::optional<int> cells) {
    json j = json::parse(base);
    if (epsilon) j["penalty"]["epsilon"] = *epsilon;
    if (delta_cells) {
        j["penalty"].erase("delta");
        j["penalty"]["delta_cells"] = *delta_cells;
    }
    if (cells) j["grid"]["cells"] = *cells;
    return j.dump();
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need two or more points");
    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0 && y[i] > 0.0)) throw std::invalid_argument("loglog_slope: values must be positive");
        mx += std::log(x[i]) / n;
        my += std::log(y[i]) / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0.0) throw std::invalid_argument("loglog_slope: x values coincide");
    return sxy / sxx;
}

std::string sweep_csv_header() {
    return "run,epsilon,delta_cells,cells,status,leakage_integral,rigidity_deficit,mu_min,mu_delta_min,decay_rate,"
           "decay_residual,body_mass_error,ke_final";
}

std::string sweep_csv_row(const SweepRun& r) {
    return std::to_string(r.index) + "," + g17(r.epsilon) + "," + g17(r.delta_cells) + "," + std::to_string(r.cells) +
           "," + r.status + "," + g17(r.leakage_integral) + "," + g17(r.rigidity_deficit) + "," + g17(r.mu_min) + "," +
           g17(r.mu_delta_min) + "," + g17(r.decay_rate) + "," + g17(r.decay_residual) + "," +
           g17(r.body_mass_error) + "," + g17(r.ke_final);
}

namespace {

void execute(const SweepPlan& plan, SweepRun& r, const std::string& cfg_text, const std::string& dir) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    const Config c = load_config(cfg_text);
    r.epsilon = c.epsilon;
    r.delta_cells = c.delta / c.grid.spacing();
    r.cells = c.grid.cells;

    std::vector<double> t, ke;
    double leak = 0.0, prev_t = 0.0, prev_leak = 0.0;
    bool first = true;
    r.mu_min = r.mu_delta_min = std::numeric_limits<double>::infinity();
    RunOptions o;
    o.out_dir = dir;
    o.threads = plan.threads_per_run;
    o.on_sample = [&](const Sample& s) {
        const LedgerRow& l = s.ledger;
        if (first) {
            for (std::size_t b = 0; b < s.bodies.size(); ++b) {
                const BodyMarker& m = s.state->bodies[b];
                for (const auto& spec : c.bodies)
                    if (spec.id == m.id) {
                        const double exact = spec.density * spec.shape.volume();
                        r.body_mass_error = std::max(r.body_mass_error, std::abs(s.bodies[b].mass - exact) / exact);
                    }
            }
        } else {
            leak += 0.5 * (l.t - prev_t) * (l.leakage + prev_leak);
        }
        first = false;
        prev_t = l.t;
        prev_leak = l.leakage;
        r.mu_min = std::min(r.mu_min, l.mu_min);
        r.mu_delta_min = std::min(r.mu_delta_min, l.mu_delta_min);
        t.push_back(l.t);
        ke.push_back(l.KE);
        double def = 0.0;
        for (double d : s.rigidity_deficit) def += d;
        r.rigidity_deficit = def;
        r.ke_final = l.KE;
    };
    const RunManifest m = run_simulation(c, o);
    r.leakage_integral = leak;
    r.message = m.message;
    if (m.termination == Termination::numerical_error) r.status = "numerical_abort";
    if (m.termination == Termination::contact_halt) r.status = "halted";
    try {
        const double T = t.empty() ? 0.0 : t.back();
        const DecayFit f = fit_decay(t, ke, plan.decay_from * T, plan.decay_to * T);
        r.decay_rate = f.rate;
        r.decay_residual = f.relative_residual;
    } catch (const std::invalid_argument&) {
        r.decay_rate = r.decay_residual = nan;
    }
}

}  // namespace

SweepSummary run_sweep(const SweepPlan& plan, const std::string& out_dir) {
    // Expand the grid of points; absent axes keep the base value.
    std::vector<std::optional<double>> eps, dc;
    std::vector<std::optional<int>> ns;
    for (double e : plan.epsilon) eps.emplace_back(e);
    for (double d : plan.delta_cells) dc.emplace_back(d);
    for (int n : plan.cells) ns.emplace_back(n);
    if (eps.empty()) eps.emplace_back();
    if (dc.empty()) dc.emplace_back();
    if (ns.empty()) ns.emplace_back();

    struct Point {
        std::string config;
        std::string dir;
    };
    std::vector<Point> points;
    SweepSummary sum;
    for (const auto& n : ns)
        for (const auto& d : dc)
            for (const auto& e : eps) {
                SweepRun r;
                r.index = static_cast<int>(points.size());
                r.epsilon = e.value_or(0.0);
                r.delta_cells = d.value_or(0.0);
                r.cells = n.value_or(0);
                std::string dir;
                if (!out_dir.empty()) dir = (fs::path(out_dir) / ("run_" + std::to_string(r.index))).string();
                points.push_back({sweep_point_config(plan.base_config, e, d, n), dir});
                sum.runs.push_back(r);
            }
    if (!out_dir.empty()) fs::create_directories(out_dir);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < points.size(); k = next++) {
            SweepRun& r = sum.runs[k];
            try {
                execute(plan, r, points[k].config, points[k].dir);
            } catch (const std::exception& e) {
                r.status = "failed";
                r.message = e.what();
            }
        }
    };
    const int nthreads = std::min<int>(plan.parallel, static_cast<int>(points.size()));
    std::vector<std::thread> pool;
    for (int i = 1; i < nthreads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    for (const auto& r : sum.runs)
        if (r.status == "failed" || r.status == "numerical_abort") ++sum.failed;

    // Leakage slope per (delta_cells, cells) group over the successful runs.
    std::map<std::pair<double, int>, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& r : sum.runs)
        if (r.status == "ok" || r.status == "halted") {
            auto& g = groups[{r.delta_cells, r.cells}];
            g.first.push_back(r.epsilon);
            g.second.push_back(r.leakage_integral);
        }
    for (const auto& [key, xy] : groups) {
        SweepGroupSlope s{key.first, key.second, std::numeric_limits<double>::quiet_NaN(),
                          static_cast<int>(xy.first.size())};
        try {
            s.slope = loglog_slope(xy.first, xy.second);
        } catch (const std::invalid_argument&) {
        }
        sum.leakage_slopes.push_back(s);
    }

    if (!out_dir.empty()) {
        std::ofstream csv(fs::path(out_dir) / "sweep.csv");
        csv << sweep_csv_header() << '\n';
        for (const auto& r : sum.runs) csv << sweep_csv_row(r) << '\n';
        json j;
        j["runs"] = sum.runs.size();
        j["failed"] = sum.failed;
        json slopes = json::array();
        for (const auto& s : sum.leakage_slopes)
            slopes.push_back({{"delta_cells", s.delta_cells},
                              {"cells", s.cells},
                              {"points", s.points},
                              {"leakage_slope", std::isnan(s.slope) ? json(nullptr) : json(s.slope)}});
        j["leakage_slopes"] = slopes;
        json failures = json::array();
        for (const auto& r : sum.runs)
            if (r.status != "ok") failures.push_back({{"run", r.index}, {"status", r.status}, {"message", r.message}});
        j["failures"] = failures;
        std::ofstream(fs::path(out_dir) / "sweep_summary.json") << j.dump(2) << '\n';
    }
    return sum;
}

}  // namespace penfsi
