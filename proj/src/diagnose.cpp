#include "penfsi/diagnose.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "penfsi/diagnostics.hpp"
#include "penfsi/elliptic.hpp"
#include "penfsi/io.hpp"
#include "penfsi/run.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace penfsi {

const std::vector<std::string>& known_checks() {
    static const std::vector<std::string> k{"energy", "decay", "gravity", "weak", "kp"};
    return k;
}

std::vector<std::string> parse_checks(const std::string& list) {
    if (list.empty() || list == "all") return known_checks();
    std::vector<std::string> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        if (std::find(known_checks().begin(), known_checks().end(), item) == known_checks().end())
            throw std::invalid_argument("unknown check '" + item + "' (known: energy, decay, gravity, weak, kp)");
        if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
    }
    if (out.empty()) throw std::invalid_argument("no checks requested");
    return out;
}

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

struct BodySeries {
    std::vector<double> t, speed;
};

std::map<int, BodySeries> read_bodies(const fs::path& p) {
    std::map<int, BodySeries> out;
    std::ifstream in(p);
    if (!in) return out;
    std::string line;
    std::getline(in, line);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
        if (cols.size() < 8) throw std::runtime_error("bodies.csv line " + std::to_string(lineno) + ": too few columns");
        try {
            BodySeries& b = out[std::stoi(cols[1])];
            b.t.push_back(std::stod(cols[0]));
            const double y0 = std::stod(cols[5]), y1 = std::stod(cols[6]), y2 = std::stod(cols[7]);
            b.speed.push_back(std::sqrt(y0 * y0 + y1 * y1 + y2 * y2));
        } catch (const std::logic_error&) {
            throw std::runtime_error("bodies.csv line " + std::to_string(lineno) + ": malformed number");
        }
    }
    return out;
}

double sample_dt(const EnergyLedger& l) {
    double dt = 0.0;
    for (std::size_t k = 1; k < l.rows.size(); ++k) dt = std::max(dt, l.rows[k].t - l.rows[k - 1].t);
    return dt;
}

/// Tolerance of energy-type checks: factor * C dt^2, floored at rounding level.
double energy_tol(const EnergyLedger& l, double factor) {
    const StepBalance sb = step_balance(l);
    const double dt = sample_dt(l);
    double scale = 0.0;
    for (const auto& r : l.rows) scale = std::max(scale, std::abs(r.KE));
    return factor * sb.C * dt * dt + 1e-12 * std::max(scale, 1.0);
}

CheckResult check_energy(const EnergyLedger& l, const DiagnoseOptions& opt) {
    if (l.rows.size() < 2) throw DiagnoseError("energy: the ledger needs at least two samples");
    const StepBalance sb = step_balance(l);
    const double tol = energy_tol(l, opt.energy_factor);
    const InequalityReport d = check_energy_inequality(l, InequalityForm::differential, tol);
    const InequalityReport in = check_energy_inequality(l, InequalityForm::integrated, tol);
    CheckResult r{"energy", d.passed && in.passed, "", ""};
    std::ostringstream s;
    s << "C = " << sb.C << ", tol = " << tol << ", worst margin " << d.worst_margin << " (" << d.worst
      << "), integrated " << in.worst_margin;
    r.summary = s.str();
    json j = {{"passed", r.passed},
              {"C", sb.C},
              {"max_step_residual", sb.max_residual},
              {"tol", tol},
              {"differential", {{"passed", d.passed}, {"worst_margin", d.worst_margin}, {"worst", d.worst}}},
              {"integrated", {{"passed", in.passed}, {"worst_margin", in.worst_margin}, {"worst", in.worst}}}};
    r.report_json = j.dump(2);
    return r;
}

CheckResult check_decay(const EnergyLedger& l, const std::map<int, BodySeries>& bodies, const DiagnoseOptions& opt) {
    if (l.rows.size() < 4) throw DiagnoseError("decay: the ledger needs at least four samples");
    std::vector<double> t, ke;
    for (const auto& r : l.rows) {
        t.push_back(r.t);
        ke.push_back(r.KE);
    }
    const double T = t.back(), t0 = t.front();
    const double t1 = t0 + 0.5 * (T - t0);
    const DecayFit f = fit_decay(t, ke, t1, T);
    const double tol = energy_tol(l, opt.energy_factor);
    double max_increase = 0.0;
    for (std::size_t k = 1; k < ke.size(); ++k) max_increase = std::max(max_increase, ke[k] - ke[k - 1]);
    const bool monotone = max_increase <= tol;
    const bool fit_ok = f.rate > 0.0 && f.relative_residual < 0.05;
    json env = json::array();
    bool env_ok = true;
    for (const auto& [id, b] : bodies) {
        const EnvelopeReport e = velocity_envelope(b.t, b.speed, 0.5 * f.rate, t1, T);
        env_ok = env_ok && e.passed;
        env.push_back({{"body", id}, {"rate", e.rate}, {"constant", num(e.constant)}, {"passed", e.passed}});
    }
    CheckResult r{"decay", monotone && fit_ok && env_ok, "", ""};
    std::ostringstream s;
    s << "rate " << f.rate << " on [" << t1 << ", " << T << "], relative residual " << f.relative_residual
      << ", KE max increase " << max_increase;
    r.summary = s.str();
    json j = {{"passed", r.passed},
              {"window", {t1, T}},
              {"rate", f.rate},
              {"amplitude", f.amplitude},
              {"relative_residual", f.relative_residual},
              {"points", f.points},
              {"window_shrunk", f.window_shrunk},
              {"ke_max_increase", max_increase},
              {"ke_tolerance", tol},
              {"ke_drop", ke.front() > 0.0 ? ke.back() / ke.front() : 0.0},
              {"envelopes", env}};
    r.report_json = j.dump(2);
    return r;
}

CheckResult check_gravity(const EnergyLedger& l, const DiagnoseOptions& opt) {
    if (!l.has_potential) throw DiagnoseError("gravity: the run has no potential forcing (EGRAV column is nan)");
    if (l.rows.size() < 2) throw DiagnoseError("gravity: the ledger needs at least two samples");
    const StepBalance sb = step_balance(l);
    const double dt = sample_dt(l);
    const double tol_rate = opt.energy_factor * sb.C * dt + 1e-12;
    const GravityReport g = gravity_report(l, tol_rate);
    // Absolute floors keep a fluid at rest (KE and int rho G at rounding level) from failing.
    double scale = 1.0;
    for (const auto& row : l.rows) scale = std::max(scale, std::abs(row.rhoG));
    const bool ke_ok = g.ke_final <= 1e-3 * g.ke_peak + 1e-14 * scale;
    const bool quarter_ok = g.quarter_change * std::abs(g.E_inf) <= 0.01 * std::abs(g.E_inf) + 1e-12 * scale;
    CheckResult r{"gravity", g.egrav_monotone && ke_ok && quarter_ok, "", ""};
    std::ostringstream s;
    s << "EGRAV " << (g.egrav_monotone ? "monotone" : "increases") << " (max step increase " << g.egrav_max_increase
      << "), KE(T)/peak " << (g.ke_peak > 0 ? g.ke_final / g.ke_peak : 0.0) << ", quarter change "
      << g.quarter_change;
    r.summary = s.str();
    json j = {{"passed", r.passed},
              {"egrav_monotone", g.egrav_monotone},
              {"egrav_max_increase", g.egrav_max_increase},
              {"tol_rate", tol_rate},
              {"E_inf", g.E_inf},
              {"quarter_change", num(g.quarter_change)},
              {"identity_residual", g.identity_residual},
              {"identity_residual_raw", g.identity_residual_raw},
              {"ke_final", g.ke_final},
              {"ke_peak", g.ke_peak},
              {"dissipation_total", g.dissipation_total}};
    r.report_json = j.dump(2);
    return r;
}

CheckResult check_weak(const fs::path& dir, const Config& c, const DiagnoseOptions& opt) {
    if (c.output.snapshot_every <= 0)
        throw DiagnoseError("weak: needs snapshots at a cadence (output.snapshot_every > 0); this run saved only the "
                            "final state");
    std::vector<fs::path> snaps;
    if (fs::exists(dir / "snapshots"))
        for (const auto& e : fs::directory_iterator(dir / "snapshots"))
            if (e.path().extension() == ".bin") snaps.push_back(e.path());
    std::sort(snaps.begin(), snaps.end());
    if (snaps.size() < 3) throw DiagnoseError("weak: needs at least three snapshots, found " + std::to_string(snaps.size()));

    const Problem pb = make_problem(c);
    std::vector<FluidState> states;
    for (const auto& p : snaps) states.push_back(read_snapshot(p.string()).state);
    if (states.front().t != 0.0) throw DiagnoseError("weak: the first snapshot must be the initial state (t = 0)");

    MassResidualRecorder mass(pb, mass_basket(c.grid.dim));
    std::vector<MomentumTest> tests;
    const double h = c.grid.spacing();
    if (c.grid.dim == 2)
        for (const auto& b : states.front().bodies) {
            // Rigid zone covers the marker support with one cell to spare.
            const RigidState r = fit_rigid_motion(states.front(), b.id);
            double R = 0.0;
            for (std::size_t i = 0; i < b.a.size(); ++i)
                if (b.a[i] > 0.0) {
                    const auto x = c.grid.node(i);
                    R = std::max(R, std::hypot(c.grid.periodic_delta(x[0], r.h[0]), c.grid.periodic_delta(x[1], r.h[1])));
                }
            MomentumTest tx;
            tx.label = "body" + std::to_string(b.id) + "-translate";
            tx.body = b.id;
            tx.r1 = R + h;
            tx.r2 = tx.r1 + 6.0 * h;
            tx.Y = {1.0, 0.5, 0.0};
            tests.push_back(tx);
            MomentumTest sp = tx;
            sp.label = "body" + std::to_string(b.id) + "-spin";
            sp.Y = {0.0, 0.0, 0.0};
            sp.omega = 1.0;
            tests.push_back(sp);
        }
    std::unique_ptr<MomentumResidualRecorder> mom;
    if (!tests.empty()) mom = std::make_unique<MomentumResidualRecorder>(pb, tests);
    for (const auto& s : states) {
        mass.observe(s);
        if (mom) mom->observe(s);
    }
    // Profiles narrower than a few sample intervals are not resolved.
    double spacing = 0.0;
    for (std::size_t k = 1; k < states.size(); ++k) spacing = std::max(spacing, states[k].t - states[k - 1].t);
    std::vector<TimeBump> psis;
    for (const auto& p : psi_basket(states.back().t))
        if (p.width >= 4.0 * spacing) psis.push_back(p);
    if (psis.empty())
        throw DiagnoseError("weak: snapshot spacing " + std::to_string(spacing) +
                            " is too coarse for the horizon; need at least 8 snapshots");
    auto summarize = [&](const std::vector<WeakResidual>& res, double& worst) {
        json arr = json::array();
        worst = 0.0;
        for (const auto& w : res) {
            const double rel = w.scale > 0.0 ? std::abs(w.mollified) / w.scale : 0.0;
            worst = std::max(worst, rel);
            arr.push_back({{"label", w.label}, {"raw", w.raw}, {"mollified", w.mollified}, {"scale", w.scale}});
        }
        return arr;
    };
    double wm = 0.0, wp = 0.0;
    json j;
    j["snapshots"] = states.size();
    j["mass"] = summarize(mass.residuals(psis), wm);
    j["mass_worst_relative"] = wm;
    bool ok = wm < opt.weak_tol;
    if (mom) {
        j["momentum"] = summarize(mom->residuals(psis), wp);
        j["momentum_worst_relative"] = wp;
        j["inadmissible_samples"] = mom->inadmissible_samples();
        ok = ok && wp < opt.weak_tol;
    }
    j["tol"] = opt.weak_tol;
    j["passed"] = ok;
    CheckResult r{"weak", ok, "", j.dump(2)};
    std::ostringstream s;
    s << states.size() << " snapshots, worst relative mass residual " << wm;
    if (mom) s << ", momentum " << wp;
    r.summary = s.str();
    return r;
}

CheckResult check_kp(const Config& c, const DiagnoseOptions& opt) {
    const Problem pb = make_problem(c);
    const DomainSpec* dom = c.domain ? &*c.domain : nullptr;
    json j;
    CheckResult r{"kp", true, "", ""};
    double vals[2] = {0.0, 0.0};
    const double eps[2] = {opt.eps_kp, 10.0 * opt.eps_kp};
    json est = json::array();
    for (int k = 0; k < 2; ++k) {
        try {
            const KornPoincareEstimate e = estimate_korn_poincare(pb.spectral(), dom, c.chi_width, eps[k]);
            vals[k] = e.value;
            est.push_back({{"eps_kp", eps[k]},
                           {"value", e.value},
                           {"iterations", e.iterations},
                           {"cg_iterations", e.cg_iterations},
                           {"residual", e.residual},
                           {"mean_included", e.mean_included}});
        } catch (const ConvergenceError& e) {
            r.passed = false;
            est.push_back({{"eps_kp", eps[k]}, {"error", e.what()}});
        }
    }
    double rho_max = 1.0;
    for (const auto& b : c.bodies) rho_max = std::max(rho_max, b.density);
    j["estimates"] = est;
    j["rho_max"] = rho_max;
    if (r.passed) {
        j["decay_rate_bound"] = 2.0 * vals[0] / rho_max;
        j["relative_change"] = std::abs(vals[1] - vals[0]) / vals[0];
    }
    j["passed"] = r.passed;
    r.report_json = j.dump(2);
    std::ostringstream s;
    s << "C_KP " << vals[0] << " (eps " << eps[0] << "), " << vals[1] << " (eps " << eps[1] << ")";
    r.summary = s.str();
    return r;
}

}  // namespace

std::vector<CheckResult> run_diagnose(const std::string& run_dir, const std::vector<std::string>& checks,
                                      const DiagnoseOptions& opt) {
    const fs::path dir(run_dir);
    if (!fs::is_directory(dir)) throw std::runtime_error("run directory " + run_dir + " does not exist");
    const Config c = load_config(slurp(dir / "config.json"));
    auto need_ledger = [&] { return parse_ledger_csv(slurp(dir / "energy.csv")); };

    std::vector<CheckResult> out;
    std::optional<EnergyLedger> ledger;
    for (const auto& name : checks) {
        if (name != "weak" && name != "kp" && !ledger) ledger = need_ledger();
        if (name == "energy") out.push_back(check_energy(*ledger, opt));
        else if (name == "decay") out.push_back(check_decay(*ledger, read_bodies(dir / "bodies.csv"), opt));
        else if (name == "gravity") out.push_back(check_gravity(*ledger, opt));
        else if (name == "weak") out.push_back(check_weak(dir, c, opt));
        else if (name == "kp") out.push_back(check_kp(c, opt));
        else throw std::invalid_argument("unknown check '" + name + "'");
    }

    fs::create_directories(dir / "reports");
    json summary;
    bool all = true;
    for (const auto& r : out) {
        std::ofstream(dir / "reports" / (r.name + ".json")) << r.report_json << '\n';
        summary["checks"][r.name] = {{"passed", r.passed}, {"summary", r.summary}};
        all = all && r.passed;
    }
    summary["passed"] = all;
    std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
    return out;
}

}  // namespace penfsi
