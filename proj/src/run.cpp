#include "penfsi/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"
#include "penfsi/elliptic.hpp"
#include "penfsi/io.hpp"
#include "penfsi/scenario.hpp"

#ifndef PENFSI_VERSION
#define PENFSI_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace penfsi {

std::string to_string(Termination t) {
    switch (t) {
        case Termination::horizon: return "horizon reached";
        case Termination::contact_halt: return "contact event policy";
        case Termination::numerical_error: return "error";
    }
    return "?";
}

std::string bodies_csv_header() {
    return "t,body,h0,h1,h2,Y0,Y1,Y2,omega0,omega1,omega2,O00,O01,O02,O10,O11,O12,O20,O21,O22,mass,fit_residual,"
           "rigidity_deficit";
}

std::string events_csv_header() { return "t,kind,first,second,gap,result"; }

namespace {

std::string g17(double x) {
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

class CsvFile {
public:
    void open(const fs::path& p, const std::string& header) {
        out_.open(p, std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot write " + p.string());
        out_ << header << '\n';
    }
    bool is_open() const { return out_.is_open(); }
    void line(const std::string& s) {
        if (out_.is_open()) out_ << s << '\n';
    }
    void close() {
        if (out_.is_open()) out_.close();
    }

private:
    std::ofstream out_;
};

struct Contact {
    int first, second;
    bool operator<(const Contact& o) const { return std::tie(first, second) < std::tie(o.first, o.second); }
};

class Runner {
public:
    Runner(const Config& c, const RunOptions& o) : cfg_(c), opt_(o) {}

    RunManifest run();

private:
    void setup();
    void sample(const FluidState& s);
    void advance_orientation(const FluidState& s, double dt);
    /// Returns true when the run must halt.
    bool handle_contacts(FluidState& s);
    void snapshot(const FluidState& s);
    void log_event(const std::string& kind, const ContactEvent& e, int result);
    void finish(const FluidState& s);

    Config cfg_;
    RunOptions opt_;
    RunManifest man_;
    Problem pb_;
    FluidState s_;
    std::map<int, Mat3> orient_;
    std::set<Contact> active_;
    double threshold_ = 0.0;
    bool walls_ = false;
    fs::path dir_;
    bool write_ = false;
    CsvFile energy_, bodies_, events_;
    std::set<std::string> written_;
    long last_snapshot_ = -1;
};

void Runner::setup() {
    if (opt_.seed) cfg_.seed = *opt_.seed;
    if (opt_.threads > 0) kernels::set_threads(opt_.threads);
    man_.threads = kernels::max_threads();
    man_.version = PENFSI_VERSION;
    man_.config_json = config_to_json(cfg_);
    pb_ = make_problem(cfg_);
    threshold_ = cfg_.contacts.threshold_cells * pb_.grid.spacing();
    if (threshold_ < 2.0 * pb_.grid.spacing()) throw ConfigError("contacts.threshold_cells: must be at least 2");
    walls_ = cfg_.domain.has_value();

    if (!opt_.restart.empty()) {
        Snapshot snap = read_snapshot(opt_.restart);
        if (snap.state.grid() != pb_.grid)
            throw ConfigError("restart: snapshot grid does not match the configured grid");
        s_ = std::move(snap.state);
        orient_ = std::move(snap.orientation);
        man_.restart_from = opt_.restart;
    } else {
        s_ = build_initial_state(cfg_, pb_.spectral(), &man_.warnings);
    }
    for (const auto& b : s_.bodies)
        if (!orient_.count(b.id)) {
            Mat3 o = identity3();
            for (const auto& spec : cfg_.bodies)
                if (spec.id == b.id) o = spec.shape.orientation;
            orient_[b.id] = o;
        }
    man_.first_step = s_.step;

    write_ = !opt_.out_dir.empty();
    if (write_) {
        dir_ = opt_.out_dir;
        std::error_code ec;
        fs::create_directories(dir_ / "snapshots", ec);
        if (ec) throw ConfigError("cannot create output directory " + dir_.string() + ": " + ec.message());
        std::ofstream(dir_ / "config.json") << man_.config_json << '\n';
        written_.insert("config.json");
        energy_.open(dir_ / "energy.csv", ledger_csv_header());
        bodies_.open(dir_ / "bodies.csv", bodies_csv_header());
        events_.open(dir_ / "events.csv", events_csv_header());
        written_.insert({"energy.csv", "bodies.csv", "events.csv"});
    }
}

void Runner::sample(const FluidState& s) {
    Sample smp;
    smp.problem = &pb_;
    smp.state = &s;
    smp.ledger = ledger_row(pb_, s);
    energy_.line(ledger_csv_row(smp.ledger));
    for (const auto& b : s.bodies) {
        RigidState r;
        try {
            r = fit_rigid_motion(s, b.id);
        } catch (const std::domain_error&) {
            r.id = b.id;
            r.t = s.t;
        }
        r.O = orient_.at(b.id);
        const double def = rigidity_deficit(pb_.spectral(), s.u, b.a);
        std::string line = g17(s.t) + "," + std::to_string(b.id);
        for (const Vec3* v : {&r.h, &r.Y, &r.omega})
            for (double x : *v) line += "," + g17(x);
        for (const auto& row : r.O)
            for (double x : row) line += "," + g17(x);
        line += "," + g17(r.mass) + "," + g17(r.residual) + "," + g17(def);
        bodies_.line(line);
        smp.bodies.push_back(r);
        smp.rigidity_deficit.push_back(def);
    }
    if (opt_.on_sample) opt_.on_sample(smp);
}

void Runner::advance_orientation(const FluidState& s, double dt) {
    for (const auto& b : s.bodies) {
        RigidState r;
        try {
            r = fit_rigid_motion(s, b.id);
        } catch (const std::domain_error&) {
            continue;  // a vanished marker keeps its orientation
        }
        orient_[b.id] = integrate_orientation({r, r}, dt, orient_.at(b.id)).back();
    }
}

void Runner::log_event(const std::string& kind, const ContactEvent& e, int result) {
    events_.line(g17(e.t) + "," + kind + "," + std::to_string(e.first) + "," + std::to_string(e.second) + "," +
                 g17(e.gap) + "," + std::to_string(result));
    if (opt_.on_event) opt_.on_event(kind, e);
}

bool Runner::handle_contacts(FluidState& s) {
    if (s.bodies.empty()) return false;
    const std::vector<ContactEvent> ev = detect_contacts(s, threshold_, walls_ ? &pb_.chi : nullptr);
    std::set<Contact> now;
    bool halt = false;
    std::vector<ContactEvent> fresh_pairs;
    for (const auto& e : ev) {
        const Contact key{e.first, e.second};
        now.insert(key);
        if (active_.count(key)) continue;
        log_event(e.second < 0 ? "wall_contact" : "contact", e, -1);
        if (cfg_.contacts.policy == ContactPolicy::halt) halt = true;
        if (e.second >= 0) fresh_pairs.push_back(e);
    }
    active_ = now;
    if (halt) {
        log_event("halt", ev.front(), -1);
        return true;
    }
    if (cfg_.contacts.policy != ContactPolicy::merge) return false;
    // Merge body pairs one at a time; earlier merges may retire later pairs.
    for (const auto& e : fresh_pairs) {
        auto has = [&](int id) {
            return std::any_of(s.bodies.begin(), s.bodies.end(), [&](const BodyMarker& b) { return b.id == id; });
        };
        if (!has(e.first) || !has(e.second)) continue;
        double mi = 0.0, mj = 0.0;
        try {
            mi = fit_rigid_motion(s, e.first).mass;
            mj = fit_rigid_motion(s, e.second).mass;
        } catch (const std::domain_error&) {
        }
        s = merge_bodies(s, e.first, e.second, threshold_);
        const int id = s.bodies.back().id;
        orient_[id] = orient_.at(mi >= mj ? e.first : e.second);
        log_event("merge", e, id);
    }
    // Contacts of retired ids are dropped; the merged body starts fresh.
    std::set<Contact> kept;
    for (const auto& c : active_) {
        bool alive_first = false, alive_second = c.second < 0;
        for (const auto& b : s.bodies) {
            alive_first = alive_first || b.id == c.first;
            alive_second = alive_second || b.id == c.second;
        }
        if (alive_first && alive_second) kept.insert(c);
    }
    active_ = kept;
    return false;
}

void Runner::snapshot(const FluidState& s) {
    if (!write_ || s.step == last_snapshot_) return;
    char name[64];
    std::snprintf(name, sizeof name, "snap_%08ld.bin", s.step);
    Snapshot snap{s, man_.config_json, {}};
    for (const auto& b : s.bodies) snap.orientation[b.id] = orient_.at(b.id);
    write_snapshot((dir_ / "snapshots" / name).string(), snap);
    written_.insert(std::string("snapshots/") + name);
    last_snapshot_ = s.step;
}

RunManifest Runner::run() {
    const auto t0 = std::chrono::steady_clock::now();
    setup();

    const int every = std::max(1, cfg_.output.every);
    const int snap_every = cfg_.output.snapshot_every;
    const double horizon = cfg_.time.horizon;
    const bool fixed = cfg_.time.policy == DtPolicy::fixed;
    const long total_steps = fixed ? std::lround(horizon / cfg_.time.dt) : 0;
    auto done = [&](const FluidState& s) {
        return fixed ? s.step >= total_steps : s.t >= horizon * (1.0 - 1e-12);
    };

    if (opt_.on_step) opt_.on_step(pb_, s_, nullptr);
    bool halted = handle_contacts(s_);
    sample(s_);
    long last_sample = s_.step;
    if (snap_every > 0 && opt_.restart.empty()) snapshot(s_);

    while (!halted && !done(s_)) {
        StepReport rep;
        try {
            double dt = stable_dt(pb_, s_);
            if (!fixed) dt = std::min(dt, horizon - s_.t);
            FluidState next = step(pb_, s_, dt, &rep);
            advance_orientation(s_, dt);
            s_ = std::move(next);
        } catch (const NumericalError& e) {
            man_.termination = Termination::numerical_error;
            man_.message = std::string("numerical abort at step ") + std::to_string(s_.step + 1) + ": " + e.what();
            break;
        } catch (const ConvergenceError& e) {
            man_.termination = Termination::numerical_error;
            man_.message = std::string("numerical abort at step ") + std::to_string(s_.step + 1) + ": " + e.what();
            break;
        }
        if (opt_.on_step) opt_.on_step(pb_, s_, &rep);
        halted = handle_contacts(s_);
        if (s_.step % every == 0 || halted || done(s_)) {
            sample(s_);
            last_sample = s_.step;
        }
        if (snap_every > 0 && s_.step % snap_every == 0) snapshot(s_);
    }
    if (man_.termination != Termination::numerical_error && last_sample != s_.step) sample(s_);
    if (halted) {
        man_.termination = Termination::contact_halt;
        man_.message = "halted on contact at t = " + g17(s_.t);
    }
    snapshot(s_);
    man_.exit_code = man_.termination == Termination::numerical_error ? kExitNumerical : kExitOk;
    man_.last_step = s_.step;
    man_.t_final = s_.t;
    if (man_.termination == Termination::horizon) man_.message = "horizon reached at t = " + g17(s_.t);
    man_.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    finish(s_);
    return man_;
}

void Runner::finish(const FluidState&) {
    if (!write_) return;
    energy_.close();
    bodies_.close();
    events_.close();
    for (const auto& f : written_) {
        const fs::path p = dir_ / f;
        man_.files.push_back({f, fs::file_size(p), file_crc32(p.string())});
    }
    std::ofstream(dir_ / "manifest.json") << manifest_json(man_) << '\n';
}

}  // namespace

std::string manifest_json(const RunManifest& m) {
    json j;
    j["config"] = json::parse(m.config_json);
    j["version"] = m.version;
    j["restart_from"] = m.restart_from.empty() ? json(nullptr) : json(m.restart_from);
    j["threads"] = m.threads;
    j["wall_clock_seconds"] = m.wall_clock;
    j["first_step"] = m.first_step;
    j["last_step"] = m.last_step;
    j["t_final"] = m.t_final;
    j["termination"] = to_string(m.termination);
    j["message"] = m.message;
    j["exit_code"] = m.exit_code;
    j["warnings"] = m.warnings;
    json files = json::array();
    for (const auto& f : m.files) {
        char crc[16];
        std::snprintf(crc, sizeof crc, "%08x", f.crc32);
        files.push_back({{"path", f.path}, {"bytes", f.bytes}, {"crc32", crc}});
    }
    j["files"] = files;
    return j.dump(2);
}

RunManifest run_simulation(const Config& c, const RunOptions& o) { return Runner(c, o).run(); }

}  // namespace penfsi
