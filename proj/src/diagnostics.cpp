#include "penfsi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "penfsi/elliptic.hpp"
#include "penfsi/rigidbody.hpp"
#include "penfsi/scenario.hpp"

namespace penfsi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_fields(const FluidState& s, const TorusGrid& g) {
    const std::size_t n = g.size();
    bool ok = s.rho.size() == n && s.mu.size() == n && s.u.dim() == g.dim;
    if (ok)
        for (int a = 0; a < g.dim; ++a) ok = ok && s.u[a].size() == n;
    if (!ok) throw std::invalid_argument("ledger: sample at t=" + std::to_string(s.t) + " is missing fields");
}

// Trapezoidal integral of f over the sample times.
double trapezoid(const std::vector<double>& t, const std::vector<double>& f) {
    double acc = 0.0;
    for (std::size_t k = 1; k < t.size(); ++k) acc += 0.5 * (t[k] - t[k - 1]) * (f[k] + f[k - 1]);
    return acc;
}

// int psi' f for f linear between samples:
// sum_k [psi f]_{t_k}^{t_k+1} - (f_k+1 - f_k) mean_k(psi).
double by_parts(const std::vector<double>& t, const std::vector<double>& f, const TimeBump& psi) {
    double acc = 0.0;
    for (std::size_t k = 1; k < t.size(); ++k) {
        const double dt = t[k] - t[k - 1];
        const double mean = dt > 0.0 ? psi.integral(t[k - 1], t[k]) / dt : psi(t[k]);
        acc += psi(t[k]) * f[k] - psi(t[k - 1]) * f[k - 1] - (f[k] - f[k - 1]) * mean;
    }
    return acc;
}

// int psi f with f taken at the right end of each interval, the rule of the
// implicit (viscous, penalty) part of the step.
double implicit_sum(const std::vector<double>& t, const std::vector<double>& f, const TimeBump& psi) {
    double acc = 0.0;
    for (std::size_t k = 1; k < t.size(); ++k) acc += psi.integral(t[k - 1], t[k]) * f[k];
    return acc;
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string short_fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------- ledger

LedgerRow ledger_row(const Problem& pb, const FluidState& s) {
    const TorusGrid& g = pb.grid;
    require_fields(s, g);
    const Spectral& sp = pb.spectral();
    const std::size_t n = g.size();
    const int d = g.dim;
    const double cv = g.cell_volume();

    const VectorField w = mollify(sp, s.u, pb.kernel);
    const ScalarField mud = mollify(sp, s.mu, pb.kernel);
    LedgerRow r;
    r.t = s.t;
    double ke = 0.0, pen = 0.0, work = 0.0, workd = 0.0, leak = 0.0, rg = 0.0;
    const double inv_eps = 1.0 / pb.epsilon;
    for (std::size_t i = 0; i < n; ++i) {
        double u2 = 0.0, gu = 0.0, gw = 0.0;
        for (int a = 0; a < d; ++a) {
            u2 += s.u[a][i] * s.u[a][i];
            gu += pb.g[a][i] * s.u[a][i];
            gw += pb.g[a][i] * w[a][i];
        }
        ke += 0.5 * s.rho[i] * u2;
        pen += pb.chi[i] * inv_eps * u2;
        work += s.rho[i] * gu;
        workd += s.rho[i] * gw;
        leak += (1.0 - pb.omega_mask[i]) * u2;
        if (pb.G) rg += s.rho[i] * (*pb.G)[i];
    }
    r.KE = ke * cv;
    r.PEN = pen * cv;
    r.WORK = work * cv;
    r.work_delta = workd * cv;
    r.leakage = leak * cv;
    r.rhoG = rg * cv;
    r.EGRAV = pb.G ? r.KE - r.rhoG : kNaN;
    r.DISS = weighted_strain_energy(sp, s.u, &mud);
    r.mu_min = min_value(s.mu);
    r.mu_delta_min = min_value(mud);
    return r;
}

EnergyLedger energy_ledger(const Problem& pb, const std::vector<FluidState>& samples) {
    EnergyLedger l;
    l.has_potential = pb.G.has_value();
    l.rows.reserve(samples.size());
    for (const auto& s : samples) l.rows.push_back(ledger_row(pb, s));
    return l;
}

std::string ledger_csv_header() { return "t,KE,DISS,PEN,WORK,EGRAV,leakage,rhoG,work_delta,mu_min,mu_delta_min"; }

std::string ledger_csv_row(const LedgerRow& r) {
    std::string s;
    for (double x : {r.t, r.KE, r.DISS, r.PEN, r.WORK, r.EGRAV, r.leakage, r.rhoG, r.work_delta, r.mu_min,
                     r.mu_delta_min}) {
        if (!s.empty()) s += ',';
        s += std::isnan(x) ? std::string("nan") : fmt(x);
    }
    return s;
}

EnergyLedger parse_ledger_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    EnergyLedger l;
    if (!std::getline(in, line)) throw std::runtime_error("energy.csv: empty file");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != ledger_csv_header()) throw std::runtime_error("energy.csv line 1: unexpected header '" + line + "'");
    bool any_egrav = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> v;
        std::size_t pos = 0;
        while (true) {
            const std::size_t comma = line.find(',', pos);
            const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            char* end = nullptr;
            const double x = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size())
                throw std::runtime_error("energy.csv line " + std::to_string(lineno) + ": bad number '" + cell + "'");
            v.push_back(x);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (v.size() != 11)
            throw std::runtime_error("energy.csv line " + std::to_string(lineno) + ": expected 11 columns, got " +
                                     std::to_string(v.size()));
        LedgerRow r{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
        any_egrav = any_egrav || !std::isnan(r.EGRAV);
        l.rows.push_back(r);
    }
    l.has_potential = any_egrav;
    return l;
}

// ------------------------------------------------------- time profiles

double TimeBump::operator()(double t) const {
    const double z = (t - center) / width;
    if (std::abs(z) >= 1.0) return 0.0;
    const double q = 1.0 - z * z;
    return q * q;
}

double TimeBump::derivative(double t) const {
    const double z = (t - center) / width;
    if (std::abs(z) >= 1.0) return 0.0;
    return -4.0 * z * (1.0 - z * z) / width;
}

double TimeBump::integral(double a, double b) const {
    auto F = [&](double t) {
        const double z = std::clamp((t - center) / width, -1.0, 1.0);
        const double z2 = z * z;
        return width * z * (1.0 - 2.0 * z2 / 3.0 + z2 * z2 / 5.0);
    };
    return F(b) - F(a);
}

std::vector<TimeBump> psi_basket(double horizon) {
    if (!(horizon > 0.0)) throw std::invalid_argument("psi_basket: horizon must be positive");
    std::vector<TimeBump> out;
    out.push_back({0.0, 0.999 * horizon});
    for (int j = 1; j <= 4; ++j) {
        const double w = horizon / std::pow(2.0, j);
        for (int k = 0;; ++k) {
            const double c = 0.5 * w * k;
            if (c + w >= horizon * (1.0 - 1e-12)) break;
            out.push_back({c, w});
        }
    }
    return out;
}

// ---------------------------------------------------- energy inequality

InequalityReport check_energy_inequality(const EnergyLedger& ledger, InequalityForm form, double tol) {
    InequalityReport rep;
    rep.form = form;
    rep.tol = tol;
    const auto& rows = ledger.rows;
    if (rows.size() < 2) return rep;
    const std::size_t n = rows.size();
    std::vector<double> t(n), ke(n), loss(n), work(n);
    for (std::size_t k = 0; k < n; ++k) {
        t[k] = rows[k].t - rows[0].t;
        ke[k] = rows[k].KE;
        loss[k] = rows[k].DISS + rows[k].PEN;
        work[k] = rows[k].WORK;
    }
    rep.worst_margin = std::numeric_limits<double>::infinity();
    auto note = [&](double margin, const std::string& what) {
        rep.margins.push_back(margin);
        if (margin < rep.worst_margin) {
            rep.worst_margin = margin;
            rep.worst = what;
        }
    };
    if (form == InequalityForm::differential) {
        for (const TimeBump& psi : psi_basket(t.back())) {
            const double lhs = -by_parts(t, ke, psi) + implicit_sum(t, loss, psi);
            const double rhs = psi(0.0) * ke[0] + implicit_sum(t, work, psi);
            note(rhs - lhs, "psi c=" + short_fmt(psi.center) + " w=" + short_fmt(psi.width));
        }
    } else {
        double lossi = 0.0, worki = 0.0;
        for (std::size_t k = 1; k < n; ++k) {
            const double dt = t[k] - t[k - 1];
            lossi += dt * loss[k];
            worki += dt * work[k];
            note(ke[0] + worki - ke[k] - lossi, "tau=" + short_fmt(rows[k].t));
        }
    }
    rep.passed = rep.worst_margin >= -tol;
    return rep;
}

StepBalance step_balance(const EnergyLedger& ledger) {
    StepBalance b;
    const auto& r = ledger.rows;
    for (std::size_t k = 1; k < r.size(); ++k) {
        const double dt = r[k].t - r[k - 1].t;
        const double res = r[k].KE - r[k - 1].KE + dt * (r[k].DISS + r[k].PEN - r[k].WORK);
        b.residual.push_back(res);
        b.max_residual = k == 1 ? res : std::max(b.max_residual, res);
        if (dt > 0.0) b.C = std::max(b.C, std::max(res, 0.0) / (dt * dt));
    }
    return b;
}

// -------------------------------------------------------------- decay

DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& value, double t1, double t2,
                   std::optional<double> c_kp, double rho_bar) {
    if (t.size() != value.size()) throw std::invalid_argument("fit_decay: size mismatch");
    if (!(t2 > t1)) throw std::invalid_argument("fit_decay: empty window");
    DecayFit f;
    f.t1 = t1;
    f.t2 = t2;
    std::vector<double> x, y;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t1 || t[k] > t2) continue;
        if (!(value[k] > 0.0)) {
            f.window_shrunk = true;
            break;
        }
        x.push_back(t[k]);
        y.push_back(std::log(value[k]));
    }
    if (x.size() < 2) throw std::invalid_argument("fit_decay: fewer than two positive samples in the window");
    f.t1 = x.front();
    f.t2 = x.back();
    f.points = x.size();
    const double m = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sx += x[k];
        sy += y[k];
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("fit_decay: degenerate sample times");
    const double slope = sxy / sxx;
    const double icpt = my - slope * mx;
    f.rate = -slope;
    f.amplitude = std::exp(icpt);
    double ss = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double e = y[k] - (icpt + slope * x[k]);
        ss += e * e;
    }
    f.residual = std::sqrt(ss / m);
    const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
    const double range = *ymax - *ymin;
    f.relative_residual = range > 0.0 ? f.residual / range : (f.residual == 0.0 ? 0.0 : kNaN);
    if (c_kp) {
        f.rate_ref = 2.0 * *c_kp / rho_bar;
        const double v0 = std::exp(y.front());
        for (std::size_t k = 0; k < x.size(); ++k)
            if (std::exp(y[k]) > v0 * std::exp(-*f.rate_ref * (x[k] - x.front())) * (1.0 + 1e-12)) ++f.envelope_violations;
        f.envelope_holds = f.envelope_violations == 0;
    }
    return f;
}

EnvelopeReport velocity_envelope(const std::vector<double>& t, const std::vector<double>& speed, double rate,
                                 double t1, double t2, double max_constant) {
    EnvelopeReport e;
    e.rate = rate;
    double base = kNaN, tb = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t1 || t[k] > t2) continue;
        if (std::isnan(base)) {
            base = speed[k];
            tb = t[k];
        }
        if (!(base > 0.0)) break;
        e.constant = std::max(e.constant, speed[k] * std::exp(rate * (t[k] - tb)) / base);
    }
    if (!(base > 0.0)) throw std::invalid_argument("velocity_envelope: no positive speed at the window start");
    e.passed = e.constant <= max_constant;
    return e;
}

// ------------------------------------------------------------ gravity

GravityReport gravity_report(const EnergyLedger& ledger, double tol_rate) {
    if (!ledger.has_potential) throw std::invalid_argument("gravity_report: no potential configured");
    GravityReport g;
    const auto& r = ledger.rows;
    if (r.empty()) return g;
    const std::size_t n = r.size();
    double wi = 0.0, wdi = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        g.ke_peak = std::max(g.ke_peak, r[k].KE);
        if (k == 0) continue;
        const double dt = r[k].t - r[k - 1].t;
        const double inc = r[k].EGRAV - r[k - 1].EGRAV;
        g.egrav_max_increase = std::max(g.egrav_max_increase, inc);
        if (inc > tol_rate * dt) g.egrav_monotone = false;
        wi += 0.5 * dt * (r[k].WORK + r[k - 1].WORK);
        wdi += 0.5 * dt * (r[k].work_delta + r[k - 1].work_delta);
        g.dissipation_total += 0.5 * dt * (r[k].DISS + r[k - 1].DISS);
        const double drg = r[k].rhoG - r[0].rhoG;
        g.identity_residual_raw = std::max(g.identity_residual_raw, std::abs(drg - wi));
        g.identity_residual = std::max(g.identity_residual, std::abs(drg - wdi));
    }
    g.ke_final = r.back().KE;
    const double t0 = r.front().t, T = r.back().t - t0;
    double s3 = 0.0, s4 = 0.0;
    int n3 = 0, n4 = 0;
    for (const auto& row : r) {
        const double tau = (row.t - t0) / T;
        if (tau >= 0.5 && tau < 0.75) {
            s3 += row.rhoG;
            ++n3;
        } else if (tau >= 0.75) {
            s4 += row.rhoG;
            ++n4;
        }
    }
    if (n4 > 0) g.E_inf = s4 / n4;
    if (n3 > 0 && n4 > 0) g.quarter_change = std::abs(s3 / n3 - g.E_inf) / std::abs(g.E_inf);
    return g;
}

// ------------------------------------------------------ weak residuals

std::vector<MassTest> mass_basket(int dim) {
    std::vector<MassTest> out;
    out.push_back({{0, 0, 0}, 0.0});
    out.push_back({{1, 0, 0}, 0.0});
    out.push_back({{0, 1, 0}, 0.5});
    out.push_back({{1, 1, 0}, 0.3});
    out.push_back({{2, -1, 0}, 1.1});
    if (dim == 3) out.push_back({{1, 0, 1}, 0.7});
    return out;
}

namespace {

std::string mass_label(const MassTest& m) {
    return "phi m=(" + std::to_string(m.m[0]) + "," + std::to_string(m.m[1]) + "," + std::to_string(m.m[2]) +
           ") ph=" + short_fmt(m.phase);
}

std::string psi_label(const TimeBump& p) { return " psi c=" + short_fmt(p.center) + " w=" + short_fmt(p.width); }

}  // namespace

MassResidualRecorder::MassResidualRecorder(const Problem& pb, std::vector<MassTest> tests)
    : pb_(&pb), tests_(std::move(tests)) {
    const TorusGrid& g = pb.grid;
    const double k0 = M_PI / g.half_period;
    for (const auto& t : tests_) {
        ScalarField phi(g);
        VectorField grad(g);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto x = g.node(i);
            double arg = t.phase;
            for (int a = 0; a < g.dim; ++a) arg += k0 * t.m[a] * x[a];
            phi[i] = std::cos(arg);
            for (int a = 0; a < g.dim; ++a) grad[a][i] = -k0 * t.m[a] * std::sin(arg);
        }
        phi_.push_back(std::move(phi));
        grad_phi_.push_back(std::move(grad));
    }
    m_.resize(tests_.size());
    flux_.resize(tests_.size());
    flux_delta_.resize(tests_.size());
}

void MassResidualRecorder::observe(const FluidState& s) {
    const Problem& pb = *pb_;
    const TorusGrid& g = pb.grid;
    require_fields(s, g);
    const VectorField w = mollify(pb.spectral(), s.u, pb.kernel);
    const double cv = g.cell_volume();
    t_.push_back(s.t);
    for (std::size_t j = 0; j < tests_.size(); ++j) {
        double m = 0.0, f = 0.0, fd = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            m += s.rho[i] * phi_[j][i];
            double ug = 0.0, wg = 0.0;
            for (int a = 0; a < g.dim; ++a) {
                ug += s.u[a][i] * grad_phi_[j][a][i];
                wg += w[a][i] * grad_phi_[j][a][i];
            }
            f += s.rho[i] * ug;
            fd += s.rho[i] * wg;
        }
        m_[j].push_back(m * cv);
        flux_[j].push_back(f * cv);
        flux_delta_[j].push_back(fd * cv);
    }
}

std::vector<WeakResidual> MassResidualRecorder::residuals(const std::vector<TimeBump>& psis) const {
    std::vector<WeakResidual> out;
    if (t_.empty()) return out;
    const std::size_t n = t_.size();
    std::vector<double> t(n), b(n), c(n);
    for (std::size_t k = 0; k < n; ++k) t[k] = t_[k] - t_[0];
    for (std::size_t j = 0; j < tests_.size(); ++j)
        for (const TimeBump& psi : psis) {
            for (std::size_t k = 0; k < n; ++k) {
                b[k] = psi(t[k]) * flux_[j][k];
                c[k] = psi(t[k]) * flux_delta_[j][k];
            }
            const double ta = by_parts(t, m_[j], psi), tb = trapezoid(t, b), tc = trapezoid(t, c);
            const double init = psi(0.0) * m_[j][0];
            WeakResidual r;
            r.label = mass_label(tests_[j]) + psi_label(psi);
            r.raw = ta + tb + init;
            r.mollified = ta + tc + init;
            r.scale = std::abs(ta) + std::abs(tb) + std::abs(init);
            out.push_back(std::move(r));
        }
    return out;
}

// Momentum test fields ----------------------------------------------------

namespace {

struct CutoffDerivs {
    double c, dc, ddc;  // in r
};

// c(r) = S((r2 - r)/(r2 - r1)) with S the C-infinity step f(s)/(f(s)+f(1-s)).
CutoffDerivs radial_cutoff(double r, double r1, double r2) {
    const double L = r2 - r1;
    const double s = (r2 - r) / L;
    if (s <= 0.0) return {0.0, 0.0, 0.0};
    if (s >= 1.0) return {1.0, 0.0, 0.0};
    auto f = [](double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; };
    auto f1 = [&](double x) { return x > 0.0 ? f(x) / (x * x) : 0.0; };
    auto f2 = [&](double x) { return x > 0.0 ? f(x) * (1.0 - 2.0 * x) / (x * x * x * x) : 0.0; };
    const double n = f(s), n1 = f1(s), n2 = f2(s);
    const double m = n + f(1.0 - s);
    const double m1 = n1 - f1(1.0 - s);
    const double m2 = n2 + f2(1.0 - s);
    const double S = n / m;
    const double S1 = (n1 * m - n * m1) / (m * m);
    const double S2 = (n2 * m - n * m2) / (m * m) - 2.0 * m1 * (n1 * m - n * m1) / (m * m * m);
    // ds/dr = -1/L
    return {S, -S1 / L, S2 / (L * L)};
}

}  // namespace

TestFieldValue evaluate_test_field(const MomentumTest& t, const TorusGrid& g, const std::array<double, 3>& x,
                                   const Vec3& h) {
    TestFieldValue v{};
    const double xp = g.periodic_delta(x[0], h[0]);
    const double yp = g.periodic_delta(x[1], h[1]);
    const double r = std::hypot(xp, yp);
    const CutoffDerivs c = radial_cutoff(r, t.r1, t.r2);
    if (c.c == 0.0 && c.dc == 0.0) return v;
    const double q = t.k0 + t.Y[0] * yp - t.Y[1] * xp - 0.5 * t.omega * r * r;
    const double gq[2] = {-t.Y[1] - t.omega * xp, t.Y[0] - t.omega * yp};
    const double Hq[2][2] = {{-t.omega, 0.0}, {0.0, -t.omega}};
    double gc[2] = {0.0, 0.0};
    double Hc[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
    if (r > 0.0 && (c.dc != 0.0 || c.ddc != 0.0)) {
        const double e[2] = {xp / r, yp / r};
        for (int i = 0; i < 2; ++i) {
            gc[i] = c.dc * e[i];
            for (int j = 0; j < 2; ++j)
                Hc[i][j] = c.ddc * e[i] * e[j] + c.dc * ((i == j ? 1.0 : 0.0) - e[i] * e[j]) / r;
        }
    }
    double gs[2], Hs[2][2];
    for (int i = 0; i < 2; ++i) {
        gs[i] = c.c * gq[i] + q * gc[i];
        for (int j = 0; j < 2; ++j) Hs[i][j] = c.c * Hq[i][j] + gc[i] * gq[j] + gq[i] * gc[j] + q * Hc[i][j];
    }
    v.phi[0] = gs[1];
    v.phi[1] = -gs[0];
    for (int i = 0; i < 2; ++i) {
        v.grad[i][0] = Hs[i][1];
        v.grad[i][1] = -Hs[i][0];
    }
    return v;
}

MomentumResidualRecorder::MomentumResidualRecorder(const Problem& pb, std::vector<MomentumTest> tests)
    : pb_(&pb), tests_(std::move(tests)) {
    if (pb.grid.dim != 2) throw std::invalid_argument("momentum residual: 2D only");
    for (const auto& t : tests_)
        if (t.r2 - t.r1 < 2.0 * pb.grid.spacing() || t.r1 < 0.0)
            throw std::invalid_argument("momentum residual: radii of '" + t.label + "' leave no room for the cutoff");
    const std::size_t m = tests_.size();
    centre_.resize(m);
    for (auto* v : {&A_, &Bx_, &By_, &C_, &Cd_, &S_, &P_, &F_}) v->resize(m);
    bad_.assign(m, 0);
}

void MomentumResidualRecorder::observe(const FluidState& s) {
    const Problem& pb = *pb_;
    const TorusGrid& g = pb.grid;
    require_fields(s, g);
    const Spectral& sp = pb.spectral();
    const std::size_t n = g.size();
    const double cv = g.cell_volume();
    const VectorField w = mollify(sp, s.u, pb.kernel);
    const ScalarField mud = mollify(sp, s.mu, pb.kernel);
    const TensorField Du = sym_grad(sp, s.u);
    const double inv_eps = 1.0 / pb.epsilon;
    t_.push_back(s.t);

    for (std::size_t j = 0; j < tests_.size(); ++j) {
        const MomentumTest& tf = tests_[j];
        Vec3 h = tf.center;
        if (tf.body >= 0) h = fit_rigid_motion(s, tf.body).h;
        centre_[j].push_back(h);
        double A = 0, Bx = 0, By = 0, C = 0, Cd = 0, S = 0, P = 0, F = 0;
        bool ok = true;
        for (std::size_t i = 0; i < n; ++i) {
            const auto x = g.node(i);
            const double r = std::hypot(g.periodic_delta(x[0], h[0]), g.periodic_delta(x[1], h[1]));
            // admissibility: own body inside the rigid zone, nothing else on the support
            for (const auto& b : s.bodies) {
                if (b.a[i] < 1e-3) continue;
                if (b.id == tf.body ? r > tf.r1 : r < tf.r2) ok = false;
            }
            if (r < tf.r2 && pb.chi[i] > 0.0) ok = false;
            if (r >= tf.r2) continue;
            const TestFieldValue v = evaluate_test_field(tf, g, x, h);
            const double u[2] = {s.u[0][i], s.u[1][i]};
            const double wv[2] = {w[0][i], w[1][i]};
            const double rho = s.rho[i];
            A += rho * (u[0] * v.phi[0] + u[1] * v.phi[1]);
            Bx += rho * (u[0] * v.grad[0][0] + u[1] * v.grad[0][1]);
            By += rho * (u[0] * v.grad[1][0] + u[1] * v.grad[1][1]);
            double cc = 0.0, ccd = 0.0;
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    // v_a u_b d_a phi_b
                    cc += u[a] * u[b] * v.grad[a][b];
                    ccd += wv[a] * u[b] * v.grad[a][b];
                }
            C += rho * cc;
            Cd += rho * ccd;
            double dd = 0.0;
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) dd += Du(a, b)[i] * 0.5 * (v.grad[a][b] + v.grad[b][a]);
            S += mud[i] * dd;
            P += pb.chi[i] * inv_eps * (u[0] * v.phi[0] + u[1] * v.phi[1]);
            F += rho * (pb.g[0][i] * v.phi[0] + pb.g[1][i] * v.phi[1]);
        }
        if (!ok) ++bad_[j];
        A_[j].push_back(A * cv);
        Bx_[j].push_back(Bx * cv);
        By_[j].push_back(By * cv);
        C_[j].push_back(C * cv);
        Cd_[j].push_back(Cd * cv);
        S_[j].push_back(S * cv);
        P_[j].push_back(P * cv);
        F_[j].push_back(F * cv);
    }
}

std::vector<WeakResidual> MomentumResidualRecorder::residuals(const std::vector<TimeBump>& psis) const {
    std::vector<WeakResidual> out;
    const std::size_t n = t_.size();
    if (n < 2) return out;
    const TorusGrid& g = pb_->grid;
    std::vector<double> t(n);
    for (std::size_t k = 0; k < n; ++k) t[k] = t_[k] - t_[0];
    std::vector<double> a(n), b(n), bd(n), stiff(n);
    for (std::size_t j = 0; j < tests_.size(); ++j) {
        // centre velocity by differences of the (minimal-image) centre series
        std::vector<std::array<double, 2>> hd(n);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t lo = k == 0 ? 0 : k - 1, hi = k + 1 == n ? n - 1 : k + 1;
            for (int c = 0; c < 2; ++c)
                hd[k][c] = g.periodic_delta(centre_[j][hi][c], centre_[j][lo][c]) / (t[hi] - t[lo]);
        }
        for (const TimeBump& psi : psis) {
            for (std::size_t k = 0; k < n; ++k) {
                const double p = psi(t[k]);
                const double dtphi = -(hd[k][0] * Bx_[j][k] + hd[k][1] * By_[j][k]);
                a[k] = p * (dtphi + F_[j][k]);
                stiff[k] = S_[j][k] + P_[j][k];
                b[k] = p * C_[j][k];
                bd[k] = p * Cd_[j][k];
            }
            const double init = psi(0.0) * A_[j][0];
            const double tt = by_parts(t, A_[j], psi);
            const double ts = implicit_sum(t, stiff, psi);
            const double ta = tt + trapezoid(t, a) - ts, tb = trapezoid(t, b), tbd = trapezoid(t, bd);
            WeakResidual r;
            r.label = tests_[j].label + psi_label(psi);
            r.raw = ta + tb + init;
            r.mollified = ta + tbd + init;
            double sc = std::abs(init) + std::abs(tb) + std::abs(tt) + std::abs(ts);
            for (std::size_t k = 0; k < n; ++k) a[k] = std::abs(a[k]);
            r.scale = sc + trapezoid(t, a);
            out.push_back(std::move(r));
        }
    }
    return out;
}

std::vector<MomentumTest> momentum_basket(const FluidState& s0, const Problem& pb, double r1, double r2,
                                          const Vec3& fluid_center, double fluid_radius) {
    (void)pb;
    std::vector<MomentumTest> out;
    MomentumTest f;
    f.label = "fluid";
    f.center = fluid_center;
    f.r1 = 0.0;
    f.r2 = fluid_radius;
    f.k0 = fluid_radius;
    out.push_back(f);
    for (const auto& b : s0.bodies) {
        MomentumTest tx;
        tx.label = "body" + std::to_string(b.id) + "-translate";
        tx.body = b.id;
        tx.r1 = r1;
        tx.r2 = r2;
        tx.Y = {1.0, 0.5, 0.0};
        out.push_back(tx);
        MomentumTest sp = tx;
        sp.label = "body" + std::to_string(b.id) + "-spin";
        sp.Y = {0.0, 0.0, 0.0};
        sp.omega = 1.0;
        out.push_back(sp);
    }
    return out;
}

// ------------------------------------------------------- Korn-Poincare

KornPoincareEstimate estimate_korn_poincare(const Spectral& sp, const ScalarField& chi, double eps_kp, double tol,
                                            int max_iter, unsigned seed) {
    const TorusGrid& g = sp.grid();
    require_same_grid(chi.grid, g, "estimate_korn_poincare");
    if (!(eps_kp > 0.0)) throw std::invalid_argument("estimate_korn_poincare: eps_kp must be positive");
    const int d = g.dim;
    const std::size_t n = g.size();
    const std::size_t N = static_cast<std::size_t>(d) * n;
    KornPoincareEstimate est;
    est.mean_included = max_value(chi) > 0.0;
    const double inv_eps = 1.0 / eps_kp;

    // Space: Leray range without the modes whose derivative symbol vanishes
    // (pure Nyquist combinations have D u = 0), keeping the mean only when
    // the penalty makes it costly.
    std::vector<double> keep(sp.modes());
    for (std::size_t m = 0; m < sp.modes(); ++m)
        keep[m] = sp.k2(m) > 0.0 || (m == 0 && est.mean_included) ? 1.0 : 0.0;
    VectorField tmp(g);
    auto project = [&](std::span<const double> x, std::span<double> y) {
        unpack(x, tmp);
        VectorField p = leray_project(sp, tmp);
        for (int a = 0; a < d; ++a) apply_multiplier(sp, p[a].span(), y.subspan(static_cast<std::size_t>(a) * n, n), keep);
    };
    std::vector<double> half_k2(sp.modes());
    for (std::size_t m = 0; m < sp.modes(); ++m) half_k2[m] = 0.5 * sp.k2(m);
    std::vector<double> buf(N);
    // A = P (-1/2 Lap + chi/eps) P on the projected space; -div D = -1/2 Lap there.
    const LinearOperator apply = [&](std::span<const double> x, std::span<double> y) {
        project(x, buf);
        for (int a = 0; a < d; ++a) {
            const auto in = std::span<const double>(buf).subspan(static_cast<std::size_t>(a) * n, n);
            auto out = y.subspan(static_cast<std::size_t>(a) * n, n);
            apply_multiplier(sp, in, out, half_k2);
            for (std::size_t i = 0; i < n; ++i) out[i] += chi[i] * inv_eps * in[i];
        }
        std::copy(y.begin(), y.end(), buf.begin());
        project(buf, y);
    };
    const double shift = kernels::sum(chi.span()) / static_cast<double>(n) * inv_eps;
    std::vector<double> sym(sp.modes());
    for (std::size_t m = 0; m < sp.modes(); ++m) {
        const double den = half_k2[m] + shift;
        sym[m] = den > 0.0 ? 1.0 / den : 0.0;
    }
    std::vector<double> pbuf(N);
    const LinearOperator precond = [&](std::span<const double> r, std::span<double> z) {
        for (int a = 0; a < d; ++a)
            apply_multiplier(sp, r.subspan(static_cast<std::size_t>(a) * n, n),
                             std::span<double>(pbuf).subspan(static_cast<std::size_t>(a) * n, n), sym);
        project(pbuf, z);
    };

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> x(N), y(N), ax(N);
    for (auto& v : x) v = nd(rng);
    project(x, y);
    x = y;
    auto normalize = [&](std::vector<double>& v) {
        const double nv = std::sqrt(kernels::dot(v, v));
        if (!(nv > 0.0)) throw std::runtime_error("estimate_korn_poincare: iterate vanished");
        for (auto& e : v) e /= nv;
    };
    normalize(x);
    double lam_prev = std::numeric_limits<double>::infinity();
    SolveOptions opts;
    opts.tol = 1e-10;
    opts.max_iter = 100000;
    for (int it = 1; it <= max_iter; ++it) {
        std::fill(y.begin(), y.end(), 0.0);
        const SolveReport rep = elliptic_solve(apply, x, y, precond, opts);
        est.cg_iterations += rep.iterations;
        normalize(y);
        apply(y, ax);
        const double lam = kernels::dot(y, ax);
        double res = 0.0;
        for (std::size_t i = 0; i < N; ++i) res += (ax[i] - lam * y[i]) * (ax[i] - lam * y[i]);
        est.value = lam;
        est.iterations = it;
        est.residual = std::sqrt(res) / lam;
        x.swap(y);
        if (std::abs(lam - lam_prev) <= tol * lam) return est;
        lam_prev = lam;
    }
    throw ConvergenceError("estimate_korn_poincare: no convergence", est.iterations, est.residual);
}

KornPoincareEstimate estimate_korn_poincare(const Spectral& sp, const DomainSpec* domain, double chi_width,
                                            double eps_kp, double tol) {
    const ScalarField chi = build_chi(domain, sp.grid(), chi_width);
    return estimate_korn_poincare(sp, chi, eps_kp, tol);
}

}  // namespace penfsi
