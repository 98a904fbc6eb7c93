#include "penfsi/solver.hpp"

#include <algorithm>
#include <cmath>

#include "penfsi/elliptic.hpp"
#include "penfsi/scenario.hpp"

namespace penfsi {

namespace {

void require_finite(const ScalarField& f, const char* what) {
    if (!all_finite(f)) throw NumericalError(std::string("non-finite values in ") + what);
}

void require_finite(const VectorField& v, const char* what) {
    if (!all_finite(v)) throw NumericalError(std::string("non-finite values in ") + what);
}

double mean(const ScalarField& f) { return kernels::sum(f.span()) / static_cast<double>(f.size()); }

}  // namespace

Problem make_problem(const TorusGrid& grid, double delta, double epsilon) {
    Problem pb;
    pb.grid = grid;
    pb.sp = std::make_shared<const Spectral>(grid);
    pb.kernel = MollifierKernel::gaussian(*pb.sp, delta);
    pb.epsilon = epsilon;
    pb.chi = ScalarField(grid, 0.0);
    pb.omega_mask = ScalarField(grid, 1.0);
    pb.g = VectorField(grid, 0.0);
    return pb;
}

Problem make_problem(const Config& c) {
    Problem pb = make_problem(c.grid, c.delta, c.epsilon);
    const DomainSpec* dom = c.domain ? &*c.domain : nullptr;
    pb.chi = build_chi(dom, c.grid, c.chi_width);
    pb.omega_mask = domain_mask(dom, c.grid);
    const TorusGrid& g = c.grid;
    switch (c.forcing.kind) {
        case ForcingKind::none:
            break;
        case ForcingKind::constant:
            for (int a = 0; a < g.dim; ++a)
                for (auto& x : pb.g[a].values) x = c.forcing.g[a];
            break;
        case ForcingKind::potential: {
            const auto& p = c.forcing.potential;
            const double k = 2.0 * M_PI / p.wavelength;
            ScalarField G(g);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = g.node(i)[p.axis];
                G[i] = p.amplitude * std::cos(k * x);
                pb.g[p.axis][i] = -p.amplitude * k * std::sin(k * x);
            }
            pb.G = std::move(G);
            break;
        }
    }
    StepParams& sp = pb.params;
    sp.policy = c.time.policy;
    sp.dt = c.time.dt;
    sp.cfl = c.time.cfl;
    sp.dt_max = c.time.dt_max;
    sp.viscous_tol = c.solver.viscous_tol;
    sp.pressure_tol = c.solver.pressure_tol;
    sp.max_iter = c.solver.max_iter;
    sp.mass_fix = c.solver.mass_fix;
    double rho_min = 1.0;
    for (const auto& b : c.bodies) rho_min = std::min(rho_min, b.density);
    sp.rho_floor = 0.5 * rho_min;
    return pb;
}

kernels::Departure trace_back(const VectorField& w, double dt, double max_courant) {
    const TorusGrid& g = w.grid;
    double vmax = 0.0;
    for (int a = 0; a < g.dim; ++a) vmax = std::max(vmax, max_abs(w[a]));
    if (!std::isfinite(vmax)) throw NumericalError("non-finite advecting velocity");
    if (vmax * dt > max_courant * g.spacing())
        throw NumericalError("trajectory CFL violation: max |w| dt / h = " + std::to_string(vmax * dt / g.spacing()));
    std::array<std::span<const double>, 3> vel{};
    for (int a = 0; a < g.dim; ++a) vel[static_cast<std::size_t>(a)] = w[a].span();
    kernels::Departure dep;
    kernels::departure_points(g, vel, dt, dep);
    return dep;
}

ScalarField advect(const ScalarField& f, const kernels::Departure& dep, bool mass_fix, AdvectReport* report) {
    const TorusGrid& g = f.grid;
    const std::size_t n = g.size();
    ScalarField high(g), low(g);
    kernels::interpolate_monotone(g, f.span(), dep, high.span(), low.span());

    const double m0 = kernels::sum(f.span());
    const double mh = kernels::sum(high.span());
    const double excess = mh - m0;
    if (report) {
        report->mass_before = m0 * g.cell_volume();
        report->drift = m0 != 0.0 ? excess / std::abs(m0) : excess;
    }

    // Mass fixer: remove the excess where the high-order and low-order
    // interpolants disagree, limited by the headroom to the input range.
    double abs_mass = 0.0;
    for (double v : f.values) abs_mass += std::abs(v);
    if (mass_fix && std::abs(excess) > 1e-15 * abs_mass) {
        const auto [fmin, fmax] = kernels::minmax(f.span());
        const double sgn = excess > 0.0 ? 1.0 : -1.0;
        std::vector<double> cap(n), w(n);
        for (std::size_t i = 0; i < n; ++i) {
            cap[i] = std::max(0.0, sgn > 0.0 ? high[i] - fmin : fmax - high[i]);
            w[i] = std::min(std::abs(high[i] - low[i]), cap[i]);
        }
        double need = std::abs(excess);
        const double sw = kernels::sum(w);
        if (sw > 0.0) {
            const double lam = std::min(1.0, need / sw);
            for (std::size_t i = 0; i < n; ++i) {
                high[i] -= sgn * lam * w[i];
                cap[i] -= lam * w[i];
            }
            need -= lam * sw;
        }
        if (need > 1e-15 * abs_mass) {
            const double sc = kernels::sum(cap);
            if (sc > 0.0) {
                const double lam = std::min(1.0, need / sc);
                for (std::size_t i = 0; i < n; ++i) high[i] -= sgn * lam * cap[i];
            }
        }
        for (std::size_t i = 0; i < n; ++i) high[i] = std::clamp(high[i], fmin, fmax);
    }
    if (report) report->mass_after = kernels::sum(high.span()) * g.cell_volume();
    return high;
}

ScalarField advect(const ScalarField& f, const VectorField& w, double dt, bool mass_fix, AdvectReport* report) {
    require_same_grid(f.grid, w.grid, "advect");
    return advect(f, trace_back(w, dt), mass_fix, report);
}

namespace {

// -div(m D v) for a scalar coefficient m, in place of the generic tensor
// path: d forward transforms, d^2 backward, d(d+1)/2 forward, d backward.
class StressOperator {
public:
    StressOperator(const Spectral& sp, const ScalarField& m) : sp_(sp), m_(m), d_(sp.grid().dim) {}

    void apply(std::span<const double> x, std::span<double> y) const {
        const TorusGrid& g = sp_.grid();
        const std::size_t n = g.size();
        const int d = d_;
        std::vector<Spectrum> vh(static_cast<std::size_t>(d));
        for (int a = 0; a < d; ++a) sp_.forward(x.subspan(static_cast<std::size_t>(a) * n, n), vh[a]);
        // grad[i][j] = d_i v_j
        std::vector<Buffer> grad(static_cast<std::size_t>(d * d), Buffer(n));
        Spectrum t(sp_.modes());
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                for (std::size_t m = 0; m < t.size(); ++m) t[m] = Complex(0.0, sp_.k(i, m)) * vh[j][m];
                sp_.backward(t, {grad[i * d + j].data(), n});
            }
        std::vector<Spectrum> th(static_cast<std::size_t>(d * d));
        Buffer s(n);
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) {
                const Buffer& gij = grad[i * d + j];
                const Buffer& gji = grad[j * d + i];
                for (std::size_t p = 0; p < n; ++p) s[p] = m_[p] * 0.5 * (gij[p] + gji[p]);
                sp_.forward({s.data(), n}, th[i * d + j]);
            }
        for (int j = 0; j < d; ++j) {
            for (std::size_t m = 0; m < t.size(); ++m) {
                Complex acc(0.0, 0.0);
                for (int i = 0; i < d; ++i) {
                    const Spectrum& tij = i <= j ? th[i * d + j] : th[j * d + i];
                    acc += Complex(0.0, sp_.k(i, m)) * tij[m];
                }
                t[m] = -acc;
            }
            sp_.backward(t, y.subspan(static_cast<std::size_t>(j) * n, n));
        }
    }

private:
    const Spectral& sp_;
    const ScalarField& m_;
    int d_;
};

}  // namespace

VectorField momentum_update(const Problem& pb, const VectorField& u, const VectorField& w, const ScalarField& rho,
                            const ScalarField& mu, double dt, StepReport* report) {
    const Spectral& sp = pb.spectral();
    const TorusGrid& g = pb.grid;
    const int d = g.dim;
    const std::size_t n = g.size();
    const StepParams& par = pb.params;

    const ScalarField mud = mollify(sp, mu, pb.kernel);
    if (report) {
        report->mu_min = min_value(mu);
        report->mu_delta_min = min_value(mud);
    }
    ScalarField rho_f = rho;
    long hits = 0;
    for (auto& r : rho_f.values)
        if (r < par.rho_floor) {
            r = par.rho_floor;
            ++hits;
        }
    if (report) report->rho_floor_hits += hits;

    // A potential force rho grad G = grad G + (rho - 1) grad G: the first part
    // is a pure gradient and goes into the pressure, leaving the buoyancy of
    // the bodies (the fluid density is 1). A constant g is not a gradient on
    // the torus and is applied in full.
    const double g_shift = pb.G ? 1.0 : 0.0;
    const VectorField adv = advection_term(sp, w, u);
    std::vector<double> rhs(static_cast<std::size_t>(d) * n);
    for (int a = 0; a < d; ++a)
        for (std::size_t i = 0; i < n; ++i)
            rhs[a * n + i] = rho_f[i] / dt * (u[a][i] - dt * adv[a][i]) + (rho_f[i] - g_shift) * pb.g[a][i];

    const StressOperator stress(sp, mud);
    const LinearOperator apply = [&](std::span<const double> x, std::span<double> y) {
        stress.apply(x, y);
        for (int a = 0; a < d; ++a)
            for (std::size_t i = 0; i < n; ++i) y[a * n + i] += rho_f[i] / dt * x[a * n + i];
    };

    // Constant-coefficient inverse per mode: (1/al)(I - be k k^T / (al + be |k|^2)),
    // al = a + be |k|^2, a = mean(rho)/dt, be = mean([mu]_d)/2.
    const double a0 = mean(rho_f) / dt;
    const double be = 0.5 * mean(mud);
    const LinearOperator precond = [&](std::span<const double> r, std::span<double> z) {
        std::vector<Spectrum> rh(static_cast<std::size_t>(d));
        for (int a = 0; a < d; ++a) sp.forward(r.subspan(static_cast<std::size_t>(a) * n, n), rh[a]);
        for (std::size_t m = 0; m < sp.modes(); ++m) {
            const double k2 = sp.k2(m);
            const double al = a0 + be * k2;
            Complex kr(0.0, 0.0);
            for (int a = 0; a < d; ++a) kr += sp.k(a, m) * rh[a][m];
            const Complex c = be * kr / (al + be * k2);
            for (int a = 0; a < d; ++a) rh[a][m] = (rh[a][m] - sp.k(a, m) * c) / al;
        }
        for (int a = 0; a < d; ++a) sp.backward(rh[a], z.subspan(static_cast<std::size_t>(a) * n, n));
    };

    std::vector<double> x = pack(u);
    SolveOptions opts;
    opts.tol = par.viscous_tol;
    opts.max_iter = par.max_iter;
    const SolveReport rep = elliptic_solve(apply, rhs, x, precond, opts);
    if (report) {
        report->viscous_iterations = rep.iterations;
        report->viscous_residual = rep.relative_residual;
    }

    VectorField v(g);
    unpack(x, v);
    const double inv_eps = 1.0 / pb.epsilon;
    for (std::size_t i = 0; i < n; ++i) {
        if (pb.chi[i] == 0.0) continue;
        const double f = 1.0 / (1.0 + dt * pb.chi[i] * inv_eps / rho_f[i]);
        for (int a = 0; a < d; ++a) v[a][i] *= f;
    }
    require_finite(v, "momentum update");
    return v;
}

Projection pressure_project(const Problem& pb, const VectorField& ustar, const ScalarField& rho, double dt,
                            const ScalarField* guess, StepReport* report) {
    const Spectral& sp = pb.spectral();
    const TorusGrid& g = pb.grid;
    const int d = g.dim;
    const std::size_t n = g.size();

    ScalarField inv_rho(g);
    long hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = rho[i];
        if (r < pb.params.rho_floor) {
            r = pb.params.rho_floor;
            ++hits;
        }
        inv_rho[i] = 1.0 / (r + dt * pb.chi[i] / pb.epsilon);
    }
    if (report) report->rho_floor_hits += hits;

    ScalarField rhs = divergence(sp, ustar);
    for (auto& x : rhs.values) x = -x / dt;

    const LinearOperator apply = [&](std::span<const double> x, std::span<double> y) {
        Spectrum s;
        sp.forward(x, s);
        Spectrum t(sp.modes());
        std::vector<Spectrum> fh(static_cast<std::size_t>(d));
        Buffer buf(n);
        for (int a = 0; a < d; ++a) {
            for (std::size_t m = 0; m < t.size(); ++m) t[m] = Complex(0.0, sp.k(a, m)) * s[m];
            sp.backward(t, {buf.data(), n});
            for (std::size_t i = 0; i < n; ++i) buf[i] *= inv_rho[i];
            sp.forward({buf.data(), n}, fh[a]);
        }
        for (std::size_t m = 0; m < t.size(); ++m) {
            Complex acc(0.0, 0.0);
            for (int a = 0; a < d; ++a) acc += Complex(0.0, sp.k(a, m)) * fh[a][m];
            t[m] = -acc;
        }
        sp.backward(t, y);
    };
    const double c = mean(inv_rho);
    std::vector<double> sym(sp.modes(), 0.0);
    for (std::size_t m = 0; m < sp.modes(); ++m)
        if (sp.k2(m) > 0.0) sym[m] = 1.0 / (c * sp.k2(m));
    const LinearOperator precond = [&](std::span<const double> r, std::span<double> z) {
        apply_multiplier(sp, r, z, sym);
    };

    Projection out;
    out.pressure = guess ? *guess : ScalarField(g, 0.0);
    SolveOptions opts;
    // Relative tolerance tightened so the leftover divergence is small in
    // absolute terms: div u = -dt * residual.
    const double div_rms = dt * std::sqrt(kernels::dot(rhs.span(), rhs.span()) / static_cast<double>(n));
    opts.tol = div_rms > 0.0 ? std::max(1e-14, std::min(pb.params.pressure_tol, 1e-10 / div_rms))
                             : pb.params.pressure_tol;
    opts.max_iter = pb.params.max_iter;
    opts.require_zero_mean = true;
    const SolveReport rep = elliptic_solve(apply, rhs.span(), out.pressure.span(), precond, opts);
    if (report) {
        report->pressure_iterations = rep.iterations;
        report->pressure_residual = rep.relative_residual;
    }
    const double pm = mean(out.pressure);
    for (auto& p : out.pressure.values) p -= pm;

    const VectorField gp = gradient(sp, out.pressure);
    out.u = ustar;
    for (int a = 0; a < d; ++a)
        for (std::size_t i = 0; i < n; ++i) out.u[a][i] -= dt * inv_rho[i] * gp[a][i];
    require_finite(out.u, "pressure projection");
    return out;
}

FluidState step(const Problem& pb, const FluidState& s, double dt, StepReport* report) {
    if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
    require_same_grid(s.grid(), pb.grid, "step");
    StepReport local;
    StepReport& rep = report ? *report : local;
    rep = StepReport{};
    rep.dt = dt;
    const Spectral& sp = pb.spectral();
    const bool fix = pb.params.mass_fix;

    const VectorField w = mollify(sp, s.u, pb.kernel);
    const kernels::Departure dep = trace_back(w, dt, pb.params.max_courant);

    FluidState next;
    AdvectReport ar;
    next.rho = advect(s.rho, dep, fix, &ar);
    rep.rho_drift = ar.drift;
    next.mu = advect(s.mu, dep, fix, &ar);
    next.bodies = s.bodies;
    for (std::size_t b = 0; b < s.bodies.size(); ++b) {
        next.bodies[b].a = advect(s.bodies[b].a, dep, fix, &ar);
        rep.marker_drift = std::max(rep.marker_drift, std::abs(ar.drift));
    }
    require_finite(next.rho, "density");
    require_finite(next.mu, "viscosity");

    const VectorField ustar = momentum_update(pb, s.u, w, next.rho, next.mu, dt, &rep);
    Projection pr = pressure_project(pb, ustar, next.rho, dt, &s.pressure, &rep);
    // Remove the residual divergence left at the solver tolerance.
    next.u = leray_project(sp, pr.u);
    next.pressure = std::move(pr.pressure);
    rep.max_divergence = max_abs(divergence(sp, next.u));
    next.t = s.t + dt;
    next.step = s.step + 1;
    return next;
}

double stable_dt(const Problem& pb, const FluidState& s) {
    const StepParams& p = pb.params;
    if (p.policy == DtPolicy::fixed) return p.dt;
    const VectorField w = mollify(pb.spectral(), s.u, pb.kernel);
    const ScalarField w2 = norm_squared(w);
    const double vmax = std::sqrt(kernels::minmax(w2.span())[1]);
    if (!std::isfinite(vmax)) throw NumericalError("non-finite velocity in stable_dt");
    const double h = pb.grid.spacing();
    if (vmax * p.dt_max <= p.cfl * h) return p.dt_max;
    return std::min(p.dt_max, p.cfl * h / vmax);
}

}  // namespace penfsi
