#include "penfsi/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace penfsi {

double smoothstep(double s) {
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

ScalarField domain_mask(const DomainSpec* domain, const TorusGrid& grid) {
    ScalarField m(grid, 1.0);
    if (!domain) return m;
    for (std::size_t i = 0; i < grid.size(); ++i)
        m[i] = domain->shape.sdf(grid.node(i), grid, false) <= 0.0 ? 1.0 : 0.0;
    return m;
}

ScalarField build_chi(const DomainSpec* domain, const TorusGrid& grid, double width) {
    ScalarField chi(grid, 0.0);
    if (!domain) return chi;
    if (!(width > 0.0)) throw std::invalid_argument("build_chi: ramp width must be positive");
    const double h = grid.spacing();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double dist = domain->shape.sdf(grid.node(i), grid, false);
        const auto ij = grid.unflatten(i);
        bool edge = false;
        for (int a = 0; a < grid.dim; ++a) edge = edge || ij[a] == 0 || ij[a] == grid.cells - 1;
        if (edge && dist < h) throw std::invalid_argument("build_chi: domain touches the box boundary");
        if (dist <= 0.0) continue;
        const double r = smoothstep(dist / width);
        chi[i] = r * r;
    }
    return chi;
}

ScalarField body_layer(const BodySpec& body, double delta, const TorusGrid& grid) {
    ScalarField w(grid, 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double depth = -body.shape.sdf(grid.node(i), grid, true);
        if (depth > 0.0) w[i] = smoothstep(depth / delta);
    }
    return w;
}

namespace {

ScalarField layered(const std::vector<BodySpec>& bodies, double delta, const TorusGrid& grid, double fluid_level,
                    const std::vector<double>& solid_levels) {
    ScalarField f(grid, fluid_level);
    ScalarField claimed(grid, 0.0);
    for (std::size_t b = 0; b < bodies.size(); ++b) {
        const ScalarField w = body_layer(bodies[b], delta, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (w[i] == 0.0) continue;
            if (claimed[i] != 0.0) throw std::invalid_argument("overlapping bodies");
            claimed[i] = 1.0;
            f[i] = fluid_level + (solid_levels[b] - fluid_level) * w[i];
        }
    }
    return f;
}

}  // namespace

ScalarField build_initial_density(const std::vector<BodySpec>& bodies, double delta, const TorusGrid& grid) {
    std::vector<double> lv;
    for (const auto& b : bodies) lv.push_back(b.density);
    return layered(bodies, delta, grid, 1.0, lv);
}

ScalarField build_initial_viscosity(const std::vector<BodySpec>& bodies, double delta, double epsilon,
                                    const TorusGrid& grid) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("build_initial_viscosity: epsilon must be positive");
    return layered(bodies, delta, grid, 1.0, std::vector<double>(bodies.size(), 1.0 / epsilon));
}

std::vector<BodyMarker> build_markers(const std::vector<BodySpec>& bodies, double delta, const TorusGrid& grid) {
    std::vector<BodyMarker> out;
    for (const auto& b : bodies) {
        BodyMarker m;
        m.id = b.id;
        m.density = b.density;
        m.a = body_layer(b, delta, grid);
        m.members = {b.id};
        out.push_back(std::move(m));
    }
    return out;
}

VectorField build_fluid_datum(const Spectral& sp, const FluidSpec& fluid, unsigned long long seed) {
    const TorusGrid& g = sp.grid();
    const int d = g.dim;
    VectorField u(g, 0.0);
    switch (fluid.type) {
        case FluidDatum::rest:
            break;
        case FluidDatum::taylor_green: {
            const double k = M_PI * fluid.mode / g.half_period;
            const double A = fluid.amplitude;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const auto x = g.node(i);
                if (d == 2) {
                    u[0][i] = A * std::sin(k * x[0]) * std::cos(k * x[1]);
                    u[1][i] = -A * std::cos(k * x[0]) * std::sin(k * x[1]);
                } else {
                    u[0][i] = A * std::sin(k * x[0]) * std::cos(k * x[1]) * std::cos(k * x[2]);
                    u[1][i] = -A * std::cos(k * x[0]) * std::sin(k * x[1]) * std::cos(k * x[2]);
                }
            }
            break;
        }
        case FluidDatum::random: {
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> nd(0.0, 1.0);
            for (int a = 0; a < d; ++a)
                for (std::size_t i = 0; i < g.size(); ++i) u[a][i] = nd(rng);
            Spectrum s;
            for (int a = 0; a < d; ++a) {
                sp.forward(u[a].span(), s);
                for (std::size_t m = 0; m < sp.modes(); ++m) {
                    bool keep = true;
                    for (int b = 0; b < d; ++b) keep = keep && std::abs(sp.m(b, m)) <= fluid.max_mode;
                    if (!keep || sp.k2(m) == 0.0) s[m] = 0.0;
                }
                sp.backward(s, u[a].span());
            }
            u = leray_project(sp, u);
            double peak = 0.0;
            for (int a = 0; a < d; ++a) peak = std::max(peak, max_abs(u[a]));
            if (peak > 0.0)
                for (int a = 0; a < d; ++a)
                    for (auto& v : u[a].values) v *= fluid.amplitude / peak;
            break;
        }
    }
    return u;
}

VectorField assemble_initial_velocity(const VectorField& fluid, const std::vector<BodySpec>& bodies, double delta,
                                      const DomainSpec* domain) {
    const TorusGrid& g = fluid.grid;
    const int d = g.dim;
    VectorField u = fluid;
    for (const auto& b : bodies) {
        const ScalarField w = body_layer(b, delta, g);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (w[i] == 0.0) continue;
            const auto x = g.node(i);
            Vec3 r{0.0, 0.0, 0.0};
            for (int a = 0; a < d; ++a) r[a] = g.periodic_delta(x[a], b.shape.center[a]);
            Vec3 rigid = b.velocity;
            // spin x r (2D: spin[2] about the out-of-plane axis)
            rigid[0] += b.spin[1] * r[2] - b.spin[2] * r[1];
            rigid[1] += b.spin[2] * r[0] - b.spin[0] * r[2];
            rigid[2] += b.spin[0] * r[1] - b.spin[1] * r[0];
            for (int a = 0; a < d; ++a) u[a][i] = (1.0 - w[i]) * u[a][i] + w[i] * rigid[a];
        }
    }
    if (domain) {
        const ScalarField m = domain_mask(domain, g);
        for (int a = 0; a < d; ++a)
            for (std::size_t i = 0; i < g.size(); ++i) u[a][i] *= m[i];
    }
    return u;
}

double smooth_cutoff(double s) {
    auto f = [](double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; };
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    return f(s) / (f(s) + f(1.0 - s));
}

ScalarField domain_cutoff(const DomainSpec& domain, const TorusGrid& grid, double width) {
    ScalarField c(grid, 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i)
        c[i] = smooth_cutoff(-domain.shape.sdf(grid.node(i), grid, false) / width);
    return c;
}

namespace {

// Spectral curl helpers. 2D: stream function psi with v = (d2 psi, -d1 psi);
// 3D: vector potential A with v = curl A.
ScalarField derivative(const Spectral& sp, const ScalarField& f, int axis) {
    Spectrum s;
    sp.forward(f.span(), s);
    for (std::size_t m = 0; m < s.size(); ++m) s[m] *= Complex(0.0, sp.k(axis, m));
    ScalarField out(f.grid);
    sp.backward(s, out.span());
    return out;
}

ScalarField inverse_neg_laplacian(const Spectral& sp, const ScalarField& f) {
    Spectrum s;
    sp.forward(f.span(), s);
    for (std::size_t m = 0; m < s.size(); ++m) s[m] = sp.k2(m) > 0.0 ? s[m] / sp.k2(m) : Complex(0.0, 0.0);
    ScalarField out(f.grid);
    sp.backward(s, out.span());
    return out;
}

}  // namespace

VectorField project_in_domain(const Spectral& sp, const VectorField& v, const DomainSpec* domain, double width,
                              ProjectionReport* report) {
    const TorusGrid& g = sp.grid();
    const int d = g.dim;
    VectorField u = leray_project(sp, v);
    if (domain) {
        const ScalarField c = domain_cutoff(*domain, g, width);
        if (d == 2) {
            ScalarField w = derivative(sp, u[1], 0);
            const ScalarField t = derivative(sp, u[0], 1);
            for (std::size_t i = 0; i < g.size(); ++i) w[i] -= t[i];
            ScalarField psi = inverse_neg_laplacian(sp, w);
            for (std::size_t i = 0; i < g.size(); ++i) psi[i] *= c[i];
            u[0] = derivative(sp, psi, 1);
            u[1] = derivative(sp, psi, 0);
            for (auto& x : u[1].values) x = -x;
        } else {
            VectorField A(g);
            for (int a = 0; a < 3; ++a) {
                const int b = (a + 1) % 3, e = (a + 2) % 3;
                ScalarField w = derivative(sp, u[e], b);
                const ScalarField t = derivative(sp, u[b], e);
                for (std::size_t i = 0; i < g.size(); ++i) w[i] -= t[i];
                A[a] = inverse_neg_laplacian(sp, w);
                for (std::size_t i = 0; i < g.size(); ++i) A[a][i] *= c[i];
            }
            for (int a = 0; a < 3; ++a) {
                const int b = (a + 1) % 3, e = (a + 2) % 3;
                u[a] = derivative(sp, A[e], b);
                const ScalarField t = derivative(sp, A[b], e);
                for (std::size_t i = 0; i < g.size(); ++i) u[a][i] -= t[i];
            }
        }
    }
    if (report) {
        report->max_divergence = max_abs(divergence(sp, u));
        report->exterior_fraction = 0.0;
        if (domain) {
            const ScalarField mask = domain_mask(domain, g);
            const ScalarField e2 = norm_squared(u);
            ScalarField out(g);
            for (std::size_t i = 0; i < g.size(); ++i) out[i] = (1.0 - mask[i]) * e2[i];
            const double tot = integral(e2);
            report->exterior_fraction = tot > 0.0 ? integral(out) / tot : 0.0;
        }
    }
    return u;
}

VectorField build_initial_velocity(const Spectral& sp, const VectorField& fluid, const std::vector<BodySpec>& bodies,
                                   double delta, const DomainSpec* domain, double cutoff_width,
                                   std::vector<std::string>* warnings) {
    const TorusGrid& g = sp.grid();
    if (warnings) {
        const ScalarField div = divergence(sp, fluid);
        const ScalarField mask = domain_mask(domain, g);
        double worst = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, mask[i] * std::abs(div[i]));
        for (int a = 0; a < g.dim; ++a) scale = std::max(scale, max_abs(fluid[a]));
        if (worst > 1e-8 * std::max(scale, 1.0) / g.spacing())
            warnings->push_back("fluid datum is not divergence-free in the domain (max |div| = " +
                                std::to_string(worst) + "); projecting");
    }
    // Assembled without the domain mask: the jump at the wall would ring
    // through the stream function; the cutoff confines the support instead.
    const VectorField raw = assemble_initial_velocity(fluid, bodies, delta, nullptr);
    return project_in_domain(sp, raw, domain, cutoff_width, nullptr);
}

double initial_cutoff_width(const Config& c) {
    double w = 12.0 * c.grid.spacing();
    if (c.domain) w = std::min(w, 0.5 * c.domain->shape.feature_size());
    return w;
}

FluidState build_initial_state(const Config& c, const Spectral& sp, std::vector<std::string>* warnings) {
    const TorusGrid& g = c.grid;
    require_same_grid(g, sp.grid(), "build_initial_state");
    const DomainSpec* dom = c.domain ? &*c.domain : nullptr;
    FluidState s;
    s.t = 0.0;
    s.step = 0;
    s.rho = build_initial_density(c.bodies, c.delta, g);
    s.mu = build_initial_viscosity(c.bodies, c.delta, c.epsilon, g);
    s.bodies = build_markers(c.bodies, c.delta, g);
    const VectorField fluid = build_fluid_datum(sp, c.fluid, c.seed);
    s.u = build_initial_velocity(sp, fluid, c.bodies, c.delta, dom, initial_cutoff_width(c), warnings);
    s.pressure = ScalarField(g, 0.0);
    return s;
}

}  // namespace penfsi
