#include <chrono>
#include <cmath>

#include "doctest.h"
#include "penfsi/config.hpp"
#include "penfsi/scenario.hpp"
#include "penfsi/solver.hpp"
#include "test_util.hpp"

using namespace penfsi;
using penfsi::test::max_abs_vec;
using penfsi::test::max_diff;
using penfsi::test::random_field;
using penfsi::test::sample;
using penfsi::test::sample_vec;

namespace {

FluidState rest_state(const TorusGrid& g) {
    FluidState s;
    s.rho = ScalarField(g, 1.0);
    s.mu = ScalarField(g, 1.0);
    s.u = VectorField(g, 0.0);
    s.pressure = ScalarField(g, 0.0);
    return s;
}

VectorField taylor_green(const TorusGrid& g, double k) {
    return sample_vec(g, [&](int a, double x, double y, double) {
        return a == 0 ? std::sin(k * x) * std::cos(k * y) : -std::cos(k * x) * std::sin(k * y);
    });
}

double kinetic(const FluidState& s) {
    const ScalarField u2 = norm_squared(s.u);
    ScalarField e(u2.grid);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = 0.5 * s.rho[i] * u2[i];
    return integral(e);
}

const char* kCavity = R"({
  "grid": {"dim": 2, "half_period": 1.0, "cells": 32},
  "domain": {"shape": {"type": "disk", "radius": 0.8}},
  "bodies": [{"id": 1, "shape": {"type": "disk", "radius": 0.3}, "center": [0.1, 0.0],
              "density": 2.0, "velocity": [0.5, 0.2]}],
  "penalty": {"epsilon": 1e-2, "delta_cells": 3},
  "fluid": {"type": "random", "amplitude": 0.5, "max_mode": 3},
  "time": {"horizon": 1.0, "dt": 2e-3},
  "seed": 7
})";

}  // namespace

TEST_CASE("advect: constants, exact shifts, range and mass") {
    const auto g = make_grid(2, 1.0, 32);
    const double h = g.spacing();

    SUBCASE("constant field unchanged") {
        const VectorField w = sample_vec(g, [](int a, double x, double y, double) {
            return a == 0 ? std::sin(M_PI * y) : std::cos(M_PI * x);
        });
        const ScalarField c(g, 2.5);
        CHECK(max_diff(advect(c, w, 0.01), c) == 0.0);
    }
    SUBCASE("uniform translation by whole cells equals an index shift") {
        const double U = 0.5, V = -0.25;
        VectorField w(g);
        for (auto& x : w[0].values) x = U;
        for (auto& x : w[1].values) x = V;
        const double step = 4.0 * h;  // U*step/h = 2 cells, V*step/h = -1 cell
        const ScalarField f = random_field(g, 11, 0.0, 1.0);
        const ScalarField out = advect(f, w, step);
        ScalarField ref(g);
        for (int i = 0; i < g.cells; ++i)
            for (int j = 0; j < g.cells; ++j) ref[g.flat(i, j)] = f[g.flat(i - 2, j + 1)];
        CHECK(max_diff(out, ref) < 1e-12);
    }
    SUBCASE("random field under a swirling flow: range kept, mass fixed") {
        const VectorField w = sample_vec(g, [](int a, double x, double y, double) {
            return a == 0 ? std::sin(M_PI * x) * std::cos(M_PI * y) : -std::cos(M_PI * x) * std::sin(M_PI * y);
        });
        ScalarField f = random_field(g, 3, 1.0, 4.0);
        const double m0 = integral(f);
        const auto [lo, hi] = kernels::minmax(f.span());
        double worst_drift = 0.0;
        for (int s = 0; s < 50; ++s) {
            AdvectReport rep;
            f = advect(f, w, 0.02, true, &rep);
            worst_drift = std::max(worst_drift, std::abs(rep.drift));
        }
        CHECK(min_value(f) >= lo);
        CHECK(max_value(f) <= hi);
        CHECK(std::abs(integral(f) - m0) / m0 < 1e-12);
        CHECK(worst_drift > 0.0);  // the fixer had work to do
    }
    SUBCASE("viscosity stays above 1") {
        ScalarField mu = sample(g, [](double x, double y, double) {
            return 1.0 + 999.0 * smoothstep((0.4 - std::hypot(x, y)) / 0.2);
        });
        const VectorField w = sample_vec(g, [](int a, double, double y, double) {
            return a == 0 ? 1.0 + 0.5 * std::sin(M_PI * y) : 0.3;
        });
        for (int s = 0; s < 40; ++s) mu = advect(mu, w, 0.02);
        CHECK(min_value(mu) >= 1.0 - 1e-10);
    }
    SUBCASE("CFL violation") {
        VectorField w(g, 0.0);
        for (auto& x : w[0].values) x = 10.0;
        CHECK_THROWS_AS(advect(ScalarField(g, 1.0), w, 1.0), NumericalError);
    }
}

TEST_CASE("momentum_update") {
    const auto g = make_grid(2, M_PI, 32);
    Problem pb = make_problem(g, 0.0, 1.0);
    const FluidState s = rest_state(g);

    SUBCASE("zero velocity, no forcing") {
        const VectorField v = momentum_update(pb, s.u, s.u, s.rho, s.mu, 1e-3);
        CHECK(max_abs_vec(v) == 0.0);
    }
    SUBCASE("single Taylor-Green mode decays by the implicit viscous factor") {
        const VectorField u = taylor_green(g, 1.0);
        const double dt = 1e-2;
        const VectorField w = mollify(pb.spectral(), u, pb.kernel);
        const VectorField v = momentum_update(pb, u, w, s.rho, s.mu, dt);
        const Projection p = pressure_project(pb, v, s.rho, dt);
        // (mu/2)|k|^2 with |k|^2 = 2
        const double implicit = 1.0 / (1.0 + dt);
        VectorField ref = u;
        for (int a = 0; a < 2; ++a)
            for (auto& x : ref[a].values) x *= implicit;
        CHECK(max_diff(p.u, ref) < 1e-7);
        CHECK(std::abs(implicit - std::exp(-dt)) < dt * dt);
    }
    SUBCASE("penalty factor reduces |u| outside the domain") {
        pb.chi = sample(g, [](double x, double, double) { return x > 1.0 ? 1.0 : 0.0; });
        pb.epsilon = 1e-2;
        VectorField u(g, 0.0);
        for (auto& x : u[0].values) x = 1.0;
        const VectorField v = momentum_update(pb, u, u, s.rho, s.mu, 1e-2);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (pb.chi[i] > 0.0) CHECK(std::abs(v[0][i]) < 0.6);
            else CHECK(v[0][i] == doctest::Approx(1.0));
        }
    }
}

TEST_CASE("pressure_project") {
    SUBCASE("divergence-free input unchanged, phi = 0") {
        const auto g = make_grid(2, 1.0, 16);
        Problem pb = make_problem(g, 0.0, 1.0);
        const VectorField u = taylor_green(g, M_PI);
        const ScalarField rho = random_field(g, 5, 1.0, 3.0);
        const Projection p = pressure_project(pb, u, rho, 1e-2);
        CHECK(max_diff(p.u, u) < 1e-12);
        CHECK(max_abs(p.pressure) < 1e-12);
    }
    SUBCASE("rho = 1 matches the Leray projector on 8x8") {
        const auto g = make_grid(2, 1.0, 8);
        Problem pb = make_problem(g, 0.0, 1.0);
        pb.params.pressure_tol = 1e-13;
        VectorField v(g);
        v[0] = random_field(g, 1);
        v[1] = random_field(g, 2);
        const Projection p = pressure_project(pb, v, ScalarField(g, 1.0), 0.1);
        CHECK(max_diff(p.u, leray_project(*pb.sp, v)) < 1e-10);
    }
    SUBCASE("random input, variable density: divergence below 1e-8") {
        const auto g = make_grid(2, 1.0, 32);
        Problem pb = make_problem(g, 0.0, 1.0);
        VectorField v(g);
        v[0] = random_field(g, 8);
        v[1] = random_field(g, 9);
        const ScalarField rho = sample(g, [](double x, double y, double) {
            return 1.0 + 2.0 * smoothstep((0.5 - std::hypot(x, y)) / 0.2);
        });
        StepReport rep;
        const Projection p = pressure_project(pb, v, rho, 1e-2, nullptr, &rep);
        MESSAGE("pressure CG iterations: " << rep.pressure_iterations);
        CHECK(max_abs(divergence(*pb.sp, p.u)) <= 1e-8);
    }
    SUBCASE("correction is damped by the penalty outside the domain") {
        const auto g = make_grid(2, 1.0, 32);
        Problem pb = make_problem(g, 0.0, 1.0);
        pb.chi = sample(g, [](double x, double y, double) { return std::hypot(x, y) > 0.6 ? 1.0 : 0.0; });
        VectorField v(g);
        v[0] = random_field(g, 3);
        v[1] = random_field(g, 4);
        // as left by the penalty factor: nothing outside
        for (std::size_t i = 0; i < g.size(); ++i)
            if (pb.chi[i] > 0.0) v[0][i] = v[1][i] = 0.0;
        const double dt = 1e-2;
        std::vector<double> outside;
        for (double eps : {1e-3, 1e-4, 1e-5, 1e-6}) {
            pb.epsilon = eps;
            const Projection p = pressure_project(pb, v, ScalarField(g, 1.0), dt);
            CHECK(max_abs(divergence(*pb.sp, p.u)) <= 1e-8);
            double m = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (pb.chi[i] > 0.0)
                    for (int a = 0; a < 2; ++a) m = std::max(m, std::abs(p.u[a][i]));
            outside.push_back(m);
        }
        // an unweighted correction would not depend on eps at all
        for (std::size_t k = 1; k < outside.size(); ++k) CHECK(outside[k] < outside[k - 1]);
        CHECK(outside.back() < outside.front() / 20.0);
    }
}

TEST_CASE("step") {
    SUBCASE("quiescent state is a fixed point") {
        const auto g = make_grid(2, 1.0, 32);
        Problem pb = make_problem(g, 4.0 * g.spacing(), 1e-3);
        FluidState s = rest_state(g);
        s.rho = sample(g, [](double x, double y, double) { return 1.0 + smoothstep((0.4 - std::hypot(x, y)) / 0.1); });
        const FluidState n = step(pb, s, 1e-3);
        CHECK(max_abs_vec(n.u) <= 1e-12);
        CHECK(max_diff(n.rho, s.rho) <= 1e-12);
        CHECK(n.t == 1e-3);
        CHECK(n.step == 1);
    }
    SUBCASE("Taylor-Green kinetic energy decays as exp(-mu |k|^2 t)") {
        const auto g = make_grid(2, M_PI, 64);
        Problem pb = make_problem(g, 4.0 * g.spacing(), 1.0);
        FluidState s = rest_state(g);
        s.u = taylor_green(g, 1.0);
        const double ke0 = kinetic(s);
        const double dt = 1e-3;
        for (int i = 0; i < 100; ++i) s = step(pb, s, dt);
        const double expected = std::exp(-2.0 * s.t);
        CHECK(kinetic(s) / ke0 == doctest::Approx(expected).epsilon(1e-3));
    }
    SUBCASE("disk in a cavity: mass of rho and markers conserved") {
        const Config c = load_config(kCavity);
        const Problem pb = make_problem(c);
        FluidState s = build_initial_state(c, pb.spectral());
        const double m0 = integral(s.rho), a0 = integral(s.bodies[0].a);
        int vmax = 0, pmax = 0;
        double div = 0.0, mu_min = 1e300;
        const auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < 200; ++i) {
            StepReport rep;
            s = step(pb, s, c.time.dt, &rep);
            vmax = std::max(vmax, rep.viscous_iterations);
            pmax = std::max(pmax, rep.pressure_iterations);
            div = std::max(div, rep.max_divergence);
            mu_min = std::min({mu_min, rep.mu_min, rep.mu_delta_min});
            CHECK(rep.rho_floor_hits == 0);
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        MESSAGE("cavity: max viscous its " << vmax << ", pressure its " << pmax << ", " << secs << " s / 200 steps");
        CHECK(std::abs(integral(s.rho) - m0) / m0 < 1e-6);
        CHECK(std::abs(integral(s.bodies[0].a) - a0) / a0 < 1e-6);
        CHECK(div <= 1e-8);
        CHECK(mu_min >= 1.0 - 1e-10);
        CHECK(all_finite(s.u));
    }
    SUBCASE("3D small step") {
        const auto g = make_grid(3, 1.0, 16);
        Problem pb = make_problem(g, 3.0 * g.spacing(), 1e-2);
        FluidState s = rest_state(g);
        const double k = M_PI;
        s.u = sample_vec(g, [&](int a, double x, double y, double z) {
            if (a == 0) return std::sin(k * x) * std::cos(k * y) * std::cos(k * z);
            if (a == 1) return -std::cos(k * x) * std::sin(k * y) * std::cos(k * z);
            return 0.0;
        });
        s.mu = sample(g, [](double x, double y, double z) {
            return 1.0 + 99.0 * smoothstep((0.4 - std::sqrt(x * x + y * y + z * z)) / 0.2);
        });
        s.rho = sample(g, [](double x, double y, double z) {
            return 1.0 + smoothstep((0.4 - std::sqrt(x * x + y * y + z * z)) / 0.2);
        });
        const double ke0 = kinetic(s);
        StepReport rep;
        for (int i = 0; i < 3; ++i) s = step(pb, s, 1e-3, &rep);
        CHECK(rep.max_divergence <= 1e-8);
        CHECK(kinetic(s) < ke0);
        CHECK(all_finite(s.u));
    }
}

TEST_CASE("stable_dt") {
    const auto g = make_grid(2, 1.0, 32);
    Problem pb = make_problem(g, 4.0 * g.spacing(), 1.0);
    pb.params.policy = DtPolicy::cfl;
    pb.params.cfl = 0.5;
    pb.params.dt_max = 1e-2;
    FluidState s = rest_state(g);
    CHECK(stable_dt(pb, s) == 1e-2);
    s.u = taylor_green(g, M_PI);
    for (int a = 0; a < 2; ++a)
        for (auto& x : s.u[a].values) x *= 10.0;
    const double dt1 = stable_dt(pb, s);
    CHECK(dt1 < 1e-2);
    for (int a = 0; a < 2; ++a)
        for (auto& x : s.u[a].values) x *= 2.0;
    CHECK(stable_dt(pb, s) == doctest::Approx(0.5 * dt1).epsilon(1e-14));
    CHECK(stable_dt(pb, s) == stable_dt(pb, s));
    pb.params.policy = DtPolicy::fixed;
    pb.params.dt = 3e-3;
    CHECK(stable_dt(pb, s) == 3e-3);
}
