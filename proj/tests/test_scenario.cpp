#include <cmath>

#include "doctest.h"
#include "penfsi/config.hpp"
#include "penfsi/scenario.hpp"
#include "test_util.hpp"

using namespace penfsi;
using penfsi::test::max_abs_vec;

namespace {

const char* kMinimal = R"({"grid": {"half_period": 1.0, "cells": 32}, "time": {"horizon": 1.0}})";

std::string cavity_doc(double eps = 1e-3, double density = 2.0) {
    return R"({
      "grid": {"dim": 2, "half_period": 1.0, "cells": 64},
      "domain": {"shape": {"type": "disk", "radius": 0.8}},
      "bodies": [{"id": 1, "shape": {"type": "disk", "radius": 0.25}, "center": [0.2, 0.0],
                  "density": )" + std::to_string(density) + R"(, "velocity": [1.0, 0.0]}],
      "penalty": {"epsilon": )" + std::to_string(eps) + R"(, "delta_cells": 4},
      "time": {"horizon": 1.0}
    })";
}

BodySpec disk_body(double r, Vec3 c, double rho) {
    BodySpec b;
    b.id = 1;
    b.shape.kind = ShapeKind::disk;
    b.shape.dim = 2;
    b.shape.radius = r;
    b.shape.center = c;
    b.density = rho;
    return b;
}

}  // namespace

TEST_CASE("shapes: signed distances") {
    const auto g = make_grid(2, 1.0, 8);
    Shape s;
    s.kind = ShapeKind::ellipse;
    s.semi_axes = {0.5, 0.25, 0.0};
    CHECK(s.sdf({0.0, 0.0, 0.0}, g, false) == doctest::Approx(-0.25).epsilon(1e-10));
    CHECK(s.sdf({0.7, 0.0, 0.0}, g, false) == doctest::Approx(0.2).epsilon(1e-10));
    CHECK(s.sdf({0.0, 0.5, 0.0}, g, false) == doctest::Approx(0.25).epsilon(1e-10));

    Shape b;
    b.kind = ShapeKind::box;
    b.half_extents = {0.3, 0.2, 0.0};
    b.orientation = rotation_2d(M_PI / 2);
    // rotated: extends 0.2 along x, 0.3 along y
    CHECK(b.sdf({0.0, 0.5, 0.0}, g, false) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(b.sdf({0.4, 0.0, 0.0}, g, false) == doctest::Approx(0.2).epsilon(1e-12));

    Shape p;
    p.kind = ShapeKind::polygon;
    p.vertices = {{-0.3, -0.2}, {0.3, -0.2}, {0.3, 0.2}, {-0.3, 0.2}};
    for (double x : {-0.9, -0.25, 0.0, 0.1, 0.5})
        for (double y : {-0.7, -0.1, 0.0, 0.15, 0.6}) {
            Shape bb;
            bb.kind = ShapeKind::box;
            bb.half_extents = {0.3, 0.2, 0.0};
            CHECK(p.sdf({x, y, 0.0}, g, false) == doctest::Approx(bb.sdf({x, y, 0.0}, g, false)).epsilon(1e-12));
        }
    CHECK(p.volume() == doctest::Approx(0.24));

    Shape d;
    d.radius = 0.2;
    d.center = {0.9, 0.0, 0.0};
    // periodic minimal image across the seam at x = +-1
    CHECK(d.sdf({-0.95, 0.0, 0.0}, g, true) == doctest::Approx(-0.05).epsilon(1e-12));
}

TEST_CASE("load_config: defaults, echo, validation errors") {
    const Config c = load_config(kMinimal);
    CHECK(c.grid.dim == 2);
    CHECK(c.epsilon == 1e-3);
    CHECK(c.delta == doctest::Approx(4.0 * c.grid.spacing()));
    CHECK(c.time.policy == DtPolicy::fixed);
    CHECK(c.contacts.policy == ContactPolicy::merge);
    CHECK(c.contacts.threshold_cells == 3.0);
    CHECK(c.solver.viscous_tol == 1e-8);

    // echo re-parses to the same config
    const std::string echo = config_to_json(c);
    CHECK(config_to_json(load_config(echo)) == echo);
    const Config cav = load_config(cavity_doc());
    CHECK(config_to_json(load_config(config_to_json(cav))) == config_to_json(cav));

    auto msg = [](const std::string& doc) {
        try {
            load_config(doc);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(msg(cavity_doc(0.0)).find("penalty.epsilon") != std::string::npos);
    CHECK(msg(cavity_doc(1e-3, 0.0)).find("bodies[0].density") != std::string::npos);
    CHECK(msg(R"({"grid": {"half_period": 1.0, "cells": 32}, "time": {"horizon": 1.0}, "bogus": 1})")
              .find("bogus: unknown key") != std::string::npos);
    CHECK(msg(R"({"grid": {"half_period": 1.0, "cells": 32, "extra": 2}, "time": {"horizon": 1.0}})")
              .find("grid.extra") != std::string::npos);
    CHECK(msg(R"({"grid": {"half_period": 1.0}, "time": {"horizon": 1.0}})").find("cells") != std::string::npos);
    CHECK(msg(R"({"grid": {"half_period": 1.0, "cells": 30}, "time": {"horizon": 1.0}})").find("grid") !=
          std::string::npos);
    CHECK(msg("{not json").find("parse error") != std::string::npos);
    // overlapping bodies
    CHECK(msg(R"({"grid": {"half_period": 1.0, "cells": 64},
                  "bodies": [{"shape": {"type": "disk", "radius": 0.3}, "center": [0.0, 0.0], "density": 2},
                             {"shape": {"type": "disk", "radius": 0.3}, "center": [0.4, 0.0], "density": 2}],
                  "time": {"horizon": 1}})")
              .find("overlap") != std::string::npos);
    // body outside the domain
    CHECK(msg(R"({"grid": {"half_period": 1.0, "cells": 64},
                  "domain": {"shape": {"type": "disk", "radius": 0.5}},
                  "bodies": [{"shape": {"type": "disk", "radius": 0.2}, "center": [0.5, 0.0], "density": 2}],
                  "time": {"horizon": 1}})")
              .find("not inside the domain") != std::string::npos);
    // domain touching the box
    CHECK(msg(R"({"grid": {"half_period": 1.0, "cells": 64},
                  "domain": {"shape": {"type": "box", "half_extents": [1.0, 0.5]}},
                  "time": {"horizon": 1}})")
              .find("domain") != std::string::npos);
    // delta larger than the feature size
    CHECK(msg(R"({"grid": {"half_period": 1.0, "cells": 64}, "penalty": {"delta": 0.3},
                  "bodies": [{"shape": {"type": "disk", "radius": 0.2}, "density": 2}],
                  "time": {"horizon": 1}})")
              .find("feature size") != std::string::npos);
    CHECK_THROWS_AS(load_config_file("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("build_chi: zero on the domain, positive outside, no jump") {
    const auto g = make_grid(2, 1.0, 128);
    DomainSpec dom;
    dom.shape.radius = 0.6;
    const double width = 0.2;
    const ScalarField chi = build_chi(&dom, g, width);
    const double h = g.spacing();
    double maxjump = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto x = g.node(i);
        const double r = std::hypot(x[0], x[1]);
        if (r <= 0.6) CHECK(chi[i] == 0.0);
        if (r - 0.6 >= h) CHECK(chi[i] > 0.0);
        if (r - 0.6 >= width) CHECK(chi[i] == 1.0);
        CHECK(chi[i] <= 1.0);
        const auto ij = g.unflatten(i);
        maxjump = std::max(maxjump, std::abs(chi[g.flat(ij[0] + 1, ij[1])] - chi[i]) / h);
    }
    // |grad chi| <= 2 * max smoothstep' / width = 2 * 1.875 / width
    CHECK(maxjump <= 2.0 * 1.875 / width + 1e-9);
    CHECK(max_value(build_chi(nullptr, g, width)) == 0.0);

    DomainSpec wide;
    wide.shape.kind = ShapeKind::box;
    wide.shape.half_extents = {1.0, 0.5, 0.0};
    CHECK_THROWS_AS(build_chi(&wide, g, width), std::invalid_argument);
}

TEST_CASE("layered density and viscosity") {
    const auto g = make_grid(2, 1.0, 128);
    const double delta = 4.0 * g.spacing();
    const double eps = 1e-3;
    const std::vector<BodySpec> bodies{disk_body(0.4, {0.1, -0.1, 0.0}, 2.5)};
    const ScalarField rho = build_initial_density(bodies, delta, g);
    const ScalarField mu = build_initial_viscosity(bodies, delta, eps, g);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto x = g.node(i);
        const double dist = std::hypot(x[0] - 0.1, x[1] + 0.1) - 0.4;
        if (dist > 0.0) {
            CHECK(rho[i] == 1.0);
            CHECK(mu[i] == 1.0);
        }
        if (dist <= -delta) {
            CHECK(rho[i] == 2.5);
            CHECK(mu[i] == 1.0 / eps);
        }
        CHECK(rho[i] >= 1.0);
        CHECK(rho[i] <= 2.5);
        CHECK(mu[i] >= 1.0);
        CHECK(mu[i] <= 1.0 / eps);
    }
    // monotone along a radius, evaluated through the profile directly
    double prev = 2.5;
    for (int k = 0; k <= 100; ++k) {
        const double depth = delta * (1.0 - k / 100.0);
        const double v = 1.0 + 1.5 * smoothstep(depth / delta);
        CHECK(v <= prev + 1e-15);
        prev = v;
    }
    // density lighter than the fluid stays in [rho_S, 1]
    const ScalarField light = build_initial_density({disk_body(0.4, {0.0, 0.0, 0.0}, 0.5)}, delta, g);
    CHECK(min_value(light) == 0.5);
    CHECK(max_value(light) == 1.0);
}

TEST_CASE("body mass converges as O(delta)") {
    const auto g = make_grid(2, 1.0, 256);
    const double rS = 3.0, R = 0.5;
    const BodySpec b = disk_body(R, {0.0, 0.0, 0.0}, rS);
    const double exact = rS * M_PI * R * R;
    auto mass_error = [&](double delta) {
        const ScalarField rho = build_initial_density({b}, delta, g);
        const auto mk = build_markers({b}, delta, g);
        ScalarField prod(g);
        for (std::size_t i = 0; i < g.size(); ++i) prod[i] = mk[0].a[i] * rho[i];
        return std::abs(integral(prod) - exact) / exact;
    };
    const double e1 = mass_error(0.16), e2 = mass_error(0.08), e3 = mass_error(0.04);
    CHECK(e2 < e1);
    CHECK(e3 < e2);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.25));
    CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.25));
}

TEST_CASE("initial velocity") {
    const auto g = make_grid(2, 1.0, 64);
    Spectral sp(g);
    const double delta = 4.0 * g.spacing();
    DomainSpec dom;
    dom.shape.radius = 0.8;

    SUBCASE("all-zero data") {
        const VectorField u = build_initial_velocity(sp, VectorField(g), {disk_body(0.25, {0.2, 0, 0}, 2.0)}, delta, &dom, delta);
        CHECK(max_abs_vec(u) == 0.0);
    }
    SUBCASE("rigid datum on deep-interior nodes before projection") {
        BodySpec b = disk_body(0.25, {0.2, 0.0, 0.0}, 2.0);
        b.velocity = {1.0, 0.0, 0.0};
        const VectorField raw = assemble_initial_velocity(VectorField(g), {b}, delta, &dom);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto x = g.node(i);
            if (std::hypot(x[0] - 0.2, x[1]) - 0.25 <= -delta) {
                CHECK(raw[0][i] == 1.0);
                CHECK(raw[1][i] == 0.0);
            }
        }
        BodySpec spin = b;
        spin.velocity = {0.0, 0.0, 0.0};
        spin.spin = {0.0, 0.0, 2.0};
        const VectorField rot = assemble_initial_velocity(VectorField(g), {spin}, delta, nullptr);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto x = g.node(i);
            if (std::hypot(x[0] - 0.2, x[1]) - 0.25 <= -delta) {
                CHECK(rot[0][i] == doctest::Approx(-2.0 * x[1]));
                CHECK(rot[1][i] == doctest::Approx(2.0 * (x[0] - 0.2)));
            }
        }
    }
    SUBCASE("divergence-free, supported in the domain, energy confined") {
        FluidSpec fs;
        fs.type = FluidDatum::random;
        fs.max_mode = 5;
        BodySpec b = disk_body(0.25, {0.2, 0.0, 0.0}, 2.0);
        b.velocity = {0.5, -0.3, 0.0};
        b.spin = {0.0, 0.0, 1.5};
        for (unsigned long long seed : {1ull, 2ull, 3ull}) {
            const VectorField fluid = build_fluid_datum(sp, fs, seed);
            ProjectionReport rep;
            const VectorField raw = assemble_initial_velocity(fluid, {b}, delta, nullptr);
            const VectorField u = project_in_domain(sp, raw, &dom, 12.0 * g.spacing(), &rep);
            CHECK(rep.exterior_fraction < 1e-5);
            CHECK(rep.max_divergence <= 1e-10);
            CHECK(max_abs(divergence(sp, u)) <= 1e-10);
            const ScalarField mask = domain_mask(&dom, g);
            const ScalarField rho = build_initial_density({b}, delta, g);
            ScalarField ke(g), ke_in(g);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double e = 0.5 * rho[i] * (u[0][i] * u[0][i] + u[1][i] * u[1][i]);
                ke[i] = e;
                ke_in[i] = mask[i] * e;
            }
            CHECK(integral(ke_in) == doctest::Approx(integral(ke)).epsilon(1e-5));
            CHECK(integral(ke) > 0.0);
        }
    }
    SUBCASE("no domain uses the Leray projector") {
        FluidSpec fs;
        fs.type = FluidDatum::taylor_green;
        const VectorField tg = build_fluid_datum(sp, fs, 0);
        CHECK(max_abs(divergence(sp, tg)) < 1e-12);
        const VectorField u = build_initial_velocity(sp, tg, {}, delta, nullptr, delta);
        CHECK(penfsi::test::max_diff(u, tg) < 1e-12);
    }
    SUBCASE("non-solenoidal datum warns") {
        VectorField bad = penfsi::test::sample_vec(
            g, [](int a, double x, double, double) { return a == 0 ? std::sin(M_PI * x) : 0.0; });
        std::vector<std::string> warn;
        const VectorField u = build_initial_velocity(sp, bad, {}, delta, &dom, delta, &warn);
        CHECK(warn.size() == 1);
        CHECK(max_abs(divergence(sp, u)) <= 1e-10);
    }
}

TEST_CASE("build_initial_state from a config") {
    const Config c = load_config(cavity_doc());
    Spectral sp(c.grid);
    const FluidState s = build_initial_state(c, sp);
    CHECK(s.bodies.size() == 1);
    CHECK(s.bodies[0].members == std::vector<int>{1});
    CHECK(min_value(s.mu) >= 1.0);
    CHECK(max_value(s.rho) == 2.0);
    CHECK(max_abs(divergence(sp, s.u)) <= 1e-10);
    CHECK(all_finite(s.u));
}
