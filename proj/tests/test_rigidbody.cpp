#include <Eigen/Dense>

#include <cmath>

#include "doctest.h"
#include "penfsi/rigidbody.hpp"
#include "penfsi/scenario.hpp"
#include "test_util.hpp"

using namespace penfsi;
using penfsi::test::max_abs_vec;
using penfsi::test::max_diff;
using penfsi::test::sample;

namespace {

BodySpec disk(int id, double r, Vec3 c) {
    BodySpec b;
    b.id = id;
    b.shape.radius = r;
    b.shape.center = c;
    b.density = 2.0;
    return b;
}

FluidState two_disk_state(const TorusGrid& g, double gap) {
    const double r = 0.2;
    const std::vector<BodySpec> bodies{disk(1, r, {-r - gap / 2, 0.0, 0.0}), disk(2, r, {r + gap / 2, 0.0, 0.0})};
    FluidState s;
    s.rho = build_initial_density(bodies, 2.0 * g.spacing(), g);
    s.mu = ScalarField(g, 1.0);
    s.u = VectorField(g, 0.0);
    s.pressure = ScalarField(g, 0.0);
    s.bodies = build_markers(bodies, 2.0 * g.spacing(), g);
    return s;
}

RigidState make_rigid(Vec3 h, Vec3 Y, double w) {
    RigidState r;
    r.h = h;
    r.Y = Y;
    r.omega = {0.0, 0.0, w};
    r.Q = skew(r.omega);
    return r;
}

}  // namespace

TEST_CASE("fit_rigid_motion") {
    const auto g = make_grid(2, 1.0, 64);
    const ScalarField weight = sample(g, [](double x, double y, double) {
        return 2.0 * smoothstep((0.3 - std::hypot(x - 0.2, y + 0.1)) / 0.1);
    });

    SUBCASE("exact rigid field recovered") {
        // centre the field on the weighted centroid so h is recovered too
        const RigidState probe = fit_rigid_motion(VectorField(g), weight);
        const RigidState r = make_rigid(probe.h, {1.0, 2.0, 0.0}, 3.0);
        const RigidState f = fit_rigid_motion(rigid_velocity_field(r, g), weight);
        CHECK(std::abs(f.Y[0] - 1.0) < 1e-10);
        CHECK(std::abs(f.Y[1] - 2.0) < 1e-10);
        CHECK(std::abs(f.omega[2] - 3.0) < 1e-10);
        CHECK(f.residual < 1e-20);
        CHECK(std::abs(f.h[0] - 0.2) < 1e-3);
        CHECK(std::abs(f.h[1] + 0.1) < 1e-3);
        CHECK(f.inertia[2][2] > 0.0);
        CHECK(f.Q[0][1] == -f.Q[1][0]);
    }
    SUBCASE("pure translation has no spin") {
        VectorField u(g);
        for (auto& x : u[0].values) x = -0.7;
        for (auto& x : u[1].values) x = 0.4;
        const RigidState f = fit_rigid_motion(u, weight);
        CHECK(std::abs(f.omega[2]) < 1e-10);
        CHECK(std::abs(f.Y[0] + 0.7) < 1e-10);
    }
    SUBCASE("matches a dense weighted least-squares oracle; orthogonal complement ignored") {
        const auto s = make_grid(2, 1.0, 8);
        const ScalarField w = test::random_field(s, 4, 0.0, 1.0);
        VectorField u(s);
        u[0] = test::random_field(s, 5);
        u[1] = test::random_field(s, 6);
        const RigidState f = fit_rigid_motion(u, w);
        // oracle: rows sqrt(w) * [e_x, e_y, (-r_y, r_x)] in a QR solve
        Eigen::MatrixXd A(2 * s.size(), 3);
        Eigen::VectorXd b(2 * s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            const auto x = s.node(i);
            const double rx = s.periodic_delta(x[0], f.h[0]), ry = s.periodic_delta(x[1], f.h[1]);
            const double sw = std::sqrt(w[i]);
            A.row(2 * i) << sw, 0.0, -sw * ry;
            A.row(2 * i + 1) << 0.0, sw, sw * rx;
            b[2 * i] = sw * u[0][i];
            b[2 * i + 1] = sw * u[1][i];
        }
        const Eigen::Vector3d sol = A.colPivHouseholderQr().solve(b);
        CHECK(std::abs(sol[0] - f.Y[0]) < 1e-10);
        CHECK(std::abs(sol[1] - f.Y[1]) < 1e-10);
        CHECK(std::abs(sol[2] - f.omega[2]) < 1e-10);
        CHECK(f.residual >= 0.0);
        // u - rigid(f) is weighted-orthogonal to the family: adding it to a rigid field changes nothing
        const VectorField fit_field = rigid_velocity_field(f, s);
        const RigidState base = make_rigid(f.h, {0.3, -0.2, 0.0}, 1.1);
        VectorField v = rigid_velocity_field(base, s);
        for (int a = 0; a < 2; ++a)
            for (std::size_t i = 0; i < s.size(); ++i) v[a][i] += u[a][i] - fit_field[a][i];
        const RigidState f2 = fit_rigid_motion(v, w);
        CHECK(std::abs(f2.Y[0] - 0.3) < 1e-10);
        CHECK(std::abs(f2.Y[1] + 0.2) < 1e-10);
        CHECK(std::abs(f2.omega[2] - 1.1) < 1e-10);
        CHECK(f2.residual == doctest::Approx(f.residual).epsilon(1e-8));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(fit_rigid_motion(VectorField(g), ScalarField(g, 0.0)), std::domain_error);
        ScalarField point(g, 0.0);
        point[100] = 1.0;
        CHECK_THROWS_AS(fit_rigid_motion(VectorField(g), point), std::domain_error);
    }
    SUBCASE("3D rigid fit") {
        const auto g3 = make_grid(3, 1.0, 16);
        const ScalarField w3 = sample(g3, [](double x, double y, double z) {
            return smoothstep((0.5 - std::sqrt(x * x + y * y + z * z)) / 0.2);
        });
        RigidState r;
        r.Y = {0.1, -0.2, 0.3};
        r.omega = {0.5, -1.0, 2.0};
        r.Q = skew(r.omega);
        const RigidState f = fit_rigid_motion(rigid_velocity_field(r, g3), w3);
        for (int a = 0; a < 3; ++a) {
            CHECK(std::abs(f.Y[a] - r.Y[a]) < 1e-10);
            CHECK(std::abs(f.omega[a] - r.omega[a]) < 1e-10);
            for (int c = 0; c < 3; ++c) CHECK(std::abs(f.Q[a][c] + f.Q[c][a]) < 1e-12);
        }
        const Eigen::Matrix3d I = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(&f.inertia[0][0]);
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(I).eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("rigid_velocity_field") {
    const auto g = make_grid(2, 1.0, 32);
    Spectral sp(g);
    CHECK(max_abs_vec(rigid_velocity_field(RigidState{}, g)) == 0.0);
    const RigidState tr = make_rigid({0.1, 0.2, 0.0}, {0.5, -1.5, 0.0}, 0.0);
    for (const auto& c : sym_grad(sp, rigid_velocity_field(tr, g)).comp) CHECK(max_abs(c) < 1e-12);
    // with spin the field is affine away from the seam: central differences vanish there
    const RigidState rot = make_rigid({0.1, 0.2, 0.0}, {0.5, -1.5, 0.0}, 2.0);
    const VectorField v = rigid_velocity_field(rot, g);
    const double h = g.spacing();
    double worst = 0.0;
    for (int i = 8; i < 24; ++i)
        for (int j = 8; j < 24; ++j) {
            const double du_dx = (v[0][g.flat(i + 1, j)] - v[0][g.flat(i - 1, j)]) / (2 * h);
            const double dv_dy = (v[1][g.flat(i, j + 1)] - v[1][g.flat(i, j - 1)]) / (2 * h);
            const double du_dy = (v[0][g.flat(i, j + 1)] - v[0][g.flat(i, j - 1)]) / (2 * h);
            const double dv_dx = (v[1][g.flat(i + 1, j)] - v[1][g.flat(i - 1, j)]) / (2 * h);
            worst = std::max({worst, std::abs(du_dx), std::abs(dv_dy), std::abs(du_dy + dv_dx)});
        }
    CHECK(worst < 1e-12);
    // round trip on a disk weight
    const ScalarField w = sample(g, [](double x, double y, double) {
        return smoothstep((0.4 - std::hypot(x - 0.1, y - 0.2)) / 0.1);
    });
    const RigidState probe = fit_rigid_motion(VectorField(g), w);
    const RigidState r = make_rigid(probe.h, {0.5, -1.5, 0.0}, 2.0);
    const RigidState f = fit_rigid_motion(rigid_velocity_field(r, g), w);
    CHECK(std::abs(f.Y[0] - r.Y[0]) < 1e-10);
    CHECK(std::abs(f.Y[1] - r.Y[1]) < 1e-10);
    CHECK(std::abs(f.omega[2] - r.omega[2]) < 1e-10);
}

TEST_CASE("integrate_orientation") {
    SUBCASE("zero spin keeps O") {
        std::vector<RigidState> s(10);
        const Mat3 O0 = rotation_2d(0.3);
        for (const auto& O : integrate_orientation(s, 0.1, O0)) CHECK(O == O0);
    }
    SUBCASE("constant 2D spin: angle grows linearly") {
        std::vector<RigidState> s(1001, make_rigid({}, {}, 0.7));
        const auto Os = integrate_orientation(s, 1e-3, rotation_2d(0.2));
        const double angle = std::atan2(Os.back()[1][0], Os.back()[0][0]);
        CHECK(std::abs(angle - (0.2 + 0.7 * 1.0)) < 1e-12);
    }
    SUBCASE("constant 3D spin matches Rodrigues over 1e4 steps") {
        RigidState r;
        r.omega = {0.3, -0.4, 1.2};
        r.Q = skew(r.omega);
        const int n = 10000;
        const double dt = 1e-3;
        std::vector<RigidState> s(n + 1, r);
        const Mat3 O0 = rotation_axis_angle({0.1, 0.2, -0.3});
        const auto Os = integrate_orientation(s, dt, O0);
        const double T = n * dt;
        const Mat3 R = rotation_axis_angle({r.omega[0] * T, r.omega[1] * T, r.omega[2] * T});
        double err = 0.0, orth = 0.0;
        for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q) {
                double ref = 0.0, oo = 0.0;
                for (int k = 0; k < 3; ++k) {
                    ref += R[p][k] * O0[k][q];
                    oo += Os.back()[k][p] * Os.back()[k][q];
                }
                err = std::max(err, std::abs(Os.back()[p][q] - ref));
                orth = std::max(orth, std::abs(oo - (p == q ? 1.0 : 0.0)));
            }
        CHECK(err < 1e-8);
        CHECK(orth < 1e-8);
        const Eigen::Matrix3d O = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(&Os.back()[0][0]);
        CHECK(std::abs(O.determinant() - 1.0) < 1e-8);
    }
}

TEST_CASE("detect_contacts and merge_bodies") {
    const auto g = make_grid(2, 1.0, 128);
    const double h = g.spacing();
    const double thr = 3.0 * h;

    SUBCASE("far apart: no events") {
        const FluidState s = two_disk_state(g, 10.0 * thr);
        CHECK(detect_contacts(s, thr, nullptr).empty());
        CHECK_THROWS_AS(merge_bodies(s, 1, 2, thr), std::invalid_argument);
    }
    SUBCASE("overlapping supports: event with gap <= 0") {
        FluidState s = two_disk_state(g, 10.0 * thr);
        s.bodies[1].a = s.bodies[0].a;
        const auto ev = detect_contacts(s, thr, nullptr);
        REQUIRE(ev.size() == 1);
        CHECK(ev[0].gap <= 0.0);
    }
    SUBCASE("monotone in the threshold") {
        const FluidState s = two_disk_state(g, 4.0 * h);
        const auto small = detect_contacts(s, 2.0 * h, nullptr);
        const auto large = detect_contacts(s, 8.0 * h, nullptr);
        CHECK(large.size() >= small.size());
        CHECK(large.size() == 1);
        CHECK_THROWS_AS(detect_contacts(s, h, nullptr), std::invalid_argument);
    }
    SUBCASE("disk approaching the wall fires at the first sample below threshold") {
        DomainSpec dom;
        dom.shape.radius = 0.8;
        const ScalarField chi = build_chi(&dom, g, 0.1);
        std::vector<char> wall(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) wall[i] = chi[i] > 0.0;
        int first_event = -1, first_oracle = -1;
        for (int k = 0; k < 40; ++k) {
            const double cx = 0.3 + k * 0.5 * h;
            const BodySpec b = disk(1, 0.2, {cx, 0.0, 0.0});
            FluidState s;
            s.t = k;
            s.rho = ScalarField(g, 1.0);
            s.u = VectorField(g);
            s.bodies = build_markers({b}, 2.0 * h, g);
            const auto ev = detect_contacts(s, thr, &chi);
            if (first_event < 0 && !ev.empty()) {
                CHECK(ev[0].second == -1);
                first_event = k;
            }
            // brute force over all node pairs
            const auto sup = marker_support(s.bodies[0].a);
            double best = 1e300;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!sup[i]) continue;
                for (std::size_t j = 0; j < g.size(); ++j) {
                    if (!wall[j]) continue;
                    const auto x = g.node(i), y = g.node(j);
                    best = std::min(best, std::hypot(g.periodic_delta(x[0], y[0]), g.periodic_delta(x[1], y[1])));
                }
            }
            if (first_oracle < 0 && best - h <= thr) first_oracle = k;
            if (first_event >= 0 && first_oracle >= 0) break;
        }
        CHECK(first_event >= 0);
        CHECK(first_event == first_oracle);
    }
    SUBCASE("merge of touching disks") {
        const FluidState s = two_disk_state(g, 0.0);
        const double m1 = integral(s.bodies[0].a), m2 = integral(s.bodies[1].a);
        const FluidState m = merge_bodies(s, 1, 2, thr);
        REQUIRE(m.bodies.size() == 1);
        CHECK(std::abs(integral(m.bodies[0].a) - (m1 + m2)) <= 1e-8 * (m1 + m2));
        CHECK(m.bodies[0].members == std::vector<int>{1, 2});
        CHECK(m.bodies[0].id == 3);
        // both parts moving with one rigid field: that field is recovered
        FluidState mv = m;
        const RigidState probe = fit_rigid_motion(mv, 3);
        const RigidState r = make_rigid(probe.h, {0.2, 0.1, 0.0}, -0.5);
        mv.u = rigid_velocity_field(r, g);
        const RigidState f = fit_rigid_motion(mv, 3);
        CHECK(std::abs(f.Y[0] - 0.2) < 1e-10);
        CHECK(std::abs(f.Y[1] - 0.1) < 1e-10);
        CHECK(std::abs(f.omega[2] + 0.5) < 1e-10);
    }
}
