#include "penfsi/rigidbody.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

namespace penfsi {

Mat3 skew(const Vec3& w) { return {{{0.0, -w[2], w[1]}, {w[2], 0.0, -w[0]}, {-w[1], w[0], 0.0}}}; }

namespace {

const BodyMarker& find_body(const FluidState& s, int id) {
    for (const auto& b : s.bodies)
        if (b.id == id) return b;
    throw std::invalid_argument("no body with id " + std::to_string(id));
}

// Periodic centroid: per axis, the argument of the weighted mean of
// exp(i 2 pi (x + L) / P).
Vec3 circular_centroid(const ScalarField& w, const TorusGrid& g) {
    Vec3 h{0.0, 0.0, 0.0};
    const double P = g.period();
    for (int a = 0; a < g.dim; ++a) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (w[i] == 0.0) continue;
            const double th = 2.0 * M_PI * (g.node(i)[a] + g.half_period) / P;
            acc += w[i] * std::polar(1.0, th);
        }
        double th = std::arg(acc);
        if (th < 0.0) th += 2.0 * M_PI;
        h[a] = th * P / (2.0 * M_PI) - g.half_period;
    }
    return h;
}

}  // namespace

RigidState fit_rigid_motion(const VectorField& u, const ScalarField& weight, int id, double t) {
    const TorusGrid& g = u.grid;
    const int d = g.dim;
    RigidState r;
    r.id = id;
    r.t = t;
    double mass = 0.0;
    for (double w : weight.values) mass += w;
    if (!(mass > 0.0)) throw std::domain_error("fit_rigid_motion: marker mass vanished for body " + std::to_string(id));
    r.mass = mass * g.cell_volume();
    r.h = circular_centroid(weight, g);

    // Unknowns: Y (d), then omega (1 in 2D, 3 in 3D). Basis of the rigid
    // family at displacement x: e_a for Y, omega x r for the spin.
    const int nw = d == 2 ? 1 : 3;
    const int nu = d + nw;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nu, nu);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nu);
    Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();
    std::vector<double> phi(static_cast<std::size_t>(nu * d));
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double w = weight[i];
        if (w == 0.0) continue;
        const auto x = g.node(i);
        Eigen::Vector3d rr(0.0, 0.0, 0.0);
        for (int a = 0; a < d; ++a) rr[a] = g.periodic_delta(x[a], r.h[a]);
        inertia += w * (rr.squaredNorm() * Eigen::Matrix3d::Identity() - rr * rr.transpose());
        // phi[k * d + a]: component a of basis field k at this node
        std::fill(phi.begin(), phi.end(), 0.0);
        for (int a = 0; a < d; ++a) phi[static_cast<std::size_t>(a * d + a)] = 1.0;
        if (d == 2) {
            phi[static_cast<std::size_t>(2 * d + 0)] = -rr[1];
            phi[static_cast<std::size_t>(2 * d + 1)] = rr[0];
        } else {
            for (int c = 0; c < 3; ++c) {
                Eigen::Vector3d e = Eigen::Vector3d::Zero();
                e[c] = 1.0;
                const Eigen::Vector3d v = e.cross(rr);
                for (int a = 0; a < 3; ++a) phi[static_cast<std::size_t>((3 + c) * d + a)] = v[a];
            }
        }
        for (int p = 0; p < nu; ++p) {
            double bp = 0.0;
            for (int a = 0; a < d; ++a) bp += phi[static_cast<std::size_t>(p * d + a)] * u[a][i];
            b[p] += w * bp;
            for (int q = p; q < nu; ++q) {
                double apq = 0.0;
                for (int a = 0; a < d; ++a)
                    apq += phi[static_cast<std::size_t>(p * d + a)] * phi[static_cast<std::size_t>(q * d + a)];
                A(p, q) += w * apq;
            }
        }
    }
    for (int p = 0; p < nu; ++p)
        for (int q = 0; q < p; ++q) A(p, q) = A(q, p);

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
    const double lmax = eig.eigenvalues().maxCoeff();
    if (!(eig.eigenvalues().minCoeff() > 1e-12 * lmax))
        throw std::domain_error("fit_rigid_motion: singular inertia for body " + std::to_string(id));
    const Eigen::VectorXd sol = A.ldlt().solve(b);

    for (int a = 0; a < d; ++a) r.Y[a] = sol[a];
    if (d == 2)
        r.omega = {0.0, 0.0, sol[2]};
    else
        r.omega = {sol[3], sol[4], sol[5]};
    r.Q = skew(r.omega);
    const double cv = g.cell_volume();
    for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) r.inertia[p][q] = inertia(p, q) * cv;

    double res = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double w = weight[i];
        if (w == 0.0) continue;
        const auto x = g.node(i);
        Vec3 rr{0.0, 0.0, 0.0};
        for (int a = 0; a < d; ++a) rr[a] = g.periodic_delta(x[a], r.h[a]);
        for (int a = 0; a < d; ++a) {
            double v = r.Y[a];
            for (int c = 0; c < d; ++c) v += r.Q[a][c] * rr[c];
            const double e = u[a][i] - v;
            res += w * e * e;
        }
    }
    r.residual = res * cv;
    return r;
}

RigidState fit_rigid_motion(const FluidState& s, int body_id) {
    const BodyMarker& b = find_body(s, body_id);
    ScalarField w(s.grid());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = b.a[i] * s.rho[i];
    return fit_rigid_motion(s.u, w, body_id, s.t);
}

std::vector<Mat3> integrate_orientation(const std::vector<RigidState>& series, double dt, const Mat3& initial) {
    std::vector<Mat3> out;
    if (series.empty()) return out;
    out.reserve(series.size());
    const bool planar = series.front().omega[0] == 0.0 && series.front().omega[1] == 0.0 &&
                        initial[0][2] == 0.0 && initial[1][2] == 0.0 && initial[2][2] == 1.0;
    bool all_planar = planar;
    for (const auto& r : series) all_planar = all_planar && r.omega[0] == 0.0 && r.omega[1] == 0.0;
    if (all_planar) {
        // Exact exponential in the plane: accumulate the angle.
        double angle = std::atan2(initial[1][0], initial[0][0]);
        out.push_back(initial);
        for (std::size_t k = 0; k + 1 < series.size(); ++k) {
            angle += series[k].omega[2] * dt;
            out.push_back(rotation_2d(angle));
        }
        return out;
    }
    Eigen::Matrix3d O;
    for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) O(p, q) = initial[p][q];
    auto push = [&] {
        Mat3 m;
        for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q) m[p][q] = O(p, q);
        out.push_back(m);
    };
    push();
    for (std::size_t k = 0; k + 1 < series.size(); ++k) {
        const Vec3& w = series[k].omega;
        const Mat3 R = rotation_axis_angle({w[0] * dt, w[1] * dt, w[2] * dt});
        Eigen::Matrix3d Re;
        for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q) Re(p, q) = R[p][q];
        O = Re * O;
        // Polar re-orthonormalization: nearest rotation.
        const Eigen::JacobiSVD<Eigen::Matrix3d> svd(O, Eigen::ComputeFullU | Eigen::ComputeFullV);
        O = svd.matrixU() * svd.matrixV().transpose();
        push();
    }
    return out;
}

VectorField rigid_velocity_field(const RigidState& r, const TorusGrid& g) {
    VectorField v(g);
    const int d = g.dim;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto x = g.node(i);
        Vec3 rr{0.0, 0.0, 0.0};
        for (int a = 0; a < d; ++a) rr[a] = g.periodic_delta(x[a], r.h[a]);
        for (int a = 0; a < d; ++a) {
            double val = r.Y[a];
            for (int c = 0; c < d; ++c) val += r.Q[a][c] * rr[c];
            v[a][i] = val;
        }
    }
    return v;
}

std::vector<char> marker_support(const ScalarField& a) {
    std::vector<char> s(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) s[i] = a[i] >= 0.5 ? 1 : 0;
    return s;
}

namespace {

// Nodes of the set with at least one axis neighbour outside it.
std::vector<std::size_t> boundary_nodes(const std::vector<char>& in, const TorusGrid& g) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!in[i]) continue;
        const auto ij = g.unflatten(i);
        bool edge = false;
        for (int a = 0; a < g.dim && !edge; ++a)
            for (int s : {-1, 1}) {
                auto nb = ij;
                nb[a] += s;
                const std::size_t k = g.dim == 2 ? g.flat(nb[0], nb[1]) : g.flat(nb[0], nb[1], nb[2]);
                if (!in[k]) {
                    edge = true;
                    break;
                }
            }
        if (edge) out.push_back(i);
    }
    return out;
}

}  // namespace

double support_gap(const std::vector<char>& a, const std::vector<char>& b, const TorusGrid& g) {
    const double h = g.spacing();
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] && b[i]) return -h;
    const auto ba = boundary_nodes(a, g);
    const auto bb = boundary_nodes(b, g);
    if (ba.empty() || bb.empty()) return std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i : ba) {
        const auto x = g.node(i);
        for (std::size_t j : bb) {
            const auto y = g.node(j);
            double d2 = 0.0;
            for (int c = 0; c < g.dim; ++c) {
                const double dd = g.periodic_delta(x[c], y[c]);
                d2 += dd * dd;
            }
            best = std::min(best, d2);
        }
    }
    return std::sqrt(best) - h;
}

std::vector<ContactEvent> detect_contacts(const FluidState& s, double threshold, const ScalarField* chi) {
    const TorusGrid& g = s.grid();
    if (!(threshold >= 2.0 * g.spacing() * (1.0 - 1e-12)))
        throw std::invalid_argument("detect_contacts: threshold must be at least 2h");
    std::vector<std::vector<char>> sup;
    for (const auto& b : s.bodies) sup.push_back(marker_support(b.a));
    std::vector<ContactEvent> ev;
    for (std::size_t i = 0; i < sup.size(); ++i)
        for (std::size_t j = i + 1; j < sup.size(); ++j) {
            const double gap = support_gap(sup[i], sup[j], g);
            if (gap <= threshold) ev.push_back({s.t, s.bodies[i].id, s.bodies[j].id, gap});
        }
    if (chi) {
        std::vector<char> wall(g.size());
        bool any = false;
        for (std::size_t i = 0; i < g.size(); ++i) {
            wall[i] = (*chi)[i] > 0.0 ? 1 : 0;
            any = any || wall[i];
        }
        if (any)
            for (std::size_t i = 0; i < sup.size(); ++i) {
                const double gap = support_gap(sup[i], wall, g);
                if (gap <= threshold) ev.push_back({s.t, s.bodies[i].id, -1, gap});
            }
    }
    return ev;
}

FluidState merge_bodies(const FluidState& s, int i, int j, double threshold) {
    if (i == j) throw std::invalid_argument("merge_bodies: cannot merge a body with itself");
    const BodyMarker& bi = find_body(s, i);
    const BodyMarker& bj = find_body(s, j);
    const double gap = support_gap(marker_support(bi.a), marker_support(bj.a), s.grid());
    if (gap > threshold)
        throw std::invalid_argument("merge_bodies: bodies " + std::to_string(i) + " and " + std::to_string(j) +
                                    " are not in contact (gap " + std::to_string(gap) + ")");
    BodyMarker m;
    int next_id = 0;
    for (const auto& b : s.bodies) {
        next_id = std::max(next_id, b.id);
        for (int id : b.members) next_id = std::max(next_id, id);
    }
    m.id = next_id + 1;
    m.a = bi.a;
    for (std::size_t k = 0; k < m.a.size(); ++k) m.a[k] = std::max(bi.a[k], bj.a[k]);
    const double vi = integral(bi.a), vj = integral(bj.a);
    m.density = (bi.density * vi + bj.density * vj) / (vi + vj);
    m.members = bi.members;
    m.members.insert(m.members.end(), bj.members.begin(), bj.members.end());
    std::sort(m.members.begin(), m.members.end());

    FluidState out = s;
    out.bodies.clear();
    for (const auto& b : s.bodies)
        if (b.id != i && b.id != j) out.bodies.push_back(b);
    out.bodies.push_back(std::move(m));
    return out;
}

double rigidity_deficit(const Spectral& sp, const VectorField& u, const ScalarField& a) {
    return weighted_strain_energy(sp, u, &a);
}

}  // namespace penfsi
