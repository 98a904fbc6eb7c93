#pragma once

#include <vector>

#include "penfsi/shapes.hpp"
#include "penfsi/spectral.hpp"
#include "penfsi/state.hpp"

namespace penfsi {

/// Rigid motion fitted to one body. In 2D the angular velocity is omega[2]
/// and Q = [[0, -w], [w, 0]].
struct RigidState {
    int id = 0;
    double t = 0.0;
    Vec3 h{0.0, 0.0, 0.0};      // weighted centroid
    Vec3 Y{0.0, 0.0, 0.0};      // translational velocity
    Vec3 omega{0.0, 0.0, 0.0};  // angular velocity vector
    Mat3 Q{};                   // skew matrix of omega
    Mat3 O = identity3();       // orientation (not fitted; see integrate_orientation)
    double mass = 0.0;          // integral of a rho
    Mat3 inertia{};             // integral of a rho (|r|^2 I - r r^T)
    double residual = 0.0;      // integral of a rho |u - (Y + Q r)|^2
};

Mat3 skew(const Vec3& w);

/// Weighted least-squares projection of u onto Y + Q(x - h), weights a rho.
/// Throws std::domain_error for a vanished marker or singular inertia.
RigidState fit_rigid_motion(const FluidState& s, int body_id);
RigidState fit_rigid_motion(const VectorField& u, const ScalarField& weight, int id = 0, double t = 0.0);

/// Orientation trajectory: O_0 = initial, O_{k+1} = exp(dt Q_k) O_k,
/// re-orthonormalized. Returns one matrix per series entry; entry k carries
/// the orientation at the time of sample k.
std::vector<Mat3> integrate_orientation(const std::vector<RigidState>& series, double dt, const Mat3& initial);

/// Y + Q(x - h) with the minimal-image displacement.
VectorField rigid_velocity_field(const RigidState& r, const TorusGrid& grid);

struct ContactEvent {
    double t = 0.0;
    int first = 0;
    int second = -1;  // -1: wall (the set chi > 0)
    double gap = 0.0;
};

/// Gap between two node sets: minimal node distance minus h (so adjacent
/// sets have gap 0), or -h when they share a node.
double support_gap(const std::vector<char>& a, const std::vector<char>& b, const TorusGrid& grid);
/// Nodes with marker >= 1/2.
std::vector<char> marker_support(const ScalarField& a);

/// Contacts between body supports and between each body and the exterior
/// set chi > 0 (pass nullptr to skip walls). threshold >= 2h.
std::vector<ContactEvent> detect_contacts(const FluidState& s, double threshold, const ScalarField* chi);

/// Replace bodies i and j by one body whose marker is the pointwise max.
/// The merged body gets a fresh id; members lists the original ids. Refuses
/// (std::invalid_argument) unless the supports are within `threshold`.
FluidState merge_bodies(const FluidState& s, int i, int j, double threshold);

/// Integral of a |D u|^2 for one marker.
double rigidity_deficit(const Spectral& sp, const VectorField& u, const ScalarField& a);

}  // namespace penfsi
