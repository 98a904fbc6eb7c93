#pragma once

#include <string>
#include <vector>

#include "penfsi/config.hpp"
#include "penfsi/spectral.hpp"
#include "penfsi/state.hpp"

namespace penfsi {

/// Quintic smoothstep on [0,1]: C2, monotone, 0 below and 1 above.
double smoothstep(double s);

/// Exterior penalty profile: 0 on nodes of the closed domain, then
/// smoothstep(dist / width)^2 outside, reaching 1 at distance `width`.
/// Without a domain the profile is identically 0.
ScalarField build_chi(const DomainSpec* domain, const TorusGrid& grid, double width);

/// Layer weight of one body: 0 outside, smoothstep(depth / delta) inside.
ScalarField body_layer(const BodySpec& body, double delta, const TorusGrid& grid);

/// 1 in the fluid, rho_S at depth >= delta in body i, monotone blend between.
ScalarField build_initial_density(const std::vector<BodySpec>& bodies, double delta, const TorusGrid& grid);
/// Same layering with levels 1 (fluid) and 1/epsilon (solid).
ScalarField build_initial_viscosity(const std::vector<BodySpec>& bodies, double delta, double epsilon,
                                    const TorusGrid& grid);
std::vector<BodyMarker> build_markers(const std::vector<BodySpec>& bodies, double delta, const TorusGrid& grid);

/// Fluid velocity datum before masking and projection.
VectorField build_fluid_datum(const Spectral& sp, const FluidSpec& fluid, unsigned long long seed);

/// Piecewise initial field: 0 outside the domain, the fluid datum in the
/// fluid, Y + Q(x - h) on each body, blended across the delta layers.
VectorField assemble_initial_velocity(const VectorField& fluid, const std::vector<BodySpec>& bodies, double delta,
                                      const DomainSpec* domain);

struct ProjectionReport {
    double max_divergence = 0.0;
    double exterior_fraction = 0.0;  // share of the L2 norm squared outside the domain
};

/// C-infinity step on [0,1].
double smooth_cutoff(double s);
/// smooth_cutoff(depth / width) inside the domain, 0 on and outside its boundary.
ScalarField domain_cutoff(const DomainSpec& domain, const TorusGrid& grid, double width);

/// Divergence-free projection confined to the domain. The Leray projection
/// of v is rewritten as the curl of a stream function (vector potential in
/// 3D), which is multiplied by domain_cutoff before taking the curl again.
/// The result is solenoidal to rounding, equals the Leray projection at
/// depth >= width, and vanishes outside the domain up to the spectral tail of
/// the cutoff. Without a domain this is leray_project.
VectorField project_in_domain(const Spectral& sp, const VectorField& v, const DomainSpec* domain, double width,
                              ProjectionReport* report = nullptr);

/// Assembles and projects the initial velocity. Appends a message to
/// `warnings` when the fluid datum is not divergence-free inside the domain.
VectorField build_initial_velocity(const Spectral& sp, const VectorField& fluid, const std::vector<BodySpec>& bodies,
                                   double delta, const DomainSpec* domain, double cutoff_width,
                                   std::vector<std::string>* warnings = nullptr);

/// Cutoff width used for the initial velocity: 12 cells, at most half the
/// domain's inradius.
double initial_cutoff_width(const Config& c);

/// Complete initial state of a configured run.
FluidState build_initial_state(const Config& c, const Spectral& sp, std::vector<std::string>* warnings = nullptr);

/// Node mask of the closed domain (all ones without a domain).
ScalarField domain_mask(const DomainSpec* domain, const TorusGrid& grid);

}  // namespace penfsi
