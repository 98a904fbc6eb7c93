#pragma once

#include <memory>
#include <optional>
#include <stdexcept>

#include "penfsi/config.hpp"
#include "penfsi/kernels.hpp"
#include "penfsi/spectral.hpp"
#include "penfsi/state.hpp"

namespace penfsi {

/// Non-finite values or a trajectory CFL violation. The run driver maps this
/// (and elliptic ConvergenceError) to a numerical abort.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StepParams {
    DtPolicy policy = DtPolicy::fixed;
    double dt = 1e-3;
    double cfl = 0.5;
    double dt_max = 1e-2;
    double viscous_tol = 1e-8;
    double pressure_tol = 1e-8;
    int max_iter = 20000;
    bool mass_fix = true;
    double rho_floor = 0.5;
    /// Largest allowed displacement of a departure point, in cells.
    double max_courant = 2.0;
};

/// Everything about a run that does not change in time.
struct Problem {
    TorusGrid grid;
    std::shared_ptr<const Spectral> sp;
    MollifierKernel kernel;
    double epsilon = 1.0;
    ScalarField chi;         // 0 on the domain, (0, 1] outside
    ScalarField omega_mask;  // 1 on domain nodes, 0 elsewhere
    VectorField g;           // body force per unit mass
    std::optional<ScalarField> G;  // potential with g = grad G, when configured
    StepParams params;

    const Spectral& spectral() const { return *sp; }
};

/// Problem of a configured run.
Problem make_problem(const Config& c);
/// Bare periodic problem: no domain, no forcing.
Problem make_problem(const TorusGrid& grid, double delta, double epsilon);

struct AdvectReport {
    double mass_before = 0.0;
    double mass_after = 0.0;
    /// Relative mass change of the interpolated field before the fixer.
    double drift = 0.0;
};

/// Departure points for transport by w over dt (midpoint rule).
kernels::Departure trace_back(const VectorField& w, double dt, double max_courant = 2.0);

/// Semi-Lagrangian transport: clipped tricubic interpolation at the departure
/// points, followed (when mass_fix) by a range-respecting mass correction.
ScalarField advect(const ScalarField& f, const kernels::Departure& dep, bool mass_fix = true,
                   AdvectReport* report = nullptr);
ScalarField advect(const ScalarField& f, const VectorField& w, double dt, bool mass_fix = true,
                   AdvectReport* report = nullptr);

struct StepReport {
    double dt = 0.0;
    int viscous_iterations = 0;
    int pressure_iterations = 0;
    double viscous_residual = 0.0;
    double pressure_residual = 0.0;
    double rho_drift = 0.0;     // before the mass fixer
    double marker_drift = 0.0;  // worst over markers, before the fixer
    double mu_min = 0.0;
    double mu_delta_min = 0.0;  // min of [mu]_delta used in the stress
    long rho_floor_hits = 0;
    double max_divergence = 0.0;
};

/// Viscous, penalty and forcing update from u^n to the intermediate u*,
/// given the transported density and viscosity and the advecting field w.
/// (rho/dt) v - div([mu]_d D v) = (rho/dt)(u - dt (w.grad)u + dt g), then
/// u* = v / (1 + dt chi / (eps rho)).
VectorField momentum_update(const Problem& pb, const VectorField& u, const VectorField& w, const ScalarField& rho,
                            const ScalarField& mu, double dt, StepReport* report = nullptr);

struct Projection {
    VectorField u;
    ScalarField pressure;
};

/// Variable-density projection: -div(b grad(phi)) = -div(u*)/dt,
/// u = u* - dt b grad(phi), pressure = phi, with b = f/rho and
/// f = 1/(1 + dt chi_eps/rho) the implicit penalty factor of
/// momentum_update (f = 1 wherever chi = 0). Without the factor the
/// correction would put back an O(dt) velocity outside the domain that the
/// penalty just removed. `guess` seeds the solver.
Projection pressure_project(const Problem& pb, const VectorField& ustar, const ScalarField& rho, double dt,
                            const ScalarField* guess = nullptr, StepReport* report = nullptr);

/// One full step of the penalized system.
FluidState step(const Problem& pb, const FluidState& s, double dt, StepReport* report = nullptr);

/// CFL-limited step (fixed policy: the configured dt), capped by dt_max.
double stable_dt(const Problem& pb, const FluidState& s);

}  // namespace penfsi
