#pragma once

#include <optional>
#include <string>
#include <vector>

#include "penfsi/solver.hpp"
#include "penfsi/state.hpp"

namespace penfsi {

// ---------------------------------------------------------------- ledger

/// Energy integrals at one sample time. EGRAV is NaN when no potential is
/// configured. rhoG = integral of rho G (0 without potential); work_delta is
/// the work done by the transporting velocity [u]_delta, which is what the
/// discrete continuity equation sees.
struct LedgerRow {
    double t = 0.0;
    double KE = 0.0;
    double DISS = 0.0;
    double PEN = 0.0;
    double WORK = 0.0;
    double EGRAV = 0.0;
    double leakage = 0.0;
    double rhoG = 0.0;
    double work_delta = 0.0;
    double mu_min = 0.0;
    double mu_delta_min = 0.0;
};

struct EnergyLedger {
    bool has_potential = false;
    std::vector<LedgerRow> rows;
};

LedgerRow ledger_row(const Problem& pb, const FluidState& s);
/// Throws std::invalid_argument for samples with missing fields.
EnergyLedger energy_ledger(const Problem& pb, const std::vector<FluidState>& samples);

/// Fixed column order: t, KE, DISS, PEN, WORK, EGRAV, leakage, then the
/// auxiliary columns rhoG, work_delta, mu_min, mu_delta_min.
std::string ledger_csv_header();
std::string ledger_csv_row(const LedgerRow& r);
/// Parses energy.csv text; malformed rows raise std::runtime_error naming
/// the (1-based) line.
EnergyLedger parse_ledger_csv(const std::string& text);

// ------------------------------------------------------- time profiles

/// psi(t) = max(0, 1 - ((t - c)/w)^2)^2: C^1, nonnegative, support [c-w, c+w].
struct TimeBump {
    double center = 0.0;
    double width = 1.0;
    double operator()(double t) const;
    double derivative(double t) const;
    /// Exact integral over [a, b].
    double integral(double a, double b) const;
};

/// Basket used by the energy and weak-residual checks: one profile centred
/// at 0 of width 0.999 T, then for widths T/2, T/4, T/8, T/16, centres from 0
/// in steps of width/2 while the support ends before T.
std::vector<TimeBump> psi_basket(double horizon);

// ---------------------------------------------------- energy inequality

enum class InequalityForm { differential, integrated };

struct InequalityReport {
    InequalityForm form = InequalityForm::differential;
    double tol = 0.0;
    /// min over tests of rhs - lhs (>= -tol passes).
    double worst_margin = 0.0;
    bool passed = true;
    /// Description of the worst test ("psi c=.. w=.." or "tau=..").
    std::string worst;
    std::vector<double> margins;
};

/// Differential form: -int psi' KE + int psi (DISS + PEN) <= psi(0) KE(0) +
/// int psi WORK over the psi basket. Integrated form: KE(tau) + int_0^tau
/// (DISS + PEN) <= KE(0) + int_0^tau WORK at every sample. Terms with psi'
/// are summed by parts against the exact interval means of psi (so they
/// telescope for constant data); DISS, PEN and WORK are taken at the right
/// end of each interval, matching the implicit step. The trapezoidal rule
/// misattributes the dissipation of a stiff initial transient.
InequalityReport check_energy_inequality(const EnergyLedger& ledger, InequalityForm form, double tol);

/// Per-step discrete balance r_n = KE_{n+1} - KE_n + dt (DISS + PEN - WORK)_{n+1}.
struct StepBalance {
    std::vector<double> residual;
    double max_residual = 0.0;
    /// max(r_n, 0) / dt^2 over the steps.
    double C = 0.0;
};
StepBalance step_balance(const EnergyLedger& ledger);

// -------------------------------------------------------------- decay

struct DecayFit {
    double t1 = 0.0;
    double t2 = 0.0;
    double rate = 0.0;       // fitted Lambda
    double amplitude = 0.0;  // value = amplitude * exp(-rate t)
    double residual = 0.0;   // rms of the log residuals
    /// residual over the range of log values in the window.
    double relative_residual = 0.0;
    std::size_t points = 0;
    bool window_shrunk = false;
    std::optional<double> rate_ref;  // 2 C_KP / rho_bar
    /// Sample-wise value(t) <= value(t_first) exp(-rate_ref (t - t_first)).
    std::optional<bool> envelope_holds;
    std::size_t envelope_violations = 0;
};

/// Least-squares line through log(value) on samples with t in [t1, t2].
/// Nonpositive values cut the window short (reported). Throws
/// std::invalid_argument with fewer than two usable samples.
DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& value, double t1, double t2,
                   std::optional<double> c_kp = std::nullopt, double rho_bar = 1.0);

struct EnvelopeReport {
    double rate = 0.0;
    /// max over t in the window of |Y(t)| exp(rate (t - t1)) / |Y(t1)|.
    double constant = 0.0;
    bool passed = false;
};

/// Checks |Y(t)| <= C |Y(t1)| exp(-rate (t - t1)) on [t1, t2] with C <= max_constant.
EnvelopeReport velocity_envelope(const std::vector<double>& t, const std::vector<double>& speed, double rate,
                                 double t1, double t2, double max_constant = 10.0);

// ------------------------------------------------------------ gravity

struct GravityReport {
    /// Largest one-step increase of EGRAV, and the same over dt.
    double egrav_max_increase = 0.0;
    bool egrav_monotone = true;
    double E_inf = 0.0;  // tail (last quarter) average of int rho G
    /// |mean(third quarter) - mean(last quarter)| / |mean(last quarter)| of int rho G.
    double quarter_change = 0.0;
    /// max over tau of |rhoG(tau) - rhoG(0) - int_0^tau W| with W the work of
    /// u (raw) or of the transporting velocity [u]_delta.
    double identity_residual_raw = 0.0;
    double identity_residual = 0.0;
    double ke_final = 0.0;
    double ke_peak = 0.0;
    double dissipation_total = 0.0;  // int DISS dt
};

/// EGRAV monotonicity (tolerance tol_rate * dt per step), E_inf, the
/// continuity identity and the kinetic-energy tail. Throws
/// std::invalid_argument without a potential.
GravityReport gravity_report(const EnergyLedger& ledger, double tol_rate);

// ------------------------------------------------------ weak residuals

/// Scalar spatial test function cos(pi/L m.x + phase); m = 0, phase = 0 is 1.
struct MassTest {
    std::array<int, 3> m{0, 0, 0};
    double phase = 0.0;
};
std::vector<MassTest> mass_basket(int dim);

struct WeakResidual {
    std::string label;
    double raw = 0.0;        // with u in the flux
    double mollified = 0.0;  // with the transporting velocity [u]_delta
    double scale = 0.0;      // sum of the magnitudes of the terms
};

/// Per-sample integrals for the continuity residual, accumulated while a
/// trajectory is produced.
class MassResidualRecorder {
public:
    MassResidualRecorder(const Problem& pb, std::vector<MassTest> tests);
    void observe(const FluidState& s);
    /// residual(phi psi) = int psi' int rho phi + int psi int rho u.grad phi + psi(0) int rho_0 phi.
    std::vector<WeakResidual> residuals(const std::vector<TimeBump>& psis) const;
    std::size_t samples() const { return t_.size(); }

private:
    const Problem* pb_;
    std::vector<MassTest> tests_;
    std::vector<ScalarField> phi_;
    std::vector<VectorField> grad_phi_;
    std::vector<double> t_;
    std::vector<std::vector<double>> m_, flux_, flux_delta_;  // [test][sample]
};

/// Divergence-free test field phi = curl s (2D) with
/// s(x) = c(|x - h|) (k0 + Y_x y' - Y_y x' - omega |x'|^2 / 2), x' = x - h,
/// c = 1 on r <= r1 and 0 for r >= r2 (C-infinity in between). Inside r1,
/// phi = Y + omega J x' is rigid. The centre h is fixed, or follows the
/// centroid of body `body` (body >= 0).
struct MomentumTest {
    std::string label;
    int body = -1;
    Vec3 center{0.0, 0.0, 0.0};
    double r1 = 0.0;
    double r2 = 1.0;
    double k0 = 0.0;
    Vec3 Y{0.0, 0.0, 0.0};
    double omega = 0.0;
};

/// Closed-form phi and grad phi (grad[i][j] = d_i phi_j) at x for centre h.
struct TestFieldValue {
    double phi[2];
    double grad[2][2];
};
TestFieldValue evaluate_test_field(const MomentumTest& t, const TorusGrid& g, const std::array<double, 3>& x,
                                   const Vec3& h);

class MomentumResidualRecorder {
public:
    /// Throws std::invalid_argument in 3D or when r2 - r1 < 2h.
    MomentumResidualRecorder(const Problem& pb, std::vector<MomentumTest> tests);
    void observe(const FluidState& s);
    /// Residual of the momentum identity for phi psi:
    /// int [rho u.d_t(psi phi) + psi rho u (x) v : grad phi - psi [mu]_d D u : D phi
    ///      - psi chi_eps u.phi + psi rho g.phi] + psi(0) int rho_0 u_0.phi
    /// with v = u (raw) or [u]_delta.
    std::vector<WeakResidual> residuals(const std::vector<TimeBump>& psis) const;
    /// Samples at which a test's rigid zone did not cover its body or its
    /// support met the exterior or another body, per test.
    const std::vector<std::size_t>& inadmissible_samples() const { return bad_; }

private:
    const Problem* pb_;
    std::vector<MomentumTest> tests_;
    std::vector<double> t_;
    std::vector<std::vector<Vec3>> centre_;  // [test][sample]
    // per test and sample: A = int rho u.phi, B_a = int rho u_b d_a phi_b,
    // C = int rho u (x) u : grad phi, Cd with [u]_d, S = int [mu]_d Du:Dphi,
    // P = int chi_eps u.phi, F = int rho g.phi
    std::vector<std::vector<double>> A_, Bx_, By_, C_, Cd_, S_, P_, F_;
    std::vector<std::size_t> bad_;
};

/// Tests used by the checker: a fluid-only bump at `fluid_center`, and one
/// translating and one spinning field attached to each body.
std::vector<MomentumTest> momentum_basket(const FluidState& s0, const Problem& pb, double r1, double r2,
                                          const Vec3& fluid_center, double fluid_radius);

// ------------------------------------------------------- Korn-Poincare

struct KornPoincareEstimate {
    double value = 0.0;
    int iterations = 0;
    int cg_iterations = 0;
    double residual = 0.0;  // ||A x - value x|| / (value ||x||)
    bool mean_included = false;
};

/// Smallest quotient (int |D u|^2 + (1/eps_kp) int chi |u|^2) / int |u|^2 over
/// discretely divergence-free fields by inverse iteration. Modes with a
/// vanishing derivative symbol are excluded, except the mean, which is part
/// of the space iff chi is nonzero somewhere. Throws ConvergenceError
/// when max_iter inverse steps do not reach the relative tolerance.
KornPoincareEstimate estimate_korn_poincare(const Spectral& sp, const ScalarField& chi, double eps_kp = 1e-6,
                                            double tol = 1e-10, int max_iter = 500, unsigned seed = 1);
/// Convenience: chi from a domain (nullptr: whole torus).
KornPoincareEstimate estimate_korn_poincare(const Spectral& sp, const DomainSpec* domain, double chi_width,
                                            double eps_kp = 1e-6, double tol = 1e-10);

}  // namespace penfsi
