#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>

namespace penfsi {

/// y = A x
using LinearOperator = std::function<void(std::span<const double> x, std::span<double> y)>;

struct SolveOptions {
    double tol = 1e-8;  // relative residual ||b - Ax|| / ||b||
    int max_iter = 5000;
    bool require_zero_mean = false;  // singular (Poisson-type) operators
};

struct SolveReport {
    int iterations = 0;
    double relative_residual = 0.0;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, int iterations, double residual)
        : std::runtime_error(what), iterations_(iterations), residual_(residual) {}
    int iterations() const { return iterations_; }
    double residual() const { return residual_; }

private:
    int iterations_;
    double residual_;
};

/// Preconditioned conjugate gradient for symmetric positive (semi)definite A.
///
/// `x` holds the initial guess on entry and the solution on exit. An empty
/// `precond` means identity. Throws std::invalid_argument for an incompatible
/// right-hand side and ConvergenceError when max_iter is exhausted.
SolveReport elliptic_solve(const LinearOperator& apply, std::span<const double> rhs, std::span<double> x,
                           const LinearOperator& precond, const SolveOptions& opts = {});

}  // namespace penfsi
