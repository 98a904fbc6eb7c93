#include "penfsi/elliptic.hpp"

#include <cmath>
#include <vector>

#include "penfsi/kernels.hpp"

namespace penfsi {

SolveReport elliptic_solve(const LinearOperator& apply, std::span<const double> rhs, std::span<double> x,
                           const LinearOperator& precond, const SolveOptions& opts) {
    namespace k = kernels;
    const std::size_t n = rhs.size();
    if (x.size() != n) throw std::invalid_argument("elliptic_solve: size mismatch");

    const double bnorm = std::sqrt(k::dot(rhs, rhs));
    if (opts.require_zero_mean) {
        const double mean = k::sum(rhs) / static_cast<double>(n);
        if (std::abs(mean) > 1e-10 * (bnorm / std::sqrt(static_cast<double>(n)) + 1e-300))
            throw std::invalid_argument("elliptic_solve: right-hand side has nonzero mean (" +
                                        std::to_string(mean) + ")");
    }
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        return {0, 0.0};
    }

    std::vector<double> r(n), z(n), p(n), q(n);
    apply(x, q);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - q[i];
    auto precondition = [&](std::span<const double> in, std::span<double> out) {
        if (precond)
            precond(in, out);
        else
            std::copy(in.begin(), in.end(), out.begin());
    };

    double rnorm = std::sqrt(k::dot(r, r));
    if (rnorm <= opts.tol * bnorm) return {0, rnorm / bnorm};

    precondition(r, z);
    p = z;
    double rz = k::dot(r, z);
    for (int it = 1; it <= opts.max_iter; ++it) {
        apply(p, q);
        const double pq = k::dot(p, q);
        if (!(pq > 0.0)) {
            if (rnorm <= opts.tol * bnorm) return {it - 1, rnorm / bnorm};
            throw ConvergenceError("elliptic_solve: operator not positive on search direction", it,
                                   rnorm / bnorm);
        }
        const double alpha = rz / pq;
        k::axpy(alpha, p, x);
        k::axpy(-alpha, q, r);
        rnorm = std::sqrt(k::dot(r, r));
        if (!std::isfinite(rnorm)) throw ConvergenceError("elliptic_solve: non-finite residual", it, rnorm);
        if (rnorm <= opts.tol * bnorm) return {it, rnorm / bnorm};
        precondition(r, z);
        const double rz_new = k::dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        k::xpay(z, beta, p);
    }
    throw ConvergenceError("elliptic_solve: no convergence in " + std::to_string(opts.max_iter) +
                               " iterations, relative residual " + std::to_string(rnorm / bnorm),
                           opts.max_iter, rnorm / bnorm);
}

}  // namespace penfsi
