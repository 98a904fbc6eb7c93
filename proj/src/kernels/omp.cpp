// OpenMP kernels. Loop bodies match the serial reference; reductions keep its
// blocked order so results are identical for any thread count.

#include <algorithm>
#include <atomic>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "interp.hpp"
#include "penfsi/kernels.hpp"

namespace penfsi::kernels {

namespace {
std::atomic<Exec> g_exec{Exec::parallel};
}

Exec default_exec() { return g_exec.load(); }
void set_default_exec(Exec e) { g_exec.store(e); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

namespace omp {

namespace {

template <class F>
double blocked_sum(std::size_t n, F term) {
    const auto blocks = static_cast<std::ptrdiff_t>((n + kReduceBlock - 1) / kReduceBlock);
    std::vector<double> partial(static_cast<std::size_t>(blocks), 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < blocks; ++b) {
        const std::size_t begin = static_cast<std::size_t>(b) * kReduceBlock;
        const std::size_t end = std::min(n, begin + kReduceBlock);
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) s += term(i);
        partial[static_cast<std::size_t>(b)] = s;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

inline std::ptrdiff_t ssize(std::size_t n) { return static_cast<std::ptrdiff_t>(n); }

}  // namespace

double sum(std::span<const double> x) {
    return blocked_sum(x.size(), [&](std::size_t i) { return x[i]; });
}

double dot(std::span<const double> x, std::span<const double> y) {
    return blocked_sum(x.size(), [&](std::size_t i) { return x[i] * y[i]; });
}

double dot3(std::span<const double> w, std::span<const double> x, std::span<const double> y) {
    return blocked_sum(x.size(), [&](std::size_t i) { return w[i] * x[i] * y[i]; });
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < ssize(x.size()); ++i) y[i] += a * x[i];
}

void xpay(std::span<const double> x, double a, std::span<double> y) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < ssize(x.size()); ++i) y[i] = x[i] + a * y[i];
}

void multiply(std::span<const double> x, std::span<const double> y, std::span<double> out) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < ssize(x.size()); ++i) out[i] = x[i] * y[i];
}

std::array<double, 2> minmax(std::span<const double> x) {
    if (x.empty()) return {0.0, 0.0};
    double lo = x[0];
    double hi = x[0];
#pragma omp parallel for reduction(min : lo) reduction(max : hi) schedule(static)
    for (std::ptrdiff_t i = 0; i < ssize(x.size()); ++i) {
        lo = std::min(lo, x[i]);
        hi = std::max(hi, x[i]);
    }
    return {lo, hi};
}

void departure_points(const TorusGrid& g, const std::array<std::span<const double>, 3>& vel, double dt,
                      Departure& dep) {
    const std::size_t n = g.size();
    dep.dim = g.dim;
    dep.nodes = n;
    dep.index.resize(static_cast<std::size_t>(g.dim) * n);
    std::span<double> out(dep.index);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < ssize(n); ++i)
        detail::departure_node(g, vel, dt, static_cast<std::size_t>(i), out, n);
}

void interpolate_monotone(const TorusGrid& g, std::span<const double> f, const Departure& dep,
                          std::span<double> high, std::span<double> low) {
    const std::size_t n = dep.nodes;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < ssize(n); ++i) {
        const auto s = detail::interpolate_node(g, f, dep.index, static_cast<std::size_t>(i), n);
        high[i] = s.high;
        low[i] = s.low;
    }
}

}  // namespace omp
}  // namespace penfsi::kernels
