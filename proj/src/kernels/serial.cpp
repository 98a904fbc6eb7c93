// Reference kernels: straight loops, no threading.

#include <algorithm>
#include <vector>

#include "interp.hpp"
#include "penfsi/kernels.hpp"

namespace penfsi::kernels::serial {

namespace {

template <class F>
double blocked_sum(std::size_t n, F term) {
    const std::size_t blocks = (n + kReduceBlock - 1) / kReduceBlock;
    std::vector<double> partial(blocks, 0.0);
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t end = std::min(n, (b + 1) * kReduceBlock);
        double s = 0.0;
        for (std::size_t i = b * kReduceBlock; i < end; ++i) s += term(i);
        partial[b] = s;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

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
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void xpay(std::span<const double> x, double a, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + a * y[i];
}

void multiply(std::span<const double> x, std::span<const double> y, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
}

std::array<double, 2> minmax(std::span<const double> x) {
    double lo = x.empty() ? 0.0 : x[0];
    double hi = lo;
    for (double v : x) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

void departure_points(const TorusGrid& g, const std::array<std::span<const double>, 3>& vel, double dt,
                      Departure& dep) {
    const std::size_t n = g.size();
    dep.dim = g.dim;
    dep.nodes = n;
    dep.index.resize(static_cast<std::size_t>(g.dim) * n);
    for (std::size_t i = 0; i < n; ++i) detail::departure_node(g, vel, dt, i, dep.index, n);
}

void interpolate_monotone(const TorusGrid& g, std::span<const double> f, const Departure& dep,
                          std::span<double> high, std::span<double> low) {
    const std::size_t n = dep.nodes;
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = detail::interpolate_node(g, f, dep.index, i, n);
        high[i] = s.high;
        low[i] = s.low;
    }
}

}  // namespace penfsi::kernels::serial
