#pragma once

// Per-node interpolation math shared by the serial and OpenMP kernels.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>

#include "penfsi/grid.hpp"

namespace penfsi::kernels::detail {

struct Stencil1D {
    int base;                 // floor of the fractional index
    double t;                 // offset in [0, 1)
    std::array<double, 4> w;  // cubic weights at base-1 .. base+2
};

inline Stencil1D stencil(double s) {
    Stencil1D st;
    const double fl = std::floor(s);
    st.base = static_cast<int>(fl);
    const double t = s - fl;
    st.t = t;
    st.w[0] = -t * (t - 1.0) * (t - 2.0) / 6.0;
    st.w[1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    st.w[2] = -(t + 1.0) * t * (t - 2.0) / 2.0;
    st.w[3] = (t + 1.0) * t * (t - 1.0) / 6.0;
    return st;
}

struct Sample {
    double high;
    double low;
};

inline Sample sample2(const TorusGrid& g, std::span<const double> f, double s0, double s1,
                      bool clip) {
    const Stencil1D a = stencil(s0);
    const Stencil1D b = stencil(s1);
    const int n = g.cells;
    std::array<int, 4> ia, ib;
    for (int k = 0; k < 4; ++k) {
        ia[k] = g.wrap(a.base - 1 + k) * n;
        ib[k] = g.wrap(b.base - 1 + k);
    }
    double cubic = 0.0;
    for (int p = 0; p < 4; ++p) {
        double row = 0.0;
        for (int q = 0; q < 4; ++q) row += b.w[q] * f[ia[p] + ib[q]];
        cubic += a.w[p] * row;
    }
    const double f00 = f[ia[1] + ib[1]], f01 = f[ia[1] + ib[2]];
    const double f10 = f[ia[2] + ib[1]], f11 = f[ia[2] + ib[2]];
    const double low = (1.0 - a.t) * ((1.0 - b.t) * f00 + b.t * f01) + a.t * ((1.0 - b.t) * f10 + b.t * f11);
    if (clip) {
        const double lo = std::min({f00, f01, f10, f11});
        const double hi = std::max({f00, f01, f10, f11});
        cubic = std::clamp(cubic, lo, hi);
    }
    return {cubic, low};
}

inline Sample sample3(const TorusGrid& g, std::span<const double> f, double s0, double s1, double s2,
                      bool clip) {
    const Stencil1D a = stencil(s0);
    const Stencil1D b = stencil(s1);
    const Stencil1D c = stencil(s2);
    const std::size_t n = static_cast<std::size_t>(g.cells);
    std::array<std::size_t, 4> ia, ib, ic;
    for (int k = 0; k < 4; ++k) {
        ia[k] = static_cast<std::size_t>(g.wrap(a.base - 1 + k)) * n * n;
        ib[k] = static_cast<std::size_t>(g.wrap(b.base - 1 + k)) * n;
        ic[k] = static_cast<std::size_t>(g.wrap(c.base - 1 + k));
    }
    double cubic = 0.0;
    for (int p = 0; p < 4; ++p) {
        double plane = 0.0;
        for (int q = 0; q < 4; ++q) {
            double row = 0.0;
            for (int r = 0; r < 4; ++r) row += c.w[r] * f[ia[p] + ib[q] + ic[r]];
            plane += b.w[q] * row;
        }
        cubic += a.w[p] * plane;
    }
    double low = 0.0;
    double lo = f[ia[1] + ib[1] + ic[1]];
    double hi = lo;
    for (int p = 1; p <= 2; ++p)
        for (int q = 1; q <= 2; ++q)
            for (int r = 1; r <= 2; ++r) {
                const double v = f[ia[p] + ib[q] + ic[r]];
                const double wa = p == 1 ? 1.0 - a.t : a.t;
                const double wb = q == 1 ? 1.0 - b.t : b.t;
                const double wc = r == 1 ? 1.0 - c.t : c.t;
                low += wa * wb * wc * v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    if (clip) cubic = std::clamp(cubic, lo, hi);
    return {cubic, low};
}

inline void departure_node(const TorusGrid& g, const std::array<std::span<const double>, 3>& vel,
                           double dt, std::size_t i, std::span<double> dep, std::size_t n) {
    const auto ij = g.unflatten(i);
    const double scale = dt / g.spacing();
    std::array<double, 3> mid{0.0, 0.0, 0.0};
    for (int a = 0; a < g.dim; ++a) mid[a] = ij[a] - 0.5 * scale * vel[a][i];
    for (int a = 0; a < g.dim; ++a) {
        const double wm = g.dim == 2 ? sample2(g, vel[a], mid[0], mid[1], false).high
                                     : sample3(g, vel[a], mid[0], mid[1], mid[2], false).high;
        dep[a * n + i] = ij[a] - scale * wm;
    }
}

inline Sample interpolate_node(const TorusGrid& g, std::span<const double> f, std::span<const double> dep,
                               std::size_t i, std::size_t n) {
    return g.dim == 2 ? sample2(g, f, dep[i], dep[n + i], true)
                      : sample3(g, f, dep[i], dep[n + i], dep[2 * n + i], true);
}

}  // namespace penfsi::kernels::detail
