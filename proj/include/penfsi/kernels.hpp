#pragma once

#include <array>
#include <span>

#include "penfsi/grid.hpp"

// Data-parallel inner loops. Every kernel exists twice: a plain serial
// reference (namespace serial) and an OpenMP version (namespace omp). The
// unqualified entry points dispatch on an Exec tag.
//
// Reductions are blocked: the input is cut into fixed blocks of kReduceBlock
// elements, each block is summed left to right, and the block partials are
// then summed left to right. Both variants use this order, so results are
// bitwise identical across variants and thread counts.

namespace penfsi::kernels {

inline constexpr std::size_t kReduceBlock = 2048;

enum class Exec { serial, parallel };

Exec default_exec();
void set_default_exec(Exec e);
/// Number of OpenMP threads (1 when built without OpenMP).
int max_threads();
void set_threads(int n);

/// Departure points of a semi-Lagrangian step, in fractional index units.
/// Layout: dep[a * n + i] for axis a, node i.
struct Departure {
    std::vector<double> index;
    int dim = 0;
    std::size_t nodes = 0;
};

namespace serial {
double sum(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);
double dot3(std::span<const double> w, std::span<const double> x, std::span<const double> y);
void axpy(double a, std::span<const double> x, std::span<double> y);
void xpay(std::span<const double> x, double a, std::span<double> y);
void multiply(std::span<const double> x, std::span<const double> y, std::span<double> out);
std::array<double, 2> minmax(std::span<const double> x);
void departure_points(const TorusGrid& g, const std::array<std::span<const double>, 3>& vel, double dt,
                      Departure& dep);
void interpolate_monotone(const TorusGrid& g, std::span<const double> f, const Departure& dep,
                          std::span<double> high, std::span<double> low);
}  // namespace serial

namespace omp {
double sum(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);
double dot3(std::span<const double> w, std::span<const double> x, std::span<const double> y);
void axpy(double a, std::span<const double> x, std::span<double> y);
void xpay(std::span<const double> x, double a, std::span<double> y);
void multiply(std::span<const double> x, std::span<const double> y, std::span<double> out);
std::array<double, 2> minmax(std::span<const double> x);
void departure_points(const TorusGrid& g, const std::array<std::span<const double>, 3>& vel, double dt,
                      Departure& dep);
void interpolate_monotone(const TorusGrid& g, std::span<const double> f, const Departure& dep,
                          std::span<double> high, std::span<double> low);
}  // namespace omp

#define PENFSI_DISPATCH(name, ...) \
    return (e == Exec::parallel) ? omp::name(__VA_ARGS__) : serial::name(__VA_ARGS__)

inline double sum(std::span<const double> x, Exec e = default_exec()) { PENFSI_DISPATCH(sum, x); }
inline double dot(std::span<const double> x, std::span<const double> y, Exec e = default_exec()) {
    PENFSI_DISPATCH(dot, x, y);
}
/// sum_i w_i x_i y_i
inline double dot3(std::span<const double> w, std::span<const double> x, std::span<const double> y,
                   Exec e = default_exec()) {
    PENFSI_DISPATCH(dot3, w, x, y);
}
/// y += a x
inline void axpy(double a, std::span<const double> x, std::span<double> y, Exec e = default_exec()) {
    PENFSI_DISPATCH(axpy, a, x, y);
}
/// y = x + a y
inline void xpay(std::span<const double> x, double a, std::span<double> y, Exec e = default_exec()) {
    PENFSI_DISPATCH(xpay, x, a, y);
}
inline void multiply(std::span<const double> x, std::span<const double> y, std::span<double> out,
                     Exec e = default_exec()) {
    PENFSI_DISPATCH(multiply, x, y, out);
}
inline std::array<double, 2> minmax(std::span<const double> x, Exec e = default_exec()) {
    PENFSI_DISPATCH(minmax, x);
}
/// Midpoint-rule backtracking x_dep = x - dt * w(x - dt/2 * w(x)), with
/// cubic interpolation of w at the midpoint.
inline void departure_points(const TorusGrid& g, const std::array<std::span<const double>, 3>& vel,
                             double dt, Departure& dep, Exec e = default_exec()) {
    PENFSI_DISPATCH(departure_points, g, vel, dt, dep);
}
/// Tensor-product cubic Lagrange interpolation clipped to the range of the
/// 2^d enclosing nodes (high), and multilinear interpolation (low).
inline void interpolate_monotone(const TorusGrid& g, std::span<const double> f, const Departure& dep,
                                 std::span<double> high, std::span<double> low, Exec e = default_exec()) {
    PENFSI_DISPATCH(interpolate_monotone, g, f, dep, high, low);
}

#undef PENFSI_DISPATCH

}  // namespace penfsi::kernels
