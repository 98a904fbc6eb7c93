#pragma once

#include <span>
#include <vector>

#include "penfsi/grid.hpp"

namespace penfsi {

/// Nodal values of a scalar quantity on a torus grid.
struct ScalarField {
    TorusGrid grid;
    Buffer values;

    ScalarField() = default;
    explicit ScalarField(const TorusGrid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
    std::span<double> span() { return {values.data(), values.size()}; }
    std::span<const double> span() const { return {values.data(), values.size()}; }
};

/// d components, each a ScalarField on the same grid.
struct VectorField {
    TorusGrid grid;
    std::vector<ScalarField> comp;

    VectorField() = default;
    explicit VectorField(const TorusGrid& g, double fill = 0.0)
        : grid(g), comp(static_cast<std::size_t>(g.dim), ScalarField(g, fill)) {}

    int dim() const { return grid.dim; }
    ScalarField& operator[](int a) { return comp[static_cast<std::size_t>(a)]; }
    const ScalarField& operator[](int a) const { return comp[static_cast<std::size_t>(a)]; }
};

/// d x d components stored row-major: comp[i*d + j] = T_ij.
struct TensorField {
    TorusGrid grid;
    std::vector<ScalarField> comp;

    TensorField() = default;
    explicit TensorField(const TorusGrid& g, double fill = 0.0)
        : grid(g), comp(static_cast<std::size_t>(g.dim * g.dim), ScalarField(g, fill)) {}

    int dim() const { return grid.dim; }
    ScalarField& operator()(int i, int j) { return comp[static_cast<std::size_t>(i * grid.dim + j)]; }
    const ScalarField& operator()(int i, int j) const {
        return comp[static_cast<std::size_t>(i * grid.dim + j)];
    }
};

/// Grid quadrature (sum times cell volume). Deterministic blocked reduction.
double integral(const ScalarField& f);
double max_abs(const ScalarField& f);
double min_value(const ScalarField& f);
double max_value(const ScalarField& f);
bool all_finite(const ScalarField& f);
bool all_finite(const VectorField& v);

/// Pointwise |v|^2.
ScalarField norm_squared(const VectorField& v);
/// Sum over components of T_ij^2.
ScalarField frobenius_squared(const TensorField& t);

/// Flatten / unflatten a vector field into one contiguous span (component-major).
std::vector<double> pack(const VectorField& v);
void unpack(std::span<const double> flat, VectorField& v);

void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* what);

}  // namespace penfsi
