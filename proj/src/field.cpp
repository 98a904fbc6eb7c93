#include "penfsi/field.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "penfsi/kernels.hpp"

namespace penfsi {

double integral(const ScalarField& f) { return kernels::sum(f.span()) * f.grid.cell_volume(); }

double max_abs(const ScalarField& f) {
    const auto mm = kernels::minmax(f.span());
    return std::max(std::abs(mm[0]), std::abs(mm[1]));
}

double min_value(const ScalarField& f) { return kernels::minmax(f.span())[0]; }
double max_value(const ScalarField& f) { return kernels::minmax(f.span())[1]; }

bool all_finite(const ScalarField& f) {
    for (double v : f.values)
        if (!std::isfinite(v)) return false;
    return true;
}

bool all_finite(const VectorField& v) {
    for (const auto& c : v.comp)
        if (!all_finite(c)) return false;
    return true;
}

ScalarField norm_squared(const VectorField& v) {
    ScalarField out(v.grid);
    for (const auto& c : v.comp)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i] * c[i];
    return out;
}

ScalarField frobenius_squared(const TensorField& t) {
    ScalarField out(t.grid);
    for (const auto& c : t.comp)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i] * c[i];
    return out;
}

std::vector<double> pack(const VectorField& v) {
    const std::size_t n = v.grid.size();
    std::vector<double> flat(n * v.comp.size());
    for (std::size_t a = 0; a < v.comp.size(); ++a)
        std::copy(v.comp[a].values.begin(), v.comp[a].values.end(), flat.begin() + static_cast<std::ptrdiff_t>(a * n));
    return flat;
}

void unpack(std::span<const double> flat, VectorField& v) {
    const std::size_t n = v.grid.size();
    if (flat.size() != n * v.comp.size()) throw std::invalid_argument("unpack: size mismatch");
    for (std::size_t a = 0; a < v.comp.size(); ++a)
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(a * n),
                  flat.begin() + static_cast<std::ptrdiff_t>((a + 1) * n), v.comp[a].values.begin());
}

void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

}  // namespace penfsi
