#include "penfsi/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace penfsi {

std::size_t TorusGrid::size() const {
    std::size_t n = 1;
    for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(cells);
    return n;
}

double TorusGrid::cell_volume() const { return std::pow(spacing(), dim); }

std::array<int, 3> TorusGrid::unflatten(std::size_t idx) const {
    std::array<int, 3> ij{0, 0, 0};
    const auto n = static_cast<std::size_t>(cells);
    for (int a = dim - 1; a >= 0; --a) {
        ij[a] = static_cast<int>(idx % n);
        idx /= n;
    }
    return ij;
}

std::array<double, 3> TorusGrid::node(std::size_t idx) const {
    const auto ij = unflatten(idx);
    std::array<double, 3> x{0.0, 0.0, 0.0};
    for (int a = 0; a < dim; ++a) x[a] = coord(ij[a]);
    return x;
}

double TorusGrid::periodic_delta(double a, double b) const {
    const double p = period();
    double d = std::fmod(a - b, p);
    if (d >= half_period) d -= p;
    if (d < -half_period) d += p;
    return d;
}

TorusGrid make_grid(int dim, double half_period, int cells) {
    if (dim != 2 && dim != 3)
        throw std::invalid_argument("grid dimension must be 2 or 3, got " + std::to_string(dim));
    if (!(half_period > 0.0) || !std::isfinite(half_period))
        throw std::invalid_argument("grid half-period must be positive");
    if (cells < 8 || (cells & (cells - 1)) != 0)
        throw std::invalid_argument("cells per axis must be a power of two >= 8, got " +
                                    std::to_string(cells));
    return TorusGrid{dim, half_period, cells};
}

}  // namespace penfsi
