#pragma once

#include <vector>

#include "penfsi/field.hpp"

namespace penfsi {

/// Transported smoothed indicator of one body. Merged bodies keep the list of
/// original ids in `members`.
struct BodyMarker {
    int id = 0;
    double density = 1.0;
    ScalarField a;
    std::vector<int> members;
};

/// Solution of the penalized system at one time.
struct FluidState {
    double t = 0.0;
    long step = 0;
    ScalarField rho;
    VectorField u;
    ScalarField mu;
    ScalarField pressure;
    std::vector<BodyMarker> bodies;

    const TorusGrid& grid() const { return rho.grid; }
};

}  // namespace penfsi
