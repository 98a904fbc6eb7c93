#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <new>
#include <vector>

namespace penfsi {

/// Uniform periodic grid on [-L, L]^d with N nodes per axis.
///
/// Node j on any axis sits at x_j = -L + j*h, h = 2L/N. Index N wraps to 0.
/// Flat storage is row-major with axis 0 slowest.
struct TorusGrid {
    int dim = 2;
    double half_period = 1.0;
    int cells = 8;

    double spacing() const { return 2.0 * half_period / cells; }
    double period() const { return 2.0 * half_period; }
    std::size_t size() const;
    double cell_volume() const;
    double coord(int j) const { return -half_period + j * spacing(); }

    int wrap(int j) const {
        const int r = j % cells;
        return r < 0 ? r + cells : r;
    }

    std::size_t flat(int i0, int i1) const {
        return static_cast<std::size_t>(wrap(i0)) * cells + wrap(i1);
    }
    std::size_t flat(int i0, int i1, int i2) const {
        return (static_cast<std::size_t>(wrap(i0)) * cells + wrap(i1)) * cells + wrap(i2);
    }

    /// Decompose a flat index into per-axis indices (unused axes are 0).
    std::array<int, 3> unflatten(std::size_t idx) const;
    std::array<double, 3> node(std::size_t idx) const;

    /// Minimal-image displacement a - b along one axis.
    double periodic_delta(double a, double b) const;

    bool operator==(const TorusGrid& o) const {
        return dim == o.dim && half_period == o.half_period && cells == o.cells;
    }
    bool operator!=(const TorusGrid& o) const { return !(*this == o); }
};

/// Validates and builds a grid. Throws std::invalid_argument for d outside
/// {2,3}, N not a power of two or N < 8, or L <= 0.
TorusGrid make_grid(int dim, double half_period, int cells);

template <class T, std::size_t Align = 64>
struct AlignedAllocator {
    using value_type = T;
    template <class U>
    struct rebind {
        using other = AlignedAllocator<U, Align>;
    };
    AlignedAllocator() noexcept = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U, Align>&) noexcept {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t(Align)); }

    template <class U>
    bool operator==(const AlignedAllocator<U, Align>&) const noexcept { return true; }
    template <class U>
    bool operator!=(const AlignedAllocator<U, Align>&) const noexcept { return false; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

}  // namespace penfsi
