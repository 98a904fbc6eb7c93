#pragma once

#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "penfsi/field.hpp"

namespace penfsi {

using Complex = std::complex<double>;
using Spectrum = std::vector<Complex, AlignedAllocator<Complex>>;

/// FFT plans and wavenumber tables for one grid.
///
/// Real-to-complex layout: every axis but the last holds N modes, the last
/// holds N/2+1. First-derivative symbols are i*k with the Nyquist mode
/// zeroed, so derivatives of real fields stay real and div(grad) uses the
/// same |k|^2 as the Leray projector. Instances are safe to share between
/// threads once built.
class Spectral {
public:
    explicit Spectral(const TorusGrid& grid);
    ~Spectral();
    Spectral(const Spectral&) = delete;
    Spectral& operator=(const Spectral&) = delete;

    const TorusGrid& grid() const { return grid_; }
    std::size_t modes() const { return modes_; }

    void forward(std::span<const double> in, Spectrum& out) const;
    /// Inverse transform including the 1/N^d normalization. Does not modify `in`.
    void backward(const Spectrum& in, std::span<double> out) const;

    /// Derivative wavenumber of axis a at mode index m (Nyquist -> 0).
    double k(int axis, std::size_t mode) const { return k_[static_cast<std::size_t>(axis)][mode]; }
    /// Signed integer wavenumber of axis a at mode index m.
    int m(int axis, std::size_t mode) const { return m_[static_cast<std::size_t>(axis)][mode]; }
    double k2(std::size_t mode) const { return k2_[mode]; }
    /// True when every |m_a| <= N/3 (2/3-rule retained set).
    bool retained(std::size_t mode) const { return retained_[mode] != 0; }

private:
    TorusGrid grid_;
    std::size_t modes_ = 0;
    void* plan_r2c_ = nullptr;
    void* plan_c2r_ = nullptr;
    std::vector<std::vector<double>> k_;
    std::vector<std::vector<int>> m_;
    std::vector<double> k2_;
    std::vector<char> retained_;
};

/// Periodized Gaussian smoothing kernel of standard deviation delta.
///
/// The physical-space kernel is the sampled, image-summed Gaussian normalized
/// to unit discrete mass; its DFT is the symbol. That keeps the kernel
/// nonnegative (so mollification never enlarges the range) and the symbol
/// real, positive, and equal to 1 at mode 0. For delta >= 2h the symbol agrees
/// with exp(-delta^2 |k|^2 / 2) to rounding at resolved wavenumbers.
struct MollifierKernel {
    TorusGrid grid;
    double delta = 0.0;
    std::vector<double> symbol;  // per mode of the Spectral layout

    static MollifierKernel gaussian(const Spectral& sp, double delta);
};

ScalarField mollify(const Spectral& sp, const ScalarField& f, const MollifierKernel& kernel);
VectorField mollify(const Spectral& sp, const VectorField& v, const MollifierKernel& kernel);

VectorField gradient(const Spectral& sp, const ScalarField& f);
ScalarField divergence(const Spectral& sp, const VectorField& v);
/// Symmetric gradient (grad v + grad v^T) / 2.
TensorField sym_grad(const Spectral& sp, const VectorField& v);
/// (div T)_j = sum_i d_i T_ij
VectorField divergence(const Spectral& sp, const TensorField& t);
ScalarField laplacian(const Spectral& sp, const ScalarField& f);

/// Orthogonal projection onto discretely divergence-free fields.
VectorField leray_project(const Spectral& sp, const VectorField& v);

/// out = F^-1[symbol * F[in]] for a real per-mode symbol. `in` and `out` may alias.
void apply_multiplier(const Spectral& sp, std::span<const double> in, std::span<double> out,
                      std::span<const double> symbol);

/// Zero every mode outside the 2/3-rule retained set.
ScalarField dealias(const Spectral& sp, const ScalarField& f);

/// (w . grad) u, with w, grad u and the product all 2/3-rule truncated.
VectorField advection_term(const Spectral& sp, const VectorField& w, const VectorField& u);

/// Integral of |D v|^2 weighted by `weight` (pass nullptr for weight 1).
double weighted_strain_energy(const Spectral& sp, const VectorField& v, const ScalarField* weight);

}  // namespace penfsi
