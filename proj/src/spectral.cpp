#include "penfsi/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>

namespace penfsi {

namespace {

// FFTW's planner is not re-entrant; execution with the new-array API is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

inline fftw_complex* as_fftw(Complex* p) { return reinterpret_cast<fftw_complex*>(p); }
inline const fftw_complex* as_fftw(const Complex* p) { return reinterpret_cast<const fftw_complex*>(p); }

}  // namespace

Spectral::Spectral(const TorusGrid& grid) : grid_(grid) {
    const int d = grid.dim;
    const int n = grid.cells;
    const int nlast = n / 2 + 1;
    modes_ = static_cast<std::size_t>(nlast);
    for (int a = 0; a < d - 1; ++a) modes_ *= static_cast<std::size_t>(n);

    std::array<int, 3> dims{n, n, n};
    Buffer real(grid.size());
    Spectrum cplx(modes_);
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        plan_r2c_ = fftw_plan_dft_r2c(d, dims.data(), real.data(), as_fftw(cplx.data()), FFTW_ESTIMATE);
        plan_c2r_ = fftw_plan_dft_c2r(d, dims.data(), as_fftw(cplx.data()), real.data(),
                                      FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
    }
    if (!plan_r2c_ || !plan_c2r_) throw std::runtime_error("FFTW plan creation failed");

    const double k0 = M_PI / grid.half_period;
    k_.assign(static_cast<std::size_t>(d), std::vector<double>(modes_));
    m_.assign(static_cast<std::size_t>(d), std::vector<int>(modes_));
    k2_.assign(modes_, 0.0);
    retained_.assign(modes_, 1);
    const int cutoff = n / 3;
    for (std::size_t idx = 0; idx < modes_; ++idx) {
        std::size_t rest = idx;
        std::array<int, 3> ii{0, 0, 0};
        ii[d - 1] = static_cast<int>(rest % static_cast<std::size_t>(nlast));
        rest /= static_cast<std::size_t>(nlast);
        for (int a = d - 2; a >= 0; --a) {
            ii[a] = static_cast<int>(rest % static_cast<std::size_t>(n));
            rest /= static_cast<std::size_t>(n);
        }
        for (int a = 0; a < d; ++a) {
            int m = ii[a];
            if (a < d - 1 && m >= n / 2) m -= n;
            m_[a][idx] = m;
            const double k = (std::abs(m) == n / 2) ? 0.0 : k0 * m;
            k_[a][idx] = k;
            k2_[idx] += k * k;
            if (std::abs(m) > cutoff) retained_[idx] = 0;
        }
    }
}

Spectral::~Spectral() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (plan_r2c_) fftw_destroy_plan(static_cast<fftw_plan>(plan_r2c_));
    if (plan_c2r_) fftw_destroy_plan(static_cast<fftw_plan>(plan_c2r_));
}

void Spectral::forward(std::span<const double> in, Spectrum& out) const {
    if (in.size() != grid_.size()) throw std::invalid_argument("forward: size mismatch");
    out.resize(modes_);
    // r2c does not modify its input with the default flags.
    fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_r2c_), const_cast<double*>(in.data()),
                         as_fftw(out.data()));
}

void Spectral::backward(const Spectrum& in, std::span<double> out) const {
    if (out.size() != grid_.size()) throw std::invalid_argument("backward: size mismatch");
    Spectrum tmp(in);
    Buffer res(grid_.size());
    fftw_execute_dft_c2r(static_cast<fftw_plan>(plan_c2r_), as_fftw(tmp.data()), res.data());
    const double norm = 1.0 / static_cast<double>(grid_.size());
    for (std::size_t i = 0; i < res.size(); ++i) out[i] = res[i] * norm;
}

MollifierKernel MollifierKernel::gaussian(const Spectral& sp, double delta) {
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw std::invalid_argument("mollifier radius must be >= 0");
    const TorusGrid& g = sp.grid();
    const int n = g.cells;
    const double h = g.spacing();
    std::vector<double> sym1(static_cast<std::size_t>(n / 2 + 1), 1.0);
    if (delta > 0.0) {
        // DFT of the sampled, periodized Gaussian, written as its alias sum
        // (Poisson summation) so every entry is a sum of positive terms.
        const double kmax = 2.0 * M_PI / h;
        const int aliases = 3;
        auto alias_sum = [&](double k) {
            double s = 0.0;
            for (int p = -aliases; p <= aliases; ++p) {
                const double kk = k + p * kmax;
                s += std::exp(-0.5 * delta * delta * kk * kk);
            }
            return s;
        };
        const double norm = alias_sum(0.0);
        for (int m = 0; m <= n / 2; ++m) {
            const double v = alias_sum(m * M_PI / g.half_period) / norm;
            sym1[static_cast<std::size_t>(m)] = std::max(v, std::numeric_limits<double>::min());
        }
        sym1[0] = 1.0;
    }
    MollifierKernel k;
    k.grid = g;
    k.delta = delta;
    k.symbol.assign(sp.modes(), 1.0);
    for (std::size_t idx = 0; idx < sp.modes(); ++idx) {
        double s = 1.0;
        for (int a = 0; a < g.dim; ++a) s *= sym1[static_cast<std::size_t>(std::abs(sp.m(a, idx)))];
        k.symbol[idx] = s;
    }
    return k;
}

ScalarField mollify(const Spectral& sp, const ScalarField& f, const MollifierKernel& kernel) {
    require_same_grid(f.grid, kernel.grid, "mollify");
    require_same_grid(f.grid, sp.grid(), "mollify");
    if (kernel.delta == 0.0) return f;
    Spectrum s;
    sp.forward(f.span(), s);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= kernel.symbol[i];
    ScalarField out(f.grid);
    sp.backward(s, out.span());
    return out;
}

VectorField mollify(const Spectral& sp, const VectorField& v, const MollifierKernel& kernel) {
    VectorField out(v.grid);
    for (int a = 0; a < v.dim(); ++a) out[a] = mollify(sp, v[a], kernel);
    return out;
}

VectorField gradient(const Spectral& sp, const ScalarField& f) {
    require_same_grid(f.grid, sp.grid(), "gradient");
    Spectrum s, t;
    sp.forward(f.span(), s);
    VectorField out(f.grid);
    t.resize(s.size());
    for (int a = 0; a < f.grid.dim; ++a) {
        for (std::size_t i = 0; i < s.size(); ++i) t[i] = Complex(0.0, sp.k(a, i)) * s[i];
        sp.backward(t, out[a].span());
    }
    return out;
}

ScalarField divergence(const Spectral& sp, const VectorField& v) {
    require_same_grid(v.grid, sp.grid(), "divergence");
    Spectrum s, acc(sp.modes(), Complex(0.0, 0.0));
    for (int a = 0; a < v.dim(); ++a) {
        sp.forward(v[a].span(), s);
        for (std::size_t i = 0; i < s.size(); ++i) acc[i] += Complex(0.0, sp.k(a, i)) * s[i];
    }
    ScalarField out(v.grid);
    sp.backward(acc, out.span());
    return out;
}

TensorField sym_grad(const Spectral& sp, const VectorField& v) {
    require_same_grid(v.grid, sp.grid(), "sym_grad");
    const int d = v.dim();
    std::vector<Spectrum> vh(static_cast<std::size_t>(d));
    for (int a = 0; a < d; ++a) sp.forward(v[a].span(), vh[static_cast<std::size_t>(a)]);
    TensorField out(v.grid);
    Spectrum t(sp.modes());
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            const auto& ui = vh[static_cast<std::size_t>(i)];
            const auto& uj = vh[static_cast<std::size_t>(j)];
            for (std::size_t m = 0; m < t.size(); ++m)
                t[m] = Complex(0.0, 0.5) * (sp.k(i, m) * uj[m] + sp.k(j, m) * ui[m]);
            sp.backward(t, out(i, j).span());
            if (j != i) out(j, i) = out(i, j);
        }
    return out;
}

VectorField divergence(const Spectral& sp, const TensorField& t) {
    require_same_grid(t.grid, sp.grid(), "divergence");
    const int d = t.dim();
    std::vector<Spectrum> acc(static_cast<std::size_t>(d), Spectrum(sp.modes(), Complex(0.0, 0.0)));
    Spectrum s;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            sp.forward(t(i, j).span(), s);
            auto& a = acc[static_cast<std::size_t>(j)];
            for (std::size_t m = 0; m < s.size(); ++m) a[m] += Complex(0.0, sp.k(i, m)) * s[m];
        }
    VectorField out(t.grid);
    for (int j = 0; j < d; ++j) sp.backward(acc[static_cast<std::size_t>(j)], out[j].span());
    return out;
}

ScalarField laplacian(const Spectral& sp, const ScalarField& f) {
    Spectrum s;
    sp.forward(f.span(), s);
    for (std::size_t m = 0; m < s.size(); ++m) s[m] *= -sp.k2(m);
    ScalarField out(f.grid);
    sp.backward(s, out.span());
    return out;
}

VectorField leray_project(const Spectral& sp, const VectorField& v) {
    require_same_grid(v.grid, sp.grid(), "leray_project");
    const int d = v.dim();
    std::vector<Spectrum> vh(static_cast<std::size_t>(d));
    for (int a = 0; a < d; ++a) sp.forward(v[a].span(), vh[static_cast<std::size_t>(a)]);
    for (std::size_t m = 0; m < sp.modes(); ++m) {
        const double k2 = sp.k2(m);
        if (k2 == 0.0) continue;
        Complex kdotv(0.0, 0.0);
        for (int a = 0; a < d; ++a) kdotv += sp.k(a, m) * vh[static_cast<std::size_t>(a)][m];
        for (int a = 0; a < d; ++a) vh[static_cast<std::size_t>(a)][m] -= sp.k(a, m) * kdotv / k2;
    }
    VectorField out(v.grid);
    for (int a = 0; a < d; ++a) sp.backward(vh[static_cast<std::size_t>(a)], out[a].span());
    return out;
}

void apply_multiplier(const Spectral& sp, std::span<const double> in, std::span<double> out,
                      std::span<const double> symbol) {
    Spectrum s;
    sp.forward(in, s);
    for (std::size_t m = 0; m < s.size(); ++m) s[m] *= symbol[m];
    sp.backward(s, out);
}

ScalarField dealias(const Spectral& sp, const ScalarField& f) {
    Spectrum s;
    sp.forward(f.span(), s);
    for (std::size_t m = 0; m < s.size(); ++m)
        if (!sp.retained(m)) s[m] = 0.0;
    ScalarField out(f.grid);
    sp.backward(s, out.span());
    return out;
}

VectorField advection_term(const Spectral& sp, const VectorField& w, const VectorField& u) {
    require_same_grid(w.grid, u.grid, "advection_term");
    const int d = u.dim();
    VectorField wf(w.grid);
    for (int a = 0; a < d; ++a) wf[a] = dealias(sp, w[a]);
    VectorField out(u.grid);
    Spectrum s, t(sp.modes());
    ScalarField deriv(u.grid);
    for (int j = 0; j < d; ++j) {
        sp.forward(u[j].span(), s);
        ScalarField prod(u.grid);
        for (int i = 0; i < d; ++i) {
            for (std::size_t m = 0; m < s.size(); ++m)
                t[m] = sp.retained(m) ? Complex(0.0, sp.k(i, m)) * s[m] : Complex(0.0, 0.0);
            sp.backward(t, deriv.span());
            for (std::size_t p = 0; p < prod.size(); ++p) prod[p] += wf[i][p] * deriv[p];
        }
        out[j] = dealias(sp, prod);
    }
    return out;
}

double weighted_strain_energy(const Spectral& sp, const VectorField& v, const ScalarField* weight) {
    const TensorField dv = sym_grad(sp, v);
    const ScalarField f2 = frobenius_squared(dv);
    if (!weight) return integral(f2);
    ScalarField wf(f2.grid);
    for (std::size_t i = 0; i < wf.size(); ++i) wf[i] = (*weight)[i] * f2[i];
    return integral(wf);
}

}  // namespace penfsi
