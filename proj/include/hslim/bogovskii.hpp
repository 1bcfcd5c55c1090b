#pragma once

// Discrete Bogovskii operator on no-slip boxes: a linear right inverse of the
// divergence with zero boundary trace, realized as the minimizer of the
// gradient energy subject to div B = f (a Stokes-type saddle problem). The
// velocity solves use fast sine-transform diagonalization; the pressure-like
// multiplier is found by conjugate gradient on the Schur complement, which is
// well conditioned uniformly in the resolution.

#include <array>
#include <cmath>
#include <vector>

#include <fftw3.h>

#include "hslim/errors.hpp"
#include "hslim/grid.hpp"
#include "hslim/ops.hpp"

namespace hslim::fields {

struct BogovskiiResult {
    VectorField field;       // B(f), zero on all boundary faces
    double div_residual_l2;  // ||div B - f||_L2 (discrete)
    double norm_ratio;       // ||B||_{W^{1,p}} / ||f||_{L^p}
    double p;                // norm pair used for the report
};

namespace detail {

/// Fast solver for the component-wise MAC Laplacian with Dirichlet conditions:
/// zero values on the own-axis boundary faces, mirror ghosts across the
/// tangential walls. Solves -lap(u) = rhs.
class DirichletComponentSolver {
public:
    DirichletComponentSolver(const GridSpec& g, int comp) : g_(g), comp_(comp) {
        nx_ = g.face_cells(comp, 0);
        ny_ = g.dim > 1 ? g.face_cells(comp, 1) : 1;
        if (comp == 0) nx_ -= 2; // interior faces only
        if (comp == 1) ny_ -= 2;
        n_ = static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_);
        buf_ = fftw_alloc_real(n_);
        eig_x_.resize(nx_);
        eig_y_.resize(ny_);
        const double hx = g.h(0);
        // owned axis: sine-I modes on interior nodes; tangential axis: shifted
        // sine-II modes matching the mirror ghosts
        for (int i = 0; i < nx_; ++i) {
            const int m = i + 1;
            const double th = M_PI * m / static_cast<double>(g.cells[0]);
            eig_x_[i] = (2.0 * std::cos(th) - 2.0) / (hx * hx);
        }
        if (g.dim > 1) {
            const double hy = g.h(1);
            for (int j = 0; j < ny_; ++j) {
                const int m = j + 1;
                const double th = M_PI * m / static_cast<double>(g.cells[1]);
                eig_y_[j] = (2.0 * std::cos(th) - 2.0) / (hy * hy);
            }
        } else {
            eig_y_.assign(1, 0.0);
        }

        const fftw_r2r_kind fw_x = comp_ == 0 ? FFTW_RODFT00 : FFTW_RODFT10;
        const fftw_r2r_kind bw_x = comp_ == 0 ? FFTW_RODFT00 : FFTW_RODFT01;
        norm_x_ = comp_ == 0 ? 2.0 * (nx_ + 1) : 2.0 * nx_;
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        if (g.dim == 1) {
            fwd_ = fftw_plan_r2r_1d(nx_, buf_, buf_, fw_x, FFTW_ESTIMATE);
            bwd_ = fftw_plan_r2r_1d(nx_, buf_, buf_, bw_x, FFTW_ESTIMATE);
            norm_ = norm_x_;
        } else {
            const fftw_r2r_kind fw_y = comp_ == 1 ? FFTW_RODFT00 : FFTW_RODFT10;
            const fftw_r2r_kind bw_y = comp_ == 1 ? FFTW_RODFT00 : FFTW_RODFT01;
            const double norm_y = comp_ == 1 ? 2.0 * (ny_ + 1) : 2.0 * ny_;
            fwd_ = fftw_plan_r2r_2d(ny_, nx_, buf_, buf_, fw_y, fw_x, FFTW_ESTIMATE);
            bwd_ = fftw_plan_r2r_2d(ny_, nx_, buf_, buf_, bw_y, bw_x, FFTW_ESTIMATE);
            norm_ = norm_x_ * norm_y;
        }
        if (!fwd_ || !bwd_) throw SolverError("fftw r2r plan creation failed");
    }

    ~DirichletComponentSolver() {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(buf_);
    }

    DirichletComponentSolver(const DirichletComponentSolver&) = delete;
    DirichletComponentSolver& operator=(const DirichletComponentSolver&) = delete;

    int nx() const { return nx_; }
    int ny() const { return ny_; }

    /// rhs and out are (nx x ny) interior-face arrays, x fastest.
    void solve(const std::vector<double>& rhs, std::vector<double>& out) const {
        std::copy(rhs.begin(), rhs.end(), buf_);
        fftw_execute(fwd_);
        for (int j = 0; j < ny_; ++j)
            for (int i = 0; i < nx_; ++i) {
                const double lam = -(eig_x_[i] + eig_y_[j]);
                buf_[static_cast<std::size_t>(i) + static_cast<std::size_t>(nx_) * j] /=
                    lam * norm_;
            }
        fftw_execute(bwd_);
        out.assign(buf_, buf_ + n_);
    }

private:
    GridSpec g_;
    int comp_, nx_, ny_;
    std::size_t n_;
    double* buf_;
    fftw_plan fwd_ = nullptr, bwd_ = nullptr;
    std::vector<double> eig_x_, eig_y_;
    double norm_ = 1.0, norm_x_ = 1.0;
};

} // namespace detail

/// Bogovskii solve in one dimension: the cumulative integral is the unique
/// zero-trace right inverse of d/dx.
inline BogovskiiResult bogovskii_1d(const ScalarField& f, double p) {
    const auto& g = f.grid;
    VectorField B(g);
    const double h = g.h(0);
    const double m0 = mean(f);
    double acc = 0.0;
    for (int i = 0; i < g.cells[0]; ++i) {
        B.at(0, i) = acc;
        acc += h * (f.at(i) - m0);
    }
    B.at(0, g.cells[0]) = acc; // = 0 up to roundoff
    B.at(0, g.cells[0]) = 0.0;
    ScalarField r = div_noslip(B) - f;
    double gradnorm = 0.0;
    for (int i = 0; i < g.cells[0]; ++i)
        gradnorm += std::pow(std::abs(f.at(i) - m0), p) * h;
    double bnorm = 0.0;
    for (int i = 0; i <= g.cells[0]; ++i) bnorm += std::pow(std::abs(B.at(0, i)), p) * h;
    const double w1p = std::pow(bnorm + gradnorm, 1.0 / p);
    return {std::move(B), norm_l2(r), w1p / norm_lp(f, p), p};
}

namespace detail {

/// Gradient of a cell field at interior faces, flattened per component.
inline std::array<std::vector<double>, 2> grad_interior(const ScalarField& lam) {
    const auto& g = lam.grid;
    const int nx = g.cells[0], ny = g.cells[1];
    std::array<std::vector<double>, 2> out;
    out[0].assign(static_cast<std::size_t>(nx - 1) * ny, 0.0);
    out[1].assign(static_cast<std::size_t>(nx) * (ny - 1), 0.0);
    const double ihx = 1.0 / g.h(0), ihy = 1.0 / g.h(1);
    for (int j = 0; j < ny; ++j)
        for (int i = 1; i < nx; ++i)
            out[0][static_cast<std::size_t>(i - 1) + static_cast<std::size_t>(nx - 1) * j] =
                (lam.at(i, j) - lam.at(i - 1, j)) * ihx;
    for (int j = 1; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            out[1][static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * (j - 1)] =
                (lam.at(i, j) - lam.at(i, j - 1)) * ihy;
    return out;
}

/// Divergence at cells from interior-face arrays (boundary faces are zero).
inline ScalarField div_interior(const GridSpec& g, const std::vector<double>& bx,
                                const std::vector<double>& by) {
    const int nx = g.cells[0], ny = g.cells[1];
    ScalarField out(g);
    const double ihx = 1.0 / g.h(0), ihy = 1.0 / g.h(1);
    auto BX = [&](int i, int j) { // face index i in [0, nx], interior 1..nx-1
        if (i <= 0 || i >= nx) return 0.0;
        return bx[static_cast<std::size_t>(i - 1) + static_cast<std::size_t>(nx - 1) * j];
    };
    auto BY = [&](int i, int j) {
        if (j <= 0 || j >= ny) return 0.0;
        return by[static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * (j - 1)];
    };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            out.at(i, j) = (BX(i + 1, j) - BX(i, j)) * ihx + (BY(i, j + 1) - BY(i, j)) * ihy;
    return out;
}

} // namespace detail

inline BogovskiiResult bogovskii_2d(const ScalarField& f, double p,
                                    double rel_tol = 1e-11) {
    const auto& g = f.grid;
    detail::DirichletComponentSolver Kx(g, 0), Ky(g, 1);

    ScalarField rhs = f;
    const double m0 = mean(f);
    for (double& v : rhs.v) v -= m0;

    // Schur complement S lam = -div K^{-1} grad lam ; solve S lam = rhs
    auto apply_S = [&](const std::vector<double>& lam_flat, std::vector<double>& out) {
        ScalarField lam(g);
        lam.v = lam_flat;
        auto gl = detail::grad_interior(lam);
        std::vector<double> wx, wy;
        Kx.solve(gl[0], wx);
        Ky.solve(gl[1], wy);
        ScalarField d = detail::div_interior(g, wx, wy);
        out = d.v;
        // S = -Div K^{-1} Grad is the SPD side; remove the constant component
        // to stay on the mean-zero subspace
        double dm = 0.0;
        for (double v : out) dm += v;
        dm /= static_cast<double>(out.size());
        for (double& v : out) v = -(v - dm);
    };

    std::vector<double> lam(rhs.v.size(), 0.0);
    fields::detail::conjugate_gradient(apply_S, rhs.v, lam, rel_tol, 2000);

    ScalarField lamf(g);
    lamf.v = lam;
    auto gl = detail::grad_interior(lamf);
    std::vector<double> wx, wy;
    Kx.solve(gl[0], wx);
    Ky.solve(gl[1], wy);
    for (double& v : wx) v = -v;
    for (double& v : wy) v = -v;

    VectorField B(g);
    const int nx = g.cells[0], ny = g.cells[1];
    for (int j = 0; j < ny; ++j)
        for (int i = 1; i < nx; ++i)
            B.at(0, i, j) =
                wx[static_cast<std::size_t>(i - 1) + static_cast<std::size_t>(nx - 1) * j];
    for (int j = 1; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            B.at(1, i, j) =
                wy[static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * (j - 1)];

    // subtracting the mean keeps the constraint consistent; report the residual
    // against the mean-free data
    ScalarField r = div_noslip(B) - rhs;

    // W^{1,p} norm of B: faces for values, cells/nodes for the gradient
    double bnorm = 0.0, gnorm = 0.0;
    const double vol = g.cell_volume();
    for (int c = 0; c < 2; ++c)
        for (double v : B.comp[c]) bnorm += std::pow(std::abs(v), p) * vol;
    const double ihx = 1.0 / g.h(0), ihy = 1.0 / g.h(1);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double dxbx = (B.at(0, i + 1, j) - B.at(0, i, j)) * ihx;
            const double dyby = (B.at(1, i, j + 1) - B.at(1, i, j)) * ihy;
            gnorm += (std::pow(std::abs(dxbx), p) + std::pow(std::abs(dyby), p)) * vol;
        }
    auto mirror_x = [&](int i, int j) { // B_x with tangential mirror ghosts
        if (j < 0 || j >= ny) {
            const int jj = j < 0 ? 0 : ny - 1;
            return -B.at(0, i, jj);
        }
        return B.at(0, i, j);
    };
    auto mirror_y = [&](int i, int j) {
        if (i < 0 || i >= nx) {
            const int ii = i < 0 ? 0 : nx - 1;
            return -B.at(1, ii, j);
        }
        return B.at(1, i, j);
    };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i <= nx; ++i) {
            const double dy = (mirror_x(i, j + 1) - mirror_x(i, j - 1)) * 0.5 * ihy;
            gnorm += std::pow(std::abs(dy), p) * vol;
        }
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double dx = (mirror_y(i + 1, j) - mirror_y(i - 1, j)) * 0.5 * ihx;
            gnorm += std::pow(std::abs(dx), p) * vol;
        }
    const double w1p = std::pow(bnorm + gnorm, 1.0 / p);
    return {std::move(B), norm_l2(r), w1p / norm_lp(f, p), p};
}

/// Bogovskii operator B(f): div B = f (to solver tolerance), zero boundary
/// trace, linear in f. Requires a no-slip grid and mean-zero f.
inline BogovskiiResult bogovskii(const ScalarField& f, double p = 2.0,
                                 double mean_tol = 1e-8) {
    const auto& g = f.grid;
    if (g.boundary != Boundary::NoSlipBox)
        throw GridError("bogovskii requires a no-slip box grid");
    double l1 = 0.0;
    for (double v : f.v) l1 += std::abs(v);
    l1 = l1 / static_cast<double>(f.v.size()) + 1e-300;
    if (std::abs(mean(f)) > mean_tol * l1)
        throw MeanError("bogovskii: datum must have zero mean");
    if (g.dim == 1) return bogovskii_1d(f, p);
    if (g.dim == 2) return bogovskii_2d(f, p);
    throw GridError("bogovskii: 3d grids are not supported");
}

} // namespace hslim::fields
