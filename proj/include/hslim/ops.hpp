#pragma once

// Discrete differential operators: spectral for periodic grids, second-order
// centered stencils for no-slip boxes. Discrete adjointness <grad phi, u> =
// -<phi, div u> holds exactly in both cases (for no-slip, with u = 0 on the
// boundary faces).

#include <array>
#include <complex>
#include <functional>
#include <vector>

#include "hslim/errors.hpp"
#include "hslim/grid.hpp"
#include "hslim/spectral.hpp"

namespace hslim::fields {

namespace detail {

using cvec = std::vector<std::complex<double>>;

/// Multiply modal coefficients by exp(i * sign * k_a * h_a / 2).
inline void half_shift(const Spectral& sp, cvec& m, int axis, double sign) {
    const double half = 0.5 * sp.grid().h(axis);
    for (std::size_t f = 0; f < m.size(); ++f) {
        const double ph = sign * sp.k(axis, f) * half;
        m[f] *= std::complex<double>(std::cos(ph), std::sin(ph));
    }
}

inline void zero_nyquist(const Spectral& sp, cvec& m) {
    for (std::size_t f = 0; f < m.size(); ++f)
        if (sp.any_nyquist(f)) m[f] = 0.0;
}

/// Plain conjugate-gradient on flat vectors.
template <typename Apply>
int conjugate_gradient(const Apply& apply, const std::vector<double>& b,
                       std::vector<double>& x, double rel_tol, int max_iter) {
    const std::size_t n = b.size();
    std::vector<double> r(n), p(n), Ap(n);
    apply(x, Ap);
    double bnorm2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = b[i] - Ap[i];
        bnorm2 += b[i] * b[i];
    }
    if (bnorm2 == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        return 0;
    }
    p = r;
    double rr = 0.0;
    for (double v : r) rr += v * v;
    const double target2 = rel_tol * rel_tol * bnorm2;
    for (int it = 0; it < max_iter; ++it) {
        if (rr <= target2) return it;
        apply(p, Ap);
        double pAp = 0.0;
        for (std::size_t i = 0; i < n; ++i) pAp += p[i] * Ap[i];
        const double alpha = rr / pAp;
        double rr_new = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * Ap[i];
            rr_new += r[i] * r[i];
        }
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    if (rr > target2) throw SolverError("conjugate gradient did not converge");
    return max_iter;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Periodic (spectral) operators
// ---------------------------------------------------------------------------

inline VectorField grad_periodic(const ScalarField& phi) {
    const auto& g = phi.grid;
    auto sp = spectral_for(g);
    auto m = sp->forward(phi.v);
    detail::zero_nyquist(*sp, m);
    VectorField out(g);
    for (int c = 0; c < g.dim; ++c) {
        auto mc = m;
        for (std::size_t f = 0; f < mc.size(); ++f)
            mc[f] *= std::complex<double>(0.0, sp->k(c, f));
        detail::half_shift(*sp, mc, c, -1.0);
        out.comp[c] = sp->backward(mc);
    }
    return out;
}

inline ScalarField div_periodic(const VectorField& u) {
    const auto& g = u.grid;
    auto sp = spectral_for(g);
    detail::cvec acc(sp->mode_count(), 0.0);
    for (int c = 0; c < g.dim; ++c) {
        auto mc = sp->forward(u.comp[c]);
        detail::half_shift(*sp, mc, c, +1.0);
        for (std::size_t f = 0; f < mc.size(); ++f)
            acc[f] += std::complex<double>(0.0, sp->k(c, f)) * mc[f];
    }
    detail::zero_nyquist(*sp, acc);
    ScalarField out(g);
    out.v = sp->backward(acc);
    return out;
}

inline ScalarField laplacian_periodic(const ScalarField& phi) {
    const auto& g = phi.grid;
    auto sp = spectral_for(g);
    auto m = sp->forward(phi.v);
    // annihilate Nyquist lines like the first-order operators, so that
    // div(grad(phi)) == laplacian(phi) exactly for every input
    detail::zero_nyquist(*sp, m);
    for (std::size_t f = 0; f < m.size(); ++f) m[f] *= -sp->k_squared(f);
    ScalarField out(g);
    out.v = sp->backward(m);
    return out;
}

/// 2D curl (vorticity) of a MAC field, evaluated at cell centers.
inline ScalarField curl_periodic_2d(const VectorField& u) {
    const auto& g = u.grid;
    if (g.dim != 2) throw GridError("curl_periodic_2d requires a 2d grid");
    auto sp = spectral_for(g);
    auto mx = sp->forward(u.comp[0]);
    auto my = sp->forward(u.comp[1]);
    detail::half_shift(*sp, mx, 0, +1.0); // undo face offsets
    detail::half_shift(*sp, my, 1, +1.0);
    detail::cvec w(sp->mode_count());
    for (std::size_t f = 0; f < w.size(); ++f) {
        w[f] = std::complex<double>(0.0, sp->k(0, f)) * my[f] -
               std::complex<double>(0.0, sp->k(1, f)) * mx[f];
    }
    detail::zero_nyquist(*sp, w);
    ScalarField out(g);
    out.v = sp->backward(w);
    return out;
}

/// 3D curl of a MAC field, components evaluated at cell centers.
inline std::array<ScalarField, 3> curl_periodic_3d(const VectorField& u) {
    const auto& g = u.grid;
    if (g.dim != 3) throw GridError("curl_periodic_3d requires a 3d grid");
    auto sp = spectral_for(g);
    std::array<detail::cvec, 3> m;
    for (int c = 0; c < 3; ++c) {
        m[c] = sp->forward(u.comp[c]);
        detail::half_shift(*sp, m[c], c, +1.0);
    }
    std::array<ScalarField, 3> out{ScalarField(g), ScalarField(g), ScalarField(g)};
    for (int c = 0; c < 3; ++c) {
        const int a = (c + 1) % 3, b = (c + 2) % 3;
        detail::cvec w(sp->mode_count());
        for (std::size_t f = 0; f < w.size(); ++f) {
            w[f] = std::complex<double>(0.0, sp->k(a, f)) * m[b][f] -
                   std::complex<double>(0.0, sp->k(b, f)) * m[a][f];
        }
        detail::zero_nyquist(*sp, w);
        out[c].v = sp->backward(w);
    }
    return out;
}

/// Helmholtz projection onto the divergence-free part (periodic, spectral).
inline VectorField helmholtz_project_periodic(const VectorField& u) {
    const auto& g = u.grid;
    auto sp = spectral_for(g);
    std::array<detail::cvec, 3> m;
    for (int c = 0; c < g.dim; ++c) {
        m[c] = sp->forward(u.comp[c]);
        detail::half_shift(*sp, m[c], c, +1.0);
    }
    for (std::size_t f = 0; f < sp->mode_count(); ++f) {
        const double k2 = sp->k_squared(f);
        if (k2 == 0.0 || sp->any_nyquist(f)) continue;
        std::complex<double> kd(0.0, 0.0);
        for (int c = 0; c < g.dim; ++c) kd += sp->k(c, f) * m[c][f];
        for (int c = 0; c < g.dim; ++c) m[c][f] -= sp->k(c, f) * kd / k2;
    }
    VectorField out(g);
    for (int c = 0; c < g.dim; ++c) {
        detail::half_shift(*sp, m[c], c, -1.0);
        out.comp[c] = sp->backward(m[c]);
    }
    return out;
}

/// Velocity with prescribed vorticity: v = perp-grad of the stream function
/// psi, lap psi = omega. Requires mean-zero omega (2D periodic).
inline VectorField biot_savart(const ScalarField& omega, double mean_tol = 1e-10) {
    const auto& g = omega.grid;
    if (g.dim != 2 || g.boundary != Boundary::Periodic)
        throw GridError("biot_savart requires a 2d periodic grid");
    const double m0 = mean(omega);
    if (std::abs(m0) > mean_tol * (norm_linf(omega) + 1.0))
        throw MeanError("biot_savart: vorticity must have zero mean");
    auto sp = spectral_for(g);
    auto w = sp->forward(omega.v);
    detail::cvec psi(w.size(), 0.0);
    for (std::size_t f = 0; f < w.size(); ++f) {
        const double k2 = sp->k_squared(f);
        if (k2 > 0.0 && !sp->any_nyquist(f)) psi[f] = -w[f] / k2;
    }
    VectorField v(g);
    auto vx = psi, vy = psi;
    for (std::size_t f = 0; f < psi.size(); ++f) {
        vx[f] *= std::complex<double>(0.0, -sp->k(1, f)); // -d_y psi
        vy[f] *= std::complex<double>(0.0, sp->k(0, f));  //  d_x psi
    }
    detail::half_shift(*sp, vx, 0, -1.0);
    detail::half_shift(*sp, vy, 1, -1.0);
    v.comp[0] = sp->backward(vx);
    v.comp[1] = sp->backward(vy);
    return v;
}

// ---------------------------------------------------------------------------
// No-slip box (stencil) operators
// ---------------------------------------------------------------------------

inline VectorField grad_noslip(const ScalarField& phi) {
    const auto& g = phi.grid;
    VectorField out(g);
    if (g.dim == 1) {
        const double ih = 1.0 / g.h(0);
        for (int i = 1; i < g.cells[0]; ++i)
            out.at(0, i) = (phi.at(i) - phi.at(i - 1)) * ih;
    } else {
        const double ihx = 1.0 / g.h(0), ihy = 1.0 / g.h(1);
        for (int j = 0; j < g.cells[1]; ++j)
            for (int i = 1; i < g.cells[0]; ++i)
                out.at(0, i, j) = (phi.at(i, j) - phi.at(i - 1, j)) * ihx;
        for (int j = 1; j < g.cells[1]; ++j)
            for (int i = 0; i < g.cells[0]; ++i)
                out.at(1, i, j) = (phi.at(i, j) - phi.at(i, j - 1)) * ihy;
    }
    return out;
}

inline ScalarField div_noslip(const VectorField& u) {
    const auto& g = u.grid;
    ScalarField out(g);
    if (g.dim == 1) {
        const double ih = 1.0 / g.h(0);
        for (int i = 0; i < g.cells[0]; ++i)
            out.at(i) = (u.at(0, i + 1) - u.at(0, i)) * ih;
    } else {
        const double ihx = 1.0 / g.h(0), ihy = 1.0 / g.h(1);
        for (int j = 0; j < g.cells[1]; ++j)
            for (int i = 0; i < g.cells[0]; ++i)
                out.at(i, j) = (u.at(0, i + 1, j) - u.at(0, i, j)) * ihx +
                               (u.at(1, i, j + 1) - u.at(1, i, j)) * ihy;
    }
    return out;
}

/// Cell-centered Neumann Laplacian (zero flux through the walls).
inline ScalarField laplacian_noslip(const ScalarField& phi) {
    return div_noslip(grad_noslip(phi));
}

// --- dispatching front ends --------------------------------------------------

inline VectorField grad(const ScalarField& phi) {
    return phi.grid.boundary == Boundary::Periodic ? grad_periodic(phi)
                                                   : grad_noslip(phi);
}

inline ScalarField div(const VectorField& u) {
    return u.grid.boundary == Boundary::Periodic ? div_periodic(u) : div_noslip(u);
}

inline ScalarField laplacian(const ScalarField& phi) {
    return phi.grid.boundary == Boundary::Periodic ? laplacian_periodic(phi)
                                                   : laplacian_noslip(phi);
}

inline ScalarField curl2d(const VectorField& u) {
    if (u.grid.boundary != Boundary::Periodic)
        throw GridError("curl is only provided on periodic grids");
    return curl_periodic_2d(u);
}

/// Neumann Poisson solve, lap(psi) = rhs, by conjugate gradient; rhs must have
/// zero mean. Returns the mean-zero solution.
inline ScalarField poisson_neumann(const ScalarField& rhs, double rel_tol = 1e-12) {
    const auto& g = rhs.grid;
    std::vector<double> b = rhs.v;
    const double m0 = mean(rhs);
    for (double& x : b) x = -(x - m0); // solve -lap psi = -rhs (SPD side)

    auto apply = [&g](const std::vector<double>& x, std::vector<double>& out) {
        ScalarField phi(g);
        phi.v = x;
        ScalarField lap = laplacian_noslip(phi);
        out = lap.v;
        for (double& y : out) y = -y;
    };
    std::vector<double> x(b.size(), 0.0);
    const int maxit = 40 * (g.cells[0] + g.cells[1] + g.cells[2]);
    detail::conjugate_gradient(apply, b, x, rel_tol, maxit);
    ScalarField psi(g);
    psi.v = std::move(x);
    const double pm = mean(psi);
    for (double& y : psi.v) y -= pm;
    return psi;
}

inline VectorField helmholtz_project_noslip(const VectorField& u,
                                            double rel_tol = 1e-12) {
    if (u.max_boundary_face_magnitude() > 0.0)
        throw SolverError("helmholtz_project: no-slip input must vanish on "
                          "boundary faces");
    ScalarField rhs = div_noslip(u);
    ScalarField psi = poisson_neumann(rhs, rel_tol);
    VectorField gp = grad_noslip(psi);
    VectorField out = u;
    for (int c = 0; c < u.grid.dim; ++c)
        for (std::size_t i = 0; i < out.comp[c].size(); ++i)
            out.comp[c][i] -= gp.comp[c][i];
    return out;
}

/// Helmholtz projection H(u): divergence-free part of u. u - H(u) is a
/// discrete gradient; H is idempotent.
inline VectorField helmholtz_project(const VectorField& u) {
    return u.grid.boundary == Boundary::Periodic ? helmholtz_project_periodic(u)
                                                 : helmholtz_project_noslip(u);
}

// --- staggering helpers -------------------------------------------------------

/// Average MAC component c to cell centers.
inline ScalarField component_at_centers(const VectorField& u, int c) {
    const auto& g = u.grid;
    ScalarField out(g);
    const bool per = g.boundary == Boundary::Periodic;
    if (g.dim == 1) {
        const int n = g.cells[0];
        for (int i = 0; i < n; ++i) {
            const double left = u.at(0, i);
            const double right = per ? u.at(0, (i + 1) % n) : u.at(0, i + 1);
            out.at(i) = 0.5 * (left + right);
        }
        return out;
    }
    const int nx = g.cells[0], ny = g.cells[1];
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double left, right;
            if (c == 0) {
                left = u.at(0, i, j);
                right = per ? u.at(0, (i + 1) % nx, j) : u.at(0, i + 1, j);
            } else {
                left = u.at(1, i, j);
                right = per ? u.at(1, i, (j + 1) % ny) : u.at(1, i, j + 1);
            }
            out.at(i, j) = 0.5 * (left + right);
        }
    return out;
}

/// Average a cell-centered scalar to the faces of component c (arithmetic mean;
/// at no-slip boundary faces the one-sided cell value is used).
inline std::vector<double> scalar_at_faces(const ScalarField& f, int c) {
    const auto& g = f.grid;
    std::vector<double> out(g.face_count(c), 0.0);
    const bool per = g.boundary == Boundary::Periodic;
    if (g.dim == 1) {
        const int n = g.cells[0];
        const int m = g.face_cells(0, 0);
        for (int i = 0; i < m; ++i) {
            if (per) {
                out[i] = 0.5 * (f.at((i - 1 + n) % n) + f.at(i % n));
            } else {
                const int il = std::max(i - 1, 0), ir = std::min(i, n - 1);
                out[i] = 0.5 * (f.at(il) + f.at(ir));
            }
        }
        return out;
    }
    const int nx = g.cells[0], ny = g.cells[1];
    const int mx = g.face_cells(c, 0), my = g.face_cells(c, 1);
    for (int j = 0; j < my; ++j)
        for (int i = 0; i < mx; ++i) {
            double a, b;
            if (c == 0) {
                if (per) {
                    a = f.at((i - 1 + nx) % nx, j);
                    b = f.at(i % nx, j);
                } else {
                    a = f.at(std::max(i - 1, 0), j);
                    b = f.at(std::min(i, nx - 1), j);
                }
            } else {
                if (per) {
                    a = f.at(i, (j - 1 + ny) % ny);
                    b = f.at(i, j % ny);
                } else {
                    a = f.at(i, std::max(j - 1, 0));
                    b = f.at(i, std::min(j, ny - 1));
                }
            }
            out[static_cast<std::size_t>(i) + static_cast<std::size_t>(mx) * j] =
                0.5 * (a + b);
        }
    return out;
}

} // namespace hslim::fields
