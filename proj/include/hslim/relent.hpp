#pragma once

// Comparison-pair machinery: the corrector and cutoff, the relative entropy
// functional, the relative entropy inequality with its renormalized pressure
// and Bogovskii remainder terms, the mean-pressure estimate, and the explicit
// rate bound with its Gronwall factor.

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "hslim/acoustics.hpp"
#include "hslim/bogovskii.hpp"
#include "hslim/cns.hpp"
#include "hslim/eos.hpp"
#include "hslim/errors.hpp"
#include "hslim/grid.hpp"
#include "hslim/ops.hpp"

namespace hslim::relent {

// ---------------------------------------------------------------------------
// Cutoff and corrector
// ---------------------------------------------------------------------------

/// Smooth boundary-collar cutoff on a no-slip box: 1 on the collar, 0 inside,
/// quintic ramp over the shell width.
struct Cutoff {
    fields::GridSpec grid;
    double shell_width = 0.0;

    double operator()(double x, double y = 0.0) const {
        double dist = grid.extent[0] - std::abs(x);
        if (grid.dim > 1) dist = std::min(dist, grid.extent[1] - std::abs(y));
        const double xi = dist / shell_width;
        if (xi <= 0.0) return 1.0;
        if (xi >= 1.0) return 0.0;
        const double q = xi * xi * xi * (10.0 - 15.0 * xi + 6.0 * xi * xi);
        return 1.0 - q;
    }
};

inline Cutoff build_cutoff(const fields::GridSpec& g, double shell_width) {
    if (g.boundary != fields::Boundary::NoSlipBox)
        throw GridError("cutoff requires a no-slip box grid");
    double hmax = g.h(0);
    for (int a = 1; a < g.dim; ++a) hmax = std::max(hmax, g.h(a));
    if (shell_width < 4.0 * hmax)
        throw GridError("cutoff shell must span at least four cells");
    return Cutoff{g, shell_width};
}

/// w_R = -chi (v + grad Psi0), evaluated on the faces of the no-slip grid.
inline fields::VectorField build_corrector(const Cutoff& chi,
                                           const fields::VectorField& v,
                                           const fields::VectorField& grad_psi0) {
    const auto& g = chi.grid;
    fields::check_same_grid(v.grid, g);
    fields::check_same_grid(grad_psi0.grid, g);
    fields::VectorField w(g);
    for (int c = 0; c < g.dim; ++c) {
        if (g.dim == 1) {
            for (int i = 0; i < g.face_cells(0, 0); ++i) {
                const double x = g.face(0, i);
                w.at(0, i) = -chi(x) * (v.at(0, i) + grad_psi0.at(0, i));
            }
        } else {
            const int mx = g.face_cells(c, 0), my = g.face_cells(c, 1);
            for (int j = 0; j < my; ++j)
                for (int i = 0; i < mx; ++i) {
                    const double x = c == 0 ? g.face(0, i) : g.center(0, i);
                    const double y = c == 1 ? g.face(1, j) : g.center(1, j);
                    w.at(c, i, j) = -chi(x, y) * (v.at(c, i, j) + grad_psi0.at(c, i, j));
                }
        }
    }
    return w;
}

/// Discrete W^{2,p} norm (values + first and second differences).
inline double norm_w2p(const fields::VectorField& u, double p) {
    const auto& g = u.grid;
    const double vol = g.cell_volume();
    double acc = 0.0;
    for (int c = 0; c < g.dim; ++c)
        for (double x : u.comp[c]) acc += std::pow(std::abs(x), p) * vol;
    auto add_differences = [&](const std::vector<double>& comp, int nx, int ny,
                               double hx, double hy) {
        auto at = [&](int i, int j) {
            i = std::clamp(i, 0, nx - 1);
            j = std::clamp(j, 0, ny - 1);
            return comp[static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * j];
        };
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double dx = (at(i + 1, j) - at(i - 1, j)) / (2.0 * hx);
                const double dxx = (at(i + 1, j) - 2.0 * at(i, j) + at(i - 1, j)) /
                                   (hx * hx);
                acc += (std::pow(std::abs(dx), p) + std::pow(std::abs(dxx), p)) * vol;
                if (ny > 1) {
                    const double dy = (at(i, j + 1) - at(i, j - 1)) / (2.0 * hy);
                    const double dyy = (at(i, j + 1) - 2.0 * at(i, j) + at(i, j - 1)) /
                                       (hy * hy);
                    acc += (std::pow(std::abs(dy), p) + std::pow(std::abs(dyy), p)) * vol;
                }
            }
    };
    for (int c = 0; c < g.dim; ++c) {
        const int nx = g.face_cells(c, 0);
        const int ny = g.dim > 1 ? g.face_cells(c, 1) : 1;
        add_differences(u.comp[c], nx, ny, g.h(0), g.dim > 1 ? g.h(1) : 1.0);
    }
    return std::pow(acc, 1.0 / p);
}

// ---------------------------------------------------------------------------
// Comparison fields
// ---------------------------------------------------------------------------

/// The pair (r, U) = (varrho + eps s, v + grad Psi + w_R) with every auxiliary
/// field needed by the inequality evaluator, at a single time.
struct ComparisonFields {
    double t = 0.0;
    double eps = 0.1;
    double varrho = 1.0;
    fields::ScalarField r;         // cells
    fields::VectorField U;         // faces, zero on the boundary
    fields::ScalarField s;         // cells
    fields::VectorField grad_psi;  // faces
    fields::ScalarField lap_psi;   // cells
    fields::VectorField v;         // faces
    fields::VectorField w_R;       // faces
    fields::VectorField dt_U;      // faces
    fields::ScalarField pressure;  // Euler pressure at cells (may be zero)
};

/// Assembles the comparison pair on the solver grid. The no-slip boundary
/// faces of U are zeroed explicitly: the corrector cancels v + grad Psi0 there
/// by construction and finite-propagation keeps grad Psi = grad Psi0 on the
/// collar, so the residue is at roundoff level.
inline ComparisonFields assemble_comparison(
    const fields::GridSpec& g, const acoustics::SpectralAcousticSolver& ac,
    const fields::VectorField& v, const fields::VectorField& dt_v,
    const fields::ScalarField& Pi, const Cutoff& chi,
    const fields::VectorField& grad_psi0, double t, double eps, double varrho,
    const eos::PressureLaw& law) {
    ComparisonFields c;
    c.t = t;
    c.eps = eps;
    c.varrho = varrho;

    auto s_per = ac.s_at(t);
    c.s = fields::ScalarField(g);
    c.s.v = s_per.v;
    auto lap_per = ac.laplacian_psi_at(t);
    c.lap_psi = fields::ScalarField(g);
    c.lap_psi.v = lap_per.v;

    c.grad_psi = g.boundary == fields::Boundary::NoSlipBox
                     ? ac.grad_psi_on_noslip(t, g)
                     : ac.grad_psi_at(t);
    c.v = v;
    c.w_R = build_corrector(chi, v, grad_psi0);

    c.r = fields::ScalarField(g);
    for (std::size_t i = 0; i < c.r.v.size(); ++i) {
        c.r.v[i] = varrho + eps * c.s.v[i];
        if (!(c.r.v[i] > 0.0 && c.r.v[i] < law.rho_max()))
            throw DomainError("comparison density violates 0 < r < rho_max");
    }

    c.U = fields::VectorField(g);
    for (int cc = 0; cc < g.dim; ++cc)
        for (std::size_t i = 0; i < c.U.comp[cc].size(); ++i)
            c.U.comp[cc][i] =
                c.v.comp[cc][i] + c.grad_psi.comp[cc][i] + c.w_R.comp[cc][i];
    c.U.zero_boundary_faces();

    // dt U = dt v + dt grad Psi - chi dt v (the Psi0 part of w_R is static)
    fields::VectorField dt_gp(g);
    {
        auto dgp = ac.dt_grad_psi_at(t);
        if (g.boundary == fields::Boundary::NoSlipBox) {
            fields::GridSpec gper = g;
            gper.boundary = fields::Boundary::Periodic;
            fields::VectorField tmp(gper);
            tmp.comp = dgp.comp;
            // wrap onto the extra boundary faces
            if (g.dim == 1) {
                const int n = g.cells[0];
                for (int i = 0; i < n; ++i) dt_gp.at(0, i) = tmp.at(0, i);
                dt_gp.at(0, n) = tmp.at(0, 0);
            } else {
                const int nx = g.cells[0], ny = g.cells[1];
                for (int j = 0; j < ny; ++j)
                    for (int i = 0; i <= nx; ++i)
                        dt_gp.at(0, i, j) = tmp.at(0, i % nx, j);
                for (int j = 0; j <= ny; ++j)
                    for (int i = 0; i < nx; ++i)
                        dt_gp.at(1, i, j) = tmp.at(1, i, j % ny);
            }
        } else {
            dt_gp = dgp;
        }
    }
    auto chi_dtv = build_corrector(chi, dt_v, fields::VectorField(g));
    c.dt_U = fields::VectorField(g);
    for (int cc = 0; cc < g.dim; ++cc)
        for (std::size_t i = 0; i < c.dt_U.comp[cc].size(); ++i)
            c.dt_U.comp[cc][i] =
                dt_v.comp[cc][i] + dt_gp.comp[cc][i] + chi_dtv.comp[cc][i];

    c.pressure = Pi;
    return c;
}

// ---------------------------------------------------------------------------
// Relative entropy
// ---------------------------------------------------------------------------

/// 1/2 int rho |u - U|^2 + eps^-2 int (P(rho) - P(r) - P'(r)(rho - r)).
inline double relative_entropy(const cns::FluidState& st, const ComparisonFields& cmp,
                               const eos::PressureLaw& law, double eps) {
    fields::check_same_grid(st.rho.grid, cmp.r.grid);
    const auto& g = st.rho.grid;
    const double vol = g.cell_volume();
    double kin = 0.0;
    for (int c = 0; c < g.dim; ++c) {
        auto rf = fields::scalar_at_faces(st.rho, c);
        for (std::size_t i = 0; i < st.u.comp[c].size(); ++i) {
            const double d = st.u.comp[c][i] - cmp.U.comp[c][i];
            kin += 0.5 * rf[i] * d * d * vol;
        }
    }
    double gap = 0.0;
    for (std::size_t i = 0; i < st.rho.v.size(); ++i)
        gap += law.bregman_gap(st.rho.v[i], cmp.r.v[i]) * vol;
    return kin + gap / (eps * eps);
}

/// (velocity gap, density gap) of the limit estimate's left-hand side:
/// int rho |u - grad Psi - v|^2 and || (rho - varrho)/eps - s ||_L2^2.
inline std::pair<double, double> limit_distance(const cns::FluidState& st,
                                                const ComparisonFields& cmp) {
    if (std::abs(st.t - cmp.t) > 1e-10)
        throw SyncError("limit_distance: snapshot times differ");
    const auto& g = st.rho.grid;
    const double vol = g.cell_volume();
    double vel = 0.0;
    for (int c = 0; c < g.dim; ++c) {
        auto rf = fields::scalar_at_faces(st.rho, c);
        for (std::size_t i = 0; i < st.u.comp[c].size(); ++i) {
            const double d =
                st.u.comp[c][i] - cmp.grad_psi.comp[c][i] - cmp.v.comp[c][i];
            vel += rf[i] * d * d * vol;
        }
    }
    double dens = 0.0;
    for (std::size_t i = 0; i < st.rho.v.size(); ++i) {
        const double z = (st.rho.v[i] - cmp.varrho) / cmp.eps - cmp.s.v[i];
        dens += z * z * vol;
    }
    return {vel, dens};
}

// ---------------------------------------------------------------------------
// Relative entropy inequality
// ---------------------------------------------------------------------------

struct ReiRow {
    double tau = 0.0;
    double entropy = 0.0;          // E(tau)
    double dissipation = 0.0;      // nu int_0^tau (S(grad u)-S(grad U)):grad(u-U)
    double pb_term = 0.0;          // eps^-2 int_0^tau int p(rho) b(rho)
    double r1 = 0.0, r2 = 0.0;     // cumulative remainder integrals
    double r3 = 0.0;               // endpoint term at tau
    double lhs = 0.0, rhs = 0.0;
    double lhs_minus_rhs = 0.0;
    bool pass = true;
};

struct RelEntropyReport {
    std::vector<ReiRow> rows;
    bool passed = true;
    double tol_rel = 1e-2;
    double tol_abs = 1e-10;
};

namespace detail {

/// Contraction (S(grad a) - S(grad b)) : grad(a - b) integrated over the box.
inline double stress_difference_inner(const fields::VectorField& a,
                                      const fields::VectorField& b, double mu) {
    const auto& g = a.grid;
    auto ga = cns::detail::velocity_gradient(a);
    auto gb = cns::detail::velocity_gradient(b);
    const double vol = g.cell_volume();
    double acc = 0.0;
    if (g.dim == 1) {
        for (std::size_t i = 0; i < ga.dxux.v.size(); ++i) {
            const double d = ga.dxux.v[i] - gb.dxux.v[i];
            acc += 4.0 / 3.0 * mu * d * d * vol;
        }
        return acc;
    }
    for (std::size_t i = 0; i < ga.dxux.v.size(); ++i) {
        const double dxx = ga.dxux.v[i] - gb.dxux.v[i];
        const double dyy = ga.dyuy.v[i] - gb.dyuy.v[i];
        const double dxy = ga.dyux.v[i] - gb.dyux.v[i];
        const double dyx = ga.dxuy.v[i] - gb.dxuy.v[i];
        const double div = dxx + dyy;
        const double sxx = mu * (2.0 * dxx - div);
        const double syy = mu * (2.0 * dyy - div);
        const double sxy = mu * (dxy + dyx);
        acc += (sxx * dxx + syy * dyy + sxy * (dxy + dyx)) * vol;
    }
    return acc;
}

/// S(grad U) : grad(U - u) integrated.
inline double stress_inner(const fields::VectorField& U, const fields::VectorField& u,
                           double mu) {
    const auto& g = U.grid;
    auto gU = cns::detail::velocity_gradient(U);
    auto gu = cns::detail::velocity_gradient(u);
    const double vol = g.cell_volume();
    double acc = 0.0;
    if (g.dim == 1) {
        for (std::size_t i = 0; i < gU.dxux.v.size(); ++i)
            acc += 4.0 / 3.0 * mu * gU.dxux.v[i] * (gU.dxux.v[i] - gu.dxux.v[i]) * vol;
        return acc;
    }
    for (std::size_t i = 0; i < gU.dxux.v.size(); ++i) {
        const double div = gU.dxux.v[i] + gU.dyuy.v[i];
        const double sxx = mu * (2.0 * gU.dxux.v[i] - div);
        const double syy = mu * (2.0 * gU.dyuy.v[i] - div);
        const double sxy = mu * (gU.dyux.v[i] + gU.dxuy.v[i]);
        const double exx = gU.dxux.v[i] - gu.dxux.v[i];
        const double eyy = gU.dyuy.v[i] - gu.dyuy.v[i];
        const double exy = (gU.dyux.v[i] - gu.dyux.v[i]) + (gU.dxuy.v[i] - gu.dxuy.v[i]);
        acc += (sxx * exx + syy * eyy + sxy * exy) * vol;
    }
    return acc;
}

/// S(grad u) : grad B integrated (for the Bogovskii viscous term).
inline double stress_inner_plain(const fields::VectorField& u,
                                 const fields::VectorField& B, double mu) {
    const auto& g = u.grid;
    auto gu = cns::detail::velocity_gradient(u);
    auto gB = cns::detail::velocity_gradient(B);
    const double vol = g.cell_volume();
    double acc = 0.0;
    if (g.dim == 1) {
        for (std::size_t i = 0; i < gu.dxux.v.size(); ++i)
            acc += 4.0 / 3.0 * mu * gu.dxux.v[i] * gB.dxux.v[i] * vol;
        return acc;
    }
    for (std::size_t i = 0; i < gu.dxux.v.size(); ++i) {
        const double div = gu.dxux.v[i] + gu.dyuy.v[i];
        const double sxx = mu * (2.0 * gu.dxux.v[i] - div);
        const double syy = mu * (2.0 * gu.dyuy.v[i] - div);
        const double sxy = mu * (gu.dyux.v[i] + gu.dxuy.v[i]);
        acc += (sxx * gB.dxux.v[i] + syy * gB.dyuy.v[i] +
                sxy * (gB.dyux.v[i] + gB.dxuy.v[i])) *
               vol;
    }
    return acc;
}

/// rho u (x) u : grad B integrated, with cell-centered contraction.
inline double advection_inner(const cns::FluidState& st, const fields::VectorField& B) {
    const auto& g = st.rho.grid;
    auto gB = cns::detail::velocity_gradient(B);
    const double vol = g.cell_volume();
    double acc = 0.0;
    if (g.dim == 1) {
        auto uc = fields::component_at_centers(st.u, 0);
        for (std::size_t i = 0; i < uc.v.size(); ++i)
            acc += st.rho.v[i] * uc.v[i] * uc.v[i] * gB.dxux.v[i] * vol;
        return acc;
    }
    auto ux = fields::component_at_centers(st.u, 0);
    auto uy = fields::component_at_centers(st.u, 1);
    for (std::size_t i = 0; i < ux.v.size(); ++i) {
        const double r = st.rho.v[i];
        acc += r *
               (ux.v[i] * ux.v[i] * gB.dxux.v[i] + ux.v[i] * uy.v[i] * gB.dyux.v[i] +
                uy.v[i] * ux.v[i] * gB.dxuy.v[i] + uy.v[i] * uy.v[i] * gB.dyuy.v[i]) *
               vol;
    }
    return acc;
}

/// int rho u . W over the faces.
inline double momentum_inner(const cns::FluidState& st, const fields::VectorField& W) {
    const auto& g = st.rho.grid;
    const double vol = g.cell_volume();
    double acc = 0.0;
    for (int c = 0; c < g.dim; ++c) {
        auto rf = fields::scalar_at_faces(st.rho, c);
        for (std::size_t i = 0; i < st.u.comp[c].size(); ++i)
            acc += rf[i] * st.u.comp[c][i] * W.comp[c][i] * vol;
    }
    return acc;
}

/// Advective derivative (u . grad) U at the faces of each component.
inline fields::VectorField advective_derivative(const fields::VectorField& u,
                                                const fields::VectorField& U) {
    const auto& g = u.grid;
    const bool per = g.boundary == fields::Boundary::Periodic;
    fields::VectorField out(g);
    const double ihx = 1.0 / g.h(0);
    if (g.dim == 1) {
        const int m = g.face_cells(0, 0);
        auto Uat = [&](int i) {
            if (per) return U.at(0, ((i % m) + m) % m);
            if (i < 0) return -U.at(0, -i);
            if (i >= m) return -U.at(0, 2 * (m - 1) - i);
            return U.at(0, i);
        };
        for (int i = 0; i < m; ++i)
            out.at(0, i) = u.at(0, i) * (Uat(i + 1) - Uat(i - 1)) * 0.5 * ihx;
        return out;
    }
    const double ihy = 1.0 / g.h(1);
    for (int c = 0; c < 2; ++c) {
        const int mx = g.face_cells(c, 0), my = g.face_cells(c, 1);
        auto Uat = [&](int i, int j) {
            if (per) return U.at(c, ((i % mx) + mx) % mx, ((j % my) + my) % my);
            // reflect across walls (U vanishes on its own-axis boundary faces;
            // tangential ghost mirrors odd)
            if (c == 0) {
                if (i < 0) return -U.at(0, -i, std::clamp(j, 0, my - 1));
                if (i >= mx) return -U.at(0, 2 * (mx - 1) - i, std::clamp(j, 0, my - 1));
                if (j < 0) return -U.at(0, i, 0);
                if (j >= my) return -U.at(0, i, my - 1);
            } else {
                if (j < 0) return -U.at(1, std::clamp(i, 0, mx - 1), -j);
                if (j >= my) return -U.at(1, std::clamp(i, 0, mx - 1), 2 * (my - 1) - j);
                if (i < 0) return -U.at(1, 0, j);
                if (i >= mx) return -U.at(1, mx - 1, j);
            }
            return U.at(c, i, j);
        };
        // other-component velocity averaged onto this component's faces
        const int oc = 1 - c;
        auto uoc = [&](int i, int j) {
            // average the four surrounding faces of component oc
            int i0 = c == 0 ? i - 1 : i;
            int j0 = c == 0 ? j : j - 1;
            double acc = 0.0;
            int cnt = 0;
            for (int dj = 0; dj <= 1; ++dj)
                for (int di = 0; di <= 1; ++di) {
                    int ii = i0 + di;
                    int jj = j0 + dj;
                    const int nx = g.face_cells(oc, 0), ny = g.face_cells(oc, 1);
                    if (per) {
                        ii = ((ii % nx) + nx) % nx;
                        jj = ((jj % ny) + ny) % ny;
                        acc += u.at(oc, ii, jj);
                        ++cnt;
                    } else if (ii >= 0 && ii < nx && jj >= 0 && jj < ny) {
                        acc += u.at(oc, ii, jj);
                        ++cnt;
                    }
                }
            return cnt > 0 ? acc / cnt : 0.0;
        };
        for (int j = 0; j < my; ++j)
            for (int i = 0; i < mx; ++i) {
                const double own = u.at(c, i, j);
                const double cross = uoc(i, j);
                double ddx, ddy;
                if (c == 0) {
                    ddx = (Uat(i + 1, j) - Uat(i - 1, j)) * 0.5 * ihx;
                    ddy = (Uat(i, j + 1) - Uat(i, j - 1)) * 0.5 * ihy;
                    out.at(c, i, j) = own * ddx + cross * ddy;
                } else {
                    ddx = (Uat(i + 1, j) - Uat(i - 1, j)) * 0.5 * ihx;
                    ddy = (Uat(i, j + 1) - Uat(i, j - 1)) * 0.5 * ihy;
                    out.at(c, i, j) = cross * ddx + own * ddy;
                }
            }
    }
    return out;
}

} // namespace detail

/// Numerically evaluates both sides of the relative entropy inequality at
/// every emitted time. The Bogovskii operator backs every renormalization
/// remainder with its mean subtracted; pass/fail uses
/// lhs <= rhs + tol_rel |rhs| + tol_abs.
inline RelEntropyReport rei_check(
    const std::vector<cns::FluidState>& traj,
    const std::vector<ComparisonFields>& cmp_traj,
    const std::function<double(double)>& b, const std::function<double(double)>& b_prime,
    const eos::PressureLaw& law, const cns::ScalingParams& params,
    double tol_rel = 1e-2, double tol_abs = 1e-10) {
    if (traj.size() != cmp_traj.size() || traj.empty())
        throw SyncError("rei_check: trajectories must align");
    for (std::size_t n = 0; n < traj.size(); ++n)
        if (std::abs(traj[n].t - cmp_traj[n].t) > 1e-10)
            throw SyncError("rei_check: snapshot times differ");

    const auto& g = traj.front().rho.grid;
    const double vol = g.cell_volume();
    const double ie2 = 1.0 / (params.eps * params.eps);

    RelEntropyReport rep;
    rep.tol_rel = tol_rel;
    rep.tol_abs = tol_abs;

    struct Instant {
        double diss_rate, pb_rate, r1_rate, r2_rate, r3_value, entropy;
    };
    std::vector<Instant> inst(traj.size());

    for (std::size_t n = 0; n < traj.size(); ++n) {
        const auto& st = traj[n];
        const auto& cm = cmp_traj[n];
        Instant& I = inst[n];

        I.entropy = relative_entropy(st, cm, law, params.eps);
        I.diss_rate = params.nu * detail::stress_difference_inner(st.u, cm.U, params.mu);

        double pb = 0.0;
        fields::ScalarField brho(g);
        for (std::size_t i = 0; i < st.rho.v.size(); ++i) {
            brho.v[i] = b(st.rho.v[i]);
            pb += law.pressure(st.rho.v[i]) * brho.v[i] * vol;
        }
        I.pb_rate = ie2 * pb;

        // --- R1 ---------------------------------------------------------
        double r1 = 0.0;
        {
            auto adv = detail::advective_derivative(st.u, cm.U);
            for (int c = 0; c < g.dim; ++c) {
                auto rf = fields::scalar_at_faces(st.rho, c);
                for (std::size_t i = 0; i < st.u.comp[c].size(); ++i) {
                    const double Umu = cm.U.comp[c][i] - st.u.comp[c][i];
                    r1 += rf[i] * (cm.dt_U.comp[c][i] + adv.comp[c][i]) * Umu * vol;
                }
            }
            r1 += params.nu * detail::stress_inner(cm.U, st.u, params.mu);

            // eps^-2 (r - rho) dt P'(r), with dt P'(r) = -(p'(r)/r) varrho lap Psi
            for (std::size_t i = 0; i < st.rho.v.size(); ++i) {
                const double dtPp = -law.pressure_deriv(cm.r.v[i]) / cm.r.v[i] *
                                    params.varrho * cm.lap_psi.v[i];
                r1 += ie2 * (cm.r.v[i] - st.rho.v[i]) * dtPp * vol;
            }
            // eps^-2 (r U - rho u) . grad P'(r)
            fields::ScalarField Pp(g);
            for (std::size_t i = 0; i < Pp.v.size(); ++i)
                Pp.v[i] = law.potential_deriv_cached(cm.r.v[i]);
            auto gPp = fields::grad(Pp);
            for (int c = 0; c < g.dim; ++c) {
                auto rf = fields::scalar_at_faces(st.rho, c);
                auto rrf = fields::scalar_at_faces(cm.r, c);
                for (std::size_t i = 0; i < st.u.comp[c].size(); ++i) {
                    const double flux =
                        rrf[i] * cm.U.comp[c][i] - rf[i] * st.u.comp[c][i];
                    r1 += ie2 * flux * gPp.comp[c][i] * vol;
                }
            }
            // eps^-2 div U (p(r) - p(rho))
            auto divU = fields::div(cm.U);
            for (std::size_t i = 0; i < st.rho.v.size(); ++i)
                r1 += ie2 * divU.v[i] *
                      (law.pressure(cm.r.v[i]) - law.pressure(st.rho.v[i])) * vol;
        }
        I.r1_rate = r1;

        // --- R2 (Bogovskii terms) ----------------------------------------
        double r2 = 0.0;
        fields::VectorField B1;
        {
            const double bmean = fields::mean(brho);
            r2 += ie2 * bmean * [&] {
                double acc = 0.0;
                for (double rr : st.rho.v) acc += law.pressure(rr) * vol;
                return acc;
            }();

            fields::ScalarField b0 = brho;
            for (double& x : b0.v) x -= bmean;
            B1 = fields::bogovskii(b0).field;
            r2 -= detail::advection_inner(st, B1);
            r2 += params.nu * detail::stress_inner_plain(st.u, B1, params.mu);

            // div(b(rho) u): MAC flux of b at faces
            fields::VectorField bu(g);
            for (int c = 0; c < g.dim; ++c) {
                auto bf = fields::scalar_at_faces(brho, c);
                for (std::size_t i = 0; i < bu.comp[c].size(); ++i)
                    bu.comp[c][i] = bf[i] * st.u.comp[c][i];
            }
            bu.zero_boundary_faces();
            auto div_bu = fields::div(bu);
            auto B2 = fields::bogovskii(div_bu).field;
            r2 += detail::momentum_inner(st, B2);

            fields::ScalarField defect(g);
            auto divu = fields::div(st.u);
            for (std::size_t i = 0; i < defect.v.size(); ++i)
                defect.v[i] =
                    (b_prime(st.rho.v[i]) * st.rho.v[i] - brho.v[i]) * divu.v[i];
            const double dmean = fields::mean(defect);
            for (double& x : defect.v) x -= dmean;
            auto B3 = fields::bogovskii(defect).field;
            r2 += detail::momentum_inner(st, B3);
        }
        I.r2_rate = r2;
        I.r3_value = detail::momentum_inner(st, B1);
    }

    // cumulative trapezoid over snapshots
    double diss = 0.0, pb = 0.0, r1c = 0.0, r2c = 0.0;
    rep.rows.resize(traj.size());
    for (std::size_t n = 0; n < traj.size(); ++n) {
        if (n > 0) {
            const double dt = traj[n].t - traj[n - 1].t;
            diss += 0.5 * dt * (inst[n].diss_rate + inst[n - 1].diss_rate);
            pb += 0.5 * dt * (inst[n].pb_rate + inst[n - 1].pb_rate);
            r1c += 0.5 * dt * (inst[n].r1_rate + inst[n - 1].r1_rate);
            r2c += 0.5 * dt * (inst[n].r2_rate + inst[n - 1].r2_rate);
        }
        ReiRow row;
        row.tau = traj[n].t;
        row.entropy = inst[n].entropy;
        row.dissipation = diss;
        row.pb_term = pb;
        row.r1 = r1c;
        row.r2 = r2c;
        row.r3 = inst[n].r3_value - inst[0].r3_value;
        row.lhs = inst[n].entropy + diss + pb;
        row.rhs = inst[0].entropy + r1c + r2c + row.r3;
        row.lhs_minus_rhs = row.lhs - row.rhs;
        row.pass = row.lhs <= row.rhs + tol_rel * std::abs(row.rhs) + tol_abs;
        rep.passed = rep.passed && row.pass;
        rep.rows[n] = row;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Cancellation pairs
// ---------------------------------------------------------------------------

/// The three exact cancellations of the comparison-pair bookkeeping, each
/// evaluated through two distinct numerical routes.
struct CancellationReport {
    // acoustic energy exchange: (p'(vr)/2vr) [int s^2] vs (vr/2) [int |grad Psi|^2]
    double pair1_a = 0.0, pair1_b = 0.0;
    // int rho u . dt grad Psi : analytic route vs snapshot differencing
    double pair2_a = 0.0, pair2_b = 0.0;
    // eps^-2 p'(vr) int (rho - vr) lap Psi vs eps^-1 int (vr - rho) P''(vr) dt s
    double pair3_a = 0.0, pair3_b = 0.0;
    double rel1 = 0.0, rel2 = 0.0, rel3 = 0.0;
};

inline CancellationReport cancellation_pairs(
    const std::vector<cns::FluidState>& traj,
    const std::vector<ComparisonFields>& cmp_traj, const eos::PressureLaw& law,
    const cns::ScalingParams& params) {
    if (traj.size() != cmp_traj.size() || traj.size() < 3)
        throw SyncError("cancellation_pairs: need aligned trajectories (>= 3 snapshots)");
    const auto& g = traj.front().rho.grid;
    const double vol = g.cell_volume();
    const double eps = params.eps, vr = params.varrho;
    const double cp = law.pressure_deriv(vr);
    CancellationReport rep;

    // pair 1: endpoint differences of the acoustic energy split
    auto s_sq = [&](const ComparisonFields& c) {
        double acc = 0.0;
        for (double x : c.s.v) acc += x * x * vol;
        return acc;
    };
    auto gp_sq = [&](const ComparisonFields& c) {
        double acc = 0.0;
        for (int cc = 0; cc < g.dim; ++cc)
            for (double x : c.grad_psi.comp[cc]) acc += x * x * vol;
        return acc;
    };
    rep.pair1_a = 0.5 * cp / vr * (s_sq(cmp_traj.back()) - s_sq(cmp_traj.front()));
    rep.pair1_b = 0.5 * vr * (gp_sq(cmp_traj.back()) - gp_sq(cmp_traj.front()));
    rep.rel1 = std::abs(rep.pair1_a + rep.pair1_b) /
               (std::abs(rep.pair1_a) + std::abs(rep.pair1_b) + 1e-300);

    // pairs 2 and 3: time integrals over the trajectory
    double i4b = 0.0, j4f = 0.0, j5b = 0.0, i3d = 0.0;
    for (std::size_t n = 0; n < traj.size(); ++n) {
        const auto& st = traj[n];
        const auto& cm = cmp_traj[n];
        // analytic route: dt grad Psi = -(cp/(eps vr)) grad s; represented by
        // cm.dt_U minus its v and corrector parts is fiddly, so rebuild from s:
        // grad of P''(vr)-scaled s is not stored; use the stored dt of grad Psi
        // via finite differences for route b and the acoustic identity for a.
        double rate_a = 0.0;
        {
            // -(1/eps) (cp/vr) int rho u . grad s : compute grad s by stencil
            auto gs = fields::grad(cm.s);
            double acc = 0.0;
            for (int c = 0; c < g.dim; ++c) {
                auto rf = fields::scalar_at_faces(st.rho, c);
                for (std::size_t i = 0; i < st.u.comp[c].size(); ++i)
                    acc += rf[i] * st.u.comp[c][i] * gs.comp[c][i] * vol;
            }
            rate_a = -cp / (eps * vr) * acc;
        }
        double rate_b = 0.0;
        {
            // centered difference of grad Psi between neighbors
            const std::size_t nl = n == 0 ? 0 : n - 1;
            const std::size_t nr = n + 1 == traj.size() ? n : n + 1;
            const double dt = cmp_traj[nr].t - cmp_traj[nl].t;
            double acc = 0.0;
            for (int c = 0; c < g.dim; ++c) {
                auto rf = fields::scalar_at_faces(st.rho, c);
                for (std::size_t i = 0; i < st.u.comp[c].size(); ++i) {
                    const double d = (cmp_traj[nr].grad_psi.comp[c][i] -
                                      cmp_traj[nl].grad_psi.comp[c][i]) /
                                     dt;
                    acc += rf[i] * st.u.comp[c][i] * d * vol;
                }
            }
            rate_b = -acc; // J_{4,f} carries the minus sign
        }
        double rate_j5 = 0.0, rate_i3 = 0.0;
        {
            // the pressure-split term enters the remainder sum with an overall
            // minus (it comes from -eps^-2 int p(rho) div U), so the pole piece
            // is -eps^-2 p'(vr) int (rho - vr) lap Psi
            for (std::size_t i = 0; i < st.rho.v.size(); ++i)
                rate_j5 += (st.rho.v[i] - vr) * cm.lap_psi.v[i] * vol;
            rate_j5 *= -cp / (eps * eps);

            const std::size_t nl = n == 0 ? 0 : n - 1;
            const std::size_t nr = n + 1 == traj.size() ? n : n + 1;
            const double dt = cmp_traj[nr].t - cmp_traj[nl].t;
            for (std::size_t i = 0; i < st.rho.v.size(); ++i) {
                const double dts = (cmp_traj[nr].s.v[i] - cmp_traj[nl].s.v[i]) / dt;
                rate_i3 += (vr - st.rho.v[i]) * (cp / vr) * dts * vol;
            }
            rate_i3 /= eps;
        }
        // trapezoid weights
        double wgt;
        if (n == 0)
            wgt = 0.5 * (traj[1].t - traj[0].t);
        else if (n + 1 == traj.size())
            wgt = 0.5 * (traj[n].t - traj[n - 1].t);
        else
            wgt = 0.5 * (traj[n + 1].t - traj[n - 1].t);
        i4b += rate_a * wgt;
        j4f += rate_b * wgt;
        j5b += rate_j5 * wgt;
        i3d += rate_i3 * wgt;
    }
    rep.pair2_a = i4b;
    rep.pair2_b = j4f;
    rep.rel2 = std::abs(i4b + j4f) / (std::abs(i4b) + std::abs(j4f) + 1e-300);
    rep.pair3_a = j5b;
    rep.pair3_b = i3d;
    rep.rel3 = std::abs(j5b + i3d) / (std::abs(j5b) + std::abs(i3d) + 1e-300);
    return rep;
}

// ---------------------------------------------------------------------------
// Mean pressure estimate
// ---------------------------------------------------------------------------

struct MeanPressureReport {
    double direct = 0.0;        // |O|^-1 int_0^tau int p(rho)
    double bog_term = 0.0;      // |O|^-1 int_0^tau int p(rho)(rho - m)
    double j1 = 0.0, j2 = 0.0;  // split of bog_term at (rho_max + m)/2
    double m_mean = 0.0;        // m_{eps,R}
    double denominator = 0.0;   // rho_max - varrho - eps0 D
    double bound_value = 0.0;   // tau max p + 2/denominator (|bog| + |j1|)
    bool m_below_rho_max = true;
    bool bound_holds = true;
    double identity_gap_rel = 0.0; // Bogovskii identity residual, b(s) = s
};

inline MeanPressureReport mean_pressure_estimate(const std::vector<cns::FluidState>& traj,
                                                 const eos::PressureLaw& law,
                                                 const cns::ScalingParams& params) {
    MeanPressureReport rep;
    if (traj.size() < 2) return rep;
    const auto& g = traj.front().rho.grid;
    const double vol = g.cell_volume();
    const double volume = g.volume();
    rep.m_mean = fields::integral(traj.front().rho) / volume;
    rep.m_below_rho_max = rep.m_mean < law.rho_max();
    rep.denominator = law.rho_max() - params.varrho - params.eps0 * params.D;

    const double split = 0.5 * (law.rho_max() + rep.m_mean);
    const double theta = 0.5 * (law.rho_max() + params.varrho + params.eps0 * params.D);

    auto rate = [&](const cns::FluidState& st, double* bog, double* j1, double* j2) {
        double direct = 0.0, b = 0.0, a1 = 0.0, a2 = 0.0;
        for (double r : st.rho.v) {
            const double p = law.pressure(r);
            direct += p * vol;
            const double w = p * (r - rep.m_mean) * vol;
            b += w;
            if (r <= split)
                a1 += w;
            else
                a2 += w;
        }
        *bog = b / volume;
        *j1 = a1 / volume;
        *j2 = a2 / volume;
        return direct / volume;
    };

    double prev_d = 0.0, prev_b = 0.0, prev_1 = 0.0, prev_2 = 0.0;
    for (std::size_t n = 0; n < traj.size(); ++n) {
        double bn, j1n, j2n;
        const double dn = rate(traj[n], &bn, &j1n, &j2n);
        if (n > 0) {
            const double dt = traj[n].t - traj[n - 1].t;
            rep.direct += 0.5 * dt * (dn + prev_d);
            rep.bog_term += 0.5 * dt * (bn + prev_b);
            rep.j1 += 0.5 * dt * (j1n + prev_1);
            rep.j2 += 0.5 * dt * (j2n + prev_2);
        }
        prev_d = dn;
        prev_b = bn;
        prev_1 = j1n;
        prev_2 = j2n;
    }
    const double tau = traj.back().t - traj.front().t;
    double pmax = 0.0;
    for (int i = 0; i <= 256; ++i)
        pmax = std::max(pmax, law.pressure(theta * i / 256.0));
    rep.bound_value =
        tau * pmax + 2.0 / rep.denominator * (std::abs(rep.bog_term) + std::abs(rep.j1));
    rep.bound_holds = rep.direct <= rep.bound_value * (1.0 + 1e-12);

    // cross-check: the renormalized-pressure identity with b(s) = s
    {
        const double ie2 = 1.0 / (params.eps * params.eps);
        double lhs = 0.0, rhs_cum = 0.0, prev_lhs_rate = 0.0, prev_rhs_rate = 0.0;
        double r3_first = 0.0, r3_last = 0.0;
        for (std::size_t n = 0; n < traj.size(); ++n) {
            const auto& st = traj[n];
            double lhs_rate = 0.0;
            for (double r : st.rho.v)
                lhs_rate += law.pressure(r) * (r - rep.m_mean) * vol;
            lhs_rate *= ie2;

            fields::ScalarField rho0 = st.rho;
            const double rm = fields::mean(st.rho);
            for (double& x : rho0.v) x -= rm;
            auto B1 = fields::bogovskii(rho0).field;
            double rhs_rate = -detail::advection_inner(st, B1);
            rhs_rate += params.nu * detail::stress_inner_plain(st.u, B1, params.mu);
            fields::VectorField ru(st.rho.grid);
            for (int c = 0; c < st.rho.grid.dim; ++c) {
                auto rf = fields::scalar_at_faces(st.rho, c);
                for (std::size_t i = 0; i < ru.comp[c].size(); ++i)
                    ru.comp[c][i] = rf[i] * st.u.comp[c][i];
            }
            ru.zero_boundary_faces();
            auto div_ru = fields::div(ru);
            auto B2 = fields::bogovskii(div_ru).field;
            rhs_rate += detail::momentum_inner(st, B2);

            const double r3 = detail::momentum_inner(st, B1);
            if (n == 0) r3_first = r3;
            r3_last = r3;

            if (n > 0) {
                const double dt = traj[n].t - traj[n - 1].t;
                lhs += 0.5 * dt * (lhs_rate + prev_lhs_rate);
                rhs_cum += 0.5 * dt * (rhs_rate + prev_rhs_rate);
            }
            prev_lhs_rate = lhs_rate;
            prev_rhs_rate = rhs_rate;
        }
        const double rhs = rhs_cum + (r3_last - r3_first);
        rep.identity_gap_rel =
            std::abs(lhs - rhs) / (std::abs(lhs) + std::abs(rhs) + 1e-300);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Rate bound
// ---------------------------------------------------------------------------

struct RateBoundInputs {
    double eps = 0.1;
    double nu = 0.1;
    double R = 4.0;
    double alpha = 0.5;     // any exponent in (0, 1)
    double dist_u_sq = 0.0; // ||u_{0,eps} - u_0||_L2^2
    double dist_rho_sq = 0.0;
    double eps0 = 0.2;
    double eps1 = 0.5;
    double rho_max = 4.0;
    double varrho = 1.0;
    double D = 2.0;
    double c_DT = 1.0; // calibrated envelope constant
    double c2 = 1.0;   // initial-data constant
};

/// Additive slots of the rate bound; the assembled value is monotone
/// nondecreasing in every entry.
struct RateBoundBreakdown {
    // envelope slots: eps^alpha, 1/R, nu, eps^2 (1 + R^-2), eps/nu
    std::array<double, 5> envelope{};
    double dist_u_sq = 0.0;
    double dist_rho_sq = 0.0;
    // Gronwall slots: 1, eps^2 nu, eps^{4/3}/nu (1 + R^-4), eps^2, R^-2, eps^2 R^-2
    std::array<double, 6> gronwall{};
    // pole-pressure slots scaled by eps^2/(rho_max - varrho - eps0 D):
    // 1/(nu R), sqrt(nu) R^{-3/2}, 1
    std::array<double, 3> pole{};
    double pole_scale = 0.0;
    double c_DT = 1.0, c2 = 1.0;
};

inline RateBoundBreakdown rate_bound_breakdown(const RateBoundInputs& in) {
    if (!(in.eps > 0.0) || in.eps >= std::min(in.eps0, in.eps1))
        throw ParameterError("rate bound: eps must lie in (0, min(eps0, eps1))");
    if (!(in.alpha > 0.0 && in.alpha < 1.0))
        throw ParameterError("rate bound: alpha must lie in (0, 1)");
    const double iR = 1.0 / in.R;
    RateBoundBreakdown b;
    b.envelope = {std::pow(in.eps, in.alpha), iR, in.nu,
                  in.eps * in.eps * (1.0 + iR * iR), in.eps / in.nu};
    b.dist_u_sq = in.dist_u_sq;
    b.dist_rho_sq = in.dist_rho_sq;
    b.gronwall = {1.0,
                  in.eps * in.eps * in.nu,
                  std::pow(in.eps, 4.0 / 3.0) / in.nu * (1.0 + std::pow(iR, 4)),
                  in.eps * in.eps,
                  iR * iR,
                  in.eps * in.eps * iR * iR};
    b.pole = {1.0 / (in.nu * in.R), std::sqrt(in.nu) * std::pow(iR, 1.5), 1.0};
    b.pole_scale = in.eps * in.eps / (in.rho_max - in.varrho - in.eps0 * in.D);
    b.c_DT = in.c_DT;
    b.c2 = in.c2;
    return b;
}

inline double assemble_rate_bound(const RateBoundBreakdown& b) {
    double A = 0.0;
    for (double t : b.envelope) A += t;
    double C = 0.0;
    for (double t : b.gronwall) C += t;
    double E = 0.0;
    for (double t : b.pole) E += t;
    return (b.c_DT * A + b.c2 * (b.dist_u_sq + b.dist_rho_sq)) *
           std::exp(b.c_DT * C + b.c_DT * b.pole_scale * E);
}

/// Explicit right-hand side of the convergence-rate estimate, including the
/// Gronwall exponential with its displayed argument.
inline double rate_bound_rhs(const RateBoundInputs& in) {
    return assemble_rate_bound(rate_bound_breakdown(in));
}

/// Ceiling on eps so that r = varrho + eps s stays inside (0, rho_max), from
/// the measured sup norm of the acoustic perturbation.
inline double eps1_ceiling(double sup_s_inf, double rho_max, double varrho) {
    const double denom = std::max(1.05 * sup_s_inf, 1e-12);
    return std::min(rho_max - varrho, varrho) / denom;
}

} // namespace hslim::relent
