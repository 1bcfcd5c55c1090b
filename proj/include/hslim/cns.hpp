#pragma once

// Scaled compressible Navier-Stokes with a hard-sphere pressure law:
//   dt rho + div(rho u) = 0
//   dt(rho u) + div(rho u x u) - nu div S(grad u) + eps^-2 grad p(rho) = rho f
// Conservative finite volumes on the MAC staggering: upwinded mass flux,
// centered momentum advection, explicit RK4 under the acoustic CFL. Mass is
// conserved to roundoff by construction; the energy ledger tracks kinetic and
// potential energy and the viscous dissipation integral.
//
// The deviatoric stress uses the d-dependent factor; in one dimension the
// slab reduction of the 3d tensor applies, S = (4/3) mu dx(u).

#include <cmath>
#include <functional>
#include <vector>

#include "hslim/eos.hpp"
#include "hslim/errors.hpp"
#include "hslim/grid.hpp"
#include "hslim/ops.hpp"

namespace hslim::cns {

struct ScalingParams {
    double eps = 0.1;    // Mach number
    double nu = 0.1;     // viscosity scale
    double R = 4.0;      // domain radius parameter (box half-width)
    double D = 1.0;      // data radius
    double varrho = 1.0; // background density
    double T = 0.5;      // horizon
    double mu = 1.0;     // shear coefficient
    double eps0 = 0.25;  // admissibility ceiling for eps
};

/// Checks the admissibility inequalities: D^-1 < varrho - eps0 D,
/// varrho + eps0 D < rho_max, eps < eps0, and (optionally) the isolation
/// radius R > D + sqrt(p'(varrho)) T / eps.
inline void validate_scaling(const ScalingParams& p, const eos::PressureLaw& law,
                             bool require_isolation) {
    if (!(p.eps > 0.0) || !(p.nu > 0.0) || !(p.mu > 0.0) || !(p.T > 0.0))
        throw ParameterError("scaling parameters must be positive");
    if (!(1.0 / p.D < p.varrho - p.eps0 * p.D))
        throw ParameterError("admissibility: need D^-1 < varrho - eps0 D");
    if (!(p.varrho + p.eps0 * p.D < law.rho_max()))
        throw ParameterError("admissibility: need varrho + eps0 D < rho_max");
    if (!(p.eps < p.eps0))
        throw ParameterError("admissibility: need eps < eps0");
    if (require_isolation) {
        const double reach = p.D + std::sqrt(law.pressure_deriv(p.varrho)) * p.T / p.eps;
        if (!(p.R > reach))
            throw ParameterError("isolation radius: need R > D + sqrt(p'(varrho)) T/eps");
    }
}

struct EnergyLedger {
    double kinetic = 0.0;     // 1/2 int rho |u|^2
    double potential = 0.0;   // eps^-2 int P(rho)
    double dissipation = 0.0; // nu int_0^t int S(grad u) : grad u
    double mass = 0.0;        // int rho
};

struct FluidState {
    fields::ScalarField rho;
    fields::VectorField u;
    double t = 0.0;
    EnergyLedger ledger;
};

// ---------------------------------------------------------------------------
// Stress tensor
// ---------------------------------------------------------------------------

/// Cell-centered components of S(grad u); in 1d only sxx is populated.
struct StressField {
    fields::ScalarField sxx, sxy, syy;
};

namespace detail {

/// Cell-centered velocity gradient entries. For 2d: (dx ux, dy ux, dx uy, dy uy);
/// cross derivatives are node values averaged to centers (mirror ghosts at
/// no-slip walls, wrap on periodic grids).
struct GradU {
    fields::ScalarField dxux, dyux, dxuy, dyuy;
};

inline GradU velocity_gradient(const fields::VectorField& u) {
    const auto& g = u.grid;
    const bool per = g.boundary == fields::Boundary::Periodic;
    GradU out{fields::ScalarField(g), fields::ScalarField(g), fields::ScalarField(g),
              fields::ScalarField(g)};
    const double ihx = 1.0 / g.h(0);
    if (g.dim == 1) {
        const int n = g.cells[0];
        for (int i = 0; i < n; ++i) {
            const double ur = per ? u.at(0, (i + 1) % n) : u.at(0, i + 1);
            out.dxux.at(i) = (ur - u.at(0, i)) * ihx;
        }
        return out;
    }
    const int nx = g.cells[0], ny = g.cells[1];
    const double ihy = 1.0 / g.h(1);
    auto ux = [&](int i, int j) { // x-face values with ghosts in y
        if (per) return u.at(0, (i % nx + nx) % nx, (j % ny + ny) % ny);
        if (j < 0) return -u.at(0, i, 0);
        if (j >= ny) return -u.at(0, i, ny - 1);
        return u.at(0, i, j);
    };
    auto uy = [&](int i, int j) {
        if (per) return u.at(1, (i % nx + nx) % nx, (j % ny + ny) % ny);
        if (i < 0) return -u.at(1, 0, j);
        if (i >= nx) return -u.at(1, nx - 1, j);
        return u.at(1, i, j);
    };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double uxr = per ? ux(i + 1, j) : u.at(0, i + 1, j);
            const double uyr = per ? uy(i, j + 1) : u.at(1, i, j + 1);
            out.dxux.at(i, j) = (uxr - ux(i, j)) * ihx;
            out.dyuy.at(i, j) = (uyr - uy(i, j)) * ihy;
            // node-centered cross derivatives averaged to the cell center
            double dyux = 0.0, dxuy = 0.0;
            for (int dj = 0; dj <= 1; ++dj)
                for (int di = 0; di <= 1; ++di) {
                    const int fi = i + di, fj = j + dj;
                    // node (fi, fj): d/dy of ux and d/dx of uy
                    const double a = per ? ux(fi % nx, fj) - ux(fi % nx, fj - 1)
                                         : ux(std::min(fi, nx), fj) -
                                               ux(std::min(fi, nx), fj - 1);
                    const double b = per ? uy(fi, fj % ny) - uy(fi - 1, fj % ny)
                                         : uy(fi, std::min(fj, ny)) -
                                               uy(fi - 1, std::min(fj, ny));
                    dyux += 0.25 * a * ihy;
                    dxuy += 0.25 * b * ihx;
                }
            out.dyux.at(i, j) = dyux;
            out.dxuy.at(i, j) = dxuy;
        }
    return out;
}

} // namespace detail

inline StressField stress_tensor(const fields::VectorField& u, double mu) {
    const auto& g = u.grid;
    auto gu = detail::velocity_gradient(u);
    StressField s{fields::ScalarField(g), fields::ScalarField(g), fields::ScalarField(g)};
    if (g.dim == 1) {
        for (std::size_t i = 0; i < s.sxx.v.size(); ++i)
            s.sxx.v[i] = 4.0 / 3.0 * mu * gu.dxux.v[i];
        return s;
    }
    for (std::size_t i = 0; i < s.sxx.v.size(); ++i) {
        const double divu = gu.dxux.v[i] + gu.dyuy.v[i];
        s.sxx.v[i] = mu * (2.0 * gu.dxux.v[i] - divu);
        s.syy.v[i] = mu * (2.0 * gu.dyuy.v[i] - divu);
        s.sxy.v[i] = mu * (gu.dyux.v[i] + gu.dxuy.v[i]);
    }
    return s;
}

/// Pointwise dissipation density S(grad u) : grad u >= 0 at cell centers.
inline fields::ScalarField stress_dissipation_density(const fields::VectorField& u,
                                                      double mu) {
    const auto& g = u.grid;
    auto gu = detail::velocity_gradient(u);
    fields::ScalarField out(g);
    if (g.dim == 1) {
        for (std::size_t i = 0; i < out.v.size(); ++i)
            out.v[i] = 4.0 / 3.0 * mu * gu.dxux.v[i] * gu.dxux.v[i];
        return out;
    }
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        const double divu = gu.dxux.v[i] + gu.dyuy.v[i];
        const double d0xx = gu.dxux.v[i] - 0.5 * divu;
        const double d0yy = gu.dyuy.v[i] - 0.5 * divu;
        const double d0xy = 0.5 * (gu.dyux.v[i] + gu.dxuy.v[i]);
        out.v[i] = 2.0 * mu * (d0xx * d0xx + d0yy * d0yy + 2.0 * d0xy * d0xy);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

struct CnsOptions {
    double cfl_acoustic = 0.4;
    double cfl_advective = 0.4;
    double cfl_viscous = 0.25;
    double density_margin_frac = 1e-6; // barrier at rho_max (1 - margin)
    double dt_override = 0.0;          // 0 = automatic stable step
    const fields::VectorField* forcing = nullptr; // optional, time-independent
};

namespace detail {

struct Workspace {
    fields::ScalarField rho;
    fields::VectorField m; // momentum at faces
};

/// Face density as the average of the adjacent cells.
inline std::vector<double> face_density(const fields::ScalarField& rho, int c) {
    return fields::scalar_at_faces(rho, c);
}

/// Velocity from momentum at an interior 2d face (no bounds handling).
inline double u_interior(const Workspace& w, int c, int i, int j) {
    const double rf = c == 0 ? 0.5 * (w.rho.at(i - 1, j) + w.rho.at(i, j))
                             : 0.5 * (w.rho.at(i, j - 1) + w.rho.at(i, j));
    return w.m.at(c, i, j) / rf;
}

} // namespace detail

class CompressibleSolver {
public:
    CompressibleSolver(const fields::ScalarField& rho0, const fields::VectorField& u0,
                       const eos::PressureLaw& law, const ScalingParams& params,
                       CnsOptions opts = {})
        : grid_(rho0.grid), law_(law), prm_(params), opts_(opts) {
        fields::check_same_grid(rho0.grid, u0.grid);
        if (grid_.dim > 2) throw GridError("compressible solver supports dim 1 and 2");
        state_.rho = rho0;
        state_.m = fields::VectorField(grid_);
        for (int c = 0; c < grid_.dim; ++c) {
            auto rf = detail::face_density(rho0, c);
            for (std::size_t i = 0; i < rf.size(); ++i)
                state_.m.comp[c][i] = rf[i] * u0.comp[c][i];
        }
        state_.m.zero_boundary_faces();
        check_density(state_.rho);
        mass0_ = fields::integral(state_.rho);
    }

    const fields::GridSpec& grid() const { return grid_; }
    double time() const { return t_; }
    double dissipation() const { return diss_; }

    fields::VectorField velocity() const { return velocity_of(state_); }

    FluidState emit() const {
        FluidState st;
        st.t = t_;
        st.rho = state_.rho;
        st.u = velocity_of(state_);
        st.ledger = ledger_of(state_, st.u);
        return st;
    }

    /// Advance to the target time with CFL-limited steps.
    void advance_to(double t_target) {
        while (t_ < t_target - 1e-13) {
            const double dt_stable = stable_dt();
            double dt = dt_stable;
            if (opts_.dt_override > 0.0) {
                if (opts_.dt_override > dt_stable * (1.0 + 1e-9))
                    throw CFLError("requested time step exceeds the stability limit");
                dt = opts_.dt_override;
            }
            step(std::min(dt, t_target - t_));
        }
    }

    double stable_dt() const {
        double h = grid_.h(0);
        for (int a = 1; a < grid_.dim; ++a) h = std::min(h, grid_.h(a));
        double pmax = 0.0, rho_min = 1e300, umax = 0.0;
        for (double r : state_.rho.v) {
            pmax = std::max(pmax, law_.pressure_deriv(std::max(r, 1e-12)));
            rho_min = std::min(rho_min, r);
        }
        auto u = velocity_of(state_);
        for (int c = 0; c < grid_.dim; ++c)
            for (double v : u.comp[c]) umax = std::max(umax, std::abs(v));
        const double mu_eff = (grid_.dim == 1 ? 4.0 / 3.0 : 1.0) * prm_.mu;
        const double dt_ac = opts_.cfl_acoustic * h * prm_.eps / std::sqrt(pmax);
        const double dt_ad = opts_.cfl_advective * h / std::max(umax, 1e-12);
        const double dt_vi = opts_.cfl_viscous * h * h * std::max(rho_min, 1e-12) /
                             (prm_.nu * mu_eff * 2.0 * grid_.dim);
        return std::min({dt_ac, dt_ad, dt_vi});
    }

    void step(double dt) {
        // classic RK4 on (rho, m), with the dissipation integral carried as an
        // extra quadrature variable
        auto& s0 = state_;
        check_density(s0.rho);
        Deriv k1 = rhs(s0);
        auto s2 = advanced(s0, k1, 0.5 * dt);
        Deriv k2 = rhs(s2);
        auto s3 = advanced(s0, k2, 0.5 * dt);
        Deriv k3 = rhs(s3);
        auto s4 = advanced(s0, k3, dt);
        Deriv k4 = rhs(s4);

        for (std::size_t i = 0; i < s0.rho.v.size(); ++i)
            s0.rho.v[i] += dt / 6.0 * (k1.drho.v[i] + 2.0 * k2.drho.v[i] +
                                       2.0 * k3.drho.v[i] + k4.drho.v[i]);
        for (int c = 0; c < grid_.dim; ++c)
            for (std::size_t i = 0; i < s0.m.comp[c].size(); ++i)
                s0.m.comp[c][i] += dt / 6.0 * (k1.dm.comp[c][i] + 2.0 * k2.dm.comp[c][i] +
                                               2.0 * k3.dm.comp[c][i] + k4.dm.comp[c][i]);
        s0.m.zero_boundary_faces();
        diss_ += dt / 6.0 *
                 (k1.diss_rate + 2.0 * k2.diss_rate + 2.0 * k3.diss_rate + k4.diss_rate);
        t_ += dt;
        check_density(s0.rho);
    }

private:
    struct Deriv {
        fields::ScalarField drho;
        fields::VectorField dm;
        double diss_rate = 0.0;
    };

    void check_density(const fields::ScalarField& rho) const {
        const double rb = law_.rho_max();
        const double lo = opts_.density_margin_frac * rb;
        const double hi = rb * (1.0 - opts_.density_margin_frac);
        for (double r : rho.v) {
            if (!(r >= lo && r <= hi))
                throw DensityError("density " + std::to_string(r) +
                                   " left the admissible interval [" +
                                   std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
    }

    fields::VectorField velocity_of(const detail::Workspace& w) const {
        fields::VectorField u(grid_);
        for (int c = 0; c < grid_.dim; ++c) {
            auto rf = detail::face_density(w.rho, c);
            for (std::size_t i = 0; i < u.comp[c].size(); ++i)
                u.comp[c][i] = w.m.comp[c][i] / rf[i];
        }
        u.zero_boundary_faces();
        return u;
    }

    EnergyLedger ledger_of(const detail::Workspace& w, const fields::VectorField& u) const {
        EnergyLedger led;
        led.mass = fields::integral(w.rho);
        const double vol = grid_.cell_volume();
        double kin = 0.0;
        for (int c = 0; c < grid_.dim; ++c) {
            auto rf = detail::face_density(w.rho, c);
            for (std::size_t i = 0; i < u.comp[c].size(); ++i)
                kin += 0.5 * rf[i] * u.comp[c][i] * u.comp[c][i] * vol;
        }
        led.kinetic = kin;
        double pot = 0.0;
        for (double r : w.rho.v) pot += law_.potential_cached(r) * vol;
        led.potential = pot / (prm_.eps * prm_.eps);
        led.dissipation = diss_;
        return led;
    }

    static detail::Workspace advanced(const detail::Workspace& s, const Deriv& k,
                                      double dt) {
        detail::Workspace out = s;
        for (std::size_t i = 0; i < out.rho.v.size(); ++i)
            out.rho.v[i] += dt * k.drho.v[i];
        for (int c = 0; c < out.m.grid.dim; ++c)
            for (std::size_t i = 0; i < out.m.comp[c].size(); ++i)
                out.m.comp[c][i] += dt * k.dm.comp[c][i];
        out.m.zero_boundary_faces();
        return out;
    }

    Deriv rhs(const detail::Workspace& w) const {
        check_density(w.rho);
        return grid_.dim == 1 ? rhs_1d(w) : rhs_2d(w);
    }

    Deriv rhs_1d(const detail::Workspace& w) const;
    Deriv rhs_2d(const detail::Workspace& w) const;

    fields::GridSpec grid_;
    const eos::PressureLaw& law_;
    ScalingParams prm_;
    CnsOptions opts_;
    detail::Workspace state_;
    double t_ = 0.0;
    double diss_ = 0.0;
    double mass0_ = 0.0;
};

inline CompressibleSolver::Deriv CompressibleSolver::rhs_1d(
    const detail::Workspace& w) const {
    const auto& g = grid_;
    const int n = g.cells[0];
    const bool per = g.boundary == fields::Boundary::Periodic;
    const double h = g.h(0), ih = 1.0 / h;
    const double ie2 = 1.0 / (prm_.eps * prm_.eps);
    const double visc = prm_.nu * 4.0 / 3.0 * prm_.mu;

    Deriv d{fields::ScalarField(g), fields::VectorField(g), 0.0};

    auto rho_at = [&](int i) { return w.rho.at(((i % n) + n) % n); };
    const int nf = g.face_cells(0, 0);
    auto u_at = [&](int i) -> double {
        if (per) return w.m.at(0, ((i % n) + n) % n) /
                        (0.5 * (rho_at(i - 1) + rho_at(i)));
        if (i <= 0 || i >= nf - 1) return 0.0;
        return w.m.at(0, i) / (0.5 * (w.rho.at(i - 1) + w.rho.at(i)));
    };

    // mass: upwinded flux at faces
    std::vector<double> flux(per ? n : n + 1, 0.0);
    for (int i = 0; i < static_cast<int>(flux.size()); ++i) {
        const double uf = u_at(i);
        const double rup = uf > 0.0 ? rho_at(i - 1) : rho_at(i);
        flux[i] = rup * uf;
    }
    if (!per) {
        flux.front() = 0.0;
        flux.back() = 0.0;
    }
    for (int i = 0; i < n; ++i) {
        const double fr = per ? flux[(i + 1) % n] : flux[i + 1];
        d.drho.at(i) = -(fr - flux[i]) * ih;
    }

    // momentum: centered advection + pressure + viscous
    std::vector<double> adv(n); // rho u^2 at centers
    for (int i = 0; i < n; ++i) {
        const double uc = 0.5 * (u_at(i) + u_at(i + 1));
        adv[i] = w.rho.at(i) * uc * uc;
    }
    std::vector<double> p(n);
    for (int i = 0; i < n; ++i) p[i] = law_.pressure(w.rho.at(i));

    const int ilo = per ? 0 : 1; // no-slip keeps the boundary faces pinned
    for (int i = ilo; i < n; ++i) {
        const double adv_l = adv[((i - 1) % n + n) % n];
        const double adv_r = adv[i % n];
        const double p_l = p[((i - 1) % n + n) % n];
        const double p_r = p[i % n];
        const double lap_u = (u_at(i + 1) - 2.0 * u_at(i) + u_at(i - 1)) * ih * ih;
        double dm = -(adv_r - adv_l) * ih - ie2 * (p_r - p_l) * ih + visc * lap_u;
        if (opts_.forcing) {
            const double rf = 0.5 * (rho_at(i - 1) + rho_at(i));
            dm += rf * opts_.forcing->at(0, i);
        }
        d.dm.at(0, i) = dm;
    }

    // dissipation rate nu int S:grad u
    double rate = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dux = (u_at(i + 1) - u_at(i)) * ih;
        rate += 4.0 / 3.0 * prm_.mu * dux * dux * h;
    }
    d.diss_rate = prm_.nu * rate;
    return d;
}

inline CompressibleSolver::Deriv CompressibleSolver::rhs_2d(
    const detail::Workspace& w) const {
    const auto& g = grid_;
    const int nx = g.cells[0], ny = g.cells[1];
    const bool per = g.boundary == fields::Boundary::Periodic;
    const double hx = g.h(0), hy = g.h(1);
    const double ihx = 1.0 / hx, ihy = 1.0 / hy;
    const double ie2 = 1.0 / (prm_.eps * prm_.eps);
    const double visc = prm_.nu * prm_.mu; // div S = mu lap u in 2d

    Deriv d{fields::ScalarField(g), fields::VectorField(g), 0.0};

    auto rho_at = [&](int i, int j) {
        return w.rho.at(((i % nx) + nx) % nx, ((j % ny) + ny) % ny);
    };
    auto u_at = [&](int i, int j) -> double { // x-velocity at x-face (i, j)
        if (per) {
            const int ii = ((i % nx) + nx) % nx, jj = ((j % ny) + ny) % ny;
            return w.m.at(0, ii, jj) / (0.5 * (rho_at(ii - 1, jj) + rho_at(ii, jj)));
        }
        if (i <= 0 || i >= nx) return 0.0;
        if (j < 0) return -detail::u_interior(w, 0, i, 0);
        if (j >= ny) return -detail::u_interior(w, 0, i, ny - 1);
        return detail::u_interior(w, 0, i, j);
    };
    auto v_at = [&](int i, int j) -> double { // y-velocity at y-face (i, j)
        if (per) {
            const int ii = ((i % nx) + nx) % nx, jj = ((j % ny) + ny) % ny;
            return w.m.at(1, ii, jj) / (0.5 * (rho_at(ii, jj - 1) + rho_at(ii, jj)));
        }
        if (j <= 0 || j >= ny) return 0.0;
        if (i < 0) return -detail::u_interior(w, 1, 0, j);
        if (i >= nx) return -detail::u_interior(w, 1, nx - 1, j);
        return detail::u_interior(w, 1, i, j);
    };

    // ---- mass
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double ufl = u_at(i, j), ufr = u_at(i + 1, j);
            const double vfl = v_at(i, j), vfr = v_at(i, j + 1);
            const double fxl = (ufl > 0.0 ? rho_at(i - 1, j) : rho_at(i, j)) * ufl;
            const double fxr = (ufr > 0.0 ? rho_at(i, j) : rho_at(i + 1, j)) * ufr;
            const double fyl = (vfl > 0.0 ? rho_at(i, j - 1) : rho_at(i, j)) * vfl;
            const double fyr = (vfr > 0.0 ? rho_at(i, j) : rho_at(i, j + 1)) * vfr;
            d.drho.at(i, j) = -(fxr - fxl) * ihx - (fyr - fyl) * ihy;
        }

    std::vector<double> p(static_cast<std::size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            p[static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * j] =
                law_.pressure(w.rho.at(i, j));
    auto p_at = [&](int i, int j) {
        return p[static_cast<std::size_t>(((i % nx) + nx) % nx) +
                 static_cast<std::size_t>(nx) * (((j % ny) + ny) % ny)];
    };

    // ---- x-momentum at x-faces
    const int ix0 = per ? 0 : 1;
    for (int j = 0; j < ny; ++j)
        for (int i = ix0; i < nx; ++i) {
            // d/dx (rho u u) with centered cell values
            auto cc = [&](int ic) {
                const double uc = 0.5 * (u_at(ic, j) + u_at(ic + 1, j));
                return rho_at(ic, j) * uc * uc;
            };
            const double ax = (cc(i) - cc(i - 1)) * ihx;
            // d/dy (rho v u) at nodes
            auto nodef = [&](int jn) {
                const double vn = 0.5 * (v_at(i - 1, jn) + v_at(i, jn));
                const double un = 0.5 * (u_at(i, jn - 1) + u_at(i, jn));
                const double rn = 0.25 * (rho_at(i - 1, jn - 1) + rho_at(i, jn - 1) +
                                          rho_at(i - 1, jn) + rho_at(i, jn));
                return rn * vn * un;
            };
            const double ay = (nodef(j + 1) - nodef(j)) * ihy;
            const double lap = (u_at(i + 1, j) - 2.0 * u_at(i, j) + u_at(i - 1, j)) *
                                   ihx * ihx +
                               (u_at(i, j + 1) - 2.0 * u_at(i, j) + u_at(i, j - 1)) *
                                   ihy * ihy;
            double dm = -(ax + ay) - ie2 * (p_at(i, j) - p_at(i - 1, j)) * ihx +
                        visc * lap;
            if (opts_.forcing) {
                const double rf = 0.5 * (rho_at(i - 1, j) + rho_at(i, j));
                dm += rf * opts_.forcing->at(0, i, j);
            }
            d.dm.at(0, i, j) = dm;
        }

    // ---- y-momentum at y-faces
    const int jy0 = per ? 0 : 1;
    for (int j = jy0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            auto cc = [&](int jc) {
                const double vc = 0.5 * (v_at(i, jc) + v_at(i, jc + 1));
                return rho_at(i, jc) * vc * vc;
            };
            const double ay = (cc(j) - cc(j - 1)) * ihy;
            auto nodef = [&](int in) {
                const double un = 0.5 * (u_at(in, j - 1) + u_at(in, j));
                const double vn = 0.5 * (v_at(in - 1, j) + v_at(in, j));
                const double rn = 0.25 * (rho_at(in - 1, j - 1) + rho_at(in, j - 1) +
                                          rho_at(in - 1, j) + rho_at(in, j));
                return rn * un * vn;
            };
            const double ax = (nodef(i + 1) - nodef(i)) * ihx;
            const double lap = (v_at(i + 1, j) - 2.0 * v_at(i, j) + v_at(i - 1, j)) *
                                   ihx * ihx +
                               (v_at(i, j + 1) - 2.0 * v_at(i, j) + v_at(i, j - 1)) *
                                   ihy * ihy;
            double dm = -(ax + ay) - ie2 * (p_at(i, j) - p_at(i, j - 1)) * ihy +
                        visc * lap;
            if (opts_.forcing) {
                const double rf = 0.5 * (rho_at(i, j - 1) + rho_at(i, j));
                dm += rf * opts_.forcing->at(1, i, j);
            }
            d.dm.at(1, i, j) = dm;
        }

    // ---- dissipation rate from the deviatoric quadratic form
    fields::VectorField u(g);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i <= (per ? nx - 1 : nx); ++i) u.at(0, i, j) = u_at(i, j);
    for (int j = 0; j <= (per ? ny - 1 : ny); ++j)
        for (int i = 0; i < nx; ++i) u.at(1, i, j) = v_at(i, j);
    auto dd = stress_dissipation_density(u, prm_.mu);
    d.diss_rate = prm_.nu * fields::integral(dd);
    return d;
}

/// Trajectory on [0, T] with snapshots every emit_dt.
inline std::vector<FluidState> solve_cns(const fields::ScalarField& rho0,
                                         const fields::VectorField& u0,
                                         const eos::PressureLaw& law,
                                         const ScalingParams& params, double emit_dt,
                                         CnsOptions opts = {}) {
    CompressibleSolver solver(rho0, u0, law, params, opts);
    std::vector<FluidState> out;
    out.push_back(solver.emit());
    const auto n = static_cast<long>(std::llround(params.T / emit_dt));
    for (long e = 1; e <= n; ++e) {
        solver.advance_to(static_cast<double>(e) * emit_dt);
        out.push_back(solver.emit());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weak-solution diagnostics
// ---------------------------------------------------------------------------

/// Worst signed residual of the energy inequality over the trajectory:
/// max_tau [E(tau) + dissipation(tau) - E(0)] / E_rel(0), where E_rel
/// subtracts the conserved affine part of the potential (so the normalizer is
/// the nonnegative entropy of the initial datum relative to equilibrium).
inline double energy_inequality_residual(const std::vector<FluidState>& traj,
                                         const eos::PressureLaw& law,
                                         const ScalingParams& params) {
    if (traj.empty()) return 0.0;
    const auto& first = traj.front();
    const double E0 = first.ledger.kinetic + first.ledger.potential;
    const double vol = first.rho.grid.cell_volume();
    double rel0 = first.ledger.kinetic;
    for (double r : first.rho.v)
        rel0 += law.bregman_gap(r, params.varrho) * vol / (params.eps * params.eps);
    double worst = -1e300;
    for (std::size_t n = 1; n < traj.size(); ++n) {
        const auto& st = traj[n];
        const double num =
            st.ledger.kinetic + st.ledger.potential + st.ledger.dissipation - E0;
        worst = std::max(worst, num);
    }
    if (traj.size() < 2) return 0.0;
    if (rel0 < 1e-14) return std::abs(worst) < 1e-12 ? 0.0 : worst / 1e-14;
    return worst / rel0;
}

/// Relative drift of the total mass across the trajectory.
inline double mass_drift(const std::vector<FluidState>& traj) {
    if (traj.empty()) return 0.0;
    const double m0 = traj.front().ledger.mass;
    double worst = 0.0;
    for (const auto& st : traj)
        worst = std::max(worst, std::abs(st.ledger.mass - m0) / std::abs(m0));
    return worst;
}

/// Smooth compactly supported space-time test function psi(t, x) = T(t) X(x).
struct TestFunction {
    double t0, t1;        // temporal support
    double x0, y0;        // spatial center
    double radius;        // spatial support radius
    double time_bump(double t) const {
        if (t <= t0 || t >= t1) return 0.0;
        const double z = (2.0 * (t - t0) / (t1 - t0) - 1.0);
        return std::exp(-1.0 / (1.0 - z * z));
    }
    double time_bump_dt(double t) const {
        if (t <= t0 || t >= t1) return 0.0;
        const double z = (2.0 * (t - t0) / (t1 - t0) - 1.0);
        const double dz = 2.0 / (t1 - t0);
        const double e = std::exp(-1.0 / (1.0 - z * z));
        return e * (-2.0 * z / ((1.0 - z * z) * (1.0 - z * z))) * dz;
    }
    double space(double x, double y = 0.0) const {
        const double r2 = ((x - x0) * (x - x0) + (y - y0) * (y - y0)) /
                          (radius * radius);
        if (r2 >= 1.0) return 0.0;
        return std::exp(-1.0 / (1.0 - r2));
    }
    double space_dx(double x, double y = 0.0) const {
        const double r2 = ((x - x0) * (x - x0) + (y - y0) * (y - y0)) /
                          (radius * radius);
        if (r2 >= 1.0) return 0.0;
        const double e = std::exp(-1.0 / (1.0 - r2));
        return e * (-2.0 * (x - x0) / (radius * radius)) / ((1.0 - r2) * (1.0 - r2));
    }
    double space_dy(double x, double y) const {
        const double r2 = ((x - x0) * (x - x0) + (y - y0) * (y - y0)) /
                          (radius * radius);
        if (r2 >= 1.0) return 0.0;
        const double e = std::exp(-1.0 / (1.0 - r2));
        return e * (-2.0 * (y - y0) / (radius * radius)) / ((1.0 - r2) * (1.0 - r2));
    }
};

/// Residual of the renormalized continuity equation in weak form:
///   int int [ b(rho) dt(psi) + b(rho) u . grad(psi)
///             - (b'(rho) rho - b(rho)) div(u) psi ] = 0.
/// Returns the max |residual| over the supplied test functions.
inline double renormalized_residual(const std::vector<FluidState>& traj,
                                    const std::function<double(double)>& b,
                                    const std::function<double(double)>& b_prime,
                                    const std::vector<TestFunction>& tests) {
    if (traj.size() < 2) return 0.0;
    const auto& g = traj.front().rho.grid;
    const double vol = g.cell_volume();
    double worst = 0.0;
    for (const auto& tf : tests) {
        double acc = 0.0;
        for (std::size_t n = 0; n < traj.size(); ++n) {
            const auto& st = traj[n];
            const double t = st.t;
            const double Tt = tf.time_bump(t);
            const double dTt = tf.time_bump_dt(t);
            auto divu = fields::div(st.u);
            double cell_part = 0.0, face_part = 0.0;
            if (g.dim == 1) {
                for (int i = 0; i < g.cells[0]; ++i) {
                    const double x = g.center(0, i);
                    const double r = st.rho.at(i);
                    cell_part += (b(r) * tf.space(x) * dTt -
                                  (b_prime(r) * r - b(r)) * divu.at(i) * tf.space(x) * Tt) *
                                 vol;
                }
                auto bf = fields::scalar_at_faces(st.rho, 0);
                const int m = g.face_cells(0, 0);
                for (int i = 0; i < m; ++i) {
                    const double xf = g.face(0, i);
                    face_part += b(bf[i]) * st.u.at(0, i) * tf.space_dx(xf) * Tt * vol;
                }
            } else {
                for (int j = 0; j < g.cells[1]; ++j)
                    for (int i = 0; i < g.cells[0]; ++i) {
                        const double x = g.center(0, i), y = g.center(1, j);
                        const double r = st.rho.at(i, j);
                        cell_part +=
                            (b(r) * tf.space(x, y) * dTt -
                             (b_prime(r) * r - b(r)) * divu.at(i, j) * tf.space(x, y) * Tt) *
                            vol;
                    }
                auto bfx = fields::scalar_at_faces(st.rho, 0);
                const int mx = g.face_cells(0, 0), my0 = g.face_cells(0, 1);
                for (int j = 0; j < my0; ++j)
                    for (int i = 0; i < mx; ++i) {
                        const double xf = g.face(0, i), yc = g.center(1, j);
                        face_part += b(bfx[static_cast<std::size_t>(i) +
                                            static_cast<std::size_t>(mx) * j]) *
                                     st.u.at(0, i, j) * tf.space_dx(xf, yc) * Tt * vol;
                    }
                auto bfy = fields::scalar_at_faces(st.rho, 1);
                const int mx1 = g.face_cells(1, 0), my1 = g.face_cells(1, 1);
                for (int j = 0; j < my1; ++j)
                    for (int i = 0; i < mx1; ++i) {
                        const double xc = g.center(0, i), yf = g.face(1, j);
                        face_part += b(bfy[static_cast<std::size_t>(i) +
                                            static_cast<std::size_t>(mx1) * j]) *
                                     st.u.at(1, i, j) * tf.space_dy(xc, yf) * Tt * vol;
                    }
            }
            const double integrand = cell_part + face_part;
            // trapezoid in time
            double wgt;
            if (n == 0)
                wgt = 0.5 * (traj[1].t - traj[0].t);
            else if (n + 1 == traj.size())
                wgt = 0.5 * (traj[n].t - traj[n - 1].t);
            else
                wgt = 0.5 * (traj[n + 1].t - traj[n - 1].t);
            acc += integrand * wgt;
        }
        worst = std::max(worst, std::abs(acc));
    }
    return worst;
}

/// Residual of the momentum equation in weak form, tested against compactly
/// supported space-time functions phi = psi(t, x) e_c:
///   int int [ rho u_c dt(psi) + sum_a (rho u_a u_c - nu S_{ca}) da(psi)
///             + eps^-2 p(rho) dc(psi) ] -> 0 as h -> 0.
inline double momentum_weak_residual(const std::vector<FluidState>& traj,
                                     const eos::PressureLaw& law,
                                     const ScalingParams& params,
                                     const std::vector<TestFunction>& tests) {
    if (traj.size() < 2) return 0.0;
    const auto& g = traj.front().rho.grid;
    const double vol = g.cell_volume();
    const double ie2 = 1.0 / (params.eps * params.eps);
    double worst = 0.0;
    for (const auto& tf : tests) {
        for (int c = 0; c < g.dim; ++c) {
            double acc = 0.0;
            for (std::size_t n = 0; n < traj.size(); ++n) {
                const auto& st = traj[n];
                const double Tt = tf.time_bump(st.t);
                const double dTt = tf.time_bump_dt(st.t);
                auto s = stress_tensor(st.u, params.mu);
                auto uc = fields::component_at_centers(st.u, c);
                double cell = 0.0;
                if (g.dim == 1) {
                    for (int i = 0; i < g.cells[0]; ++i) {
                        const double x = g.center(0, i);
                        const double m = st.rho.at(i) * uc.at(i);
                        const double flux = st.rho.at(i) * uc.at(i) * uc.at(i) -
                                            params.nu * s.sxx.at(i) +
                                            ie2 * law.pressure(st.rho.at(i));
                        cell += (m * tf.space(x) * dTt + flux * tf.space_dx(x) * Tt) *
                                vol;
                    }
                } else {
                    auto ux = fields::component_at_centers(st.u, 0);
                    auto uy = fields::component_at_centers(st.u, 1);
                    for (int j = 0; j < g.cells[1]; ++j)
                        for (int i = 0; i < g.cells[0]; ++i) {
                            const double x = g.center(0, i), y = g.center(1, j);
                            const double r = st.rho.at(i, j);
                            const double vc = c == 0 ? ux.at(i, j) : uy.at(i, j);
                            const double m = r * vc;
                            const double scx =
                                c == 0 ? s.sxx.at(i, j) : s.sxy.at(i, j);
                            const double scy =
                                c == 0 ? s.sxy.at(i, j) : s.syy.at(i, j);
                            double fx = r * ux.at(i, j) * vc - params.nu * scx;
                            double fy = r * uy.at(i, j) * vc - params.nu * scy;
                            const double p = ie2 * law.pressure(r);
                            if (c == 0)
                                fx += p;
                            else
                                fy += p;
                            cell += (m * tf.space(x, y) * dTt +
                                     fx * tf.space_dx(x, y) * Tt +
                                     fy * tf.space_dy(x, y) * Tt) *
                                    vol;
                        }
                }
                double wgt;
                if (n == 0)
                    wgt = 0.5 * (traj[1].t - traj[0].t);
                else if (n + 1 == traj.size())
                    wgt = 0.5 * (traj[n].t - traj[n - 1].t);
                else
                    wgt = 0.5 * (traj[n + 1].t - traj[n - 1].t);
                acc += cell * wgt;
            }
            worst = std::max(worst, std::abs(acc));
        }
    }
    return worst;
}

/// Parameter-uniform estimate report. When ceilings are declared, quantities
/// exceeding them are flagged by name.
struct UniformEstimates {
    double sup_sqrt_rho_u_l2 = 0.0;    // sup_t || sqrt(rho) u ||_L2
    double sup_scaled_density_l2 = 0.0; // sup_t || (rho - varrho)/eps ||_L2
    double sqrt_nu_grad_u_l2l2 = 0.0;  // sqrt(nu) || grad u ||_{L2(L2)}
    double sup_low_set_measure = 0.0;  // sup_t |{rho < alpha1}|
    double sup_pole_potential = 0.0;   // sup_t int P(rho) 1_{rho > rho_max - alpha1}
    std::vector<std::string> exceeded; // names of quantities over their ceilings
};

/// Declared ceilings for the uniform estimates (default: unbounded).
struct UniformCeilings {
    double sup_sqrt_rho_u_l2 = 1e300;
    double sup_scaled_density_l2 = 1e300;
    double sqrt_nu_grad_u_l2l2 = 1e300;
    double sup_low_set_measure = 1e300;
    double sup_pole_potential = 1e300;
};

inline UniformEstimates uniform_estimates(const std::vector<FluidState>& traj,
                                          const eos::PressureLaw& law,
                                          const ScalingParams& params, double alpha1,
                                          const UniformCeilings& ceilings = {}) {
    UniformEstimates rep;
    if (traj.empty()) return rep;
    const auto& g = traj.front().rho.grid;
    const double vol = g.cell_volume();
    double grad_acc = 0.0;
    for (std::size_t n = 0; n < traj.size(); ++n) {
        const auto& st = traj[n];
        double kin = 0.0;
        for (int c = 0; c < g.dim; ++c) {
            auto rf = detail::face_density(st.rho, c);
            for (std::size_t i = 0; i < st.u.comp[c].size(); ++i)
                kin += rf[i] * st.u.comp[c][i] * st.u.comp[c][i] * vol;
        }
        rep.sup_sqrt_rho_u_l2 = std::max(rep.sup_sqrt_rho_u_l2, std::sqrt(kin));
        double dl2 = 0.0, low = 0.0, pole = 0.0;
        for (double r : st.rho.v) {
            const double z = (r - params.varrho) / params.eps;
            dl2 += z * z * vol;
            if (r < alpha1) low += vol;
            if (r > law.rho_max() - alpha1) pole += law.potential_cached(r) * vol;
        }
        rep.sup_scaled_density_l2 = std::max(rep.sup_scaled_density_l2, std::sqrt(dl2));
        rep.sup_low_set_measure = std::max(rep.sup_low_set_measure, low);
        rep.sup_pole_potential = std::max(rep.sup_pole_potential, pole);

        auto gu = detail::velocity_gradient(st.u);
        double gn = 0.0;
        for (std::size_t i = 0; i < gu.dxux.v.size(); ++i) {
            gn += gu.dxux.v[i] * gu.dxux.v[i] * vol;
            if (g.dim == 2)
                gn += (gu.dyux.v[i] * gu.dyux.v[i] + gu.dxuy.v[i] * gu.dxuy.v[i] +
                       gu.dyuy.v[i] * gu.dyuy.v[i]) *
                      vol;
        }
        double wgt;
        if (n == 0)
            wgt = 0.5 * (traj[1].t - traj[0].t);
        else if (n + 1 == traj.size())
            wgt = 0.5 * (traj[n].t - traj[n - 1].t);
        else
            wgt = 0.5 * (traj[n + 1].t - traj[n - 1].t);
        grad_acc += gn * wgt;
    }
    rep.sqrt_nu_grad_u_l2l2 = std::sqrt(params.nu * grad_acc);
    if (rep.sup_sqrt_rho_u_l2 > ceilings.sup_sqrt_rho_u_l2)
        rep.exceeded.push_back("sup_sqrt_rho_u_l2");
    if (rep.sup_scaled_density_l2 > ceilings.sup_scaled_density_l2)
        rep.exceeded.push_back("sup_scaled_density_l2");
    if (rep.sqrt_nu_grad_u_l2l2 > ceilings.sqrt_nu_grad_u_l2l2)
        rep.exceeded.push_back("sqrt_nu_grad_u_l2l2");
    if (rep.sup_low_set_measure > ceilings.sup_low_set_measure)
        rep.exceeded.push_back("sup_low_set_measure");
    if (rep.sup_pole_potential > ceilings.sup_pole_potential)
        rep.exceeded.push_back("sup_pole_potential");
    return rep;
}

} // namespace hslim::cns
