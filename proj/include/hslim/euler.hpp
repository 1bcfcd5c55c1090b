#pragma once

// Incompressible Euler on a 2D periodic box: pseudo-spectral vorticity
// transport (2/3-rule dealiasing, classic RK4), velocity by Biot-Savart,
// pressure recovered spectrally from -lap(Pi) = div div (v x v).

#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <vector>

#include "hslim/errors.hpp"
#include "hslim/grid.hpp"
#include "hslim/ops.hpp"
#include "hslim/spectral.hpp"

namespace hslim::euler {

struct EulerState {
    fields::ScalarField omega;   // vorticity, cell centers
    fields::VectorField v;       // velocity, MAC faces
    fields::ScalarField pressure; // mean-zero
    double t = 0.0;
    double kinetic_energy = 0.0;  // ||v||_L2^2
    double enstrophy = 0.0;       // ||omega||_L2^2
};

struct EulerOptions {
    double cfl = 0.4;
    double tail_tol = 1e-8;     // max energy fraction in the dealias shell
    double dt_override = 0.0;   // 0 = automatic
};

class PseudoSpectralEuler {
public:
    PseudoSpectralEuler(const fields::ScalarField& omega0, EulerOptions opts = {})
        : grid_(omega0.grid), opts_(opts), sp_(std::make_shared<fields::Spectral>(grid_)) {
        if (grid_.dim != 2 || grid_.boundary != fields::Boundary::Periodic)
            throw GridError("euler solver requires a 2d periodic grid");
        if (std::abs(fields::mean(omega0)) >
            1e-10 * (fields::norm_linf(omega0) + 1.0))
            throw MeanError("euler solver: vorticity must have zero mean");
        mask_.resize(sp_->mode_count());
        for (std::size_t f = 0; f < mask_.size(); ++f) {
            const int mx = std::abs(sp_->mode(0, f));
            const int my = std::abs(sp_->mode(1, f));
            mask_[f] = (mx <= grid_.cells[0] / 3 && my <= grid_.cells[1] / 3) ? 1.0 : 0.0;
        }
        omega_hat_ = sp_->forward(omega0.v);
        for (std::size_t f = 0; f < omega_hat_.size(); ++f) omega_hat_[f] *= mask_[f];
    }

    const fields::GridSpec& grid() const { return grid_; }
    double time() const { return t_; }

    /// One RK4 step. Returns the max velocity magnitude seen at the first stage.
    double step(double dt) {
        double vmax = 0.0;
        auto k1 = rhs(omega_hat_, &vmax);
        auto w2 = omega_hat_;
        axpy_hat(0.5 * dt, k1, w2);
        auto k2 = rhs(w2, nullptr);
        auto w3 = omega_hat_;
        axpy_hat(0.5 * dt, k2, w3);
        auto k3 = rhs(w3, nullptr);
        auto w4 = omega_hat_;
        axpy_hat(dt, k3, w4);
        auto k4 = rhs(w4, nullptr);
        for (std::size_t f = 0; f < omega_hat_.size(); ++f)
            omega_hat_[f] += dt / 6.0 * (k1[f] + 2.0 * k2[f] + 2.0 * k3[f] + k4[f]);
        t_ += dt;
        return vmax;
    }

    double max_velocity() const {
        double vmax = 0.0;
        rhs(omega_hat_, &vmax, /*evaluate_nonlinear=*/false);
        return vmax;
    }

    fields::ScalarField omega_field() const {
        fields::ScalarField out(grid_);
        out.v = sp_->backward(omega_hat_);
        return out;
    }

    /// MAC velocity from the stream function.
    fields::VectorField velocity_mac() const {
        fields::detail::cvec psi(omega_hat_.size(), 0.0);
        for (std::size_t f = 0; f < psi.size(); ++f) {
            const double k2 = sp_->k_squared(f);
            if (k2 > 0.0) psi[f] = -omega_hat_[f] / k2;
        }
        fields::VectorField v(grid_);
        auto vx = psi, vy = psi;
        for (std::size_t f = 0; f < psi.size(); ++f) {
            vx[f] *= std::complex<double>(0.0, -sp_->k(1, f));
            vy[f] *= std::complex<double>(0.0, sp_->k(0, f));
        }
        fields::detail::half_shift(*sp_, vx, 0, -1.0);
        fields::detail::half_shift(*sp_, vy, 1, -1.0);
        v.comp[0] = sp_->backward(vx);
        v.comp[1] = sp_->backward(vy);
        return v;
    }

    /// Energy fraction carried by modes outside the dealias ball.
    double tail_fraction() const {
        double total = 0.0, tail = 0.0;
        for (std::size_t f = 0; f < omega_hat_.size(); ++f) {
            const double k2 = sp_->k_squared(f);
            if (k2 == 0.0) continue;
            const int mx = std::abs(sp_->mode(0, f));
            const double w = (mx == 0 || sp_->nyquist(0, f)) ? 1.0 : 2.0;
            const double e = w * std::norm(omega_hat_[f]) / k2;
            total += e;
            const int mxx = std::abs(sp_->mode(0, f)), myy = std::abs(sp_->mode(1, f));
            if (mxx > grid_.cells[0] / 4 || myy > grid_.cells[1] / 4) tail += e;
        }
        return total > 0.0 ? tail / total : 0.0;
    }

    EulerState emit() const {
        EulerState st;
        st.t = t_;
        st.omega = omega_field();
        st.v = velocity_mac();
        st.pressure = pressure_of_modal();
        const double nv = fields::norm_l2(st.v);
        const double nw = fields::norm_l2(st.omega);
        st.kinetic_energy = nv * nv;
        st.enstrophy = nw * nw;
        return st;
    }

    /// Time derivative of the MAC velocity (for comparison-field assembly).
    fields::VectorField dt_velocity_mac() const {
        auto dw = rhs(omega_hat_, nullptr);
        fields::detail::cvec psi(dw.size(), 0.0);
        for (std::size_t f = 0; f < psi.size(); ++f) {
            const double k2 = sp_->k_squared(f);
            if (k2 > 0.0) psi[f] = -dw[f] / k2;
        }
        fields::VectorField v(grid_);
        auto vx = psi, vy = psi;
        for (std::size_t f = 0; f < psi.size(); ++f) {
            vx[f] *= std::complex<double>(0.0, -sp_->k(1, f));
            vy[f] *= std::complex<double>(0.0, sp_->k(0, f));
        }
        fields::detail::half_shift(*sp_, vx, 0, -1.0);
        fields::detail::half_shift(*sp_, vy, 1, -1.0);
        v.comp[0] = sp_->backward(vx);
        v.comp[1] = sp_->backward(vy);
        return v;
    }

private:
    fields::ScalarField pressure_of_modal() const;

    static void axpy_hat(double a, const fields::detail::cvec& x,
                         fields::detail::cvec& y) {
        for (std::size_t f = 0; f < x.size(); ++f) y[f] += a * x[f];
    }

    /// d(omega_hat)/dt = -dealias FFT( v . grad omega ).
    fields::detail::cvec rhs(const fields::detail::cvec& w_hat, double* vmax,
                             bool evaluate_nonlinear = true) const {
        const std::size_t M = w_hat.size();
        fields::detail::cvec psi(M, 0.0);
        for (std::size_t f = 0; f < M; ++f) {
            const double k2 = sp_->k_squared(f);
            if (k2 > 0.0) psi[f] = -w_hat[f] * mask_[f] / k2;
        }
        fields::detail::cvec vxh(M), vyh(M), wxh(M), wyh(M);
        for (std::size_t f = 0; f < M; ++f) {
            const std::complex<double> ikx(0.0, sp_->k(0, f));
            const std::complex<double> iky(0.0, sp_->k(1, f));
            vxh[f] = -iky * psi[f];
            vyh[f] = ikx * psi[f];
            wxh[f] = ikx * w_hat[f] * mask_[f];
            wyh[f] = iky * w_hat[f] * mask_[f];
        }
        auto vx = sp_->backward(vxh);
        auto vy = sp_->backward(vyh);
        if (vmax) {
            double m = 0.0;
            for (std::size_t i = 0; i < vx.size(); ++i)
                m = std::max(m, std::hypot(vx[i], vy[i]));
            *vmax = m;
        }
        fields::detail::cvec out(M, 0.0);
        if (!evaluate_nonlinear) return out;
        auto wx = sp_->backward(wxh);
        auto wy = sp_->backward(wyh);
        std::vector<double> n(vx.size());
        for (std::size_t i = 0; i < n.size(); ++i)
            n[i] = vx[i] * wx[i] + vy[i] * wy[i];
        fields::ScalarField nf(grid_);
        nf.v = std::move(n);
        auto nh = sp_->forward(nf.v);
        for (std::size_t f = 0; f < M; ++f) out[f] = -nh[f] * mask_[f];
        return out;
    }

    fields::GridSpec grid_;
    EulerOptions opts_;
    std::shared_ptr<fields::Spectral> sp_;
    std::vector<double> mask_;
    fields::detail::cvec omega_hat_;
    double t_ = 0.0;

    friend fields::ScalarField euler_pressure(const fields::VectorField& v,
                                              double* gradient_residual);
};

/// Pressure from -lap(Pi) = div div (v x v), spectral inversion, mean zero.
/// If gradient_residual is non-null it receives || (I - H)(v.grad v + grad Pi) ||,
/// i.e. how completely the recovered pressure cancels the gradient part of the
/// advection term.
inline fields::ScalarField euler_pressure(const fields::VectorField& v,
                                          double* gradient_residual = nullptr) {
    const auto& g = v.grid;
    if (g.dim != 2 || g.boundary != fields::Boundary::Periodic)
        throw GridError("euler_pressure requires a 2d periodic grid");
    auto sp = fields::spectral_for(g);
    const std::size_t M = sp->mode_count();

    // collocate the MAC components at centers
    auto vxh = sp->forward(v.comp[0]);
    auto vyh = sp->forward(v.comp[1]);
    fields::detail::half_shift(*sp, vxh, 0, +1.0);
    fields::detail::half_shift(*sp, vyh, 1, +1.0);
    fields::detail::zero_nyquist(*sp, vxh);
    fields::detail::zero_nyquist(*sp, vyh);
    auto vx = sp->backward(vxh);
    auto vy = sp->backward(vyh);

    std::vector<double> txx(vx.size()), txy(vx.size()), tyy(vx.size());
    for (std::size_t i = 0; i < vx.size(); ++i) {
        txx[i] = vx[i] * vx[i];
        txy[i] = vx[i] * vy[i];
        tyy[i] = vy[i] * vy[i];
    }
    fields::ScalarField tmp(g);
    tmp.v = txx;
    auto txxh = sp->forward(tmp.v);
    tmp.v = txy;
    auto txyh = sp->forward(tmp.v);
    tmp.v = tyy;
    auto tyyh = sp->forward(tmp.v);

    fields::detail::cvec pih(M, 0.0);
    for (std::size_t f = 0; f < M; ++f) {
        const double kx = sp->k(0, f), ky = sp->k(1, f);
        const double k2 = kx * kx + ky * ky;
        if (k2 == 0.0 || sp->any_nyquist(f)) continue;
        // k^2 Pi_hat = FT(div div T) = -(k_i k_j T_ij)_hat
        pih[f] = -(kx * kx * txxh[f] + 2.0 * kx * ky * txyh[f] + ky * ky * tyyh[f]) / k2;
    }
    fields::ScalarField pi(g);
    pi.v = sp->backward(pih);

    if (gradient_residual) {
        // advection term at centers: (v.grad)v
        fields::detail::cvec dxvx(M), dyvx(M), dxvy(M), dyvy(M);
        for (std::size_t f = 0; f < M; ++f) {
            const std::complex<double> ikx(0.0, sp->k(0, f));
            const std::complex<double> iky(0.0, sp->k(1, f));
            dxvx[f] = ikx * vxh[f];
            dyvx[f] = iky * vxh[f];
            dxvy[f] = ikx * vyh[f];
            dyvy[f] = iky * vyh[f];
        }
        auto a = sp->backward(dxvx);
        auto b = sp->backward(dyvx);
        auto c = sp->backward(dxvy);
        auto d = sp->backward(dyvy);
        std::vector<double> adv_x(vx.size()), adv_y(vx.size());
        for (std::size_t i = 0; i < vx.size(); ++i) {
            adv_x[i] = vx[i] * a[i] + vy[i] * b[i];
            adv_y[i] = vx[i] * c[i] + vy[i] * d[i];
        }
        fields::ScalarField fx(g), fy(g);
        fx.v = std::move(adv_x);
        fy.v = std::move(adv_y);
        auto fxh = sp->forward(fx.v);
        auto fyh = sp->forward(fy.v);
        // r_hat = adv + grad Pi; remove its divergence-free part
        double acc = 0.0;
        for (std::size_t f = 0; f < M; ++f) {
            const double kx = sp->k(0, f), ky = sp->k(1, f);
            const double k2 = kx * kx + ky * ky;
            if (sp->any_nyquist(f)) continue;
            std::complex<double> rx = fxh[f] + std::complex<double>(0.0, kx) * pih[f];
            std::complex<double> ry = fyh[f] + std::complex<double>(0.0, ky) * pih[f];
            std::complex<double> gx(0.0, 0.0), gy(0.0, 0.0);
            if (k2 > 0.0) {
                const std::complex<double> kd = kx * rx + ky * ry;
                gx = kx * kd / k2; // gradient part
                gy = ky * kd / k2;
            }
            const int mx = std::abs(sp->mode(0, f));
            const double w = (mx == 0 || sp->nyquist(0, f)) ? 1.0 : 2.0;
            acc += w * (std::norm(gx) + std::norm(gy));
        }
        const double n_tot = static_cast<double>(g.cell_count());
        *gradient_residual = std::sqrt(acc * g.volume()) / n_tot;
    }
    return pi;
}

inline fields::ScalarField PseudoSpectralEuler::pressure_of_modal() const {
    return euler_pressure(velocity_mac(), nullptr);
}

/// (v . grad) v at MAC faces (pseudo-spectral, collocated products).
inline fields::VectorField advection_term(const fields::VectorField& v) {
    const auto& g = v.grid;
    if (g.dim != 2 || g.boundary != fields::Boundary::Periodic)
        throw GridError("advection_term requires a 2d periodic grid");
    auto sp = fields::spectral_for(g);
    const std::size_t M = sp->mode_count();
    auto vxh = sp->forward(v.comp[0]);
    auto vyh = sp->forward(v.comp[1]);
    fields::detail::half_shift(*sp, vxh, 0, +1.0);
    fields::detail::half_shift(*sp, vyh, 1, +1.0);
    fields::detail::zero_nyquist(*sp, vxh);
    fields::detail::zero_nyquist(*sp, vyh);
    auto vx = sp->backward(vxh);
    auto vy = sp->backward(vyh);
    fields::detail::cvec dxvx(M), dyvx(M), dxvy(M), dyvy(M);
    for (std::size_t f = 0; f < M; ++f) {
        const std::complex<double> ikx(0.0, sp->k(0, f));
        const std::complex<double> iky(0.0, sp->k(1, f));
        dxvx[f] = ikx * vxh[f];
        dyvx[f] = iky * vxh[f];
        dxvy[f] = ikx * vyh[f];
        dyvy[f] = iky * vyh[f];
    }
    auto a = sp->backward(dxvx);
    auto b = sp->backward(dyvx);
    auto c = sp->backward(dxvy);
    auto d = sp->backward(dyvy);
    fields::ScalarField ax(g), ay(g);
    ax.v.resize(vx.size());
    ay.v.resize(vx.size());
    for (std::size_t i = 0; i < vx.size(); ++i) {
        ax.v[i] = vx[i] * a[i] + vy[i] * b[i];
        ay.v[i] = vx[i] * c[i] + vy[i] * d[i];
    }
    auto axh = sp->forward(ax.v);
    auto ayh = sp->forward(ay.v);
    fields::detail::half_shift(*sp, axh, 0, -1.0);
    fields::detail::half_shift(*sp, ayh, 1, -1.0);
    fields::VectorField adv(g);
    adv.comp[0] = sp->backward(axh);
    adv.comp[1] = sp->backward(ayh);
    return adv;
}

/// Full momentum residual || dt v + (v.grad)v + grad Pi ||_L2 for a solver
/// state, with dt v taken from the vorticity equation.
inline double momentum_residual(const PseudoSpectralEuler& solver) {
    auto v = solver.velocity_mac();
    auto dtv = solver.dt_velocity_mac();
    auto pi = euler_pressure(v);
    auto gp = fields::grad_periodic(pi);
    auto adv = advection_term(v);
    fields::VectorField r(v.grid);
    for (int cc = 0; cc < 2; ++cc)
        for (std::size_t i = 0; i < r.comp[cc].size(); ++i)
            r.comp[cc][i] = dtv.comp[cc][i] + adv.comp[cc][i] + gp.comp[cc][i];
    return fields::norm_l2(r);
}

/// Trajectory of the 2D Euler system from a divergence-free MAC velocity.
inline std::vector<EulerState> solve_euler(const fields::VectorField& v0, double T,
                                           double emit_dt, EulerOptions opts = {}) {
    const auto& g = v0.grid;
    auto div0 = fields::div_periodic(v0);
    if (fields::norm_l2(div0) > 1e-8 * (fields::norm_l2(v0) + 1.0))
        throw SolverError("solve_euler: initial velocity must be divergence-free");
    auto omega0 = fields::curl_periodic_2d(v0);
    PseudoSpectralEuler solver(omega0, opts);

    double hmin = std::min(g.h(0), g.h(1));
    std::vector<EulerState> out;
    out.push_back(solver.emit());
    const auto n_emits = static_cast<long>(std::llround(T / emit_dt));
    for (long e = 1; e <= n_emits; ++e) {
        const double t_target = static_cast<double>(e) * emit_dt;
        while (solver.time() < t_target - 1e-13) {
            double vmax = std::max(solver.max_velocity(), 1e-12);
            double dt = opts.dt_override > 0.0 ? opts.dt_override
                                               : opts.cfl * hmin / vmax;
            if (dt > opts.cfl * hmin / vmax * (1.0 + 1e-9))
                throw CFLError("euler time step exceeds the advective limit");
            dt = std::min(dt, t_target - solver.time());
            solver.step(dt);
        }
        if (solver.tail_fraction() > opts.tail_tol)
            throw ResolutionError("euler spectral tail exceeds threshold");
        out.push_back(solver.emit());
    }
    return out;
}

// --- initial condition library ----------------------------------------------

/// Taylor-Green vorticity 2 A k^2 sin(kx) sin(ky); an exact steady state for
/// any wavenumber commensurate with the box (default k = 1 on an L = pi box).
inline fields::ScalarField taylor_green_omega(const fields::GridSpec& g,
                                              double amplitude = 1.0,
                                              double k = 1.0) {
    return fields::ScalarField::from_function(
        g, std::function<double(double, double)>([amplitude, k](double x, double y) {
            return 2.0 * amplitude * std::sin(k * x) * std::sin(k * y);
        }));
}

/// Random band-limited vorticity; mean-free by construction.
inline fields::ScalarField random_bandlimited_omega(const fields::GridSpec& g,
                                                    int kmin, int kmax,
                                                    double amplitude,
                                                    std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    fields::ScalarField w(g);
    for (int m = kmin; m <= kmax; ++m)
        for (int n = kmin; n <= kmax; ++n) {
            const double a = U(gen), b = U(gen);
            const double kx = M_PI * m / g.extent[0];
            const double ky = M_PI * n / g.extent[1];
            for (int j = 0; j < g.cells[1]; ++j)
                for (int i = 0; i < g.cells[0]; ++i) {
                    const double x = g.center(0, i), y = g.center(1, j);
                    w.at(i, j) += amplitude *
                                  (a * std::sin(kx * x) * std::sin(ky * y) +
                                   b * std::cos(kx * x) * std::sin(ky * y));
                }
        }
    const double m0 = fields::mean(w);
    for (double& x : w.v) x -= m0;
    return w;
}

/// Compactly supported vortex: omega = lap(psi) for a Gaussian stream function
/// truncated where it falls below machine noise (radius = 6.5 sigma).
inline fields::ScalarField compact_vortex_omega(const fields::GridSpec& g,
                                                double radius, double amplitude) {
    const double sigma = radius / 6.5;
    auto psi = fields::ScalarField::from_function(
        g, std::function<double(double, double)>([&](double x, double y) {
            const double r2 = x * x + y * y;
            if (r2 >= radius * radius) return 0.0;
            return amplitude * std::exp(-0.5 * r2 / (sigma * sigma));
        }));
    return fields::laplacian_periodic(psi);
}

} // namespace hslim::euler
