#pragma once

// Linear acoustic system with ill-prepared data:
//   eps * dt s   + varrho * lap(Psi) = 0
//   eps * dt gradPsi + (p'(varrho)/varrho) * grad s = 0
// Periodic grids use exact per-mode propagators (energy conserved to roundoff,
// trivially reversible); no-slip boxes use leapfrog on the second-order wave
// form. A sine-basis radial reduction provides 3D dispersive-decay
// measurements at 1D cost.

#include <cmath>
#include <complex>
#include <vector>

#include <fftw3.h>

#include "hslim/errors.hpp"
#include "hslim/grid.hpp"
#include "hslim/ops.hpp"
#include "hslim/spectral.hpp"

namespace hslim::acoustics {

struct AcousticParams {
    double eps = 0.1;     // Mach number
    double varrho = 1.0;  // background density
    double c_p = 1.0;     // p'(varrho)

    double wave_speed() const { return std::sqrt(c_p) / eps; }
};

struct AcousticState {
    fields::ScalarField density_perturbation; // s, cell-centered
    fields::ScalarField potential;            // Psi, cell-centered
    fields::VectorField potential_gradient;   // grad Psi, faces
    double t = 0.0;
    AcousticParams params;
};

/// p'(varrho) ||s||^2 + varrho^2 ||grad Psi||^2; the conserved functional.
inline double acoustic_energy(const AcousticState& st) {
    const double ns = fields::norm_l2(st.density_perturbation);
    const double ng = fields::norm_l2(st.potential_gradient);
    return st.params.c_p * ns * ns + st.params.varrho * st.params.varrho * ng * ng;
}

/// Exact modal propagator on a periodic grid. The solver owns the modal data
/// and can emit the state (or individual fields) at arbitrary times, including
/// negative ones.
class SpectralAcousticSolver {
public:
    SpectralAcousticSolver(const fields::ScalarField& s0,
                           const fields::VectorField& grad_psi0,
                           const AcousticParams& params, double curl_tol = 1e-8)
        : grid_(s0.grid), params_(params), sp_(std::make_shared<fields::Spectral>(grid_)) {
        fields::check_same_grid(s0.grid, grad_psi0.grid);
        if (grid_.boundary != fields::Boundary::Periodic)
            throw GridError("spectral acoustic solver requires a periodic grid");
        if (!(params.eps > 0.0) || !(params.c_p > 0.0) || !(params.varrho > 0.0))
            throw ParameterError("acoustic params must be positive");

        s0_hat_ = sp_->forward(s0.v);

        // recover Psi0 from its gradient: least-squares inversion of ik, then
        // verify the input really was a discrete gradient
        std::array<fields::detail::cvec, 3> gh;
        for (int c = 0; c < grid_.dim; ++c) {
            gh[c] = sp_->forward(grad_psi0.comp[c]);
            fields::detail::half_shift(*sp_, gh[c], c, +1.0);
        }
        psi0_hat_.assign(sp_->mode_count(), 0.0);
        double num = 0.0, den = 0.0;
        for (std::size_t f = 0; f < sp_->mode_count(); ++f) {
            const double k2 = sp_->k_squared(f);
            if (k2 == 0.0 || sp_->any_nyquist(f)) continue;
            std::complex<double> kg(0.0, 0.0);
            for (int c = 0; c < grid_.dim; ++c) kg += sp_->k(c, f) * gh[c][f];
            // kg = sum k_c g_c ; psi_hat = -i kg / k2 so that ik psi = g
            psi0_hat_[f] = std::complex<double>(0.0, -1.0) * kg / k2;
            for (int c = 0; c < grid_.dim; ++c) {
                const std::complex<double> recon =
                    std::complex<double>(0.0, sp_->k(c, f)) * psi0_hat_[f];
                num += std::norm(recon - gh[c][f]);
                den += std::norm(gh[c][f]);
            }
        }
        // k = 0 and Nyquist lines must carry no gradient signal
        for (std::size_t f = 0; f < sp_->mode_count(); ++f) {
            if (sp_->k_squared(f) == 0.0 || sp_->any_nyquist(f)) {
                for (int c = 0; c < grid_.dim; ++c) num += std::norm(gh[c][f]);
            }
        }
        if (num > curl_tol * curl_tol * (den + 1e-30))
            throw CurlError("initial potential gradient is not a discrete gradient");
    }

    const fields::GridSpec& grid() const { return grid_; }
    const AcousticParams& params() const { return params_; }

    /// Modal coefficients of s and Psi at time t.
    void modal_at(double t, fields::detail::cvec& s_hat,
                  fields::detail::cvec& psi_hat) const {
        const double eps = params_.eps, vr = params_.varrho, cp = params_.c_p;
        const std::size_t M = sp_->mode_count();
        s_hat.resize(M);
        psi_hat.resize(M);
        for (std::size_t f = 0; f < M; ++f) {
            const double k2 = sp_->k_squared(f);
            if (k2 == 0.0) {
                s_hat[f] = s0_hat_[f];
                psi_hat[f] = psi0_hat_[f] - cp / (eps * vr) * s0_hat_[f] * t;
                continue;
            }
            const double k = std::sqrt(k2);
            const double om = std::sqrt(cp) * k / eps;
            const double cs = std::cos(om * t), sn = std::sin(om * t);
            s_hat[f] = s0_hat_[f] * cs + vr * k / std::sqrt(cp) * psi0_hat_[f] * sn;
            psi_hat[f] = psi0_hat_[f] * cs - std::sqrt(cp) / (vr * k) * s0_hat_[f] * sn;
        }
    }

    fields::ScalarField s_at(double t) const {
        fields::detail::cvec sh, ph;
        modal_at(t, sh, ph);
        fields::ScalarField out(grid_);
        out.v = sp_->backward(sh);
        return out;
    }

    fields::ScalarField psi_at(double t) const {
        fields::detail::cvec sh, ph;
        modal_at(t, sh, ph);
        fields::ScalarField out(grid_);
        out.v = sp_->backward(ph);
        return out;
    }

    fields::VectorField grad_psi_at(double t) const {
        fields::detail::cvec sh, ph;
        modal_at(t, sh, ph);
        return gradient_from_modal(ph);
    }

    /// dt(grad Psi) = -(c_p/(eps varrho)) grad s, evaluated exactly.
    fields::VectorField dt_grad_psi_at(double t) const {
        fields::detail::cvec sh, ph;
        modal_at(t, sh, ph);
        for (std::size_t f = 0; f < sh.size(); ++f)
            sh[f] *= -params_.c_p / (params_.eps * params_.varrho);
        return gradient_from_modal_of(sh);
    }

    fields::ScalarField laplacian_psi_at(double t) const {
        fields::detail::cvec sh, ph;
        modal_at(t, sh, ph);
        for (std::size_t f = 0; f < ph.size(); ++f) ph[f] *= -sp_->k_squared(f);
        fields::ScalarField out(grid_);
        out.v = sp_->backward(ph);
        return out;
    }

    /// Full state (s, Psi, grad Psi) at time t.
    AcousticState state_at(double t) const {
        fields::detail::cvec sh, ph;
        modal_at(t, sh, ph);
        AcousticState st;
        st.t = t;
        st.params = params_;
        st.density_perturbation = fields::ScalarField(grid_);
        st.density_perturbation.v = sp_->backward(sh);
        st.potential = fields::ScalarField(grid_);
        st.potential.v = sp_->backward(ph);
        st.potential_gradient = gradient_from_modal(ph);
        return st;
    }

    /// grad Psi sampled on the faces of a no-slip grid with identical extent
    /// and cell counts (positions coincide; the extra boundary face wraps).
    fields::VectorField grad_psi_on_noslip(double t,
                                           const fields::GridSpec& target) const {
        if (target.boundary != fields::Boundary::NoSlipBox)
            throw GridError("target grid must be a no-slip box");
        fields::GridSpec as_periodic = target;
        as_periodic.boundary = fields::Boundary::Periodic;
        if (!(as_periodic == grid_))
            throw GridMismatch("target grid does not match the acoustic grid");
        fields::VectorField per = grad_psi_at(t);
        fields::VectorField out(target);
        if (target.dim == 1) {
            const int n = target.cells[0];
            for (int i = 0; i < n; ++i) out.at(0, i) = per.at(0, i);
            out.at(0, n) = per.at(0, 0);
            return out;
        }
        const int nx = target.cells[0], ny = target.cells[1];
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i <= nx; ++i) out.at(0, i, j) = per.at(0, i % nx, j);
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i < nx; ++i) out.at(1, i, j) = per.at(1, i, j % ny);
        return out;
    }

    /// Sobolev norm sqrt(sum (1+|k|^2)^k |f_hat|^2) of s or grad Psi at time t.
    double sobolev_norm_s(double t, int order) const {
        fields::detail::cvec sh, ph;
        modal_at(t, sh, ph);
        return modal_sobolev(sh, order);
    }

    double sobolev_norm_grad_psi(double t, int order) const {
        fields::detail::cvec sh, ph;
        modal_at(t, sh, ph);
        for (std::size_t f = 0; f < ph.size(); ++f) {
            ph[f] *= std::sqrt(sp_->k_squared(f)); // |grad Psi| modal magnitude
        }
        return modal_sobolev(ph, order);
    }

private:
    fields::VectorField gradient_from_modal(const fields::detail::cvec& psi_hat) const {
        fields::VectorField out(grid_);
        for (int c = 0; c < grid_.dim; ++c) {
            auto mc = psi_hat;
            for (std::size_t f = 0; f < mc.size(); ++f) {
                if (sp_->any_nyquist(f)) {
                    mc[f] = 0.0;
                    continue;
                }
                mc[f] *= std::complex<double>(0.0, sp_->k(c, f));
            }
            fields::detail::half_shift(*sp_, mc, c, -1.0);
            out.comp[c] = sp_->backward(mc);
        }
        return out;
    }

    fields::VectorField gradient_from_modal_of(const fields::detail::cvec& sc) const {
        // gradient of a cell-centered modal scalar
        return gradient_from_modal(sc);
    }

    double modal_sobolev(const fields::detail::cvec& m, int order) const {
        // Parseval with half-spectrum weights: modes with 0 < m_x < Nx/2 appear
        // once in the r2c layout but represent a conjugate pair
        const double vol = grid_.volume();
        const double n_total = static_cast<double>(grid_.cell_count());
        double acc = 0.0;
        for (std::size_t f = 0; f < m.size(); ++f) {
            const int mx = sp_->mode(0, f);
            const bool edge = (mx == 0) || sp_->nyquist(0, f);
            const double w = edge ? 1.0 : 2.0;
            acc += w * std::pow(1.0 + sp_->k_squared(f), order) * std::norm(m[f]);
        }
        return std::sqrt(acc * vol) / n_total;
    }

    fields::GridSpec grid_;
    AcousticParams params_;
    std::shared_ptr<fields::Spectral> sp_;
    fields::detail::cvec s0_hat_, psi0_hat_;
};

/// Leapfrog integrator for the no-slip box (Neumann walls).
inline std::vector<AcousticState> solve_acoustic_leapfrog(
    const fields::ScalarField& s0, const fields::VectorField& grad_psi0,
    const AcousticParams& params, double T, double emit_dt, double dt) {
    const auto& g = s0.grid;
    if (g.boundary != fields::Boundary::NoSlipBox)
        throw GridError("leapfrog acoustic solver requires a no-slip box");
    double hmin = g.h(0);
    for (int a = 1; a < g.dim; ++a) hmin = std::min(hmin, g.h(a));
    const double dt_max = 0.9 * hmin * params.eps / std::sqrt(params.c_p);
    if (dt > dt_max) throw CFLError("leapfrog time step exceeds 0.9 h eps / sqrt(p')");

    const double c2 = params.c_p / (params.eps * params.eps);

    // Psi0 by one Neumann Poisson solve from div(grad_psi0)
    fields::ScalarField rhs = fields::div_noslip(grad_psi0);
    fields::ScalarField psi_prev = fields::poisson_neumann(rhs, 1e-12);

    fields::ScalarField psi_dot0(g);
    for (std::size_t i = 0; i < psi_dot0.v.size(); ++i)
        psi_dot0.v[i] = -params.c_p / (params.eps * params.varrho) * s0.v[i];

    auto lap = fields::laplacian_noslip(psi_prev);
    fields::ScalarField psi_cur(g);
    for (std::size_t i = 0; i < psi_cur.v.size(); ++i)
        psi_cur.v[i] = psi_prev.v[i] + dt * psi_dot0.v[i] + 0.5 * dt * dt * c2 * lap.v[i];

    std::vector<AcousticState> out;
    const auto n_steps = static_cast<long>(std::llround(T / dt));
    const long emit_every = std::max<long>(1, std::llround(emit_dt / dt));

    // state at step n lives in psi_cur (time n dt), psi_prev (time (n-1) dt)
    {
        AcousticState st;
        st.t = 0.0;
        st.params = params;
        st.density_perturbation = s0;
        st.potential = psi_prev;
        st.potential_gradient = fields::grad_noslip(psi_prev);
        out.push_back(std::move(st));
    }
    for (long n = 1; n <= n_steps; ++n) {
        auto lapc = fields::laplacian_noslip(psi_cur);
        fields::ScalarField psi_next(g);
        for (std::size_t i = 0; i < psi_next.v.size(); ++i)
            psi_next.v[i] =
                2.0 * psi_cur.v[i] - psi_prev.v[i] + dt * dt * c2 * lapc.v[i];
        if (n % emit_every == 0 || n == n_steps) {
            AcousticState st;
            st.t = static_cast<double>(n) * dt;
            st.params = params;
            fields::ScalarField s(g);
            for (std::size_t i = 0; i < s.v.size(); ++i)
                s.v[i] = -(params.eps * params.varrho / params.c_p) *
                         (psi_next.v[i] - psi_prev.v[i]) / (2.0 * dt);
            st.density_perturbation = std::move(s);
            st.potential = psi_cur;
            st.potential_gradient = fields::grad_noslip(psi_cur);
            out.push_back(std::move(st));
        }
        psi_prev = std::move(psi_cur);
        psi_cur = std::move(psi_next);
    }
    return out;
}

/// Trajectory of acoustic states on [0, T], emitted every emit_dt.
/// Periodic grids use the exact spectral propagator.
inline std::vector<AcousticState> solve_acoustic(const fields::ScalarField& s0,
                                                 const fields::VectorField& grad_psi0,
                                                 const AcousticParams& params, double T,
                                                 double emit_dt) {
    if (s0.grid.boundary == fields::Boundary::Periodic) {
        SpectralAcousticSolver solver(s0, grad_psi0, params);
        std::vector<AcousticState> out;
        const auto n = static_cast<long>(std::llround(T / emit_dt));
        for (long i = 0; i <= n; ++i)
            out.push_back(solver.state_at(static_cast<double>(i) * emit_dt));
        return out;
    }
    double hmin = s0.grid.h(0);
    for (int a = 1; a < s0.grid.dim; ++a) hmin = std::min(hmin, s0.grid.h(a));
    const double dt_stable = 0.5 * hmin * params.eps / std::sqrt(params.c_p);
    const double dt = emit_dt / std::ceil(emit_dt / dt_stable);
    return solve_acoustic_leapfrog(s0, grad_psi0, params, T, emit_dt, dt);
}

// ---------------------------------------------------------------------------
// 3D radial reduction and dispersive decay
// ---------------------------------------------------------------------------

/// Radially symmetric 3D acoustic solution via the substitution w = r Psi,
/// which turns the radial wave operator into the flat 1D one (sine basis,
/// Dirichlet at r = 0 and r = r_max). Data: s(0, r) = s0(r), grad Psi(0) = 0.
class RadialAcousticSolver {
public:
    RadialAcousticSolver(std::function<double(double)> s0_profile, double r_max,
                         int n_cells, const AcousticParams& params)
        : params_(params), r_max_(r_max), n_(n_cells) {
        if (n_ < 16) throw GridError("radial grid needs at least 16 cells");
        h_ = r_max_ / static_cast<double>(n_);
        const int m = n_ - 1; // interior nodes
        wdot0_hat_.assign(m, 0.0);
        std::vector<double> wdot0(m);
        for (int j = 0; j < m; ++j) {
            const double r = h_ * (j + 1);
            wdot0[j] = -params.c_p / (params.eps * params.varrho) * r * s0_profile(r);
        }
        // DST-I of the initial velocity of w
        buf_ = fftw_alloc_real(m);
        {
            std::lock_guard<std::mutex> lock(fields::detail::fftw_plan_mutex());
            plan_ = fftw_plan_r2r_1d(m, buf_, buf_, FFTW_RODFT00, FFTW_ESTIMATE);
        }
        std::copy(wdot0.begin(), wdot0.end(), buf_);
        fftw_execute(plan_);
        for (int k = 0; k < m; ++k) wdot0_hat_[k] = buf_[k];
    }

    ~RadialAcousticSolver() {
        std::lock_guard<std::mutex> lock(fields::detail::fftw_plan_mutex());
        fftw_destroy_plan(plan_);
        fftw_free(buf_);
    }

    RadialAcousticSolver(const RadialAcousticSolver&) = delete;
    RadialAcousticSolver& operator=(const RadialAcousticSolver&) = delete;

    double r(int j) const { return h_ * (j + 1); }
    int interior_nodes() const { return n_ - 1; }

    /// s(tau, r_j) on the interior nodes.
    std::vector<double> s_at(double tau) const {
        const int m = n_ - 1;
        const double c = params_.wave_speed();
        for (int k = 0; k < m; ++k) {
            const double kr = M_PI * (k + 1) / r_max_;
            buf_[k] = wdot0_hat_[k] * std::cos(c * kr * tau) / (2.0 * n_);
        }
        fftw_execute(plan_); // DST-I is its own inverse up to 2n
        std::vector<double> out(m);
        const double fac = -(params_.eps * params_.varrho / params_.c_p);
        for (int j = 0; j < m; ++j) out[j] = fac * buf_[j] / r(j);
        return out;
    }

    /// L^q norm over R^3 of the radial profile at time tau.
    double lq_norm(double tau, double q) const {
        auto s = s_at(tau);
        double acc = 0.0;
        for (int j = 0; j < n_ - 1; ++j)
            acc += std::pow(std::abs(s[j]), q) * 4.0 * M_PI * r(j) * r(j) * h_;
        return std::pow(acc, 1.0 / q);
    }

private:
    AcousticParams params_;
    double r_max_, h_;
    int n_;
    std::vector<double> wdot0_hat_;
    double* buf_;
    fftw_plan plan_;
};

struct DecayReport {
    double q = 2.0;
    double predicted_exponent = 0.0; // 1/q - 1/p with 1/p + 1/q = 1
    double measured_exponent = 0.0;
    double stderr_exponent = 0.0;
    std::vector<std::pair<double, double>> rows; // (tau, ||s||_q)
};

/// Measures the decay exponent of ||s(tau)||_{L^q(R^3)} against (1 + tau/eps)
/// over tau/eps in [w_lo, w_hi]. The window must span at least a decade.
inline DecayReport decay_exponent(const RadialAcousticSolver& solver, double q,
                                  const AcousticParams& params, int n_tau = 25,
                                  double w_lo = 10.0, double w_hi = 100.0) {
    if (!(q >= 2.0)) throw ParameterError("decay exponent requires q >= 2");
    if (w_hi / w_lo < 10.0) throw WindowError("fit window must span a decade");
    DecayReport rep;
    rep.q = q;
    rep.predicted_exponent = 2.0 / q - 1.0;
    std::vector<double> xs, ys;
    for (int i = 0; i < n_tau; ++i) {
        const double f = static_cast<double>(i) / (n_tau - 1);
        const double tau = params.eps * w_lo * std::pow(w_hi / w_lo, f);
        const double nq = solver.lq_norm(tau, q);
        rep.rows.emplace_back(tau, nq);
        xs.push_back(std::log(1.0 + tau / params.eps));
        ys.push_back(std::log(nq));
    }
    // least squares slope with standard error
    const auto n = static_cast<double>(xs.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    rep.measured_exponent = (n * sxy - sx * sy) / denom;
    const double intercept = (sy - rep.measured_exponent * sx) / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - rep.measured_exponent * xs[i] - intercept;
        ss += e * e;
    }
    rep.stderr_exponent = std::sqrt(ss / (n - 2.0) / (sxx - sx * sx / n));
    return rep;
}

} // namespace hslim::acoustics
