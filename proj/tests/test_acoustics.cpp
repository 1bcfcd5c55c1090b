#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hslim/acoustics.hpp"
#include "oracles.hpp"

using namespace hslim;
using namespace hslim::acoustics;
using fields::Boundary;
using fields::GridSpec;
using fields::ScalarField;
using fields::VectorField;

namespace {

/// Gaussian cut off where it is below machine noise; spectrally smooth.
double compact_gaussian(double x, double radius, double sigma) {
    if (std::abs(x) >= radius) return 0.0;
    return std::exp(-0.5 * x * x / (sigma * sigma));
}

} // namespace

TEST_CASE("zero data stays zero") {
    auto g = fields::make_grid(1, 4.0, 64, Boundary::Periodic);
    ScalarField s0(g);
    VectorField gp0(g);
    AcousticParams prm{0.1, 1.0, 1.0};
    auto traj = solve_acoustic(s0, gp0, prm, 0.5, 0.1);
    for (const auto& st : traj) {
        CHECK(fields::norm_linf(st.density_perturbation) == 0.0);
        CHECK(fields::norm_linf(st.potential_gradient) == 0.0);
    }
}

TEST_CASE("1d traveling wave matches the d'Alembert translation") {
    const int N = 1024;
    const double L = 8.0;
    auto g = fields::make_grid(1, L, N, Boundary::Periodic);
    AcousticParams prm{0.1, 1.2, 2.0};
    const double c = prm.wave_speed();

    // mean-zero profile: derivative of a compact bump (cutoff below 1e-14)
    const double sig = 0.3, D = 2.55;
    auto f = [&](double x) {
        return -(x / (sig * sig)) * compact_gaussian(x, D, sig);
    };
    auto s0 = ScalarField::from_function(g, std::function<double(double)>(f));
    // right-moving wave: dt s(0) = -c f' and eps dt s = -varrho lap Psi
    // choose grad Psi0 = (c eps / varrho) f so that lap Psi0 = (c eps/varrho) f'
    VectorField gp0(g);
    for (int i = 0; i < N; ++i)
        gp0.at(0, i) = c * prm.eps / prm.varrho * f(g.face(0, i));

    SpectralAcousticSolver solver(s0, gp0, prm);
    const double t = 0.25; // c t = 3.54, still inside the box
    auto st = solver.s_at(t);
    double worst = 0.0;
    for (int i = 0; i < N; ++i)
        worst = std::max(worst, std::abs(st.at(i) - f(g.center(0, i) - c * t)));
    CHECK(worst < 1e-10);
}

TEST_CASE("finite propagation speed for compact data") {
    const int N = 1024;
    const double L = 8.0;
    auto g = fields::make_grid(1, L, N, Boundary::Periodic);
    AcousticParams prm{0.1, 1.0, 1.0};
    const double c = prm.wave_speed();
    const double D = 0.8, sig = 0.11;
    auto s0 = ScalarField::from_function(
        g, std::function<double(double)>(
               [&](double x) { return compact_gaussian(x, D, sig); }));
    VectorField gp0(g);
    SpectralAcousticSolver solver(s0, gp0, prm);
    const double h = g.h(0);
    for (double t : {0.1, 0.3, 0.55}) {
        REQUIRE(D + c * t + 2.0 * h < L); // no wrap-around within the horizon
        auto s = solver.s_at(t);
        auto gp = solver.grad_psi_at(t);
        double outside = 0.0;
        for (int i = 0; i < N; ++i) {
            if (std::abs(g.center(0, i)) > D + c * t + 2.0 * h)
                outside = std::max(outside, std::abs(s.at(i)));
            if (std::abs(g.face(0, i)) > D + c * t + 2.0 * h)
                outside = std::max(outside, std::abs(gp.at(0, i) - gp0.at(0, i)));
        }
        CHECK(outside < 1e-12);
    }
}

TEST_CASE("spectral energy conservation and reversibility") {
    const int N = 1024;
    auto g = fields::make_grid(1, 8.0, N, Boundary::Periodic);
    AcousticParams prm{0.1, 1.0, 1.5};
    const double sig = 0.3, D = 2.0;
    auto s0 = ScalarField::from_function(
        g, std::function<double(double)>(
               [&](double x) { return compact_gaussian(x, D, sig); }));
    VectorField gp0(g);
    for (int i = 0; i < N; ++i) {
        const double x = g.face(0, i);
        gp0.at(0, i) = -(x / (sig * sig)) * compact_gaussian(x, D, sig) * 0.4;
    }
    SpectralAcousticSolver solver(s0, gp0, prm);
    auto st0 = solver.state_at(0.0);
    const double E0 = acoustic_energy(st0);
    double drift = 0.0;
    for (double t = 0.1; t <= 1.0; t += 0.1)
        drift = std::max(drift,
                         std::abs(acoustic_energy(solver.state_at(t)) - E0) / E0);
    CHECK(drift < 1e-10);

    // reversibility: restart from the state at T with negated time
    auto stT = solver.state_at(1.0);
    SpectralAcousticSolver back(stT.density_perturbation, stT.potential_gradient, prm);
    auto s_back = back.s_at(-1.0);
    CHECK(fields::norm_l2(s_back - s0) < 1e-9 * fields::norm_l2(s0));

    // grad_psi field equals grad(psi) at snapshots
    auto gcheck = fields::grad(stT.potential);
    CHECK(fields::norm_l2(gcheck - stT.potential_gradient) <
          1e-11 * (fields::norm_l2(stT.potential_gradient) + 1.0));
}

TEST_CASE("superposition") {
    const int N = 256;
    auto g = fields::make_grid(1, 4.0, N, Boundary::Periodic);
    AcousticParams prm{0.2, 1.0, 1.0};
    auto s_a = ScalarField::from_function(
        g, std::function<double(double)>(
               [](double x) { return compact_gaussian(x, 1.0, 0.2); }));
    auto s_b = ScalarField::from_function(
        g, std::function<double(double)>(
               [](double x) { return compact_gaussian(x - 1.5, 1.0, 0.25); }));
    ScalarField s_ab(g);
    for (int i = 0; i < N; ++i) s_ab.at(i) = 2.0 * s_a.at(i) + s_b.at(i);
    VectorField z(g);
    SpectralAcousticSolver A(s_a, z, prm), B(s_b, z, prm), AB(s_ab, z, prm);
    const double t = 0.37;
    auto sa = A.s_at(t), sb = B.s_at(t), sab = AB.s_at(t);
    double worst = 0.0;
    for (int i = 0; i < N; ++i)
        worst = std::max(worst, std::abs(sab.at(i) - 2.0 * sa.at(i) - sb.at(i)));
    CHECK(worst < 1e-12);
}

TEST_CASE("higher Sobolev norms stay bounded") {
    const int N = 512;
    auto g = fields::make_grid(1, 6.0, N, Boundary::Periodic);
    AcousticParams prm{0.1, 1.3, 0.9};
    auto s0 = ScalarField::from_function(
        g, std::function<double(double)>(
               [](double x) { return compact_gaussian(x, 1.5, 0.3); }));
    VectorField gp0(g);
    for (int i = 0; i < N; ++i) {
        const double x = g.face(0, i);
        gp0.at(0, i) = -(x / 0.09) * compact_gaussian(x, 1.5, 0.3) * 0.1;
    }
    SpectralAcousticSolver solver(s0, gp0, prm);
    // per-mode rotation mixes s and grad Psi with weights varrho/sqrt(p') and
    // its inverse; bound the pair norm by that mixing constant
    const double mix = std::max(prm.varrho / std::sqrt(prm.c_p),
                                std::sqrt(prm.c_p) / prm.varrho);
    for (int k = 0; k <= 2; ++k) {
        const double init =
            std::hypot(solver.sobolev_norm_s(0.0, k), solver.sobolev_norm_grad_psi(0.0, k));
        for (double t : {0.2, 0.6, 1.1, 2.3}) {
            const double now =
                std::hypot(solver.sobolev_norm_s(t, k), solver.sobolev_norm_grad_psi(t, k));
            CHECK(now <= mix * init * (1.0 + 1e-10));
        }
    }
}

TEST_CASE("curl guard rejects non-gradient data") {
    auto g = fields::make_grid(2, 2.0, 32, Boundary::Periodic);
    ScalarField s0(g);
    VectorField bad(g);
    for (int j = 0; j < 32; ++j)
        for (int i = 0; i < 32; ++i) {
            bad.at(0, i, j) = std::sin(M_PI * g.center(1, j) / 2.0);
            bad.at(1, i, j) = 0.0;
        }
    AcousticParams prm{0.1, 1.0, 1.0};
    CHECK_THROWS_AS(SpectralAcousticSolver(s0, bad, prm), hslim::CurlError);
}

TEST_CASE("leapfrog variant: CFL guard and energy self-convergence") {
    const int N = 256;
    auto g = fields::make_grid(1, 1.0, N, Boundary::NoSlipBox);
    AcousticParams prm{0.2, 1.0, 1.0};
    auto s0 = ScalarField::from_function(
        g, std::function<double(double)>(
               [](double x) { return compact_gaussian(x, 0.5, 0.12); }));
    VectorField gp0(g);

    const double h = g.h(0);
    const double dt_limit = 0.9 * h * prm.eps / std::sqrt(prm.c_p);
    CHECK_THROWS_AS(
        solve_acoustic_leapfrog(s0, gp0, prm, 0.1, 0.05, 1.2 * dt_limit),
        hslim::CFLError);

    auto drift_at = [&](double cfl) {
        const double dt = cfl * h * prm.eps / std::sqrt(prm.c_p);
        auto traj = solve_acoustic_leapfrog(s0, gp0, prm, 1.0, 0.25, dt);
        const double E0 = acoustic_energy(traj.front());
        double worst = 0.0;
        for (const auto& st : traj)
            worst = std::max(worst, std::abs(acoustic_energy(st) - E0) / E0);
        return worst;
    };
    const double d1 = drift_at(0.5);
    const double d2 = drift_at(0.25);
    CHECK(d2 < 0.4 * d1); // second-order self-convergence under dt refinement
    CHECK(d1 < 2e-4);     // measured drift envelope at CFL 0.5, N=256, T=1
}

TEST_CASE("radial decay: L2 exponent is zero") {
    AcousticParams prm{0.1, 1.0, 1.0};
    RadialAcousticSolver solver(
        [](double r) { return compact_gaussian(r, 0.7, 0.12); }, 24.0, 2048, prm);
    auto rep = decay_exponent(solver, 2.0, prm, 12);
    CHECK(std::abs(rep.measured_exponent) < 0.02);
    CHECK(rep.predicted_exponent == 0.0);
    CHECK_THROWS_AS(decay_exponent(solver, 2.0, prm, 12, 10.0, 50.0),
                    hslim::WindowError);
}
