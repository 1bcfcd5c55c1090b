#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hslim/relent.hpp"
#include "oracles.hpp"

using namespace hslim;
using namespace hslim::relent;
using fields::Boundary;
using fields::GridSpec;
using fields::ScalarField;
using fields::VectorField;

namespace {

double bump(double x, double radius, double sigma) {
    if (std::abs(x) >= radius) return 0.0;
    return std::exp(-0.5 * x * x / (sigma * sigma));
}

eos::PressureLaw test_law() { return eos::PressureLaw::power(1.0, 2.0, 3.0, 4.0); }

cns::ScalingParams pulse_params(double eps, double nu, double R, double T) {
    cns::ScalingParams p;
    p.eps = eps;
    p.nu = nu;
    p.R = R;
    p.D = 2.0;
    p.varrho = 1.0;
    p.T = T;
    p.mu = 1.0;
    p.eps0 = 0.2;
    return p;
}

/// Comparison trajectory for a pure-density 1D pulse scenario (v = 0).
std::vector<ComparisonFields> pulse_comparison(
    const GridSpec& g, const acoustics::SpectralAcousticSolver& ac, const Cutoff& chi,
    const std::vector<double>& times, double eps, double varrho,
    const eos::PressureLaw& law) {
    VectorField zero(g);
    ScalarField zero_s(g);
    std::vector<ComparisonFields> out;
    for (double t : times)
        out.push_back(assemble_comparison(g, ac, zero, zero, zero_s, chi, zero, t, eps,
                                          varrho, law));
    return out;
}

} // namespace

TEST_CASE("cutoff and corrector") {
    auto g = fields::make_grid(1, 4.0, 128, Boundary::NoSlipBox);
    CHECK_THROWS_AS(build_cutoff(g, 2.0 * g.h(0)), hslim::GridError);
    auto chi = build_cutoff(g, 0.5);
    CHECK(chi(4.0) == 1.0);
    CHECK(chi(-4.0) == 1.0);
    CHECK(chi(0.0) == 0.0);
    CHECK(chi(3.8) > 0.0);

    SUBCASE("zero input gives zero corrector") {
        VectorField z(g);
        auto w = build_corrector(chi, z, z);
        CHECK(fields::norm_linf(w) == 0.0);
    }

    SUBCASE("U vanishes identically on the boundary collar") {
        VectorField v(g), gp0(g);
        for (int i = 0; i <= 128; ++i) {
            v.at(0, i) = 0.3 * std::cos(0.2 * g.face(0, i));
            gp0.at(0, i) = 0.1 * std::sin(0.4 * g.face(0, i));
        }
        auto w = build_corrector(chi, v, gp0);
        for (int i = 0; i <= 128; ++i) {
            const double x = g.face(0, i);
            if (4.0 - std::abs(x) <= 0.0 + 1e-14) {
                CHECK(std::abs(v.at(0, i) + gp0.at(0, i) + w.at(0, i)) < 1e-15);
            }
        }
        // where chi = 1 (collar), w cancels v + gp0 exactly
        CHECK(std::abs(v.at(0, 0) + gp0.at(0, 0) + w.at(0, 0)) < 1e-15);
        CHECK(std::abs(v.at(0, 128) + gp0.at(0, 128) + w.at(0, 128)) < 1e-15);
    }

    SUBCASE("corrector norm decreases as the box grows (compact data)") {
        double prev = 1e300;
        for (double L : {2.0, 4.0, 8.0}) {
            auto gg = fields::make_grid(1, L, static_cast<int>(64 * L), Boundary::NoSlipBox);
            auto cc = build_cutoff(gg, 0.5);
            VectorField v(gg), gp0(gg);
            for (int i = 0; i <= gg.cells[0]; ++i) {
                const double x = gg.face(0, i);
                v.at(0, i) = bump(x, 1.0, 0.2);
                gp0.at(0, i) = 0.5 / (1.0 + x * x); // slow polynomial tail
            }
            auto w = build_corrector(cc, v, gp0);
            const double n = fields::norm_l2(w);
            CHECK(n < prev);
            prev = n;
        }
    }
}

TEST_CASE("relative entropy functional") {
    auto law = test_law();
    auto g = fields::make_grid(1, 4.0, 4096, Boundary::NoSlipBox);
    const double eps = 0.1;

    SUBCASE("coincident pair vanishes") {
        cns::FluidState st;
        st.rho = ScalarField(g);
        for (double& r : st.rho.v) r = 1.0;
        st.u = VectorField(g);
        ComparisonFields cmp;
        cmp.eps = eps;
        cmp.varrho = 1.0;
        cmp.r = st.rho;
        cmp.U = VectorField(g);
        CHECK(relative_entropy(st, cmp, law, eps) == 0.0);
    }

    SUBCASE("independent quadrature oracle on smooth fields") {
        auto rho_f = [](double x) { return 1.0 + 0.3 * bump(x, 1.9, 0.35); };
        auto u_f = [](double x) { return 0.2 * bump(x - 0.4, 1.5, 0.3); };
        auto r_f = [](double x) { return 1.0 + 0.1 * bump(x + 0.3, 1.9, 0.4); };
        auto U_f = [](double x) { return 0.05 * bump(x, 1.8, 0.5); };

        cns::FluidState st;
        st.rho = ScalarField::from_function(g, std::function<double(double)>(rho_f));
        st.u = VectorField(g);
        for (int i = 0; i <= 4096; ++i) st.u.at(0, i) = u_f(g.face(0, i));
        ComparisonFields cmp;
        cmp.eps = eps;
        cmp.varrho = 1.0;
        cmp.r = ScalarField::from_function(g, std::function<double(double)>(r_f));
        cmp.U = VectorField(g);
        for (int i = 0; i <= 4096; ++i) cmp.U.at(0, i) = U_f(g.face(0, i));

        const double got = relative_entropy(st, cmp, law, eps);
        const double want =
            oracle::integrate(
                [&](double x) {
                    const double d = u_f(x) - U_f(x);
                    double val = 0.5 * rho_f(x) * d * d;
                    val += (law.potential(rho_f(x)) - law.potential(r_f(x)) -
                            (law.potential(r_f(x)) / r_f(x) +
                             law.pressure(r_f(x)) / r_f(x)) *
                                (rho_f(x) - r_f(x))) /
                           (eps * eps);
                    return val;
                },
                -4.0, 4.0, 1e-13);
        CHECK(oracle::rel_err(got, want) < 1e-8);
        CHECK(got >= 0.0);
    }
}

TEST_CASE("rei_check on a smooth pulse run") {
    auto law = test_law();
    const double eps = 0.1, nu = 0.05, T = 0.2;
    const int N = 256;
    auto g = fields::make_grid(1, 4.0, N, Boundary::NoSlipBox);
    auto prm = pulse_params(eps, nu, 4.0, T);

    auto rho0 = ScalarField::from_function(
        g, std::function<double(double)>(
               [&](double x) { return 1.0 + eps * 0.5 * bump(x, 1.8, 0.3); }));
    VectorField u0(g);
    auto traj = cns::solve_cns(rho0, u0, law, prm, 0.005);

    auto gper = fields::make_grid(1, 4.0, N, Boundary::Periodic);
    auto s0 = ScalarField::from_function(
        gper, std::function<double(double)>(
                  [&](double x) { return 0.5 * bump(x, 1.8, 0.3); }));
    acoustics::AcousticParams aprm{eps, 1.0, law.pressure_deriv(1.0)};
    acoustics::SpectralAcousticSolver ac(s0, VectorField(gper), aprm);

    auto chi = build_cutoff(g, 0.5);
    std::vector<double> times;
    for (const auto& st : traj) times.push_back(st.t);
    auto cmp = pulse_comparison(g, ac, chi, times, eps, 1.0, law);

    SUBCASE("coincident trivial case with b = 0") {
        // equilibrium data: every row reduces to 0 <= 0
        ScalarField rho_eq(g);
        for (double& r : rho_eq.v) r = 1.0;
        auto traj_eq = cns::solve_cns(rho_eq, VectorField(g), law, prm, 0.05);
        acoustics::SpectralAcousticSolver ac0(ScalarField{gper}, VectorField{gper},
                                              aprm);
        std::vector<double> teq;
        for (const auto& st : traj_eq) teq.push_back(st.t);
        auto cmp_eq = pulse_comparison(g, ac0, chi, teq, eps, 1.0, law);
        auto rep = rei_check(traj_eq, cmp_eq, [](double) { return 0.0; },
                             [](double) { return 0.0; }, law, prm);
        CHECK(rep.passed);
        for (const auto& row : rep.rows) {
            CHECK(std::abs(row.lhs) < 1e-12);
            CHECK(std::abs(row.rhs) < 1e-12);
        }
    }

    SUBCASE("inequality holds for ill-prepared data") {
        // offsets between the solver data and the comparison data make the
        // initial relative entropy genuinely positive
        auto rho0_ill = ScalarField::from_function(
            g, std::function<double(double)>([&](double x) {
                return 1.0 + eps * (0.5 * bump(x, 1.8, 0.3) +
                                    0.3 * bump(x - 0.6, 1.2, 0.25));
            }));
        VectorField u0_ill(g);
        for (int i = 0; i <= N; ++i)
            u0_ill.at(0, i) = 0.15 * bump(g.face(0, i) + 0.5, 1.4, 0.3);
        u0_ill.zero_boundary_faces();
        auto traj_ill = cns::solve_cns(rho0_ill, u0_ill, law, prm, 0.005);
        std::vector<double> t_ill;
        for (const auto& st : traj_ill) t_ill.push_back(st.t);
        auto cmp_ill = pulse_comparison(g, ac, chi, t_ill, eps, 1.0, law);

        auto cert = eos::pointwise_bounds_certificate(law, 0.5);
        auto b = eos::renorm_b(law, cert.alpha1, 0.0);
        auto rep = rei_check(
            traj_ill, cmp_ill, [&](double s) { return b.value(s); },
            [&](double s) { return b.deriv(s); }, law, prm);
        CHECK(rep.passed);
        CHECK(rep.rows.front().entropy > 1e-4); // genuinely ill-prepared
        // density never reaches the active zone, so the pb term vanishes
        CHECK(rep.rows.back().pb_term == 0.0);

        // with b(s) = s the renormalized pressure identity is exercised
        auto rep_s = rei_check(
            traj_ill, cmp_ill, [](double s) { return s; },
            [](double) { return 1.0; }, law, prm);
        CHECK(rep_s.passed);
        const auto& last = rep_s.rows.back();
        CHECK(last.pb_term > 0.1);
        CHECK(std::abs(last.lhs_minus_rhs) <
              0.05 * (std::abs(last.rhs) + std::abs(last.lhs)));
    }

    SUBCASE("bookkeeping violation decreases at first order in h") {
        // well-prepared data: both sides are tiny and the signed excess
        // lhs - rhs isolates the scheme truncation
        auto violation_at = [&](int n_cells) {
            auto gg = fields::make_grid(1, 4.0, n_cells, Boundary::NoSlipBox);
            auto r0 = ScalarField::from_function(
                gg, std::function<double(double)>([&](double x) {
                    return 1.0 + eps * 0.5 * bump(x, 1.8, 0.3);
                }));
            auto tr = cns::solve_cns(r0, VectorField(gg), law, prm, 0.005);
            auto gp = fields::make_grid(1, 4.0, n_cells, Boundary::Periodic);
            auto ss0 = ScalarField::from_function(
                gp, std::function<double(double)>(
                        [&](double x) { return 0.5 * bump(x, 1.8, 0.3); }));
            acoustics::SpectralAcousticSolver aa(ss0, VectorField(gp), aprm);
            auto cc = build_cutoff(gg, 0.5);
            std::vector<double> tt;
            for (const auto& st : tr) tt.push_back(st.t);
            auto cm = pulse_comparison(gg, aa, cc, tt, eps, 1.0, law);
            auto rep = rei_check(tr, cm, [](double) { return 0.0; },
                                 [](double) { return 0.0; }, law, prm);
            double worst = 0.0;
            for (const auto& row : rep.rows)
                worst = std::max(worst, row.lhs_minus_rhs);
            return worst;
        };
        const double v1 = violation_at(256);
        const double v2 = violation_at(512);
        CHECK(v2 < 0.7 * v1);
    }

    SUBCASE("cancellation pairs") {
        auto rep = cancellation_pairs(traj, cmp, law, prm);
        CHECK(rep.rel1 < 1e-9);  // exact acoustic energy exchange
        CHECK(rep.rel2 < 1e-2);  // analytic vs differenced time derivative
        CHECK(rep.rel3 < 1e-2);
        CHECK(std::abs(rep.pair1_a) > 0.0); // the pairs are genuinely nonzero
        CHECK(std::abs(rep.pair2_a) > 0.0);
        CHECK(std::abs(rep.pair3_a) > 0.0);
    }

    SUBCASE("limit distance") {
        auto [vel, dens] = limit_distance(traj.front(), cmp.front());
        CHECK(vel < 1e-20);
        CHECK(dens < 1e-20); // identical data at tau = 0

        auto cert = eos::pointwise_bounds_certificate(law, 0.5);
        const double C = eos::l2_density_control_constant(law, cert);
        for (std::size_t n = 0; n < traj.size(); n += 8) {
            auto [v2, d2] = limit_distance(traj[n], cmp[n]);
            const double E = relative_entropy(traj[n], cmp[n], law, eps);
            // || rho - r ||^2 <= C integral gap <= C eps^2 E ; then the density
            // gap is controlled through r - varrho = eps s exactly
            CHECK(d2 <= 2.0 * C * E + 1e-12);
        }
        CHECK_THROWS_AS(limit_distance(traj[0], cmp[1]), hslim::SyncError);
    }
}

TEST_CASE("mean pressure estimate") {
    auto law = test_law();
    auto prm = pulse_params(0.1, 0.05, 4.0, 0.2);
    auto g = fields::make_grid(1, 4.0, 128, Boundary::NoSlipBox);

    SUBCASE("equilibrium gives tau p(varrho)") {
        ScalarField rho0(g);
        for (double& r : rho0.v) r = 1.0;
        auto traj = cns::solve_cns(rho0, VectorField(g), law, prm, 0.05);
        auto rep = mean_pressure_estimate(traj, law, prm);
        CHECK(oracle::rel_err(rep.direct, 0.2 * law.pressure(1.0)) < 1e-12);
        CHECK(rep.m_below_rho_max);
        CHECK(rep.bound_holds);
    }

    SUBCASE("smooth run satisfies the decomposition bound") {
        auto rho0 = ScalarField::from_function(
            g, std::function<double(double)>(
                   [&](double x) { return 1.0 + 0.05 * bump(x, 1.8, 0.3); }));
        auto traj = cns::solve_cns(rho0, VectorField(g), law, prm, 0.005);
        auto rep = mean_pressure_estimate(traj, law, prm);
        CHECK(rep.m_below_rho_max);
        CHECK(rep.bound_holds);
        CHECK(rep.direct > 0.0);
        CHECK(std::abs(rep.bog_term - (rep.j1 + rep.j2)) <
              1e-12 * (std::abs(rep.bog_term) + 1.0));
        CHECK(rep.identity_gap_rel < 0.05);
        CHECK(rep.denominator == law.rho_max() - prm.varrho - prm.eps0 * prm.D);
    }
}

TEST_CASE("rate bound") {
    RateBoundInputs in;
    in.eps = 0.05;
    in.nu = std::pow(0.05, 2.0 / 3.0);
    in.R = 0.26 * std::pow(0.05, -1.5);
    in.alpha = 0.5;
    in.eps0 = 0.21;
    in.eps1 = 0.5;
    in.rho_max = 4.0;
    in.varrho = 1.0;
    in.D = 2.0;

    SUBCASE("vanishes along the limit path") {
        double prev = 1e300;
        for (double e : {0.05, 1e-3, 1e-6, 1e-9}) {
            auto p = in;
            p.eps = e;
            p.nu = std::pow(e, 2.0 / 3.0);
            p.R = 0.26 * std::pow(e, -1.5);
            const double v = rate_bound_rhs(p);
            CHECK(v < prev);
            prev = v;
        }
        CHECK(prev < 0.01);
    }

    SUBCASE("matches an independent re-implementation of the formula") {
        const double e = in.eps, nu = in.nu, R = in.R;
        const double A = std::pow(e, in.alpha) + 1.0 / R + nu + e * e + e * e / (R * R) +
                         e / nu;
        const double C = 1.0 + e * e * nu + std::pow(e, 4.0 / 3.0) / nu +
                         std::pow(e, 4.0 / 3.0) / nu / (R * R * R * R) + e * e +
                         1.0 / (R * R) + e * e / (R * R);
        const double E =
            1.0 / (nu * R) + std::sqrt(nu) / (R * std::sqrt(R)) + 1.0;
        const double denom = in.rho_max - in.varrho - in.eps0 * in.D;
        const double want = A * std::exp(C + e * e / denom * E);
        CHECK(oracle::rel_err(rate_bound_rhs(in), want) < 1e-12);
    }

    SUBCASE("parameter guard") {
        auto bad = in;
        bad.eps = 0.3; // above eps0
        CHECK_THROWS_AS(rate_bound_rhs(bad), hslim::ParameterError);
        bad = in;
        bad.alpha = 1.5;
        CHECK_THROWS_AS(rate_bound_rhs(bad), hslim::ParameterError);
    }

    SUBCASE("monotone nondecreasing in every slot") {
        auto base = rate_bound_breakdown(in);
        const double v0 = assemble_rate_bound(base);
        for (std::size_t k = 0; k < base.envelope.size(); ++k) {
            auto b = base;
            b.envelope[k] += 1e-3;
            CHECK(assemble_rate_bound(b) >= v0);
        }
        for (std::size_t k = 0; k < base.gronwall.size(); ++k) {
            auto b = base;
            b.gronwall[k] += 1e-3;
            CHECK(assemble_rate_bound(b) >= v0);
        }
        for (std::size_t k = 0; k < base.pole.size(); ++k) {
            auto b = base;
            b.pole[k] += 1e-3;
            CHECK(assemble_rate_bound(b) >= v0);
        }
        auto b1 = base;
        b1.dist_u_sq += 0.1;
        CHECK(assemble_rate_bound(b1) >= v0);
        auto b2 = base;
        b2.dist_rho_sq += 0.1;
        CHECK(assemble_rate_bound(b2) >= v0);
    }

    SUBCASE("eps1 ceiling") {
        CHECK(eps1_ceiling(2.0, 4.0, 1.0) == doctest::Approx(1.0 / 2.1));
        CHECK(rate_bound_rhs(in) > 0.0);
    }
}
