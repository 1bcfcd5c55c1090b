#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "hslim/bogovskii.hpp"
#include "hslim/grid.hpp"
#include "hslim/io.hpp"
#include "hslim/ops.hpp"
#include "oracles.hpp"

using namespace hslim::fields;

namespace {

ScalarField random_scalar(const GridSpec& g, oracle::Rng& rng, double lo = -1.0,
                          double hi = 1.0) {
    ScalarField f(g);
    for (double& v : f.v) v = rng.uniform(lo, hi);
    return f;
}

VectorField random_vector(const GridSpec& g, oracle::Rng& rng) {
    VectorField u(g);
    for (int c = 0; c < g.dim; ++c)
        for (double& v : u.comp[c]) v = rng.uniform(-1.0, 1.0);
    u.zero_boundary_faces();
    return u;
}

/// Smooth band-limited random field (for spectral-accuracy checks).
ScalarField smooth_scalar(const GridSpec& g, oracle::Rng& rng, int kmax = 4) {
    ScalarField f(g);
    const double L = g.extent[0];
    for (int m = 1; m <= kmax; ++m) {
        const double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
        const double c = rng.uniform(-1.0, 1.0), d = rng.uniform(-1.0, 1.0);
        for (int j = 0; j < (g.dim > 1 ? g.cells[1] : 1); ++j)
            for (int i = 0; i < g.cells[0]; ++i) {
                const double x = g.center(0, i) * M_PI / L * m;
                double val = a * std::sin(x) + b * std::cos(x);
                if (g.dim > 1) {
                    const double y = g.center(1, j) * M_PI / g.extent[1] * m;
                    val += c * std::sin(x + y) + d * std::cos(x - y);
                }
                if (g.dim > 1)
                    f.at(i, j) += val;
                else
                    f.at(i) += val;
            }
    }
    return f;
}

} // namespace

TEST_CASE("periodic operators: composition and analytic gradients") {
    oracle::Rng rng(11);
    auto g = make_grid(2, M_PI, 64, Boundary::Periodic);
    auto phi = smooth_scalar(g, rng);

    SUBCASE("div(grad) equals laplacian to machine precision") {
        auto a = div(grad(phi));
        auto b = laplacian(phi);
        CHECK(norm_l2(a - b) < 1e-11 * (norm_l2(b) + 1.0));
    }

    SUBCASE("gradient of sin(pi x / L) is exact at faces") {
        const double L = g.extent[0];
        auto f = ScalarField::from_function(
            g, std::function<double(double, double)>(
                   [&](double x, double) { return std::sin(M_PI * x / L); }));
        auto gf = grad(f);
        double worst = 0.0;
        for (int j = 0; j < g.cells[1]; ++j)
            for (int i = 0; i < g.cells[0]; ++i) {
                const double xf = g.face(0, i);
                worst = std::max(worst, std::abs(gf.at(0, i, j) -
                                                 M_PI / L * std::cos(M_PI * xf / L)));
            }
        CHECK(worst < 1e-12);
    }

    SUBCASE("constant field has zero gradient") {
        ScalarField c(g);
        for (double& v : c.v) v = 3.25;
        CHECK(norm_linf(grad(c)) < 1e-13);
    }
}

TEST_CASE("no-slip stencil gradient converges at second order") {
    auto analytic = [](double x) { return std::cos(0.5 * M_PI * x); };
    auto danalytic = [](double x) { return -0.5 * M_PI * std::sin(0.5 * M_PI * x); };
    double errs[2];
    int idx = 0;
    for (int N : {64, 128}) {
        auto g = make_grid(1, 1.0, N, Boundary::NoSlipBox);
        auto f = ScalarField::from_function(g, std::function<double(double)>(analytic));
        auto gf = grad(f);
        double worst = 0.0;
        for (int i = 1; i < N; ++i)
            worst = std::max(worst, std::abs(gf.at(0, i) - danalytic(g.face(0, i))));
        errs[idx++] = worst;
    }
    CHECK(errs[0] / errs[1] > 3.5); // O(h^2)
    CHECK(errs[0] / errs[1] < 4.5);
}

TEST_CASE("adjointness of grad and div") {
    oracle::Rng rng(23);
    SUBCASE("periodic") {
        auto g = make_grid(2, 1.5, 32, Boundary::Periodic);
        for (int t = 0; t < 5; ++t) {
            auto phi = random_scalar(g, rng);
            auto u = random_vector(g, rng);
            const double a = inner(grad(phi), u);
            const double b = inner(phi, div(u));
            CHECK(std::abs(a + b) < 1e-12 * (std::abs(a) + std::abs(b) + 1.0));
        }
    }
    SUBCASE("no-slip with vanishing boundary data") {
        for (int dim : {1, 2}) {
            auto g = make_grid(dim, 1.0, 32, Boundary::NoSlipBox);
            for (int t = 0; t < 5; ++t) {
                auto phi = random_scalar(g, rng);
                auto u = random_vector(g, rng); // zeroed boundary faces
                const double a = inner(grad(phi), u);
                const double b = inner(phi, div(u));
                CHECK(std::abs(a + b) < 1e-12 * (std::abs(a) + std::abs(b) + 1.0));
            }
        }
    }
}

TEST_CASE("operators are linear") {
    oracle::Rng rng(37);
    auto g = make_grid(2, 2.0, 32, Boundary::Periodic);
    auto f1 = random_scalar(g, rng);
    auto f2 = random_scalar(g, rng);
    const double alpha = 1.7;
    ScalarField combo(g);
    for (std::size_t i = 0; i < combo.v.size(); ++i)
        combo.v[i] = alpha * f1.v[i] + f2.v[i];
    auto lhs = grad(combo);
    auto g1 = grad(f1), g2 = grad(f2);
    VectorField rhs(g);
    for (int c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < rhs.comp[c].size(); ++i)
            rhs.comp[c][i] = alpha * g1.comp[c][i] + g2.comp[c][i];
    CHECK(norm_l2(lhs - rhs) < 1e-12 * (norm_l2(rhs) + 1.0));
}

TEST_CASE("helmholtz projection") {
    oracle::Rng rng(41);
    for (auto bc : {Boundary::Periodic, Boundary::NoSlipBox}) {
        auto g = make_grid(2, 1.0, 32, bc);
        CAPTURE(to_string(bc));

        // pure gradient projects to (nearly) zero
        auto phi = bc == Boundary::Periodic ? smooth_scalar(g, rng) : random_scalar(g, rng);
        auto gp = grad(phi);
        auto h = helmholtz_project(gp);
        CHECK(norm_l2(h) < 1e-9 * (norm_l2(gp) + 1.0));

        // random field: H o H = H, div H(u) small, orthogonality
        auto u = random_vector(g, rng);
        auto Hu = helmholtz_project(u);
        auto HHu = helmholtz_project(Hu);
        CHECK(norm_l2(HHu - Hu) < 1e-10 * (norm_l2(Hu) + 1.0));
        CHECK(norm_l2(div(Hu)) < 1e-9 * (norm_l2(div(u)) + 1.0));

        auto psi = random_scalar(g, rng);
        const double ortho = inner(Hu, grad(psi));
        CHECK(std::abs(ortho) < 1e-9 * (norm_l2(Hu) * norm_l2(grad(psi)) + 1.0));

        // divergence-free input is a fixed point
        auto Hu2 = helmholtz_project(Hu);
        CHECK(norm_l2(Hu2 - Hu) < 1e-10 * (norm_l2(Hu) + 1.0));
    }
}

TEST_CASE("biot-savart on the 2-pi torus") {
    auto g = make_grid(2, M_PI, 64, Boundary::Periodic);

    SUBCASE("zero vorticity gives zero velocity") {
        ScalarField w(g);
        auto v = biot_savart(w);
        CHECK(norm_linf(v) == 0.0);
    }

    SUBCASE("omega = 2 sin x sin y reproduces the stream-function field") {
        auto w = ScalarField::from_function(
            g, std::function<double(double, double)>(
                   [](double x, double y) { return 2.0 * std::sin(x) * std::sin(y); }));
        auto v = biot_savart(w);
        double worst = 0.0;
        for (int j = 0; j < g.cells[1]; ++j)
            for (int i = 0; i < g.cells[0]; ++i) {
                const double xf = g.face(0, i), yc = g.center(1, j);
                worst = std::max(worst,
                                 std::abs(v.at(0, i, j) - std::sin(xf) * std::cos(yc)));
                const double xc = g.center(0, i), yf = g.face(1, j);
                worst = std::max(worst,
                                 std::abs(v.at(1, i, j) + std::cos(xc) * std::sin(yf)));
            }
        CHECK(worst < 1e-12);

        auto wback = curl2d(v);
        CHECK(norm_l2(wback - w) < 1e-10 * norm_l2(w));
    }

    SUBCASE("divergence-free and mean guard") {
        oracle::Rng rng(53);
        auto w = smooth_scalar(g, rng);
        const double m = mean(w);
        for (double& x : w.v) x -= m;
        auto v = biot_savart(w);
        CHECK(norm_l2(div(v)) < 1e-11 * (norm_l2(w) + 1.0));
        CHECK(norm_l2(curl2d(v) - w) < 1e-10 * norm_l2(w));

        ScalarField bad(g);
        for (double& x : bad.v) x = 1.0;
        CHECK_THROWS_AS(biot_savart(bad), hslim::MeanError);
    }
}

TEST_CASE("bogovskii operator") {
    SUBCASE("1d cumulative integral") {
        auto g = make_grid(1, 1.0, 64, Boundary::NoSlipBox);
        auto f = ScalarField::from_function(
            g, std::function<double(double)>([](double x) { return std::sin(M_PI * x); }));
        auto res = hslim::fields::bogovskii(f);
        CHECK(res.div_residual_l2 < 1e-13);
        CHECK(res.field.at(0, 0) == 0.0);
        CHECK(res.field.at(0, 64) == 0.0);
    }

    SUBCASE("zero datum maps to zero") {
        auto g = make_grid(2, 1.0, 32, Boundary::NoSlipBox);
        ScalarField f(g);
        auto res = hslim::fields::bogovskii(f);
        CHECK(norm_linf(res.field) == 0.0);
    }

    SUBCASE("smooth mean-zero datum: residual, trace, refinement") {
        double ratios[3];
        int idx = 0;
        for (int N : {32, 64, 128}) {
            auto g = make_grid(2, 1.0, N, Boundary::NoSlipBox);
            auto f = ScalarField::from_function(
                g, std::function<double(double, double)>([](double x, double y) {
                    return std::sin(M_PI * x) * std::sin(M_PI * y);
                }));
            auto res = hslim::fields::bogovskii(f, 2.0);
            CHECK(res.div_residual_l2 < 1e-8);
            CHECK(res.field.max_boundary_face_magnitude() == 0.0);
            ratios[idx++] = res.norm_ratio;
        }
        // operator norm stays bounded under refinement
        CHECK(ratios[1] < 2.0 * ratios[0] + 1.0);
        CHECK(ratios[2] < 2.0 * ratios[0] + 1.0);
    }

    SUBCASE("linearity") {
        oracle::Rng rng(61);
        auto g = make_grid(2, 1.0, 32, Boundary::NoSlipBox);
        auto f1 = smooth_scalar(g, rng);
        auto f2 = smooth_scalar(g, rng);
        for (auto* f : {&f1, &f2}) {
            const double m = mean(*f);
            for (double& x : f->v) x -= m;
        }
        ScalarField combo(g);
        for (std::size_t i = 0; i < combo.v.size(); ++i)
            combo.v[i] = 2.0 * f1.v[i] + f2.v[i];
        auto B = hslim::fields::bogovskii(combo).field;
        auto B1 = hslim::fields::bogovskii(f1).field;
        auto B2 = hslim::fields::bogovskii(f2).field;
        VectorField expect(g);
        for (int c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < expect.comp[c].size(); ++i)
                expect.comp[c][i] = 2.0 * B1.comp[c][i] + B2.comp[c][i];
        CHECK(norm_l2(B - expect) < 1e-8 * (norm_l2(expect) + 1.0));
    }

    SUBCASE("mean guard") {
        auto g = make_grid(2, 1.0, 32, Boundary::NoSlipBox);
        ScalarField f(g);
        for (double& x : f.v) x = 0.7;
        CHECK_THROWS_AS(hslim::fields::bogovskii(f), hslim::MeanError);
    }
}

TEST_CASE("3d spectral operators") {
    oracle::Rng rng(83);
    auto g = make_grid(3, 1.0, 8, Boundary::Periodic);
    auto phi = random_scalar(g, rng);

    // composition identity and adjointness carry over to 3d
    auto a = div(grad(phi));
    auto b = laplacian(phi);
    CHECK(norm_l2(a - b) < 1e-11 * (norm_l2(b) + 1.0));

    auto u = random_vector(g, rng);
    const double ip = inner(grad(phi), u) + inner(phi, div(u));
    CHECK(std::abs(ip) < 1e-12 * (norm_l2(u) + 1.0));

    // curl of a gradient vanishes componentwise
    auto c = curl_periodic_3d(grad(phi));
    for (int k = 0; k < 3; ++k) CHECK(norm_linf(c[k]) < 1e-12);
}

TEST_CASE("snapshot io round-trip") {
    oracle::Rng rng(71);
    auto g = make_grid(2, 1.25, 16, Boundary::NoSlipBox);
    auto f = random_scalar(g, rng);
    auto dir = std::filesystem::temp_directory_path() / "hslim_io_test";
    std::filesystem::create_directories(dir);
    hslim::io::save_scalar(f, dir / "snap", 0.75, "density", "mass/volume");
    double t = 0.0;
    auto f2 = hslim::io::load_scalar(dir / "snap", &t);
    CHECK(t == 0.75);
    CHECK(f2.grid == f.grid);
    CHECK(norm_linf(f2 - f) == 0.0);
    CHECK_THROWS_AS(hslim::io::load_scalar(dir / "missing"), hslim::IOError);
    std::filesystem::remove_all(dir);
}
