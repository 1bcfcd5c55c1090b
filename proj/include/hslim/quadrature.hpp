#pragma once

#include <cmath>
#include <functional>
#include <memory>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include "hslim/errors.hpp"

namespace hslim::quad {

namespace detail {

inline double gsl_trampoline(double x, void* params) {
    auto* f = static_cast<std::function<double(double)>*>(params);
    return (*f)(x);
}

inline void disable_gsl_abort() {
    static bool done = false;
    if (!done) {
        gsl_set_error_handler_off();
        done = true;
    }
}

} // namespace detail

/// Adaptive integration of f over [a, b] (GSL QAGS).
/// Throws QuadratureError if the requested tolerance cannot be met.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double rel_tol = 1e-12, double abs_tol = 0.0) {
    detail::disable_gsl_abort();
    constexpr std::size_t kLimit = 4096;
    std::unique_ptr<gsl_integration_workspace, void (*)(gsl_integration_workspace*)> ws(
        gsl_integration_workspace_alloc(kLimit), gsl_integration_workspace_free);
    auto fn = f;
    gsl_function gf;
    gf.function = detail::gsl_trampoline;
    gf.params = &fn;
    double result = 0.0, abserr = 0.0;
    int status = gsl_integration_qags(&gf, a, b, abs_tol, rel_tol, kLimit, ws.get(),
                                      &result, &abserr);
    if (status != GSL_SUCCESS && status != GSL_EROUND) {
        throw QuadratureError("adaptive quadrature failed: " +
                              std::string(gsl_strerror(status)));
    }
    return result;
}

/// One Gauss-Kronrod 15/7 panel over [a, b]; err receives |GK15 - G7|.
template <typename F>
double gk15_panel(F&& f, double a, double b, double* err = nullptr) {
    // Kronrod abscissae (positive half) and weights; Gauss-7 weights on the shared nodes.
    static constexpr double xgk[8] = {
        0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
        0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
        0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
        0.207784955007898467600689403773245, 0.0};
    static constexpr double wgk[8] = {
        0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
        0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
        0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
        0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
    static constexpr double wg[4] = {
        0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
        0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double res_k = wgk[7] * fc;
    double res_g = wg[3] * fc;
    for (int i = 0; i < 7; ++i) {
        const double fsum = f(c - h * xgk[i]) + f(c + h * xgk[i]);
        res_k += wgk[i] * fsum;
        if (i % 2 == 1) res_g += wg[i / 2] * fsum;
    }
    if (err) *err = std::abs(h) * std::abs(res_k - res_g);
    return h * res_k;
}

/// GK15 with bisection fallback; used where an error estimate must be honored
/// without the GSL machinery (tight inner loops).
template <typename F>
double gk15_adaptive(F&& f, double a, double b, double rel_tol = 1e-12, int depth = 0) {
    double err = 0.0;
    const double val = gk15_panel(f, a, b, &err);
    if (err <= rel_tol * (std::abs(val) + 1e-300) || depth >= 40) {
        if (depth >= 40 && err > 1e3 * rel_tol * (std::abs(val) + 1e-300))
            throw QuadratureError("gk15_adaptive: max refinement depth reached");
        return val;
    }
    const double c = 0.5 * (a + b);
    return gk15_adaptive(f, a, c, rel_tol, depth + 1) +
           gk15_adaptive(f, c, b, rel_tol, depth + 1);
}

} // namespace hslim::quad
