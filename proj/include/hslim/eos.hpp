#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hslim/errors.hpp"
#include "hslim/quadrature.hpp"

namespace hslim::eos {

/// Hard-sphere pressure law on [0, rho_max): p(0) = 0, p' > 0, p blows up at the
/// packing density rho_max like (rho_max - s)^{-beta} with beta > 5/2.
///
/// Two concrete variants:
///   power:             p(s) = a s^gamma / (rho_max - s)^beta
///   carnahan_starling: p(s) = kT s (1 + e + e^2 - e^3) / (1 - e)^3,  e = s/rho_max
///
/// The pressure potential P(s) = s * int_{rho_max/2}^{s} p(z)/z^2 dz is evaluated
/// either by adaptive quadrature (reference route) or from a cubic-spline table
/// built once at construction (bulk route, used by all field-scale callers).
class PressureLaw {
public:
    enum class Kind { Power, CarnahanStarling };

    static constexpr std::size_t kDefaultTableNodes = 131072;

    static PressureLaw power(double a, double gamma, double beta, double rho_max,
                             std::size_t table_nodes = kDefaultTableNodes) {
        if (!(a > 0.0)) throw DomainError("power law: coefficient must be positive");
        if (!(gamma >= 1.0)) throw DomainError("power law: gamma must be >= 1");
        if (!(beta > 2.5)) throw DomainError("pressure law: beta must exceed 5/2");
        if (!(rho_max > 0.0)) throw DomainError("pressure law: rho_max must be positive");
        return PressureLaw(Kind::Power, a, gamma, beta, rho_max, table_nodes);
    }

    /// Carnahan-Starling packs like (rho_max - s)^{-3}, i.e. beta = 3 > 5/2.
    static PressureLaw carnahan_starling(double kT, double rho_max,
                                         std::size_t table_nodes = kDefaultTableNodes) {
        if (!(kT > 0.0)) throw DomainError("carnahan-starling: kT must be positive");
        if (!(rho_max > 0.0)) throw DomainError("pressure law: rho_max must be positive");
        return PressureLaw(Kind::CarnahanStarling, kT, 1.0, 3.0, rho_max, table_nodes);
    }

    Kind kind() const { return kind_; }
    double rho_max() const { return rho_max_; }
    double beta() const { return beta_; }
    /// Largest density accepted by any evaluation (pole guard).
    double ceiling() const { return ceiling_; }

    double pressure(double s) const {
        check_domain(s, /*allow_zero=*/true);
        if (s == 0.0) return 0.0;
        if (kind_ == Kind::Power) {
            return a_ * std::pow(s, gamma_) * std::pow(rho_max_ - s, -beta_);
        }
        const double e = s / rho_max_;
        return a_ * s * (1.0 + e + e * e - e * e * e) / cube(1.0 - e);
    }

    /// (p', p'') from the closed-form derivatives of the chosen variant.
    std::pair<double, double> pressure_derivatives(double s) const {
        check_domain(s, /*allow_zero=*/false);
        if (kind_ == Kind::Power) {
            const double p = pressure(s);
            const double u = gamma_ / s + beta_ / (rho_max_ - s);
            const double p1 = p * u;
            const double p2 = p * (u * u - gamma_ / (s * s) + beta_ / square(rho_max_ - s));
            return {p1, p2};
        }
        const double e = s / rho_max_;
        const double p1 =
            a_ * (1.0 + 4.0 * e + 4.0 * e * e - 4.0 * e * e * e + e * e * e * e) /
            square(square(1.0 - e));
        const double p2 = 4.0 * a_ / rho_max_ * (2.0 + 5.0 * e - e * e) /
                          (square(square(1.0 - e)) * (1.0 - e));
        return {p1, p2};
    }

    double pressure_deriv(double s) const { return pressure_derivatives(s).first; }

    /// Pressure potential P(s), adaptive-quadrature reference route.
    double potential(double s) const {
        check_domain(s, /*allow_zero=*/true);
        if (s == 0.0) return 0.0;
        if (s < z_cut_) return s * (phi_cut_ + phi_series(s));
        const double phi =
            phi_cut_ + quad::integrate([this](double z) { return pressure(z) / (z * z); },
                                       z_cut_, s, 1e-12);
        return s * (phi - phi_half_);
    }

    /// P(s) from the cached table. Below the first node the series branch is
    /// used; past the last node (within 1e-8 rho_max of the pole, beyond the
    /// solver barrier) the quadrature route takes over.
    double potential_cached(double s) const {
        check_domain(s, /*allow_zero=*/true);
        if (s == 0.0) return 0.0;
        if (s < s_table_.front()) return s * (phi_cut_ + phi_series(s));
        if (s > s_table_.back()) return potential(s);
        std::size_t i = locate(s);
        return spline_eval(i, s, 0);
    }

    /// P'(s) from the cached table.
    double potential_deriv_cached(double s) const {
        check_domain(s, /*allow_zero=*/false);
        if (s < s_table_.front()) return phi_cut_ + phi_series(s) + pressure(s) / s;
        if (s > s_table_.back()) return potential(s) / s + pressure(s) / s;
        return spline_eval(locate(s), s, 1);
    }

    /// P''(s) from the cached table.
    double potential_deriv2_cached(double s) const {
        check_domain(s, /*allow_zero=*/false);
        if (s < s_table_.front() || s > s_table_.back()) return pressure_deriv(s) / s;
        return spline_eval(locate(s), s, 2);
    }

    /// Bregman gap of the potential, P(rho) - P(r) - P'(r)(rho - r).
    /// Nonnegative for all valid arguments by convexity (P'' = p'/s > 0).
    double bregman_gap(double rho, double r) const {
        check_domain(rho, /*allow_zero=*/true);
        check_domain(r, /*allow_zero=*/false);
        if (rho == r) return 0.0;
        return potential_cached(rho) - potential_cached(r) -
               potential_deriv_cached(r) * (rho - r);
    }

    std::size_t table_nodes() const { return s_table_.size(); }

private:
    PressureLaw(Kind kind, double a, double gamma, double beta, double rho_max,
                std::size_t table_nodes)
        : kind_(kind), a_(a), gamma_(kind == Kind::CarnahanStarling ? 1.0 : gamma),
          beta_(beta), rho_max_(rho_max), ceiling_(rho_max * (1.0 - 1e-12)),
          z_cut_(1e-3 * rho_max) {
        if (table_nodes < 1024) table_nodes = 1024;
        build_series();
        phi_cut_ = -quad::integrate([this](double z) { return pressure(z) / (z * z); },
                                    z_cut_, 0.5 * rho_max_, 1e-13);
        // phi values are measured from rho_max/2, so phi_half_ = 0 by construction;
        // kept explicit to anchor the quadrature branch of potential().
        phi_half_ = 0.0;
        build_table(table_nodes);
    }

    static double square(double x) { return x * x; }
    static double cube(double x) { return x * x * x; }

    void check_domain(double s, bool allow_zero) const {
        if (std::isnan(s) || s < 0.0 || (!allow_zero && s == 0.0) || s >= ceiling_) {
            throw DomainError("density " + std::to_string(s) +
                              " outside admissible range [0, " +
                              std::to_string(ceiling_) + ")");
        }
    }

    // --- small-z series ----------------------------------------------------
    // p(z) = z^gamma * sum_k c_k z^k with the sum analytic at z = 0; below z_cut
    // the potential integrand p/z^2 is integrated term by term, which removes
    // the removable s*log cancellation at the origin.
    void build_series() {
        constexpr int K = 14;
        series_.resize(K);
        if (kind_ == Kind::Power) {
            double C = 1.0; // binomial (1-x)^{-beta} coefficients
            for (int k = 0; k < K; ++k) {
                if (k > 0) C *= (beta_ + k - 1.0) / k;
                series_[k] = a_ * C * std::pow(rho_max_, -beta_ - k);
            }
        } else {
            auto T = [](int k) { return k < 0 ? 0.0 : 0.5 * (k + 1.0) * (k + 2.0); };
            for (int k = 0; k < K; ++k) {
                const double g = T(k) + T(k - 1) + T(k - 2) - T(k - 3);
                series_[k] = a_ * g * std::pow(rho_max_, -static_cast<double>(k));
            }
        }
    }

    /// phi(s) - phi(z_cut) for s in (0, z_cut], via the series.
    double phi_series(double s) const {
        double acc = 0.0;
        for (std::size_t k = 0; k < series_.size(); ++k) {
            const double expnt = gamma_ - 1.0 + static_cast<double>(k);
            if (std::abs(expnt) < 1e-13) {
                acc += series_[k] * std::log(s / z_cut_);
            } else {
                acc += series_[k] / expnt *
                       (std::pow(s, expnt) - std::pow(z_cut_, expnt));
            }
        }
        return acc;
    }

    // --- potential table ----------------------------------------------------
    // Nodes uniform in tau = log(s / (rho_max - s)); this clusters toward both the
    // vacuum and the pole so the natural-spline second derivative tracks P''
    // to ~1e-7 relative across [0.05, 0.95] rho_max at the default node count.
    double tau_of(double s) const { return std::log(s / (rho_max_ - s)); }

    void build_table(std::size_t n) {
        const double smin = 1e-4 * rho_max_;
        // stop the table short of the pole so node spacing stays well above one
        // ulp; the quadrature route covers the remaining sliver
        const double smax = rho_max_ * (1.0 - 1e-8);
        tau0_ = tau_of(smin);
        dtau_ = (tau_of(smax) - tau0_) / static_cast<double>(n - 1);
        s_table_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double t = tau0_ + dtau_ * static_cast<double>(i);
            s_table_[i] = rho_max_ / (1.0 + std::exp(-t));
        }
        s_table_.front() = smin;
        s_table_.back() = smax;

        // cumulative phi from the first node; one GK15 panel per interval
        std::vector<double> phi(n);
        phi[0] = phi_cut_ + phi_series(smin);
        for (std::size_t i = 1; i < n; ++i) {
            double err = 0.0;
            double seg = quad::gk15_panel(
                [this](double z) { return pressure(z) / (z * z); }, s_table_[i - 1],
                s_table_[i], &err);
            if (err > 1e-10 * (std::abs(seg) + 1e-300)) {
                seg = quad::gk15_adaptive(
                    [this](double z) { return pressure(z) / (z * z); }, s_table_[i - 1],
                    s_table_[i], 1e-13);
            }
            phi[i] = phi[i - 1] + seg;
        }
        P_table_.resize(n);
        for (std::size_t i = 0; i < n; ++i) P_table_[i] = s_table_[i] * phi[i];

        build_natural_spline();
    }

    void build_natural_spline() {
        const std::size_t n = s_table_.size();
        M_table_.assign(n, 0.0);
        std::vector<double> diag(n, 0.0), rhs(n, 0.0), upper(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double hl = s_table_[i] - s_table_[i - 1];
            const double hr = s_table_[i + 1] - s_table_[i];
            diag[i] = (hl + hr) / 3.0;
            upper[i] = hr / 6.0;
            rhs[i] = (P_table_[i + 1] - P_table_[i]) / hr -
                     (P_table_[i] - P_table_[i - 1]) / hl;
        }
        // Thomas solve on interior unknowns, natural ends (M = 0).
        for (std::size_t i = 2; i + 1 < n; ++i) {
            const double hl = s_table_[i] - s_table_[i - 1];
            const double w = (hl / 6.0) / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for (std::size_t i = n - 2; i >= 1; --i) {
            const double hr = s_table_[i + 1] - s_table_[i];
            double val = rhs[i];
            if (i + 2 < n) val -= (hr / 6.0) * M_table_[i + 1];
            M_table_[i] = val / diag[i];
            if (i == 1) break;
        }
    }

    std::size_t locate(double s) const {
        const double t = tau_of(s);
        auto i = static_cast<std::ptrdiff_t>((t - tau0_) / dtau_);
        i = std::clamp<std::ptrdiff_t>(i, 0,
                                       static_cast<std::ptrdiff_t>(s_table_.size()) - 2);
        // guard against edge-of-interval rounding
        while (i > 0 && s < s_table_[i]) --i;
        while (i + 2 < static_cast<std::ptrdiff_t>(s_table_.size()) &&
               s > s_table_[i + 1])
            ++i;
        return static_cast<std::size_t>(i);
    }

    double spline_eval(std::size_t i, double s, int deriv) const {
        const double h = s_table_[i + 1] - s_table_[i];
        const double xa = s_table_[i + 1] - s, xb = s - s_table_[i];
        const double Ma = M_table_[i], Mb = M_table_[i + 1];
        switch (deriv) {
            case 0:
                return (Ma * cube(xa) + Mb * cube(xb)) / (6.0 * h) +
                       (P_table_[i] / h - Ma * h / 6.0) * xa +
                       (P_table_[i + 1] / h - Mb * h / 6.0) * xb;
            case 1:
                return (-Ma * square(xa) + Mb * square(xb)) / (2.0 * h) +
                       (P_table_[i + 1] - P_table_[i]) / h - (Mb - Ma) * h / 6.0;
            default:
                return (Ma * xa + Mb * xb) / h;
        }
    }

    Kind kind_;
    double a_;       // power coefficient, or kT for Carnahan-Starling
    double gamma_;   // 1 for Carnahan-Starling
    double beta_;
    double rho_max_;
    double ceiling_;
    double z_cut_;
    double phi_cut_ = 0.0;  // phi(z_cut) measured from rho_max/2
    double phi_half_ = 0.0;
    std::vector<double> series_;
    std::vector<double> s_table_, P_table_, M_table_;
    double tau0_ = 0.0, dtau_ = 1.0;
};

// ---------------------------------------------------------------------------
// Potential identity diagnostics
// ---------------------------------------------------------------------------

struct IdentityReport {
    double max_residual_first = 0.0;   // |P'(s)s - P(s) - p(s)| / |p(s)|
    double max_residual_second = 0.0;  // |P''(s) - p'(s)/s| / |p'(s)/s|
    bool pass = false;
};

/// Checks P's - P - p = 0 and P'' - p'/s = 0 with P', P'' taken from the
/// cached spline against the analytic pressure.
inline IdentityReport potential_identities_check(const PressureLaw& law,
                                                 const std::vector<double>& s_values,
                                                 double tol) {
    IdentityReport rep;
    for (double s : s_values) {
        const double p = law.pressure(s);
        const double p1 = law.pressure_deriv(s);
        const double P = law.potential_cached(s);
        const double P1 = law.potential_deriv_cached(s);
        const double P2 = law.potential_deriv2_cached(s);
        rep.max_residual_first =
            std::max(rep.max_residual_first, std::abs(P1 * s - P - p) / std::abs(p));
        rep.max_residual_second =
            std::max(rep.max_residual_second, std::abs(P2 - p1 / s) / std::abs(p1 / s));
    }
    rep.pass = rep.max_residual_first < tol && rep.max_residual_second < tol;
    return rep;
}

// ---------------------------------------------------------------------------
// Pointwise bound certificates
// ---------------------------------------------------------------------------

/// Numerically fitted constants for the three-branch lower bound on the Bregman
/// gap and the matching upper bound on the pressure gap, valid for comparison
/// densities r in [alpha0, rho_max - alpha0].
struct BoundsCertificate {
    double alpha0 = 0.0;
    double alpha1 = 0.0;
    double c_low = 0.0;  // gap >= c_low (rho - r)^2 on the middle branch
    double c_up = 0.0;   // p-gap <= c_up (rho - r)^2 on the middle branch
};

namespace detail {

struct BranchWorst {
    double low_margin = std::numeric_limits<double>::max();   // min(lhs - rhs) over lower bounds
    double up_margin = std::numeric_limits<double>::max();    // min(rhs - lhs) over upper bounds
    bool branch3_gt_one = true;                               // P(rho)/2 > 1 on branch 3
};

inline std::vector<double> rho_samples(const PressureLaw& law, double alpha1,
                                       std::size_t n) {
    const double rb = law.rho_max();
    std::vector<double> out;
    out.reserve(n);
    const std::size_t n1 = n / 4, n3 = n / 4;
    const std::size_t n2 = n - n1 - n3;
    for (std::size_t i = 0; i < n1; ++i)
        out.push_back(alpha1 * static_cast<double>(i) / static_cast<double>(n1 - 1));
    for (std::size_t i = 0; i < n2; ++i)
        out.push_back(alpha1 + (rb - 2.0 * alpha1) * (static_cast<double>(i) + 0.5) /
                                   static_cast<double>(n2));
    // branch 3 sampled geometrically toward the pole
    const double top = rb * (1.0 - 1e-8);
    for (std::size_t i = 0; i < n3; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(n3 - 1);
        out.push_back(rb - (alpha1) * std::pow((rb - top) / alpha1, f));
    }
    return out;
}

inline BranchWorst scan_certificate(const PressureLaw& law, double alpha0, double alpha1,
                                    double c_low, double c_up, std::size_t n) {
    BranchWorst w;
    const double rb = law.rho_max();
    const auto rhos = rho_samples(law, alpha1, n);
    for (std::size_t j = 0; j < n; ++j) {
        const double r = alpha0 + (rb - 2.0 * alpha0) * static_cast<double>(j) /
                                      static_cast<double>(n - 1);
        const double pr = law.pressure(r);
        const double pr1 = law.pressure_deriv(r);
        for (double rho : rhos) {
            const double gap = law.bregman_gap(rho, r);
            const double pgap = law.pressure(rho) - pr - pr1 * (rho - r);
            if (rho <= alpha1) {
                w.low_margin = std::min(w.low_margin, gap - 0.5 * pr);
                w.up_margin = std::min(w.up_margin, 1.0 + pr1 * r - pr - pgap);
            } else if (rho < rb - alpha1) {
                const double q = (rho - r) * (rho - r);
                w.low_margin = std::min(w.low_margin, gap - c_low * q);
                w.up_margin = std::min(w.up_margin, c_up * q - pgap);
            } else {
                const double Phalf = 0.5 * law.potential_cached(rho);
                w.low_margin = std::min(w.low_margin, gap - Phalf);
                w.up_margin = std::min(w.up_margin, 2.0 * law.pressure(rho) - pgap);
                if (!(Phalf > 1.0)) w.branch3_gt_one = false;
            }
        }
    }
    return w;
}

} // namespace detail

/// Searches alpha1 over {alpha0/2^k} and fits (c_low, c_up) by min/max over a
/// sample grid, then margin-tests at twice the density. Throws CertificateError
/// if no candidate validates.
inline BoundsCertificate pointwise_bounds_certificate(const PressureLaw& law,
                                                      double alpha0,
                                                      std::size_t n_fit = 200) {
    const double rb = law.rho_max();
    if (!(alpha0 > 0.0) || !(alpha0 < 0.5 * rb))
        throw DomainError("certificate: alpha0 must lie in (0, rho_max/2)");

    for (int k = 1; k <= 18; ++k) {
        const double alpha1 = alpha0 / std::pow(2.0, k);
        // cheap pre-checks: p(alpha1) <= 1 handles the vacuum-branch upper bound,
        // P(rho_max - alpha1)/2 > 1 is required verbatim by the pole branch
        if (law.pressure(alpha1) > 1.0) continue;
        if (!(0.5 * law.potential_cached(rb - alpha1) > 1.0)) continue;

        // fit middle-branch constants on the sample grid
        double c_low = std::numeric_limits<double>::max();
        double c_up = 0.0;
        for (std::size_t i = 0; i < n_fit; ++i) {
            const double rho =
                alpha1 + (rb - 2.0 * alpha1) * (static_cast<double>(i) + 0.5) /
                             static_cast<double>(n_fit);
            const double p2 = law.pressure_derivatives(rho).second;
            c_low = std::min(c_low, 0.5 * law.pressure_deriv(rho) / rho);
            c_up = std::max(c_up, 0.5 * std::abs(p2));
            for (std::size_t j = 0; j < n_fit; ++j) {
                const double r = alpha0 + (rb - 2.0 * alpha0) * static_cast<double>(j) /
                                              static_cast<double>(n_fit - 1);
                if (std::abs(rho - r) < 1e-9 * rb) continue;
                const double q = (rho - r) * (rho - r);
                c_low = std::min(c_low, law.bregman_gap(rho, r) / q);
                const double pgap =
                    law.pressure(rho) - law.pressure(r) - law.pressure_deriv(r) * (rho - r);
                c_up = std::max(c_up, pgap / q);
            }
        }
        c_low *= 0.95;
        c_up *= 1.05;
        if (!(c_low > 0.0)) continue;

        const auto worst =
            detail::scan_certificate(law, alpha0, alpha1, c_low, c_up, 2 * n_fit);
        if (worst.low_margin >= 0.0 && worst.up_margin >= 0.0 && worst.branch3_gt_one) {
            return BoundsCertificate{alpha0, alpha1, c_low, c_up};
        }
    }
    throw CertificateError("no (alpha1, c) pair validates the branch bounds");
}

/// Re-validates an existing certificate on an n x n grid; returns worst margins.
inline detail::BranchWorst validate_certificate(const PressureLaw& law,
                                                const BoundsCertificate& cert,
                                                std::size_t n) {
    return detail::scan_certificate(law, cert.alpha0, cert.alpha1, cert.c_low,
                                    cert.c_up, n);
}

/// Constant C with ||rho - r||_{L2}^2 <= C * integral of the Bregman gap,
/// assembled from the certificate branches.
inline double l2_density_control_constant(const PressureLaw& law,
                                          const BoundsCertificate& cert) {
    const double rb = law.rho_max();
    const double c1 = 2.0 * rb * rb / law.pressure(cert.alpha0);
    const double c2 = 1.0 / cert.c_low;
    const double c3 = 4.0 * rb * rb;
    return std::max({c1, c2, c3});
}

// ---------------------------------------------------------------------------
// Renormalization functions
// ---------------------------------------------------------------------------

/// C^1 nonnegative function b with b = 0 away from the packing density, a
/// monotone power-ramp bridge, and b(s) = -log(rho_max - s) near the pole.
/// Both b and b' are nondecreasing on [rho_max - alpha1, rho_max).
class RenormFunction {
public:
    RenormFunction(const PressureLaw& law, double alpha1, double alpha2)
        : rho_max_(law.rho_max()), alpha1_(alpha1), alpha2_(alpha2) {
        if (!(alpha2 > 0.0) || !(alpha2 < alpha1) || !(alpha1 < rho_max_))
            throw CertificateError("renorm function: need 0 < alpha2 < alpha1 < rho_max");
        const double logv = -std::log(alpha2);
        if (!(logv > 0.0))
            throw CertificateError("renorm function: alpha2 must be < 1 for a "
                                   "nonnegative log branch");
        const double mean = logv * alpha2 / (alpha1 - alpha2);
        if (!(mean <= 0.5))
            throw CertificateError("renorm function: bridge infeasible, shrink alpha2");
        k_ = 1.0 / mean - 1.0;
        check_admissibility(law);
    }

    double alpha1() const { return alpha1_; }
    double alpha2() const { return alpha2_; }
    /// Constant in |b'|^{5/2} + |b|^{5/2} <= c (1 + p), fitted on a dense grid.
    double admissibility_constant() const { return admiss_c_; }

    double operator()(double s) const { return value(s); }

    double value(double s) const {
        if (s <= rho_max_ - alpha1_) return 0.0;
        if (s >= rho_max_ - alpha2_) return -std::log(rho_max_ - s);
        const double xi = (s - (rho_max_ - alpha1_)) / (alpha1_ - alpha2_);
        return (alpha1_ - alpha2_) / (alpha2_ * (k_ + 1.0)) * std::pow(xi, k_ + 1.0);
    }

    double deriv(double s) const {
        if (s <= rho_max_ - alpha1_) return 0.0;
        if (s >= rho_max_ - alpha2_) return 1.0 / (rho_max_ - s);
        const double xi = (s - (rho_max_ - alpha1_)) / (alpha1_ - alpha2_);
        return std::pow(xi, k_) / alpha2_;
    }

    /// Truncation b_alpha: equal to b below rho_max - alpha, frozen above.
    double value_trunc(double s, double alpha) const {
        return s <= rho_max_ - alpha ? value(s) : value(rho_max_ - alpha);
    }

    /// b_alpha' with the convention b_alpha' = 0 at and above the freeze point.
    double deriv_trunc(double s, double alpha) const {
        return s < rho_max_ - alpha ? deriv(s) : 0.0;
    }

private:
    void check_admissibility(const PressureLaw& law) {
        // dense logit-spaced scan of (|b'|^{5/2} + |b|^{5/2}) / (1 + p)
        constexpr int N = 4096;
        const double smin = 1e-3 * rho_max_, smax = law.ceiling();
        const double t0 = std::log(smin / (rho_max_ - smin));
        const double t1 = std::log(smax / (rho_max_ - smax));
        double worst = 0.0;
        double prev_b = -1.0, prev_db = -1.0;
        for (int i = 0; i < N; ++i) {
            const double t = t0 + (t1 - t0) * i / (N - 1);
            const double s = rho_max_ / (1.0 + std::exp(-t));
            const double b = value(s), db = deriv(s);
            if (s >= rho_max_ - alpha1_) {
                if (b < prev_b - 1e-12 || db < prev_db - 1e-12)
                    throw CertificateError("renorm function: monotonicity violated");
                prev_b = b;
                prev_db = db;
            }
            const double ratio =
                (std::pow(std::abs(db), 2.5) + std::pow(std::abs(b), 2.5)) /
                (1.0 + law.pressure(s));
            worst = std::max(worst, ratio);
        }
        if (!std::isfinite(worst))
            throw CertificateError("renorm function: admissibility ratio diverges");
        admiss_c_ = 1.05 * std::max(worst, 1e-300);
    }

    double rho_max_, alpha1_, alpha2_;
    double k_ = 1.0;
    double admiss_c_ = 0.0;
};

/// Assembles the renormalization function for a given certificate threshold and
/// a sup-norm bound on the divergence of the comparison velocity's oscillatory
/// part. alpha2 is shrunk until -log(rho_max - s) dominates 8 * M_div on the log
/// branch and the C^1 bridge is feasible with a factor-2 margin.
inline RenormFunction renorm_b(const PressureLaw& law, double alpha1, double M_div) {
    if (M_div < 0.0) throw DomainError("renorm_b: divergence bound must be >= 0");
    double alpha2 = std::min({0.5 * alpha1, std::exp(-8.0 * M_div), 0.5});
    while (-std::log(alpha2) > 0.5 * (alpha1 / alpha2 - 1.0)) alpha2 *= 0.5;
    return RenormFunction(law, alpha1, alpha2);
}

} // namespace hslim::eos
