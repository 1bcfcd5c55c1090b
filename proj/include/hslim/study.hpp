#pragma once

// Study harness: JSON configuration, admissibility validation, the scenario
// library, sweep execution along limit paths nu = eps^{a_nu}, R = R0 eps^{-a_R},
// rate fitting, and deterministic CSV/JSON/plot-script emission.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "hslim/acoustics.hpp"
#include "hslim/cns.hpp"
#include "hslim/eos.hpp"
#include "hslim/errors.hpp"
#include "hslim/euler.hpp"
#include "hslim/io.hpp"
#include "hslim/relent.hpp"

namespace hslim::study {

using io::json;

struct PathRule {
    double nu_exponent = 2.0 / 3.0; // nu = eps^{a_nu}, 0 < a_nu < 1
    double R0 = 0.26;
    double R_exponent = 1.5; // R = R0 eps^{-a_R}, a_R > 1
};

struct ProfileSpec {
    std::string shape = "bump"; // bump | random
    double amplitude = 0.0;
    double sigma = 0.3;
    double center = 0.0;
    int k_min = 1, k_max = 4; // random shape only
};

struct DataSpec {
    ProfileSpec density;         // rho^(1)_0 target profile
    ProfileSpec velocity;        // u_0 target profile (2d: stream amplitude)
    ProfileSpec density_offset;  // rho^(1)_{0,eps} - rho^(1)_0
    ProfileSpec velocity_offset; // u_{0,eps} - u_0
    ProfileSpec spike;           // near-barrier addition to the offset
};

struct StudyConfig {
    std::string scenario = "acoustic-pulse-1d";
    json law_spec;
    std::vector<double> eps_list;
    PathRule path;
    double target_h = 0.045;
    int min_cells = 128;
    int max_cells = 1 << 15;
    double D = 2.0, varrho = 1.0, T = 0.5, mu = 1.0, eps0 = 0.21;
    double alpha = 0.5;  // rate-bound exponent
    double alpha0 = 0.5; // certificate margin for the comparison density
    double emit_dt = 0.01;
    double shell_width = 0.5;
    DataSpec data;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    int workers = 1;
    double rei_tol_rel = 1e-2;
    double rei_tol_abs = 1e-10;
    double eps1 = 0.0; // filled by validate_config from the measured sup |s|
    bool init_bound_satisfied = true;

    double nu_of(double eps) const { return std::pow(eps, path.nu_exponent); }
    double R_of(double eps) const { return path.R0 * std::pow(eps, -path.R_exponent); }
    int cells_of(double eps) const {
        const double want = 2.0 * R_of(eps) / target_h;
        int n = min_cells;
        while (n < want && n < max_cells) n *= 2;
        return n;
    }
    bool is_2d() const { return scenario == "taylor-green-coupled-2d"; }
};

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

inline eos::PressureLaw law_from_json(const json& j) {
    const std::string variant = j.at("variant").get<std::string>();
    if (variant == "power") {
        return eos::PressureLaw::power(j.at("a").get<double>(),
                                       j.at("gamma").get<double>(),
                                       j.at("beta").get<double>(),
                                       j.at("rho_bar").get<double>());
    }
    if (variant == "cs") {
        return eos::PressureLaw::carnahan_starling(j.at("kT").get<double>(),
                                                   j.at("rho_bar").get<double>());
    }
    throw ConfigError("unknown pressure-law variant: " + variant);
}

inline ProfileSpec profile_from_json(const json& j) {
    ProfileSpec p;
    if (j.contains("shape")) p.shape = j.at("shape").get<std::string>();
    if (j.contains("amplitude")) p.amplitude = j.at("amplitude").get<double>();
    if (j.contains("sigma")) p.sigma = j.at("sigma").get<double>();
    if (j.contains("center")) p.center = j.at("center").get<double>();
    if (j.contains("k_min")) p.k_min = j.at("k_min").get<int>();
    if (j.contains("k_max")) p.k_max = j.at("k_max").get<int>();
    return p;
}

inline StudyConfig parse_config(const json& j) {
    StudyConfig c;
    c.scenario = j.at("scenario").get<std::string>();
    c.law_spec = j.at("law");
    c.eps_list = j.at("eps_list").get<std::vector<double>>();
    if (j.contains("path")) {
        const auto& p = j.at("path");
        if (p.contains("nu_exponent"))
            c.path.nu_exponent = p.at("nu_exponent").get<double>();
        if (p.contains("R0")) c.path.R0 = p.at("R0").get<double>();
        if (p.contains("R_exponent"))
            c.path.R_exponent = p.at("R_exponent").get<double>();
    }
    if (j.contains("resolution")) {
        const auto& r = j.at("resolution");
        if (r.contains("target_h")) c.target_h = r.at("target_h").get<double>();
        if (r.contains("min_cells")) c.min_cells = r.at("min_cells").get<int>();
        if (r.contains("max_cells")) c.max_cells = r.at("max_cells").get<int>();
    }
    for (auto [key, dst] : std::initializer_list<std::pair<const char*, double*>>{
             {"D", &c.D},
             {"varrho", &c.varrho},
             {"T", &c.T},
             {"mu", &c.mu},
             {"eps0", &c.eps0},
             {"alpha", &c.alpha},
             {"alpha0", &c.alpha0},
             {"emit_dt", &c.emit_dt},
             {"shell_width", &c.shell_width}}) {
        if (j.contains(key)) *dst = j.at(key).get<double>();
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        if (d.contains("density")) c.data.density = profile_from_json(d.at("density"));
        if (d.contains("velocity"))
            c.data.velocity = profile_from_json(d.at("velocity"));
        if (d.contains("density_offset"))
            c.data.density_offset = profile_from_json(d.at("density_offset"));
        if (d.contains("velocity_offset"))
            c.data.velocity_offset = profile_from_json(d.at("velocity_offset"));
        if (d.contains("spike")) c.data.spike = profile_from_json(d.at("spike"));
    }
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("workers")) c.workers = j.at("workers").get<int>();
    if (j.contains("tolerances")) {
        const auto& t = j.at("tolerances");
        if (t.contains("rei_rel")) c.rei_tol_rel = t.at("rei_rel").get<double>();
        if (t.contains("rei_abs")) c.rei_tol_abs = t.at("rei_abs").get<double>();
    }
    return c;
}

inline json config_to_json(const StudyConfig& c) {
    auto prof = [](const ProfileSpec& p) {
        return json{{"shape", p.shape},   {"amplitude", p.amplitude},
                    {"sigma", p.sigma},   {"center", p.center},
                    {"k_min", p.k_min},   {"k_max", p.k_max}};
    };
    json j;
    j["scenario"] = c.scenario;
    j["law"] = c.law_spec;
    j["eps_list"] = c.eps_list;
    j["path"] = {{"nu_exponent", c.path.nu_exponent},
                 {"R0", c.path.R0},
                 {"R_exponent", c.path.R_exponent}};
    j["resolution"] = {{"target_h", c.target_h},
                       {"min_cells", c.min_cells},
                       {"max_cells", c.max_cells}};
    j["D"] = c.D;
    j["varrho"] = c.varrho;
    j["T"] = c.T;
    j["mu"] = c.mu;
    j["eps0"] = c.eps0;
    j["alpha"] = c.alpha;
    j["alpha0"] = c.alpha0;
    j["emit_dt"] = c.emit_dt;
    j["shell_width"] = c.shell_width;
    j["data"] = {{"density", prof(c.data.density)},
                 {"velocity", prof(c.data.velocity)},
                 {"density_offset", prof(c.data.density_offset)},
                 {"velocity_offset", prof(c.data.velocity_offset)},
                 {"spike", prof(c.data.spike)}};
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["tolerances"] = {{"rei_rel", c.rei_tol_rel}, {"rei_abs", c.rei_tol_abs}};
    j["eps1"] = c.eps1;
    j["init_bound_satisfied"] = c.init_bound_satisfied;
    return j;
}

// ---------------------------------------------------------------------------
// Data profiles
// ---------------------------------------------------------------------------

namespace detail {

inline double compact_gaussian(double x, double radius, double sigma) {
    if (std::abs(x) >= radius) return 0.0;
    return std::exp(-0.5 * x * x / (sigma * sigma));
}

/// Evaluate a profile at x (1d) or radius r (2d), supported inside the data ball.
inline double profile_value(const ProfileSpec& p, double x, double D,
                            std::uint64_t seed) {
    if (p.amplitude == 0.0) return 0.0;
    const double z = x - p.center;
    if (p.shape == "bump") return p.amplitude * compact_gaussian(z, D, p.sigma);
    if (p.shape == "random") {
        std::mt19937_64 gen(seed);
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        double val = 0.0;
        for (int k = p.k_min; k <= p.k_max; ++k) {
            const double a = U(gen), b = U(gen);
            val += a * std::sin(M_PI * k * z / D) + b * std::cos(M_PI * k * z / D);
        }
        return p.amplitude * val * compact_gaussian(z, D, 0.35 * D);
    }
    throw ConfigError("unknown profile shape: " + p.shape);
}

/// Amplitude envelope used by the admissibility probe; library shapes
/// (taylor-green, vortex selections) are bounded by their amplitude.
inline double profile_probe_value(const ProfileSpec& p, double x, double D,
                                  std::uint64_t seed) {
    if (p.shape == "bump" || p.shape == "random")
        return profile_value(p, x, D, seed);
    return p.amplitude * compact_gaussian(x - p.center, D, 0.4 * D);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Checks every admissibility inequality and fills the measured eps1 ceiling.
/// Throws ConfigError naming the violated inequality.
inline StudyConfig validate_config(StudyConfig c) {
    if (c.eps_list.empty()) throw ConfigError("eps_list must not be empty");
    for (std::size_t i = 1; i < c.eps_list.size(); ++i)
        if (!(c.eps_list[i] < c.eps_list[i - 1]))
            throw ConfigError("eps_list must be strictly descending");
    for (double e : c.eps_list)
        if (!(e > 0.0)) throw ConfigError("eps values must be positive");

    if (!(c.path.R_exponent > 1.0))
        throw ConfigError("limit path: eps R(eps) must diverge (need R_exponent > 1)");
    if (!(c.path.nu_exponent > 0.0 && c.path.nu_exponent < 1.0))
        throw ConfigError(
            "limit path: need 0 < nu_exponent < 1 so that nu -> 0 and eps/nu -> 0");
    if (!(c.path.R0 > 0.0)) throw ConfigError("limit path: R0 must be positive");

    auto law = law_from_json(c.law_spec);
    if (!(1.0 / c.D < c.varrho - c.eps0 * c.D))
        throw ConfigError("admissibility: D^-1 < varrho - eps0 D violated");
    if (!(c.varrho + c.eps0 * c.D < law.rho_max()))
        throw ConfigError("admissibility: varrho + eps0 D < rho_max violated");

    const double cp = law.pressure_deriv(c.varrho);
    for (double e : c.eps_list) {
        if (!(e < c.eps0))
            throw ConfigError("admissibility: eps < eps0 violated at eps = " +
                              std::to_string(e));
        const double reach = c.D + std::sqrt(cp) * c.T / e;
        if (!(c.R_of(e) > reach))
            throw ConfigError("isolation radius: R > D + sqrt(p'(varrho)) T / eps "
                              "violated at eps = " +
                              std::to_string(e));
    }

    if (c.workers < 1) throw ConfigError("workers must be >= 1");
    if (!(c.emit_dt > 0.0) || c.emit_dt > c.T)
        throw ConfigError("emit_dt must lie in (0, T]");

    // data-norm bound ||u_0|| + ||rho1_0|| + sup |rho1_0| <= D; the near-barrier
    // scenario deliberately exceeds it through the spike offset and records
    // that instead of failing
    {
        const double probe_L = std::max(c.D * 2.0, 4.0);
        const int n = 512;
        double l2r = 0.0, l2u = 0.0, supr = 0.0;
        const double h = 2.0 * probe_L / n;
        for (int i = 0; i < n; ++i) {
            const double x = -probe_L + (i + 0.5) * h;
            const double r1 =
                detail::profile_value(c.data.density, x, c.D, c.seed) +
                detail::profile_value(c.data.density_offset, x, c.D, c.seed + 2) +
                detail::profile_value(c.data.spike, x, c.D, c.seed + 3);
            const double uu =
                detail::profile_probe_value(c.data.velocity, x, c.D, c.seed + 1) +
                detail::profile_probe_value(c.data.velocity_offset, x, c.D,
                                            c.seed + 4);
            l2r += r1 * r1 * h;
            l2u += uu * uu * h;
            supr = std::max(supr, std::abs(r1));
        }
        const double norm_sum = std::sqrt(l2r) + std::sqrt(l2u) + supr;
        c.init_bound_satisfied = norm_sum <= c.D;
        if (!c.init_bound_satisfied && c.scenario != "near-barrier-bump")
            throw ConfigError("initial-data bound: ||u_0|| + ||rho1_0|| + sup|rho1_0| "
                              "<= D violated (measured " +
                              std::to_string(norm_sum) + ")");
    }

    // measured sup-norm of the acoustic perturbation over the horizon
    {
        const double L = c.R_of(c.eps_list.front());
        auto g = fields::make_grid(1, L, 256, fields::Boundary::Periodic);
        fields::ScalarField s0(g);
        for (int i = 0; i < g.cells[0]; ++i)
            s0.at(i) =
                detail::profile_value(c.data.density, g.center(0, i), c.D, c.seed);
        fields::VectorField gp0(g);
        double sup = fields::norm_linf(s0);
        if (sup > 0.0) {
            acoustics::AcousticParams ap{c.eps_list.front(), c.varrho, cp};
            acoustics::SpectralAcousticSolver ac(s0, gp0, ap);
            for (int k = 0; k <= 20; ++k)
                sup = std::max(sup, fields::norm_linf(ac.s_at(c.T * k / 20.0)));
        }
        c.eps1 = relent::eps1_ceiling(sup, law.rho_max(), c.varrho);
        for (double e : c.eps_list)
            if (!(e < c.eps1))
                throw ConfigError("comparison-density ceiling: eps < eps1 violated "
                                  "at eps = " +
                                  std::to_string(e));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Sweep results
// ---------------------------------------------------------------------------

struct PointResult {
    double eps = 0.0, nu = 0.0, R = 0.0;
    int cells = 0;
    bool completed = false;
    std::string error;

    double sup_vel_gap = 0.0;
    double sup_dens_gap = 0.0;
    double dist_u_sq = 0.0;
    double dist_rho_sq = 0.0;
    double rhs_bound = 0.0;
    bool rei_passed = false;
    double rei_worst_violation = 0.0;
    double pb_term_final = 0.0;
    double cancellation_rel1 = 0.0, cancellation_rel2 = 0.0, cancellation_rel3 = 0.0;
    double mean_pressure_direct = 0.0;
    bool mean_pressure_bound_holds = false;
    double mean_pressure_identity_gap = 0.0;
    cns::UniformEstimates uniform;
    double density_control_worst = 0.0; // max_tau ||rho - r||^2 / (C int gap)
    double corrector_w2p = 0.0;     // sup_tau ||w_R||_{W^{2,2}}
    double corrector_dt_l2 = 0.0;   // sup_tau ||dt w_R||_{L^2} (differenced)
    double euler_pressure_norm = 0.0;
    double euler_grad_pressure_norm = 0.0;
    double euler_dt_pressure_norm = 0.0;
};

struct RateReport {
    std::vector<PointResult> rows; // sorted by eps descending
    double slope_vel = 0.0, slope_vel_stderr = 0.0;
    double slope_dens = 0.0, slope_dens_stderr = 0.0;
    bool has_slopes = false;
    bool all_passed = false;
    double c_DT = 1.0, c2 = 1.0;
    std::uint64_t config_hash = 0;
};

/// Ordinary least squares of log(gap) against log(eps); requires >= 3 rows
/// with positive gaps.
inline std::pair<double, double> fit_rate(const std::vector<double>& eps,
                                          const std::vector<double>& gap) {
    if (eps.size() != gap.size() || eps.size() < 3)
        throw FitError("rate fit needs at least three sweep points");
    std::vector<double> x, y;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(gap[i] > 0.0)) throw FitError("rate fit needs positive gaps");
        x.push_back(std::log(eps[i]));
        y.push_back(std::log(gap[i]));
    }
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - slope * x[i] - intercept;
        ss += e * e;
    }
    const double se =
        x.size() > 2 ? std::sqrt(ss / (n - 2.0) / (sxx - sx * sx / n)) : 0.0;
    return {slope, se};
}

// ---------------------------------------------------------------------------
// Point execution
// ---------------------------------------------------------------------------

namespace detail {

/// Shared diagnostics once the solver and comparison trajectories exist.
inline void evaluate_point(const StudyConfig& cfg, const eos::PressureLaw& law,
                           const cns::ScalingParams& prm,
                           const std::vector<cns::FluidState>& traj,
                           const std::vector<relent::ComparisonFields>& cmp,
                           const std::filesystem::path& dir, PointResult& res) {
    const auto& g = traj.front().rho.grid;

    for (std::size_t n = 0; n < traj.size(); ++n) {
        auto [vel, dens] = relent::limit_distance(traj[n], cmp[n]);
        res.sup_vel_gap = std::max(res.sup_vel_gap, vel);
        res.sup_dens_gap = std::max(res.sup_dens_gap, dens);
    }

    auto cert = eos::pointwise_bounds_certificate(law, cfg.alpha0);
    double M_div = 0.0;
    for (const auto& cm : cmp) {
        fields::VectorField osc(g);
        for (int c = 0; c < g.dim; ++c)
            for (std::size_t i = 0; i < osc.comp[c].size(); ++i)
                osc.comp[c][i] = cm.w_R.comp[c][i] + cm.grad_psi.comp[c][i];
        M_div = std::max(M_div, fields::norm_linf(fields::div(osc)));
    }
    auto b = eos::renorm_b(law, cert.alpha1, M_div);
    auto rep = relent::rei_check(
        traj, cmp, [&](double s) { return b.value(s); },
        [&](double s) { return b.deriv(s); }, law, prm, cfg.rei_tol_rel,
        cfg.rei_tol_abs);
    res.rei_passed = rep.passed;
    for (const auto& row : rep.rows)
        res.rei_worst_violation = std::max(res.rei_worst_violation, row.lhs_minus_rhs);
    res.pb_term_final = rep.rows.back().pb_term;

    // density-control invariant along the run
    {
        const double C = eos::l2_density_control_constant(law, cert);
        const double vol = g.cell_volume();
        for (std::size_t n = 0; n < traj.size(); ++n) {
            double l2 = 0.0, gap = 0.0;
            bool in_range = true;
            for (std::size_t i = 0; i < traj[n].rho.v.size(); ++i) {
                const double rr = cmp[n].r.v[i];
                in_range =
                    in_range && rr >= cfg.alpha0 && rr <= law.rho_max() - cfg.alpha0;
                const double d = traj[n].rho.v[i] - rr;
                l2 += d * d * vol;
                gap += law.bregman_gap(traj[n].rho.v[i], rr) * vol;
            }
            if (in_range && gap > 0.0)
                res.density_control_worst =
                    std::max(res.density_control_worst, l2 / (C * gap));
        }
    }

    if (traj.size() >= 3) {
        auto pairs = relent::cancellation_pairs(traj, cmp, law, prm);
        res.cancellation_rel1 = pairs.rel1;
        res.cancellation_rel2 = pairs.rel2;
        res.cancellation_rel3 = pairs.rel3;
    }

    for (std::size_t n = 0; n < cmp.size(); ++n) {
        res.corrector_w2p = std::max(res.corrector_w2p, relent::norm_w2p(cmp[n].w_R, 2.0));
        if (n > 0 && n + 1 < cmp.size()) {
            fields::VectorField dtw(g);
            const double dt = cmp[n + 1].t - cmp[n - 1].t;
            for (int c = 0; c < g.dim; ++c)
                for (std::size_t i = 0; i < dtw.comp[c].size(); ++i)
                    dtw.comp[c][i] =
                        (cmp[n + 1].w_R.comp[c][i] - cmp[n - 1].w_R.comp[c][i]) / dt;
            res.corrector_dt_l2 = std::max(res.corrector_dt_l2, fields::norm_l2(dtw));
        }
    }

    auto mp = relent::mean_pressure_estimate(traj, law, prm);
    res.mean_pressure_direct = mp.direct;
    res.mean_pressure_bound_holds = mp.bound_holds && mp.m_below_rho_max;
    res.mean_pressure_identity_gap = mp.identity_gap_rel;

    res.uniform = cns::uniform_estimates(traj, law, prm, cert.alpha1);

    // per-point artifacts
    std::filesystem::create_directories(dir / "snapshots");
    io::Csv ledger({"t", "kinetic", "potential", "dissipation", "mass"});
    for (const auto& st : traj)
        ledger.row({st.t, st.ledger.kinetic, st.ledger.potential,
                    st.ledger.dissipation, st.ledger.mass});
    ledger.write(dir / "ledger.csv");
    io::Csv relcsv({"tau", "E", "dissipation", "pb_term", "R1", "R2", "R3",
                    "lhs_minus_rhs"});
    for (const auto& row : rep.rows)
        relcsv.row({row.tau, row.entropy, row.dissipation, row.pb_term, row.r1, row.r2,
                    row.r3, row.lhs_minus_rhs});
    relcsv.write(dir / "relent.csv");
    io::save_scalar(traj.front().rho, dir / "snapshots" / "rho_first", traj.front().t,
                    "density", "mass/volume");
    io::save_scalar(traj.back().rho, dir / "snapshots" / "rho_last", traj.back().t,
                    "density", "mass/volume");
}

inline PointResult run_point_1d(const StudyConfig& cfg, double eps,
                                const std::filesystem::path& dir) {
    PointResult res;
    res.eps = eps;
    res.nu = cfg.nu_of(eps);
    res.R = cfg.R_of(eps);
    res.cells = cfg.cells_of(eps);

    auto law = law_from_json(cfg.law_spec);
    cns::ScalingParams prm{eps,    res.nu, res.R, cfg.D,
                           cfg.varrho, cfg.T, cfg.mu, cfg.eps0};

    const double L = res.R;
    const int N = res.cells;
    auto g = fields::make_grid(1, L, N, fields::Boundary::NoSlipBox);
    auto gper = fields::make_grid(1, L, N, fields::Boundary::Periodic);

    // target data
    fields::ScalarField rho1_target(g);
    fields::VectorField u_target(g);
    for (int i = 0; i < N; ++i)
        rho1_target.at(i) =
            profile_value(cfg.data.density, g.center(0, i), cfg.D, cfg.seed);
    for (int i = 0; i <= N; ++i)
        u_target.at(0, i) =
            profile_value(cfg.data.velocity, g.face(0, i), cfg.D, cfg.seed + 1);
    u_target.zero_boundary_faces();

    // solver data = target + ill-prepared offsets (+ spike)
    fields::ScalarField rho0(g);
    fields::VectorField u0(g);
    for (int i = 0; i < N; ++i) {
        double r1 = rho1_target.at(i);
        r1 += profile_value(cfg.data.density_offset, g.center(0, i), cfg.D,
                            cfg.seed + 2);
        r1 += profile_value(cfg.data.spike, g.center(0, i), cfg.D, cfg.seed + 3);
        rho0.at(i) = cfg.varrho + eps * r1;
    }
    for (int i = 0; i <= N; ++i)
        u0.at(0, i) = u_target.at(0, i) + profile_value(cfg.data.velocity_offset,
                                                        g.face(0, i), cfg.D,
                                                        cfg.seed + 4);
    u0.zero_boundary_faces();

    {
        const double vol = g.cell_volume();
        for (int i = 0; i <= N; ++i) {
            const double d = u0.at(0, i) - u_target.at(0, i);
            res.dist_u_sq += d * d * vol;
        }
        for (int i = 0; i < N; ++i) {
            const double d = (rho0.at(i) - cfg.varrho) / eps - rho1_target.at(i);
            res.dist_rho_sq += d * d * vol;
        }
    }

    // acoustic data from the target: s0 = rho1, grad Psi0 = u0 - H(u0)
    fields::ScalarField s0(gper);
    s0.v = rho1_target.v;
    double u_mean = 0.0;
    for (int i = 0; i < N; ++i) u_mean += u_target.at(0, i);
    u_mean /= N;
    fields::VectorField grad_psi0_per(gper);
    for (int i = 0; i < N; ++i)
        grad_psi0_per.at(0, i) = u_target.at(0, i) - u_mean;

    const double cp = law.pressure_deriv(cfg.varrho);
    acoustics::AcousticParams aprm{eps, cfg.varrho, cp};
    acoustics::SpectralAcousticSolver ac(s0, grad_psi0_per, aprm);

    // 1d Euler target: v = H(u0) is the constant mean (corrector cancels it at
    // the boundary)
    fields::VectorField v(g), dtv(g);
    for (int i = 0; i <= N; ++i) v.at(0, i) = u_mean;

    auto chi = relent::build_cutoff(g, std::max(cfg.shell_width, 4.5 * g.h(0)));
    fields::VectorField grad_psi0_ns = ac.grad_psi_on_noslip(0.0, g);
    fields::ScalarField Pi(g);

    auto traj = cns::solve_cns(rho0, u0, law, prm, cfg.emit_dt);
    std::vector<relent::ComparisonFields> cmp;
    cmp.reserve(traj.size());
    for (const auto& st : traj)
        cmp.push_back(relent::assemble_comparison(g, ac, v, dtv, Pi, chi, grad_psi0_ns,
                                                  st.t, eps, cfg.varrho, law));

    evaluate_point(cfg, law, prm, traj, cmp, dir, res);
    res.completed = true;
    return res;
}

inline PointResult run_point_2d(const StudyConfig& cfg, double eps,
                                const std::filesystem::path& dir) {
    PointResult res;
    res.eps = eps;
    res.nu = cfg.nu_of(eps);
    res.R = cfg.R_of(eps);
    res.cells = cfg.cells_of(eps);

    auto law = law_from_json(cfg.law_spec);
    cns::ScalingParams prm{eps,    res.nu, res.R, cfg.D,
                           cfg.varrho, cfg.T, cfg.mu, cfg.eps0};

    const double L = res.R;
    const int N = res.cells;
    auto g = fields::make_grid(2, L, N, fields::Boundary::NoSlipBox);
    auto gper = fields::make_grid(2, L, N, fields::Boundary::Periodic);

    // target velocity from the selectable initial-condition library
    fields::ScalarField omega0(gper);
    if (cfg.data.velocity.shape == "bump") {
        omega0 = euler::compact_vortex_omega(gper, cfg.D * 0.8,
                                             cfg.data.velocity.amplitude);
    } else if (cfg.data.velocity.shape == "taylor-green") {
        omega0 = euler::taylor_green_omega(gper, cfg.data.velocity.amplitude,
                                           M_PI / L);
    } else if (cfg.data.velocity.shape == "random") {
        omega0 = euler::random_bandlimited_omega(
            gper, cfg.data.velocity.k_min, cfg.data.velocity.k_max,
            cfg.data.velocity.amplitude, cfg.seed + 5);
    } else {
        throw ConfigError("unknown 2d velocity shape: " + cfg.data.velocity.shape);
    }
    auto v0_per = fields::biot_savart(omega0);

    // target density perturbation: radial bump
    fields::ScalarField rho1_target(g);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) {
            const double r = std::hypot(g.center(0, i), g.center(1, j));
            rho1_target.at(i, j) =
                profile_value(cfg.data.density, r, cfg.D, cfg.seed);
        }

    auto wrap_to_noslip = [&](const fields::VectorField& per) {
        fields::VectorField out(g);
        for (int j = 0; j < N; ++j)
            for (int i = 0; i <= N; ++i) out.at(0, i, j) = per.at(0, i % N, j);
        for (int j = 0; j <= N; ++j)
            for (int i = 0; i < N; ++i) out.at(1, i, j) = per.at(1, i, j % N);
        return out;
    };

    fields::VectorField u_target = wrap_to_noslip(v0_per);
    u_target.zero_boundary_faces();

    fields::ScalarField rho0(g);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) {
            const double r = std::hypot(g.center(0, i), g.center(1, j));
            double r1 = rho1_target.at(i, j);
            r1 += profile_value(cfg.data.density_offset, r, cfg.D, cfg.seed + 2);
            rho0.at(i, j) = cfg.varrho + eps * r1;
        }
    fields::VectorField u0 = u_target;
    {
        const double vol = g.cell_volume();
        for (std::size_t i = 0; i < rho0.v.size(); ++i) {
            const double d = (rho0.v[i] - cfg.varrho) / eps - rho1_target.v[i];
            res.dist_rho_sq += d * d * vol;
        }
    }

    // acoustics: s0 = rho1, grad Psi0 = u0 - H(u0) = 0 for the vortex data
    fields::ScalarField s0(gper);
    s0.v = rho1_target.v;
    fields::VectorField grad_psi0_per(gper);
    const double cp = law.pressure_deriv(cfg.varrho);
    acoustics::AcousticParams aprm{eps, cfg.varrho, cp};
    acoustics::SpectralAcousticSolver ac(s0, grad_psi0_per, aprm);

    auto chi = relent::build_cutoff(
        g, std::max(cfg.shell_width, 4.5 * std::max(g.h(0), g.h(1))));
    fields::VectorField grad_psi0_ns = ac.grad_psi_on_noslip(0.0, g);

    auto traj = cns::solve_cns(rho0, u0, law, prm, cfg.emit_dt);

    // Euler target evolved once, shared across the comparison assembly
    euler::PseudoSpectralEuler esolver(omega0);
    std::vector<relent::ComparisonFields> cmp;
    cmp.reserve(traj.size());
    fields::ScalarField Pi_prev(g);
    double t_prev = 0.0;
    double dtpi_norm = 0.0;
    const double hmin = std::min(gper.h(0), gper.h(1));
    for (std::size_t n = 0; n < traj.size(); ++n) {
        const double t = traj[n].t;
        while (esolver.time() < t - 1e-13) {
            const double vmax = std::max(esolver.max_velocity(), 1e-12);
            const double dt = std::min(0.4 * hmin / vmax, t - esolver.time());
            esolver.step(dt);
        }
        auto v_per = esolver.velocity_mac();
        auto dtv_per = esolver.dt_velocity_mac();
        auto pi_per = euler::euler_pressure(v_per);
        fields::ScalarField Pi(g);
        Pi.v = pi_per.v;
        auto vf = wrap_to_noslip(v_per);
        auto dtvf = wrap_to_noslip(dtv_per);
        cmp.push_back(relent::assemble_comparison(g, ac, vf, dtvf, Pi, chi,
                                                  grad_psi0_ns, t, eps, cfg.varrho,
                                                  law));
        res.euler_pressure_norm = std::max(res.euler_pressure_norm,
                                           fields::norm_l2(Pi));
        res.euler_grad_pressure_norm = std::max(
            res.euler_grad_pressure_norm, fields::norm_l2(fields::grad_periodic(pi_per)));
        if (n > 0) {
            fields::ScalarField dpi = Pi - Pi_prev;
            fields::scale(dpi, 1.0 / (t - t_prev));
            dtpi_norm = std::max(dtpi_norm, fields::norm_l2(dpi));
        }
        Pi_prev = Pi;
        t_prev = t;
    }
    res.euler_dt_pressure_norm = dtpi_norm;

    evaluate_point(cfg, law, prm, traj, cmp, dir, res);
    res.completed = true;
    return res;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Study driver
// ---------------------------------------------------------------------------

inline PointResult run_point(const StudyConfig& cfg, double eps,
                             const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    return cfg.is_2d() ? detail::run_point_2d(cfg, eps, dir)
                       : detail::run_point_1d(cfg, eps, dir);
}

/// Calibrates the envelope constant so the bound matches the measured gap at
/// the reference (smallest-eps) point, then freezes it for the other points.
inline double calibrate_c_DT(const StudyConfig& cfg, const PointResult& ref) {
    const double target = ref.sup_vel_gap + ref.sup_dens_gap;
    if (!(target > 0.0)) return 1.0;
    auto law = law_from_json(cfg.law_spec);
    relent::RateBoundInputs in;
    in.eps = ref.eps;
    in.nu = ref.nu;
    in.R = ref.R;
    in.alpha = cfg.alpha;
    in.dist_u_sq = ref.dist_u_sq;
    in.dist_rho_sq = ref.dist_rho_sq;
    in.eps0 = cfg.eps0;
    in.eps1 = cfg.eps1 > 0.0 ? cfg.eps1 : 1e9;
    in.rho_max = law.rho_max();
    in.varrho = cfg.varrho;
    in.D = cfg.D;
    double lo = 1e-12, hi = 1e6;
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);
        in.c_DT = mid;
        in.c2 = mid;
        if (relent::rate_bound_rhs(in) < target)
            lo = mid;
        else
            hi = mid;
    }
    return std::sqrt(lo * hi);
}

inline RateReport run_study(const StudyConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const json normalized = config_to_json(cfg);
    {
        std::ofstream out(fs::path(cfg.out_dir) / "config.json");
        out << normalized.dump(2) << "\n";
    }

    RateReport report;
    report.config_hash = io::fnv1a(normalized.dump());
    report.rows.resize(cfg.eps_list.size());

    // sweep points run concurrently with private run directories; a failed
    // point is recorded, not fatal
    auto run_one = [&](std::size_t idx) {
        const double eps = cfg.eps_list[idx];
        char name[64];
        std::snprintf(name, sizeof(name), "eps_%g", eps);
        const fs::path dir = fs::path(cfg.out_dir) / name;
        try {
            report.rows[idx] = run_point(cfg, eps, dir);
        } catch (const std::exception& e) {
            report.rows[idx] = PointResult{};
            report.rows[idx].eps = eps;
            report.rows[idx].nu = cfg.nu_of(eps);
            report.rows[idx].R = cfg.R_of(eps);
            report.rows[idx].error = e.what();
        }
    };
    std::size_t next = 0;
    while (next < cfg.eps_list.size()) {
        const std::size_t batch =
            std::min<std::size_t>(cfg.workers, cfg.eps_list.size() - next);
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < batch; ++k) pool.emplace_back(run_one, next + k);
        for (auto& t : pool) t.join();
        next += batch;
    }

    // calibrate the bound on the smallest-eps completed point and freeze it
    const PointResult* ref = nullptr;
    for (auto it = report.rows.rbegin(); it != report.rows.rend(); ++it)
        if (it->completed) {
            ref = &*it;
            break;
        }
    if (ref) {
        report.c_DT = calibrate_c_DT(cfg, *ref);
        report.c2 = report.c_DT;
        auto law = law_from_json(cfg.law_spec);
        for (auto& row : report.rows) {
            if (!row.completed) continue;
            relent::RateBoundInputs in;
            in.eps = row.eps;
            in.nu = row.nu;
            in.R = row.R;
            in.alpha = cfg.alpha;
            in.dist_u_sq = row.dist_u_sq;
            in.dist_rho_sq = row.dist_rho_sq;
            in.eps0 = cfg.eps0;
            in.eps1 = cfg.eps1 > 0.0 ? cfg.eps1 : 1e9;
            in.rho_max = law.rho_max();
            in.varrho = cfg.varrho;
            in.D = cfg.D;
            in.c_DT = report.c_DT;
            in.c2 = report.c2;
            row.rhs_bound = relent::rate_bound_rhs(in);
        }
    }

    // slopes need at least three positive rows
    std::vector<double> eps_ok, vel_ok, dens_ok;
    for (const auto& row : report.rows) {
        if (row.completed && row.sup_vel_gap > 0.0 && row.sup_dens_gap > 0.0) {
            eps_ok.push_back(row.eps);
            vel_ok.push_back(row.sup_vel_gap);
            dens_ok.push_back(row.sup_dens_gap);
        }
    }
    if (eps_ok.size() >= 3) {
        auto [sv, ev] = fit_rate(eps_ok, vel_ok);
        auto [sd, ed] = fit_rate(eps_ok, dens_ok);
        report.slope_vel = sv;
        report.slope_vel_stderr = ev;
        report.slope_dens = sd;
        report.slope_dens_stderr = ed;
        report.has_slopes = true;
    }

    report.all_passed = true;
    for (const auto& row : report.rows)
        report.all_passed = report.all_passed && row.completed && row.rei_passed &&
                            row.mean_pressure_bound_holds;
    return report;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

inline json point_to_json(const PointResult& r) {
    json j;
    j["eps"] = r.eps;
    j["nu"] = r.nu;
    j["R"] = r.R;
    j["cells"] = r.cells;
    j["completed"] = r.completed;
    if (!r.error.empty()) j["error"] = r.error;
    j["sup_vel_gap"] = r.sup_vel_gap;
    j["sup_dens_gap"] = r.sup_dens_gap;
    j["dist_u_sq"] = r.dist_u_sq;
    j["dist_rho_sq"] = r.dist_rho_sq;
    j["rhs_bound"] = r.rhs_bound;
    j["rei_passed"] = r.rei_passed;
    j["rei_worst_violation"] = r.rei_worst_violation;
    j["pb_term_final"] = r.pb_term_final;
    j["cancellation_rel"] = {r.cancellation_rel1, r.cancellation_rel2,
                             r.cancellation_rel3};
    j["mean_pressure_direct"] = r.mean_pressure_direct;
    j["mean_pressure_bound_holds"] = r.mean_pressure_bound_holds;
    j["mean_pressure_identity_gap"] = r.mean_pressure_identity_gap;
    j["density_control_worst"] = r.density_control_worst;
    j["corrector_w2p"] = r.corrector_w2p;
    j["corrector_dt_l2"] = r.corrector_dt_l2;
    j["uniform"] = {{"sup_sqrt_rho_u_l2", r.uniform.sup_sqrt_rho_u_l2},
                    {"sup_scaled_density_l2", r.uniform.sup_scaled_density_l2},
                    {"sqrt_nu_grad_u_l2l2", r.uniform.sqrt_nu_grad_u_l2l2},
                    {"sup_low_set_measure", r.uniform.sup_low_set_measure},
                    {"sup_pole_potential", r.uniform.sup_pole_potential}};
    j["euler_pressure_norms"] = {r.euler_pressure_norm, r.euler_grad_pressure_norm,
                                 r.euler_dt_pressure_norm};
    return j;
}

/// Writes rates.csv, report.json and plot.gp; byte-stable for identical inputs.
inline void emit_outputs(const RateReport& report, const StudyConfig& cfg,
                         const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    io::Csv rates({"eps", "nu", "R", "sup_vel_gap", "sup_dens_gap", "rhs_bound",
                   "rei_pass"});
    for (const auto& row : report.rows)
        rates.row({row.eps, row.nu, row.R, row.sup_vel_gap, row.sup_dens_gap,
                   row.rhs_bound, row.rei_passed ? 1.0 : 0.0});
    rates.write(dir / "rates.csv");

    json j;
    j["config_hash"] = report.config_hash;
    j["scenario"] = cfg.scenario;
    j["tolerances"] = {{"rei_rel", cfg.rei_tol_rel},
                       {"rei_abs", cfg.rei_tol_abs},
                       {"eos_identity_rel", 1e-6},
                       {"bogovskii_div_residual", 1e-8},
                       {"mass_drift", 1e-12}};
    j["c_DT"] = report.c_DT;
    j["c2"] = report.c2;
    j["eps1"] = cfg.eps1;
    j["all_passed"] = report.all_passed;
    if (report.has_slopes) {
        j["slope_vel"] = report.slope_vel;
        j["slope_vel_stderr"] = report.slope_vel_stderr;
        j["slope_dens"] = report.slope_dens;
        j["slope_dens_stderr"] = report.slope_dens_stderr;
    }
    j["rows"] = json::array();
    for (const auto& row : report.rows) j["rows"].push_back(point_to_json(row));
    {
        std::ofstream out(dir / "report.json");
        out << j.dump(2) << "\n";
    }

    std::ofstream gp(dir / "plot.gp");
    gp << "# gnuplot script generated by the study harness\n"
          "set datafile separator ','\n"
          "set terminal pngcairo size 1200,500\n"
          "set output 'gaps.png'\n"
          "set multiplot layout 1,2\n"
          "set logscale xy\n"
          "set xlabel 'eps'\n"
          "set ylabel 'sup_tau gap'\n"
          "plot 'rates.csv' using 1:4 skip 1 with linespoints title 'velocity gap', \\\n"
          "     'rates.csv' using 1:5 skip 1 with linespoints title 'density gap', \\\n"
          "     'rates.csv' using 1:6 skip 1 with lines title 'rate bound'\n"
          "unset logscale\n"
          "set xlabel 't'\n"
          "set ylabel 'energy'\n";
    gp << "plot 'eps_" << (cfg.eps_list.empty() ? 0.0 : cfg.eps_list.front())
       << "/ledger.csv' using 1:2 skip 1 with lines title 'kinetic', \\\n"
          "     '' using 1:4 skip 1 with lines title 'dissipation'\n"
          "unset multiplot\n";
}

/// Decay rows (tau, Lq_norm) with the fitted slope in every row.
inline void write_decay_csv(const acoustics::DecayReport& rep,
                            const std::filesystem::path& path) {
    io::Csv csv({"tau", "Lq_norm", "fitted_slope"});
    for (const auto& [tau, nq] : rep.rows)
        csv.row({tau, nq, rep.measured_exponent});
    csv.write(path);
}

} // namespace hslim::study
