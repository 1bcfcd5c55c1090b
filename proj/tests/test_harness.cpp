#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "hslim/study.hpp"
#include "oracles.hpp"

using namespace hslim;
using namespace hslim::study;
namespace fs = std::filesystem;

namespace {

json small_sweep_config(const std::string& out_dir) {
    json j = {
        {"scenario", "acoustic-pulse-1d"},
        {"law",
         {{"variant", "power"}, {"a", 1.0}, {"gamma", 2.0}, {"beta", 3.0},
          {"rho_bar", 4.0}}},
        {"eps_list", {0.2, 0.1}},
        {"path", {{"nu_exponent", 2.0 / 3.0}, {"R0", 0.28}, {"R_exponent", 1.5}}},
        {"resolution", {{"target_h", 0.09}, {"min_cells", 128}, {"max_cells", 256}}},
        {"D", 2.0},
        {"varrho", 1.0},
        {"T", 0.2},
        {"mu", 1.0},
        {"eps0", 0.21},
        {"emit_dt", 0.01},
        {"shell_width", 0.5},
        {"data",
         {{"density", {{"amplitude", 0.5}, {"sigma", 0.3}}},
          {"velocity", {{"amplitude", 0.1}, {"sigma", 0.3}}},
          {"density_offset",
           {{"amplitude", 0.05}, {"sigma", 0.25}, {"center", 0.6}}}}},
        {"out_dir", out_dir},
        {"seed", 42},
        {"workers", 1}};
    return j;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("validate_config names the violated inequality") {
    auto base = small_sweep_config("/tmp/hslim_cfg");

    SUBCASE("limit path divergence") {
        auto j = base;
        j["path"]["R_exponent"] = 0.5;
        auto cfg = parse_config(j);
        CHECK_THROWS_WITH_AS(static_cast<void>(validate_config(cfg)),
                             doctest::Contains("eps R(eps) must diverge"),
                             hslim::ConfigError);
    }

    SUBCASE("isolation radius") {
        auto j = base;
        j["path"]["R0"] = 0.05; // R far too small for the horizon
        auto cfg = parse_config(j);
        CHECK_THROWS_WITH_AS(static_cast<void>(validate_config(cfg)),
                             doctest::Contains("isolation radius"),
                             hslim::ConfigError);
    }

    SUBCASE("eps ceiling") {
        auto j = base;
        j["eps_list"] = {0.5, 0.2};
        auto cfg = parse_config(j);
        CHECK_THROWS_WITH_AS(static_cast<void>(validate_config(cfg)),
                             doctest::Contains("eps < eps0"), hslim::ConfigError);
    }

    SUBCASE("nu exponent range") {
        auto j = base;
        j["path"]["nu_exponent"] = 1.5;
        auto cfg = parse_config(j);
        CHECK_THROWS_AS(static_cast<void>(validate_config(cfg)), hslim::ConfigError);
    }

    SUBCASE("descending eps list") {
        auto j = base;
        j["eps_list"] = {0.1, 0.2};
        auto cfg = parse_config(j);
        CHECK_THROWS_AS(static_cast<void>(validate_config(cfg)), hslim::ConfigError);
    }
}

TEST_CASE("reference configs shipped in the repository validate") {
    for (const char* name :
         {"reference_sweep_1d.json", "near_barrier.json", "taylor_green_2d.json",
          "equilibrium.json"}) {
        const fs::path p = fs::path(HSLIM_SOURCE_DIR) / "configs" / name;
        CAPTURE(name);
        std::ifstream in(p);
        REQUIRE(in.good());
        auto cfg = parse_config(json::parse(in));
        CHECK_NOTHROW(static_cast<void>(validate_config(cfg)));
    }
}

TEST_CASE("fit_rate on synthetic data") {
    std::vector<double> eps = {0.2, 0.1, 0.05, 0.025};

    SUBCASE("exact linear power law") {
        std::vector<double> gap = eps; // gap = eps^1
        auto [slope, se] = fit_rate(eps, gap);
        CHECK(slope == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(se == doctest::Approx(0.0).epsilon(1e-10));
    }

    SUBCASE("gap = 3 eps^0.5") {
        std::vector<double> gap;
        for (double e : eps) gap.push_back(3.0 * std::sqrt(e));
        auto [slope, se] = fit_rate(eps, gap);
        CHECK(slope == doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("guards") {
        CHECK_THROWS_AS(fit_rate({0.1, 0.2}, {1.0, 2.0}), hslim::FitError);
        CHECK_THROWS_AS(fit_rate({0.1, 0.2, 0.3}, {1.0, 0.0, 2.0}), hslim::FitError);
    }
}

TEST_CASE("small end-to-end sweep: artifacts, schema, determinism") {
    const fs::path dir1 = fs::temp_directory_path() / "hslim_study_a";
    const fs::path dir2 = fs::temp_directory_path() / "hslim_study_b";
    fs::remove_all(dir1);
    fs::remove_all(dir2);

    auto cfg = validate_config(parse_config(small_sweep_config(dir1.string())));
    auto report = run_study(cfg);
    emit_outputs(report, cfg, dir1);

    SUBCASE("rows complete, inequality passes, artifacts exist") {
        REQUIRE(report.rows.size() == 2);
        for (const auto& row : report.rows) {
            CHECK(row.completed);
            CHECK(row.rei_passed);
            CHECK(row.mean_pressure_bound_holds);
            CHECK(row.sup_vel_gap > 0.0);
            CHECK(row.sup_dens_gap > 0.0);
            CHECK(row.density_control_worst <= 1.0 + 1e-9);
        }
        // two points: no slope fit
        CHECK(!report.has_slopes);
        CHECK(report.all_passed);
        for (const char* f : {"rates.csv", "report.json", "plot.gp", "config.json"})
            CHECK(fs::exists(dir1 / f));
        CHECK(fs::exists(dir1 / "eps_0.2" / "ledger.csv"));
        CHECK(fs::exists(dir1 / "eps_0.2" / "relent.csv"));
        CHECK(fs::exists(dir1 / "eps_0.1" / "snapshots" / "rho_first.bin"));
    }

    SUBCASE("csv schema matches the documented columns") {
        std::ifstream in(dir1 / "rates.csv");
        std::string header;
        std::getline(in, header);
        CHECK(header == "eps,nu,R,sup_vel_gap,sup_dens_gap,rhs_bound,rei_pass");
        std::ifstream lg(dir1 / "eps_0.2" / "ledger.csv");
        std::getline(lg, header);
        CHECK(header == "t,kinetic,potential,dissipation,mass");
        std::ifstream rl(dir1 / "eps_0.2" / "relent.csv");
        std::getline(rl, header);
        CHECK(header == "tau,E,dissipation,pb_term,R1,R2,R3,lhs_minus_rhs");
    }

    SUBCASE("identical config and seed give byte-identical rates.csv") {
        auto cfg2 = cfg;
        cfg2.out_dir = dir2.string();
        cfg2.workers = 2; // concurrent points must not perturb the outputs
        auto report2 = run_study(cfg2);
        emit_outputs(report2, cfg2, dir2);
        CHECK(slurp(dir1 / "rates.csv") == slurp(dir2 / "rates.csv"));
        CHECK(report2.config_hash != 0);
    }

    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("carnahan-starling law runs through the full pipeline") {
    const fs::path dir = fs::temp_directory_path() / "hslim_cs_smoke";
    fs::remove_all(dir);
    auto j = small_sweep_config(dir.string());
    j["law"] = {{"variant", "cs"}, {"kT", 1.0}, {"rho_bar", 4.0}};
    j["eps_list"] = {0.2};
    j["path"]["R0"] = 0.45; // CS sound speed at varrho = 1 is ~8x faster, so the
    j["emit_dt"] = 0.0025;  // snapshots and the grid must resolve the phase
    j["resolution"] = {{"target_h", 0.02}, {"min_cells", 128}, {"max_cells", 512}};
    auto cfg = validate_config(parse_config(j));
    auto report = run_study(cfg);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows.front().completed);
    CHECK(report.rows.front().rei_passed);
    CHECK(report.rows.front().mean_pressure_bound_holds);
    fs::remove_all(dir);
}

TEST_CASE("2d scenario with a selectable initial-condition library") {
    const fs::path dir = fs::temp_directory_path() / "hslim_tg_choice";
    fs::remove_all(dir);
    auto j = small_sweep_config(dir.string());
    j["scenario"] = "taylor-green-coupled-2d";
    j["eps_list"] = {0.2};
    j["D"] = 3.0;
    j["path"]["R0"] = 0.29;
    j["T"] = 0.02;
    j["emit_dt"] = 0.002;
    j["resolution"] = {{"target_h", 0.11}, {"min_cells", 64}, {"max_cells", 64}};
    j["shell_width"] = 0.45;
    j["data"]["velocity"] = {{"shape", "taylor-green"}, {"amplitude", 0.2}};
    j["data"]["density"] = {{"amplitude", 0.3}, {"sigma", 0.4}};
    j["data"]["density_offset"] = {{"amplitude", 1.0}, {"sigma", 0.5}, {"center", 0.4}};
    auto cfg = validate_config(parse_config(j));
    auto report = run_study(cfg);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows.front().completed);
    CHECK(report.rows.front().rei_passed);
    CHECK(report.rows.front().euler_pressure_norm > 0.0);
    fs::remove_all(dir);
}

TEST_CASE("degenerate single-point study: one row, no slope") {
    const fs::path dir = fs::temp_directory_path() / "hslim_study_single";
    fs::remove_all(dir);
    auto j = small_sweep_config(dir.string());
    j["eps_list"] = {0.2};
    auto cfg = validate_config(parse_config(j));
    auto report = run_study(cfg);
    emit_outputs(report, cfg, dir);
    CHECK(report.rows.size() == 1);
    CHECK(!report.has_slopes);
    CHECK(report.rows.front().completed);
    fs::remove_all(dir);
}

TEST_CASE("a failed sweep point is recorded without disturbing the others") {
    const fs::path dir = fs::temp_directory_path() / "hslim_isolation";
    fs::remove_all(dir);
    auto j = small_sweep_config(dir.string());
    // spike scaled by eps: breaches the density barrier at eps = 0.2 only
    j["scenario"] = "near-barrier-bump";
    j["eps_list"] = {0.2, 0.1};
    j["data"]["spike"] = {{"amplitude", 15.2}, {"sigma", 0.1}};
    auto cfg = validate_config(parse_config(j));
    auto report = run_study(cfg);
    emit_outputs(report, cfg, dir);
    REQUIRE(report.rows.size() == 2);
    CHECK(!report.rows[0].completed);
    CHECK(!report.rows[0].error.empty());
    CHECK(report.rows[1].completed);
    CHECK(report.rows[1].rei_passed);
    CHECK(!report.all_passed);
    // the aggregate CSV still carries both rows
    std::ifstream in(dir / "rates.csv");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 3);
    fs::remove_all(dir);
}

TEST_CASE("empty report emits a header-only csv") {
    const fs::path dir = fs::temp_directory_path() / "hslim_empty";
    fs::remove_all(dir);
    RateReport empty;
    StudyConfig cfg;
    cfg.law_spec = {{"variant", "power"}, {"a", 1.0}, {"gamma", 2.0},
                    {"beta", 3.0},       {"rho_bar", 4.0}};
    emit_outputs(empty, cfg, dir);
    CHECK(slurp(dir / "rates.csv") ==
          "eps,nu,R,sup_vel_gap,sup_dens_gap,rhs_bound,rei_pass\n");
    fs::remove_all(dir);
}
