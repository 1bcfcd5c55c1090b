// Command-line front end for the study harness: validate a configuration, run
// a sweep, fit convergence rates from an existing rates.csv, or summarize a
// report.json. Exit code 0 only when every pass flag is true.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "hslim/study.hpp"

namespace fs = std::filesystem;
using hslim::io::json;

namespace {

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw hslim::IOError("cannot open " + path);
    return json::parse(in);
}

int cmd_validate(const std::string& config_path) {
    auto cfg = hslim::study::parse_config(load_json(config_path));
    cfg = hslim::study::validate_config(cfg);
    std::cout << hslim::study::config_to_json(cfg).dump(2) << "\n";
    std::cerr << "config ok: eps1 = " << cfg.eps1
              << ", initial-data bound satisfied = "
              << (cfg.init_bound_satisfied ? "yes" : "no (recorded)") << "\n";
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_override,
            std::uint64_t seed_override, bool seed_given, int resolution_override,
            const std::string& only) {
    auto cfg = hslim::study::parse_config(load_json(config_path));
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (seed_given) cfg.seed = seed_override;
    if (resolution_override > 0) {
        cfg.min_cells = resolution_override;
        cfg.max_cells = resolution_override;
    }
    if (!only.empty()) {
        // keep only the sweep points whose directory name contains the filter
        std::vector<double> kept;
        for (double e : cfg.eps_list) {
            char name[64];
            std::snprintf(name, sizeof(name), "eps_%g", e);
            if (std::string(name).find(only) != std::string::npos) kept.push_back(e);
        }
        if (kept.empty())
            throw hslim::ConfigError("--only filter matched no sweep point");
        cfg.eps_list = kept;
    }
    cfg = hslim::study::validate_config(cfg);
    auto report = hslim::study::run_study(cfg);
    hslim::study::emit_outputs(report, cfg, cfg.out_dir);

    for (const auto& row : report.rows) {
        std::cout << "eps=" << row.eps << " nu=" << row.nu << " R=" << row.R
                  << " cells=" << row.cells;
        if (!row.completed) {
            std::cout << "  FAILED: " << row.error << "\n";
            continue;
        }
        std::cout << "  vel_gap=" << row.sup_vel_gap
                  << " dens_gap=" << row.sup_dens_gap
                  << " rei=" << (row.rei_passed ? "pass" : "FAIL")
                  << " bound=" << row.rhs_bound << "\n";
    }
    if (report.has_slopes) {
        std::cout << "slope(vel gap) = " << report.slope_vel << " +- "
                  << report.slope_vel_stderr << "\n";
        std::cout << "slope(dens gap) = " << report.slope_dens << " +- "
                  << report.slope_dens_stderr << "\n";
    }
    std::cout << (report.all_passed ? "ALL PASS" : "FAILURES PRESENT") << "\n";
    return report.all_passed ? 0 : 1;
}

int cmd_fit(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "rates.csv");
    if (!in) throw hslim::IOError("cannot open rates.csv under " + dir);
    std::string line;
    std::getline(in, line); // header
    std::vector<double> eps, vel, dens;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() >= 5) {
            eps.push_back(row[0]);
            vel.push_back(row[3]);
            dens.push_back(row[4]);
        }
    }
    auto [sv, ev] = hslim::study::fit_rate(eps, vel);
    auto [sd, ed] = hslim::study::fit_rate(eps, dens);
    std::cout << "slope(vel gap)  = " << sv << " +- " << ev << "\n";
    std::cout << "slope(dens gap) = " << sd << " +- " << ed << "\n";
    return 0;
}

int cmd_report(const std::string& dir) {
    auto j = load_json((fs::path(dir) / "report.json").string());
    std::cout << "scenario:    " << j.value("scenario", std::string("?")) << "\n";
    std::cout << "config hash: " << j.value("config_hash", 0ull) << "\n";
    std::cout << "c(D,T):      " << j.value("c_DT", 0.0) << "\n";
    if (j.contains("slope_vel")) {
        std::cout << "slope(vel gap)  = " << j["slope_vel"].get<double>() << "\n";
        std::cout << "slope(dens gap) = " << j["slope_dens"].get<double>() << "\n";
    }
    for (const auto& row : j.at("rows")) {
        std::cout << "  eps=" << row.value("eps", 0.0)
                  << " vel_gap=" << row.value("sup_vel_gap", 0.0)
                  << " dens_gap=" << row.value("sup_dens_gap", 0.0)
                  << " rei=" << (row.value("rei_passed", false) ? "pass" : "FAIL")
                  << "\n";
    }
    const bool ok = j.value("all_passed", false);
    std::cout << (ok ? "ALL PASS" : "FAILURES PRESENT") << "\n";
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hard-sphere low-Mach limit laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir, only, dir = ".";
    std::uint64_t seed = 0;
    int resolution = 0;

    auto* validate = app.add_subcommand("validate", "check a study configuration");
    validate->add_option("--config", config_path, "configuration file")->required();

    auto* run = app.add_subcommand("run", "run a sweep study");
    run->add_option("--config", config_path, "configuration file")->required();
    run->add_option("--out", out_dir, "override the output directory");
    auto* seed_opt = run->add_option("--seed", seed, "override the seed");
    run->add_option("--resolution-override", resolution, "force the cell count");
    run->add_option("--only", only, "run only sweep points matching this substring");

    auto* fit = app.add_subcommand("fit", "fit rates from an existing rates.csv");
    fit->add_option("--dir", dir, "study output directory");

    auto* report = app.add_subcommand("report", "summarize an existing report.json");
    report->add_option("--dir", dir, "study output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(config_path);
        if (run->parsed())
            return cmd_run(config_path, out_dir, seed, seed_opt->count() > 0,
                           resolution, only);
        if (fit->parsed()) return cmd_fit(dir);
        if (report->parsed()) return cmd_report(dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
