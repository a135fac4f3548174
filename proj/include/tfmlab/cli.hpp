/*
   Copyright 2026 The tfmlab Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tfmlab/config.hpp"
#include "tfmlab/core.hpp"
#include "tfmlab/dynamics.hpp"
#include "tfmlab/experiments.hpp"
#include "tfmlab/fixedpoint.hpp"
#include "tfmlab/game.hpp"
#include "tfmlab/values.hpp"

namespace tfmlab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

namespace cli {

class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& mechanism_names() {
    static const std::vector<std::string> names{"wdpp",         "udpp",      "twdpp",     "eip1559",
                                                "first-price",  "second-price", "posted-mv", "posted-rm",
                                                "monopolistic", "rsop",      "gsp-mod"};
    return names;
}

struct ScenarioFlags {
    std::string scenario;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mechanism;
    std::optional<double> posted_price;
    std::optional<double> alpha;
    std::optional<double> delta;
    std::optional<std::uint64_t> steps;

    void add_source(CLI::App* app) {
        auto* s = app->add_option("--scenario", scenario, "Builtin scenario name")
                      ->check(CLI::IsMember(builtin_scenario_names()));
        auto* c = app->add_option("--config", config, "Scenario config file (JSON)");
        s->excludes(c);
        app->add_option("--seed", seed, "Root seed override");
    }

    void add_overrides(CLI::App* app) {
        app->add_option("--mechanism", mechanism, "Mechanism override")->check(CLI::IsMember(mechanism_names()));
        app->add_option("--posted-price", posted_price, "Posted price for posted-mv / posted-rm");
        app->add_option("--alpha", alpha, "Convergence parameter");
        app->add_option("--delta", delta, "Truncation parameter");
        app->add_option("--steps", steps, "Horizon override");
    }

    // Loads the scenario and applies overrides before validation, so every
    // violated constraint is reported together.
    ScenarioConfig resolve() const {
        if (scenario.empty() && config.empty()) throw UsageError("one of --scenario or --config is required");
        const ScenarioConfig base = scenario.empty() ? load_config(config) : builtin_scenario(scenario);
        Json j = config_to_json(base);
        if (seed) j["seed"] = *seed;
        if (mechanism) {
            j["mechanism"] = *mechanism;
            if (*mechanism != "posted-mv" && *mechanism != "posted-rm") j.erase("posted_price");
        }
        if (posted_price) j["posted_price"] = *posted_price;
        if (alpha) j["alpha"] = *alpha;
        if (delta) j["delta"] = *delta;
        if (steps) j["horizon"] = *steps;
        return scenario_from_json(j);
    }
};

inline Json manifest(const std::string& subcommand, std::uint64_t seed, const Json& config,
                     const std::vector<std::string>& outputs, const std::vector<std::string>& argv) {
    Json j;
    j["tool"] = "tfmlab";
    j["version"] = kVersion;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["config"] = config;
    j["outputs"] = outputs;
    j["argv"] = argv;
    return j;
}

inline std::string bool_text(bool b) { return b ? "true" : "false"; }

}  // namespace cli

// Entry point shared by the tfmlab executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    const std::vector<std::string> args(argv, argv + argc);

    CLI::App app{"Transaction-fee mechanism laboratory", "tfmlab"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    // simulate
    cli::ScenarioFlags sim;
    std::string sim_out = "out";
    auto* simulate = app.add_subcommand("simulate", "Run a scenario and write trace, summary and manifest");
    sim.add_source(simulate);
    sim.add_overrides(simulate);
    simulate->add_option("-o,--out", sim_out, "Output directory");

    // fixedpoint
    std::string fp_builtin;
    cli::ScenarioFlags fp;
    std::optional<double> fp_alpha;
    double fp_x0 = 0.1;
    double fp_tol = 1e-6;
    std::uint64_t fp_max_iter = 100000;
    std::uint64_t fp_samples = 20000;
    std::optional<double> fp_lipschitz;
    bool fp_no_clamp = false;
    std::string fp_out;
    auto* fixedpoint = app.add_subcommand("fixedpoint", "Iterate g = alpha f + (1 - alpha) x to a fixed point");
    auto* fp_b = fixedpoint->add_option("--builtin", fp_builtin, "Builtin test function")
                     ->check(CLI::IsMember({"f1", "f2", "zero"}));
    fp.add_source(fixedpoint);
    fp_b->excludes(fixedpoint->get_option("--scenario"))->excludes(fixedpoint->get_option("--config"));
    fixedpoint->add_option("--alpha", fp_alpha, "Mixing weight (default 1/(L+1), or the scenario's alpha)");
    fixedpoint->add_option("--x0", fp_x0, "Starting point")->capture_default_str();
    fixedpoint->add_option("--tol", fp_tol, "Relative step tolerance")->capture_default_str();
    fixedpoint->add_option("--max-iter", fp_max_iter, "Iteration cap")->capture_default_str();
    fixedpoint->add_option("--samples", fp_samples, "Monte-Carlo samples per kernel evaluation")->capture_default_str();
    fixedpoint->add_option("--lipschitz", fp_lipschitz, "Lipschitz constant of a scenario kernel (default 1 + delta)");
    fixedpoint->add_flag("--no-clamp", fp_no_clamp, "Keep alpha even above 1/(L+1)");
    fixedpoint->add_option("-o,--out", fp_out, "Write report, trajectory and manifest here");

    // check-ic
    std::string ic_mech;
    std::uint64_t ic_trials = 200;
    std::uint64_t ic_seed = 1;
    InstanceFamily family;
    std::string ic_out;
    auto* check_ic = app.add_subcommand("check-ic", "Search random small instances for IC and DSIC violations");
    check_ic->add_option("--mechanism", ic_mech, "Mechanism")->required()->check(CLI::IsMember(cli::mechanism_names()));
    check_ic->add_option("--trials", ic_trials, "Number of random instances")->capture_default_str();
    check_ic->add_option("--seed", ic_seed, "Root seed")->capture_default_str();
    check_ic->add_flag("--excess-demand", family.excess_demand, "Only draw instances with more eligible bids than slots");
    check_ic->add_option("--n-max", family.n_max, "Largest number of bidders")->capture_default_str();
    check_ic->add_option("--m-max", family.m_max, "Largest block size")->capture_default_str();
    check_ic->add_option("-o,--out", ic_out, "Write report and manifest here");

    // curves
    cli::ScenarioFlags cv;
    std::size_t cv_points = 41;
    std::uint64_t cv_samples = 4000;
    std::optional<double> cv_max_price;
    std::string cv_out;
    auto* curves = app.add_subcommand("curves", "Tabulate demand, revenue and kernel curves of a scenario");
    cv.add_source(curves);
    curves->add_option("--points", cv_points, "Grid points")->capture_default_str()->check(CLI::Range(2, 100000));
    curves->add_option("--samples", cv_samples, "Monte-Carlo samples per point")->capture_default_str();
    curves->add_option("--max-price", cv_max_price, "Right end of the price grid");
    curves->add_option("-o,--out", cv_out, "Write curves.csv and manifest here (default: stdout)");

    auto* list = app.add_subcommand("list-scenarios", "List builtin scenarios");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        err << "run with --help for usage\n";
        return kExitUsage;
    }

    try {
        if (*simulate) {
            ScenarioConfig s = sim.resolve();
            s.output_dir = sim_out;
            const auto result = run_scenario(s);
            const std::filesystem::path dir(sim_out);
            write_file_atomic(dir / "manifest.json",
                              cli::manifest("simulate", s.game.seed, config_to_json(s),
                                            {"trace.csv", "summary.txt", "summary.json"}, args)
                                      .dump(2) +
                                  "\n");
            out << summary_to_text(result.summary);
            out << "outputs: " << sim_out << "\n";
            return kExitOk;
        }

        if (*fixedpoint) {
            FixedPointProblem problem;
            std::string label;
            std::uint64_t seed = 0;
            Json echo;
            if (!fp_builtin.empty()) {
                problem = builtin_problem(fp_builtin, 0.5);
                problem.alpha = fp_alpha.value_or(problem.alpha_bound());
                label = fp_builtin;
                echo = {{"builtin", fp_builtin}};
            } else if (!fp.scenario.empty() || !fp.config.empty()) {
                const ScenarioConfig s = fp.resolve();
                const auto* dyn = std::get_if<DynamicMechanism>(&s.game.mechanism);
                require(dyn != nullptr, "fixed-point kernels exist only for wdpp, udpp and twdpp");
                const UpdateParams params = s.game.params();
                const std::size_t n = s.game.demand.n_at(1);
                const auto rule = dyn->update;
                const auto dist = s.game.distribution;
                seed = s.game.seed;
                // The same seed at every q keeps the sampled kernel a smooth function.
                problem.f = [rule, dist, n, params, samples = fp_samples, seed](double q) {
                    return kernel_mc(rule, dist, n, params, q, samples, seed).value;
                };
                problem.a_bar = (1.0 + params.delta) * dist.support_upper_bound();
                problem.lipschitz_L = fp_lipschitz.value_or(1.0 + params.delta);
                problem.alpha = fp_alpha.value_or(params.alpha);
                label = s.name + " kernel (" + std::string(to_string(rule)) + ")";
                echo = config_to_json(s);
            } else {
                throw cli::UsageError("one of --builtin, --scenario or --config is required");
            }

            SolveOptions options;
            options.tol = fp_tol;
            options.max_iter = fp_max_iter;
            options.enforce_alpha_bound = !fp_no_clamp;
            options.log_trajectory = !fp_out.empty();
            const SolveReport report = iterate_to_fixed_point(problem, fp_x0, options);

            std::string text;
            text += "function: " + label + "\n";
            text += "converged: " + cli::bool_text(report.converged) + "\n";
            text += "x_star: " + format_number(report.x_star) + "\n";
            text += "iterations: " + std::to_string(report.iterations) + "\n";
            text += "residual: " + format_number(report.residual) + "\n";
            text += "f_residual: " + format_number(report.f_residual) + "\n";
            text += "alpha_requested: " + format_number(report.alpha_requested) + "\n";
            text += "alpha_used: " + format_number(report.alpha_used) + "\n";
            text += "alpha_clamped: " + cli::bool_text(report.alpha_clamped) + "\n";
            out << text;

            if (!fp_out.empty()) {
                const std::filesystem::path dir(fp_out);
                std::string csv = "iteration,x\n";
                for (std::size_t i = 0; i < report.trajectory.size(); ++i) {
                    csv += std::to_string(i) + "," + format_number(report.trajectory[i]) + "\n";
                }
                write_file_atomic(dir / "trajectory.csv", csv);
                write_file_atomic(dir / "report.txt", text);
                write_file_atomic(dir / "manifest.json",
                                  cli::manifest("fixedpoint", seed, echo, {"trajectory.csv", "report.txt"}, args)
                                          .dump(2) +
                                      "\n");
            }
            if (!report.converged) {
                err << "error: no convergence within " << report.iterations << " iterations\n";
                return kExitRuntime;
            }
            return kExitOk;
        }

        if (*check_ic) {
            if (ic_mech == "eip1559") {
                throw cli::UsageError("check-ic covers one-step mechanisms; eip1559 is not supported");
            }
            const Mechanism parsed = parse_mechanism(ic_mech, 1.0);
            // Dynamic mechanisms are checked through the posted price they charge at each step.
            StaticKind kind = StaticKind::kPostedPriceRM;
            if (const auto* st = std::get_if<StaticMechanism>(&parsed)) {
                kind = st->kind;
            } else if (const auto* dyn = std::get_if<DynamicMechanism>(&parsed)) {
                kind = dyn->at_price(1.0).kind;
            }
            const IcReport report = check_ic_dsic(kind, family, ic_trials, ic_seed);
            const Json j = ic_report_to_json(report);
            out << "mechanism: " << ic_mech << "\n";
            out << "checked_as: " << to_string(kind) << "\n";
            out << "trials: " << report.trials << "\n";
            out << "ic_holds: " << cli::bool_text(report.ic_holds) << "\n";
            if (report.ic_counterexample) out << "ic_counterexample: " << j["ic_counterexample"].dump() << "\n";
            out << "dsic_holds: " << cli::bool_text(report.dsic_holds) << "\n";
            if (report.dsic_counterexample) out << "dsic_counterexample: " << j["dsic_counterexample"].dump() << "\n";
            if (!ic_out.empty()) {
                const std::filesystem::path dir(ic_out);
                const Json echo{{"mechanism", ic_mech},
                                {"trials", ic_trials},
                                {"excess_demand", family.excess_demand},
                                {"n_max", family.n_max},
                                {"m_max", family.m_max}};
                write_file_atomic(dir / "report.json", Json(j).dump(2) + "\n");
                write_file_atomic(dir / "manifest.json",
                                  cli::manifest("check-ic", ic_seed, echo, {"report.json"}, args).dump(2) + "\n");
            }
            return kExitOk;
        }

        if (*curves) {
            const ScenarioConfig s = cv.resolve();
            const auto& dist = s.game.distribution;
            const std::size_t n = s.game.demand.n_at(1);
            const UpdateParams params = s.game.params();
            const auto* dyn = std::get_if<DynamicMechanism>(&s.game.mechanism);
            const UpdateRuleKind rule = dyn ? dyn->update : UpdateRuleKind::kTruncatedWelfare;

            double hi = 0.0;
            if (cv_max_price) {
                require(*cv_max_price > 0.0, "--max-price must be positive");
                hi = *cv_max_price;
            } else {
                hi = std::visit(
                    [&dist](const auto& d) -> double {
                        using T = std::decay_t<decltype(d)>;
                        if constexpr (std::is_same_v<T, PointMass>) return 2.0 * d.value;
                        else if constexpr (std::is_same_v<T, Exponential>) return 5.0 * d.mean;
                        else if constexpr (std::is_same_v<T, Pareto>) return 10.0 * d.scale;
                        else return dist.support_upper_bound();
                    },
                    dist.kind());
            }
            const std::uint64_t seed = s.game.seed;
            std::string csv = "q,demand,demand_se,limited_demand,revenue,revenue_se,kernel,kernel_se\n";
            for (double q : linear_grid(0.0, hi, cv_points)) {
                const Estimate d = monte_carlo_over_values(dist, n, cv_samples, seed, [q](Rng&, std::span<const double> v) {
                    return static_cast<double>(demand_at_price(v, q));
                });
                const Estimate l = limited_demand_mc(dist, n, params.m, q, cv_samples, seed);
                const Estimate r = revenue_curve_mc(dist, n, params.m, q, cv_samples, seed);
                const Estimate k = q > 0.0 ? kernel_mc(rule, dist, n, params, q, cv_samples, seed) : Estimate{};
                csv += format_number(q) + "," + format_number(d.value) + "," + format_number(d.se) + "," +
                       format_number(l.value) + "," + format_number(r.value) + "," + format_number(r.se) + "," +
                       format_number(k.value) + "," + format_number(k.se) + "\n";
            }
            if (cv_out.empty()) {
                out << csv;
            } else {
                const std::filesystem::path dir(cv_out);
                write_file_atomic(dir / "curves.csv", csv);
                write_file_atomic(dir / "manifest.json",
                                  cli::manifest("curves", seed, config_to_json(s), {"curves.csv"}, args).dump(2) +
                                      "\n");
                out << "outputs: " << cv_out << "\n";
            }
            return kExitOk;
        }

        if (*list) {
            for (const auto& name : builtin_scenario_names()) {
                out << name << "\t" << builtin_scenario_description(name) << "\n";
            }
            return kExitOk;
        }
    } catch (const cli::UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParameterError& e) {
        err << "error: invalid parameter: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace tfmlab
