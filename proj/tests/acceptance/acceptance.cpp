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

// End-to-end acceptance checks. One PASS/FAIL line per criterion; the exit
// status is nonzero if any criterion fails. Tolerances are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include "tfmlab/tfmlab.hpp"

using namespace tfmlab;

namespace {

using Kind = StabilityVerdict::Kind;

constexpr double kAlpha = 1.0 / 16;
constexpr double kDelta = 1.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

GameConfig point_mass(const char* mech, std::size_t n) {
    GameConfig g;
    g.mechanism = parse_mechanism(mech);
    g.distribution = ValueDistribution::point_mass(100.0);
    g.demand = DemandProfile::constant(n);
    g.alpha = kAlpha;
    g.delta = kDelta;
    g.q0 = 10.0;
    g.horizon = 5000;
    return g;
}

StabilityVerdict verdict(const SimulationTrace& trace, const ValueDistribution& dist) {
    return classify_stability(std::span<const TraceRecord>(trace), stability_options_for(dist));
}

Outcome point_mass_instability() {
    const auto wg = point_mass("wdpp", 200);
    const auto w = verdict(run_game(wg), wg.distribution);
    const auto ug = point_mass("udpp", 200);
    const auto ut = run_game(ug);
    const auto u = verdict(ut, ug.distribution);
    bool ratios_ok = true;
    for (std::size_t i = ut.size() - 1000; i < ut.size(); ++i) {
        const double r = ut[i].q / ut[i - 1].q;
        const bool up = std::abs(r - (1 + kAlpha * kDelta)) <= 1e-12;
        const bool down = std::abs(r - (1 - kAlpha)) <= 1e-12;
        ratios_ok = ratios_ok && (up || down);
    }
    const bool pass = w.kind == Kind::kConverged && std::abs(w.q_star - 100.0) <= 1e-3 &&
                      u.kind == Kind::kOscillating && u.band_lo <= 100.0 && u.band_hi >= 100.0 && ratios_ok;
    return {pass, "wdpp " + std::string(to_string(w.kind)) + " q*=" + fmt("%.6f", w.q_star) + "; udpp " +
                      std::string(to_string(u.kind)) + " band=[" + fmt("%.3f", u.band_lo) + "," +
                      fmt("%.3f", u.band_hi) + "] ratios " + (ratios_ok ? "ok" : "off")};
}

Outcome under_supply_separation() {
    std::string detail;
    bool pass = true;
    for (const auto& [mech, want] : std::vector<std::pair<const char*, Kind>>{
             {"twdpp", Kind::kConverged}, {"wdpp", Kind::kConverged}, {"udpp", Kind::kOscillating}}) {
        const auto g = point_mass(mech, 67);
        const auto v = verdict(run_game(g), g.distribution);
        pass = pass && v.kind == want;
        detail += std::string(mech) + " " + std::string(to_string(v.kind)) + "; ";
    }
    return {pass, detail};
}

Outcome solver_exactness() {
    bool pass = true;
    std::string detail;
    for (const bool clamp : {true, false}) {
        SolveOptions opt;
        opt.tol = 1e-6;
        opt.enforce_alpha_bound = clamp;
        for (const double x0 : {0.1, 4.0}) {
            const auto r1 = iterate_to_fixed_point(builtin_problem("f1", 0.4), x0, opt);
            const auto r2 = iterate_to_fixed_point(builtin_problem("f2", 0.4), x0, opt);
            pass = pass && r1.converged && r2.converged && std::abs(r1.x_star - 3.0) <= 1e-5 &&
                   std::abs(r2.x_star - 2.0) <= 1e-5;
            detail += "alpha=" + fmt("%g", r1.alpha_used) + " x0=" + fmt("%g", x0) + ": " + fmt("%.8f", r1.x_star) +
                      "," + fmt("%.8f", r2.x_star) + "; ";
        }
    }
    return {pass, detail};
}

Outcome mixture_contraction() {
    Rng rng{2026};
    double worst = -1e300;
    for (int k = 0; k < 100; ++k) {
        const std::size_t knots = 2 + uniform_index(rng, 8);
        std::vector<double> xs{0.0}, ys{10.0 + 50.0 * uniform01(rng)};
        for (std::size_t i = 1; i < knots; ++i) {
            xs.push_back(xs.back() + 0.1 + 5.0 * uniform01(rng));
            ys.push_back(std::max(0.0, ys.back() - 20.0 * uniform01(rng)));
        }
        const PiecewiseLinear f(xs, ys);
        const double alpha = 1.0 / (std::max(f.lipschitz(), 1e-3) + 1.0);
        const Oracle g = mixture(f, alpha);
        const double hi = xs.back() + 2.0;
        for (int s = 0; s < 200; ++s) {
            const double x = hi * uniform01(rng);
            const double y = hi * uniform01(rng);
            worst = std::max(worst, std::abs(g(x) - g(y)) - (1.0 - alpha) * std::abs(x - y));
        }
    }
    return {worst <= 1e-12, "max excess " + fmt("%.3g", worst) + " over 20000 pairs"};
}

Outcome ic_suite() {
    InstanceFamily any;
    InstanceFamily excess;
    excess.excess_demand = true;
    const auto rm = check_ic_dsic(StaticKind::kPostedPriceRM, any, 200, 1);
    const auto rm_x = check_ic_dsic(StaticKind::kPostedPriceRM, excess, 200, 2);
    const auto sp = check_ic_dsic(StaticKind::kSecondPrice, any, 200, 3);
    const auto mv = check_ic_dsic(StaticKind::kPostedPriceMV, excess, 200, 4);
    const auto fp = check_ic_dsic(StaticKind::kFirstPrice, any, 200, 5);
    const bool pass = rm.ic_holds && rm.dsic_holds && rm_x.ic_holds && rm_x.dsic_holds && !sp.dsic_holds &&
                      !mv.ic_holds && fp.dsic_holds;
    auto yn = [](bool b) { return std::string(b ? "holds" : "fails"); };
    return {pass, "posted-rm ic " + yn(rm.ic_holds && rm_x.ic_holds) + " dsic " + yn(rm.dsic_holds && rm_x.dsic_holds) +
                      "; second-price dsic " + yn(sp.dsic_holds) + "; posted-mv ic " + yn(mv.ic_holds) +
                      "; first-price dsic " + yn(fp.dsic_holds)};
}

Outcome welfare_bounds() {
    bool pass = true;
    std::string detail;
    for (const auto& dist : {ValueDistribution::uniform(0, 200), ValueDistribution::exponential(100)}) {
        for (const auto& mech : {DynamicMechanism::wdpp(), DynamicMechanism::twdpp()}) {
            ScenarioConfig s = builtin_scenario("excess-uniform");
            s.game.distribution = dist;
            s.game.mechanism = mech;
            const auto trace = run_game(s.game);
            const Estimate q_hat = detect_equilibrium_price(std::span<const TraceRecord>(trace), s.effective_burn_in());
            const auto r = welfare_bound_check(mech, dist, 200, UpdateParams(kAlpha, kDelta, 100), q_hat.value, 100000, 1);
            pass = pass && r.passes;
            detail += dist.name() + "/" + mechanism_name(mech) + " q=" + fmt("%.2f", q_hat.value) +
                      " ratio=" + fmt("%.3f", r.ratio) + " floor=" + fmt("%.2f", r.bound_factor) + "; ";
        }
    }
    return {pass, detail};
}

Outcome welfare_narrative() {
    bool pass = true;
    std::string detail;
    for (const char* name : {"excess-uniform", "excess-exponential", "excess-pareto"}) {
        double total = 0.0;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            ScenarioConfig s = builtin_scenario(name);
            s.game.seed = seed;
            total += run_scenario(s).summary.mean_welfare_ratio;
        }
        const double mean = total / 10.0;
        pass = pass && mean >= 0.7;
        detail += std::string(name) + " " + fmt("%.3f", mean) + "; ";
    }
    return {pass, detail};
}

Outcome solver_simulator_consistency() {
    const auto dist = ValueDistribution::uniform(0, 200);
    const UpdateParams params(kAlpha, kDelta, 100);
    const std::uint64_t samples = 50000;
    // One seed for every q: common random numbers make the sampled kernel smooth.
    const Oracle kernel = [&](double q) { return kernel_ttw_mc(dist, 200, params, q, samples, 11).value; };
    SolveOptions opt;
    opt.tol = 1e-7;
    const auto solve = iterate_to_fixed_point({kernel, 400.0, 1.0 + kDelta, kAlpha}, 10.0, opt);

    // Delta method: the noise in K at the root moves the root by se / |1 - K'|.
    const double h = 1.0;
    const double slope = (kernel(solve.x_star + h) - kernel(solve.x_star - h)) / (2 * h);
    const double k_se = kernel_ttw_mc(dist, 200, params, solve.x_star, samples, 11).se;
    const double solve_se = k_se / std::abs(1.0 - slope);

    const ScenarioConfig s = builtin_scenario("excess-uniform");
    const auto trace = run_game(s.game);
    const Estimate sim = detect_equilibrium_price(std::span<const TraceRecord>(trace), s.effective_burn_in());
    const double combined = std::hypot(solve_se, sim.se);
    const double gap = std::abs(solve.x_star - sim.value);
    return {solve.converged && gap <= 3 * combined,
            "solve " + fmt("%.3f", solve.x_star) + "+/-" + fmt("%.3f", solve_se) + ", simulation " +
                fmt("%.3f", sim.value) + "+/-" + fmt("%.3f", sim.se) + ", gap " + fmt("%.3f", gap) + " <= " +
                fmt("%.3f", 3 * combined) + "?"};
}

Outcome determinism() {
    bool pass = true;
    for (const auto& name : builtin_scenario_names()) {
        const auto s = builtin_scenario(name);
        pass = pass && trace_to_csv(run_game(s.game)) == trace_to_csv(run_game(s.game));
    }
    return {pass, "every builtin scenario replayed byte for byte"};
}

Outcome shock_reconvergence() {
    bool pass = true;
    std::string detail;
    for (const char* mech : {"wdpp", "udpp", "twdpp"}) {
        ScenarioConfig s = builtin_scenario("shock");
        s.game.mechanism = parse_mechanism(mech);
        const auto trace = run_game(s.game);
        const auto verdicts =
            segment_verdicts(trace, s.game.demand, stability_options_for(s.game.distribution));
        detail += std::string(mech) + ":";
        for (const auto& v : verdicts) {
            bool ok = v.kind == Kind::kConverged;
            if (!ok && std::string(mech) == "twdpp" && v.kind == Kind::kOscillating) {
                ok = v.band_width() <= 2 * kAlpha * kDelta * v.q_star;
            }
            pass = pass && ok;
            detail += " " + std::string(to_string(v.kind)) + "@" + fmt("%.1f", v.q_star);
        }
        detail += "; ";
    }
    return {pass, detail};
}

struct Criterion {
    int id;
    const char* title;
    double budget_seconds;  // 0: no runtime bound
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "point-mass instability", 10.0, point_mass_instability},
        {2, "under-supply separation", 10.0, under_supply_separation},
        {3, "fixed-point solver exactness", 1.0, solver_exactness},
        {4, "mixture contraction", 0.0, mixture_contraction},
        {5, "IC/DSIC oracle suite", 60.0, ic_suite},
        {6, "welfare bounds at equilibrium", 60.0, welfare_bounds},
        {7, "excess-demand welfare ratio", 120.0, welfare_narrative},
        {8, "solver/simulator consistency", 0.0, solver_simulator_consistency},
        {9, "determinism", 0.0, determinism},
        {10, "demand-shock re-convergence", 0.0, shock_reconvergence},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_budget = c.budget_seconds == 0.0 || secs < c.budget_seconds;
        const bool pass = o.pass && in_budget;
        if (!pass) ++failures;
        std::printf("%s %2d %s: %s (%.2f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(), secs,
                    in_budget ? "" : ", over budget");
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
