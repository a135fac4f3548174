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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tfmlab/core.hpp"
#include "tfmlab/dynamics.hpp"
#include "tfmlab/game.hpp"
#include "tfmlab/values.hpp"

namespace tfmlab {

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

//------------------------------------------------------------------------------
// Scenarios
//------------------------------------------------------------------------------

struct ScenarioConfig {
    std::string name = "custom";
    GameConfig game;
    std::optional<std::uint64_t> burn_in;  // default: horizon / 5
    std::string output_dir;

    std::uint64_t effective_burn_in() const { return burn_in.value_or(game.horizon / 5); }

    void validate() const {
        require(!name.empty(), "scenario name must not be empty");
        game.validate();
        require(effective_burn_in() < game.horizon, "burn_in must be smaller than horizon");
    }

    bool operator==(const ScenarioConfig&) const = default;
};

inline const std::vector<std::string>& builtin_scenario_names() {
    static const std::vector<std::string> names{"excess-uniform", "excess-exponential", "excess-pareto",
                                                "under-demand",   "shock",              "pointmass-instability",
                                                "pointmass-undersupply"};
    return names;
}

inline std::string_view builtin_scenario_description(std::string_view name) {
    if (name == "excess-uniform") return "TWDPP, n=200, m=100, values Uniform(0,200)";
    if (name == "excess-exponential") return "TWDPP, n=200, m=100, values Exponential(mean 100)";
    if (name == "excess-pareto") return "TWDPP, n=200, m=100, values Pareto(shape 2, median 100)";
    if (name == "under-demand") return "TWDPP, n=67, m=100, values Uniform(0,200)";
    if (name == "shock") return "TWDPP, n=200 -> 600 -> 200 every 5000 steps, values Uniform(0,200)";
    if (name == "pointmass-instability") return "UDPP, n=200, m=100, every value 100";
    if (name == "pointmass-undersupply") return "UDPP, n=67, m=100, every value 100";
    return "";
}

inline ScenarioConfig builtin_scenario(std::string_view name) {
    ScenarioConfig s;
    s.name = std::string(name);
    GameConfig& g = s.game;
    g.mechanism = DynamicMechanism::twdpp();
    g.m = 100;
    g.demand = DemandProfile::constant(200);
    g.distribution = ValueDistribution::uniform(0.0, 200.0);
    g.horizon = 10000;
    g.q0 = 10.0;
    g.seed = 1;
    if (name == "excess-uniform") {
    } else if (name == "excess-exponential") {
        g.distribution = ValueDistribution::exponential(100.0);
    } else if (name == "excess-pareto") {
        g.distribution = ValueDistribution::pareto();
    } else if (name == "under-demand") {
        g.demand = DemandProfile::constant(67);
    } else if (name == "shock") {
        g.demand = DemandProfile::step({{1, 200}, {5001, 600}, {10001, 200}});
        g.horizon = 15000;
    } else if (name == "pointmass-instability" || name == "pointmass-undersupply") {
        g.mechanism = DynamicMechanism::udpp();
        g.distribution = ValueDistribution::point_mass(100.0);
        g.demand = DemandProfile::constant(name == "pointmass-instability" ? 200 : 67);
        g.horizon = 5000;
    } else {
        throw ParameterError("unknown scenario '" + std::string(name) + "'");
    }
    return s;
}

//------------------------------------------------------------------------------
// Stability classification
//------------------------------------------------------------------------------

struct StabilityOptions {
    std::size_t window = 1000;
    double drift_tol = 1e-2;
    // Convergence is judged on means of consecutive blocks of this many
    // steps; 1 means raw prices.
    std::size_t smoothing = 1;
};

// Raw prices with a tight tolerance when values are deterministic; for random
// values, compare the two half-window means so sampling noise is averaged out.
inline StabilityOptions stability_options_for(const ValueDistribution& dist) {
    if (dist.is_deterministic()) return {1000, 1e-4, 1};
    return {1000, 1e-2, 500};
}

struct StabilityVerdict {
    enum class Kind { kConverged, kOscillating, kNotConverged };

    Kind kind = Kind::kNotConverged;
    double q_star = 0.0;  // window mean
    double band_lo = 0.0;
    double band_hi = 0.0;
    double smoothed_band = 0.0;
    std::size_t up_count = 0;
    std::size_t down_count = 0;
    std::size_t alternations = 0;

    double band_width() const noexcept { return band_hi - band_lo; }
};

inline std::string_view to_string(StabilityVerdict::Kind k) {
    switch (k) {
        case StabilityVerdict::Kind::kConverged: return "converged";
        case StabilityVerdict::Kind::kOscillating: return "oscillating";
        case StabilityVerdict::Kind::kNotConverged: return "not-converged";
    }
    return "unknown";
}

// Looks at the final `window` prices. Converged: (smoothed) max - min is at
// most drift_tol * mean. Oscillating: at least window/4 sign alternations of
// the price change and a raw band wider than drift_tol * mean.
inline StabilityVerdict classify_stability(std::span<const double> prices, const StabilityOptions& options) {
    const std::size_t w = options.window;
    require(w >= 2, "stability window must be >= 2");
    require(options.smoothing >= 1 && options.smoothing <= w, "smoothing must lie in [1, window]");
    require(options.drift_tol > 0.0, "drift tolerance must be positive");
    if (prices.size() < 2 * w) {
        throw InsufficientData("stability check needs at least " + std::to_string(2 * w) + " steps, got " +
                               std::to_string(prices.size()));
    }
    const auto tail = prices.subspan(prices.size() - w);

    StabilityVerdict v;
    double sum = 0.0;
    for (double q : tail) sum += q;
    const double mean = sum / static_cast<double>(w);
    v.q_star = mean;
    const auto [lo, hi] = std::minmax_element(tail.begin(), tail.end());
    v.band_lo = *lo;
    v.band_hi = *hi;

    std::vector<double> blocks;
    for (std::size_t b = 0; b + options.smoothing <= w; b += options.smoothing) {
        double s = 0.0;
        for (std::size_t i = b; i < b + options.smoothing; ++i) s += tail[i];
        blocks.push_back(s / static_cast<double>(options.smoothing));
    }
    const auto [blo, bhi] = std::minmax_element(blocks.begin(), blocks.end());
    v.smoothed_band = *bhi - *blo;

    int last_sign = 0;
    for (std::size_t i = 1; i < w; ++i) {
        const double d = tail[i] - tail[i - 1];
        const int sign = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
        if (sign > 0) ++v.up_count;
        if (sign < 0) ++v.down_count;
        if (sign != 0) {
            if (last_sign != 0 && sign != last_sign) ++v.alternations;
            last_sign = sign;
        }
    }

    const double threshold = options.drift_tol * std::abs(mean);
    if (v.smoothed_band <= threshold) {
        v.kind = StabilityVerdict::Kind::kConverged;
    } else if (v.alternations >= w / 4 && v.band_width() > threshold) {
        v.kind = StabilityVerdict::Kind::kOscillating;
    } else {
        v.kind = StabilityVerdict::Kind::kNotConverged;
    }
    return v;
}

inline std::vector<double> price_series(std::span<const TraceRecord> trace) {
    std::vector<double> q;
    q.reserve(trace.size());
    for (const auto& r : trace) q.push_back(r.q);
    return q;
}

inline StabilityVerdict classify_stability(std::span<const TraceRecord> trace, const StabilityOptions& options) {
    const auto q = price_series(trace);
    return classify_stability(std::span<const double>(q), options);
}

// Half-open [begin, end) index ranges of the trace with constant demand.
inline std::vector<std::pair<std::size_t, std::size_t>> demand_segments(const DemandProfile& demand,
                                                                        std::uint64_t horizon) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const auto& sched = demand.schedule();
    for (std::size_t i = 0; i < sched.size(); ++i) {
        if (sched[i].t > horizon) break;
        const std::uint64_t end = i + 1 < sched.size() ? std::min<std::uint64_t>(sched[i + 1].t - 1, horizon) : horizon;
        out.emplace_back(static_cast<std::size_t>(sched[i].t - 1), static_cast<std::size_t>(end));
    }
    return out;
}

// One verdict per constant-demand segment; the window shrinks to half the
// segment when a segment is shorter than twice the requested window.
inline std::vector<StabilityVerdict> segment_verdicts(std::span<const TraceRecord> trace, const DemandProfile& demand,
                                                      StabilityOptions options) {
    std::vector<StabilityVerdict> out;
    const auto q = price_series(trace);
    for (const auto& [b, e] : demand_segments(demand, trace.size())) {
        StabilityOptions o = options;
        o.window = std::min(o.window, (e - b) / 2);
        o.smoothing = std::min(o.smoothing, o.window);
        out.push_back(classify_stability(std::span<const double>(q).subspan(b, e - b), o));
    }
    return out;
}

//------------------------------------------------------------------------------
// Equilibrium price and welfare at equilibrium
//------------------------------------------------------------------------------

inline constexpr std::size_t kMinPostBurnIn = 100;
inline constexpr std::size_t kEquilibriumBatches = 20;

// Mean post-burn-in price. Prices are autocorrelated, so the standard error
// comes from the spread of batch means rather than from single steps.
inline Estimate detect_equilibrium_price(std::span<const double> prices, std::size_t burn_in,
                                         std::size_t batches = kEquilibriumBatches) {
    require(batches >= 2, "need at least two batches");
    if (burn_in >= prices.size() || prices.size() - burn_in < kMinPostBurnIn) {
        throw InsufficientData("equilibrium detection needs at least " + std::to_string(kMinPostBurnIn) +
                               " post-burn-in steps");
    }
    const auto post = prices.subspan(burn_in);
    const std::size_t per = post.size() / batches;
    RunningStats means;
    double total = 0.0;
    for (double q : post) total += q;
    for (std::size_t b = 0; b < batches; ++b) {
        double s = 0.0;
        for (std::size_t i = b * per; i < (b + 1) * per; ++i) s += post[i];
        means.add(s / static_cast<double>(per));
    }
    return {total / static_cast<double>(post.size()), std::sqrt(means.variance() / static_cast<double>(batches))};
}

inline Estimate detect_equilibrium_price(std::span<const TraceRecord> trace, std::size_t burn_in) {
    const auto q = price_series(trace);
    return detect_equilibrium_price(std::span<const double>(q), burn_in);
}

struct WelfareBoundResult {
    Estimate welfare_at_q;
    Estimate opt;
    double ratio = 0.0;         // welfare_at_q / opt
    double bound_factor = 0.0;  // bound = bound_factor * OPT
    Estimate slack;             // welfare - bound_factor * OPT, per sample
    bool passes = false;
};

// The guarantee for each update rule: OPT/2 for the welfare rule and
// OPT * min(1, delta) / (2 (1 + delta)) for the truncated one.
inline double welfare_bound_factor(UpdateRuleKind rule, double delta) {
    switch (rule) {
        case UpdateRuleKind::kWelfare: return 0.5;
        case UpdateRuleKind::kTruncatedWelfare: return std::min(1.0, delta) / (2.0 * (1.0 + delta));
        case UpdateRuleKind::kUtilization: break;
    }
    throw ParameterError("no welfare guarantee is defined for the utilization rule");
}

// Monte-Carlo welfare of posting q_hat under the mechanism's allocation rule.
// Random-maximal welfare uses its exact conditional mean (m / N) * sum, and
// the check is on the paired per-sample slack so OPT noise cancels.
inline WelfareBoundResult welfare_bound_check(const DynamicMechanism& mech, const ValueDistribution& dist,
                                              std::size_t n, const UpdateParams& params, double q_hat,
                                              std::uint64_t samples = 100000, std::uint64_t seed = 1) {
    params.validate();
    require(q_hat >= 0.0 && std::isfinite(q_hat), "q_hat must be finite and >= 0");
    require(samples >= 2, "need at least two samples");
    const double factor = welfare_bound_factor(mech.update, params.delta);
    const std::size_t m = params.m;

    RunningStats welfare, opt, slack;
    std::vector<double> values, eligible;
    const std::uint64_t chunks = (samples + kMonteCarloChunk - 1) / kMonteCarloChunk;
    for (std::uint64_t c = 0; c < chunks; ++c) {
        Rng rng = make_rng(seed, c, StreamRole::kMonteCarlo);
        const std::uint64_t count = std::min<std::uint64_t>(kMonteCarloChunk, samples - c * kMonteCarloChunk);
        for (std::uint64_t s = 0; s < count; ++s) {
            sample_values_into(dist, n, rng, values);
            eligible.clear();
            for (double v : values) {
                if (v >= q_hat) eligible.push_back(v);
            }
            double w = 0.0;
            if (mech.allocation == AllocationRuleKind::kMaxValue || eligible.size() <= m) {
                w = optimal_welfare(eligible, m);
            } else {
                double sum = 0.0;
                for (double v : eligible) sum += v;
                w = static_cast<double>(m) / static_cast<double>(eligible.size()) * sum;
            }
            const double o = optimal_welfare(values, m);
            welfare.add(w);
            opt.add(o);
            slack.add(w - factor * o);
        }
    }
    WelfareBoundResult r;
    r.welfare_at_q = welfare.estimate();
    r.opt = opt.estimate();
    r.ratio = r.opt.value > 0.0 ? r.welfare_at_q.value / r.opt.value : 1.0;
    r.bound_factor = factor;
    r.slack = slack.estimate();
    r.passes = r.slack.value >= -3.0 * r.slack.se;
    return r;
}

//------------------------------------------------------------------------------
// Running scenarios and writing artifacts
//------------------------------------------------------------------------------

struct ScenarioSummary {
    std::string scenario;
    std::string mechanism;
    std::uint64_t seed = 0;
    std::uint64_t horizon = 0;
    std::uint64_t burn_in = 0;
    double mean_price = 0.0;
    double mean_welfare_ratio = 0.0;
    double mean_utilization = 0.0;
    double mean_revenue = 0.0;
    std::optional<Estimate> equilibrium;         // absent when the window is too short
    std::vector<StabilityVerdict> verdicts;      // one per demand segment
};

inline ScenarioSummary summarize(const ScenarioConfig& config, std::span<const TraceRecord> trace) {
    ScenarioSummary s;
    s.scenario = config.name;
    s.mechanism = mechanism_name(config.game.mechanism);
    s.seed = config.game.seed;
    s.horizon = config.game.horizon;
    s.burn_in = config.effective_burn_in();

    const auto post = trace.subspan(std::min<std::size_t>(s.burn_in, trace.size()));
    for (const auto& r : post) {
        s.mean_price += r.q;
        s.mean_welfare_ratio += r.welfare_ratio();
        s.mean_utilization += r.utilization;
        s.mean_revenue += r.revenue;
    }
    if (!post.empty()) {
        const auto k = static_cast<double>(post.size());
        s.mean_price /= k;
        s.mean_welfare_ratio /= k;
        s.mean_utilization /= k;
        s.mean_revenue /= k;
    }
    if (post.size() >= kMinPostBurnIn) s.equilibrium = detect_equilibrium_price(trace, s.burn_in);
    try {
        s.verdicts = segment_verdicts(trace, config.game.demand, stability_options_for(config.game.distribution));
    } catch (const InsufficientData&) {
        s.verdicts.clear();
    }
    return s;
}

inline std::string format_number(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

inline std::string trace_to_csv(std::span<const TraceRecord> trace) {
    std::string out = "t,n,q,sold,welfare_achieved,welfare_opt,revenue,utilization\n";
    out.reserve(out.size() + trace.size() * 80);
    for (const auto& r : trace) {
        out += std::to_string(r.t);
        out += ',';
        out += std::to_string(r.n);
        out += ',';
        out += format_number(r.q);
        out += ',';
        out += std::to_string(r.sold);
        out += ',';
        out += format_number(r.welfare_achieved);
        out += ',';
        out += format_number(r.welfare_opt);
        out += ',';
        out += format_number(r.revenue);
        out += ',';
        out += format_number(r.utilization);
        out += '\n';
    }
    return out;
}

// Writes through a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline nlohmann::ordered_json summary_to_json(const ScenarioSummary& s) {
    nlohmann::ordered_json j;
    j["scenario"] = s.scenario;
    j["mechanism"] = s.mechanism;
    j["seed"] = s.seed;
    j["horizon"] = s.horizon;
    j["burn_in"] = s.burn_in;
    j["mean_price"] = s.mean_price;
    j["mean_welfare_ratio"] = s.mean_welfare_ratio;
    j["mean_utilization"] = s.mean_utilization;
    j["mean_revenue"] = s.mean_revenue;
    if (s.equilibrium) {
        j["equilibrium_price"] = s.equilibrium->value;
        j["equilibrium_price_se"] = s.equilibrium->se;
    }
    j["segments"] = nlohmann::ordered_json::array();
    for (const auto& v : s.verdicts) {
        j["segments"].push_back({{"verdict", std::string(to_string(v.kind))},
                                 {"q_star", v.q_star},
                                 {"band_lo", v.band_lo},
                                 {"band_hi", v.band_hi},
                                 {"up", v.up_count},
                                 {"down", v.down_count}});
    }
    return j;
}

inline std::string summary_to_text(const ScenarioSummary& s) {
    std::string out;
    auto line = [&out](std::string_view key, const std::string& value) {
        out += key;
        out += ": ";
        out += value;
        out += '\n';
    };
    line("scenario", s.scenario);
    line("mechanism", s.mechanism);
    line("seed", std::to_string(s.seed));
    line("horizon", std::to_string(s.horizon));
    line("burn_in", std::to_string(s.burn_in));
    line("mean_price", format_number(s.mean_price));
    line("mean_welfare_ratio", format_number(s.mean_welfare_ratio));
    line("mean_utilization", format_number(s.mean_utilization));
    line("mean_revenue", format_number(s.mean_revenue));
    if (s.equilibrium) {
        line("equilibrium_price", format_number(s.equilibrium->value) + " +/- " + format_number(s.equilibrium->se));
    }
    for (std::size_t i = 0; i < s.verdicts.size(); ++i) {
        const auto& v = s.verdicts[i];
        line("segment " + std::to_string(i + 1),
             std::string(to_string(v.kind)) + " q_star=" + format_number(v.q_star) + " band=[" +
                 format_number(v.band_lo) + ", " + format_number(v.band_hi) + "]");
    }
    return out;
}

struct ScenarioResult {
    SimulationTrace trace;
    ScenarioSummary summary;
};

// Runs the game and, when the config names an output directory, writes
// trace.csv, summary.txt and summary.json there.
inline ScenarioResult run_scenario(const ScenarioConfig& config) {
    config.validate();
    ScenarioResult result;
    result.trace = run_game(config.game);
    result.summary = summarize(config, result.trace);
    if (!config.output_dir.empty()) {
        const std::filesystem::path dir(config.output_dir);
        write_file_atomic(dir / "trace.csv", trace_to_csv(result.trace));
        write_file_atomic(dir / "summary.txt", summary_to_text(result.summary));
        write_file_atomic(dir / "summary.json", summary_to_json(result.summary).dump(2) + "\n");
    }
    return result;
}

}  // namespace tfmlab
