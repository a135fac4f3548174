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

// JSON scenario files. A minimal config names the mechanism, the supply, the
// demand and the value distribution:
//
//   {
//     "mechanism": "twdpp",
//     "m": 100,
//     "demand": {"kind": "constant", "n": 200},
//     "distribution": {"kind": "uniform", "lo": 0, "hi": 200}
//   }
//
// Everything else has a default: name "custom", alpha 1/16, delta 1, q0 10,
// horizon 10000, burn_in horizon/5, seed 1, honest miner, truthful bidders.
// Unknown keys are rejected at every level.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tfmlab/core.hpp"
#include "tfmlab/experiments.hpp"
#include "tfmlab/game.hpp"
#include "tfmlab/values.hpp"

namespace tfmlab {

using Json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(std::vector<std::string> errors)
        : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

    const std::vector<std::string>& errors() const noexcept { return errors_; }

  private:
    static std::string join(const std::vector<std::string>& errors) {
        std::string out = "invalid config:";
        for (const auto& e : errors) out += "\n  - " + e;
        return out;
    }

    std::vector<std::string> errors_;
};

namespace detail {

class ConfigReader {
  public:
    std::vector<std::string> errors;

    void fail(std::string msg) { errors.push_back(std::move(msg)); }

    void reject_unknown(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
        const std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [key, value] : obj.items()) {
            if (!ok.contains(key)) fail("unknown key '" + key + "'" + where);
        }
    }

    std::optional<double> number(const Json& obj, const char* key, const std::string& label) {
        if (!obj.contains(key)) return std::nullopt;
        const Json& v = obj.at(key);
        if (!v.is_number()) {
            fail(label + " must be a number");
            return std::nullopt;
        }
        return v.get<double>();
    }

    std::optional<std::uint64_t> count(const Json& obj, const char* key, const std::string& label) {
        if (!obj.contains(key)) return std::nullopt;
        const Json& v = obj.at(key);
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
        fail(label + " must be a non-negative integer");
        return std::nullopt;
    }

    std::optional<std::string> text(const Json& obj, const char* key, const std::string& label) {
        if (!obj.contains(key)) return std::nullopt;
        const Json& v = obj.at(key);
        if (!v.is_string()) {
            fail(label + " must be a string");
            return std::nullopt;
        }
        return v.get<std::string>();
    }

    template <typename Build>
    auto guarded(Build&& build) -> std::optional<decltype(build())> {
        try {
            return build();
        } catch (const ParameterError& e) {
            fail(e.what());
        }
        return std::nullopt;
    }
};

inline std::optional<ValueDistribution> read_distribution(ConfigReader& r, const Json& j) {
    if (!j.is_object()) {
        r.fail("distribution must be an object");
        return std::nullopt;
    }
    const auto kind = r.text(j, "kind", "distribution.kind");
    if (!kind) {
        if (!j.contains("kind")) r.fail("distribution.kind is required");
        return std::nullopt;
    }
    const double cap = r.number(j, "truncation_cap", "distribution.truncation_cap").value_or(kDefaultTruncationCap);
    auto need = [&](const char* key) -> std::optional<double> {
        if (!j.contains(key)) {
            r.fail(std::string("distribution.") + key + " is required for kind '" + *kind + "'");
            return std::nullopt;
        }
        return r.number(j, key, std::string("distribution.") + key);
    };
    const std::string where = " in distribution";
    if (*kind == "point-mass") {
        r.reject_unknown(j, {"kind", "value", "truncation_cap"}, where);
        const auto v = need("value");
        if (!v) return std::nullopt;
        return r.guarded([&] { return ValueDistribution(PointMass{*v}, cap); });
    }
    if (*kind == "uniform") {
        r.reject_unknown(j, {"kind", "lo", "hi", "truncation_cap"}, where);
        const auto lo = need("lo");
        const auto hi = need("hi");
        if (!lo || !hi) return std::nullopt;
        return r.guarded([&] { return ValueDistribution(Uniform{*lo, *hi}, cap); });
    }
    if (*kind == "exponential") {
        r.reject_unknown(j, {"kind", "mean", "truncation_cap"}, where);
        const auto mean = need("mean");
        if (!mean) return std::nullopt;
        return r.guarded([&] { return ValueDistribution(Exponential{*mean}, cap); });
    }
    if (*kind == "pareto") {
        r.reject_unknown(j, {"kind", "shape", "scale", "truncation_cap"}, where);
        const double shape = r.number(j, "shape", "distribution.shape").value_or(kDefaultParetoShape);
        const double scale = r.number(j, "scale", "distribution.scale").value_or(kDefaultParetoScale);
        return r.guarded([&] { return ValueDistribution(Pareto{shape, scale}, cap); });
    }
    if (*kind == "empirical") {
        r.reject_unknown(j, {"kind", "values", "truncation_cap"}, where);
        if (!j.contains("values") || !j.at("values").is_array()) {
            r.fail("distribution.values must be an array of numbers");
            return std::nullopt;
        }
        std::vector<double> values;
        for (const auto& v : j.at("values")) {
            if (!v.is_number()) {
                r.fail("distribution.values must be an array of numbers");
                return std::nullopt;
            }
            values.push_back(v.get<double>());
        }
        std::sort(values.begin(), values.end());
        return r.guarded([&] { return ValueDistribution(Empirical{std::move(values)}, cap); });
    }
    r.fail("unknown distribution kind '" + *kind + "'");
    return std::nullopt;
}

inline std::optional<DemandProfile> read_demand(ConfigReader& r, const Json& j) {
    if (!j.is_object()) {
        r.fail("demand must be an object");
        return std::nullopt;
    }
    const auto kind = r.text(j, "kind", "demand.kind");
    if (!kind) {
        if (!j.contains("kind")) r.fail("demand.kind is required");
        return std::nullopt;
    }
    if (*kind == "constant") {
        r.reject_unknown(j, {"kind", "n"}, " in demand");
        const auto n = r.count(j, "n", "demand.n");
        if (!n) {
            if (!j.contains("n")) r.fail("demand.n is required");
            return std::nullopt;
        }
        return DemandProfile::constant(*n);
    }
    if (*kind == "step") {
        r.reject_unknown(j, {"kind", "schedule"}, " in demand");
        if (!j.contains("schedule") || !j.at("schedule").is_array()) {
            r.fail("demand.schedule must be an array of {\"t\", \"n\"} objects");
            return std::nullopt;
        }
        std::vector<DemandProfile::Breakpoint> schedule;
        bool ok = true;
        for (const auto& b : j.at("schedule")) {
            if (!b.is_object()) {
                r.fail("demand.schedule entries must be objects");
                ok = false;
                continue;
            }
            r.reject_unknown(b, {"t", "n"}, " in demand.schedule");
            const auto t = r.count(b, "t", "demand.schedule[].t");
            const auto n = r.count(b, "n", "demand.schedule[].n");
            if (!t || !n) {
                if (!b.contains("t") || !b.contains("n")) r.fail("demand.schedule entries need both t and n");
                ok = false;
                continue;
            }
            schedule.push_back({*t, static_cast<std::size_t>(*n)});
        }
        if (!ok) return std::nullopt;
        return r.guarded([&] { return DemandProfile::step(schedule); });
    }
    r.fail("unknown demand kind '" + *kind + "'");
    return std::nullopt;
}

inline std::optional<BidderStrategy> read_bidder(ConfigReader& r, const Json& j) {
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        if (name == "truthful") return BidderStrategy::truthful();
        r.fail("bidder_strategy '" + name + "' needs parameters; use an object such as {\"kind\": \"shade\", \"factor\": 0.9}");
        return std::nullopt;
    }
    if (!j.is_object()) {
        r.fail("bidder_strategy must be a string or an object");
        return std::nullopt;
    }
    const auto kind = r.text(j, "kind", "bidder_strategy.kind");
    if (!kind) {
        if (!j.contains("kind")) r.fail("bidder_strategy.kind is required");
        return std::nullopt;
    }
    if (*kind == "truthful") {
        r.reject_unknown(j, {"kind"}, " in bidder_strategy");
        return BidderStrategy::truthful();
    }
    if (*kind == "shade") {
        r.reject_unknown(j, {"kind", "factor"}, " in bidder_strategy");
        const auto f = r.number(j, "factor", "bidder_strategy.factor");
        if (!f) {
            if (!j.contains("factor")) r.fail("bidder_strategy.factor is required for shade");
            return std::nullopt;
        }
        return r.guarded([&] { return BidderStrategy::shade(*f); });
    }
    if (*kind == "overbid") {
        r.reject_unknown(j, {"kind", "cap"}, " in bidder_strategy");
        const auto c = r.number(j, "cap", "bidder_strategy.cap");
        if (!c) {
            if (!j.contains("cap")) r.fail("bidder_strategy.cap is required for overbid");
            return std::nullopt;
        }
        return r.guarded([&] { return BidderStrategy::overbid(*c); });
    }
    if (*kind == "grid-best-response") {
        r.fail("bidder_strategy 'grid-best-response' is only available to the deviation oracle");
        return std::nullopt;
    }
    r.fail("unknown bidder_strategy kind '" + *kind + "'");
    return std::nullopt;
}

inline std::pair<std::size_t, std::size_t> line_and_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

}  // namespace detail

// Builds and validates a scenario; every violated constraint is reported.
inline ScenarioConfig scenario_from_json(const Json& j) {
    detail::ConfigReader r;
    if (!j.is_object()) throw ConfigError({"config must be a JSON object"});
    r.reject_unknown(j,
                     {"name", "mechanism", "posted_price", "m", "demand", "distribution", "miner_strategy",
                      "bidder_strategy", "alpha", "delta", "q0", "horizon", "burn_in", "seed", "output_dir"},
                     "");

    ScenarioConfig s;
    GameConfig& g = s.game;
    if (const auto name = r.text(j, "name", "name")) s.name = *name;
    if (const auto out = r.text(j, "output_dir", "output_dir")) s.output_dir = *out;

    for (const char* key : {"mechanism", "m", "demand", "distribution"}) {
        if (!j.contains(key)) r.fail(std::string(key) + " is required");
    }

    const auto posted = r.number(j, "posted_price", "posted_price");
    if (const auto mech = r.text(j, "mechanism", "mechanism")) {
        const bool is_posted = *mech == "posted-mv" || *mech == "posted-rm";
        if (!is_posted && j.contains("posted_price")) r.fail("posted_price only applies to posted-mv and posted-rm");
        if (is_posted && !j.contains("posted_price")) {
            r.fail("posted_price is required for mechanism '" + *mech + "'");
        } else if (!is_posted || posted) {
            if (auto m = r.guarded([&] { return parse_mechanism(*mech, posted.value_or(0.0)); })) g.mechanism = *m;
        }
    }

    if (const auto m = r.count(j, "m", "m")) {
        if (*m < 1) r.fail("m must be >= 1");
        g.m = static_cast<std::size_t>(*m);
    }
    if (j.contains("demand")) {
        if (auto d = detail::read_demand(r, j.at("demand"))) g.demand = *d;
    }
    if (j.contains("distribution")) {
        if (auto d = detail::read_distribution(r, j.at("distribution"))) g.distribution = *d;
    }
    if (const auto miner = r.text(j, "miner_strategy", "miner_strategy")) {
        if (auto ms = r.guarded([&] { return parse_miner_strategy(*miner); })) g.miner = *ms;
    }
    if (j.contains("bidder_strategy")) {
        if (auto b = detail::read_bidder(r, j.at("bidder_strategy"))) g.bidder = *b;
    }
    if (const auto a = r.number(j, "alpha", "alpha")) {
        g.alpha = *a;
        if (!(g.alpha > 0.0 && g.alpha < 1.0)) r.fail("alpha must lie in (0,1)");
    }
    if (const auto d = r.number(j, "delta", "delta")) {
        g.delta = *d;
        if (!(g.delta > 0.0 && std::isfinite(g.delta))) r.fail("delta must be positive");
    }
    if (const auto q0 = r.number(j, "q0", "q0")) {
        g.q0 = *q0;
        if (!(g.q0 > 0.0 && std::isfinite(g.q0))) r.fail("q0 must be strictly positive");
    }
    if (const auto h = r.count(j, "horizon", "horizon")) {
        g.horizon = *h;
        if (g.horizon < 1) r.fail("horizon must be >= 1");
    }
    if (const auto b = r.count(j, "burn_in", "burn_in")) s.burn_in = *b;
    if (const auto seed = r.count(j, "seed", "seed")) g.seed = *seed;

    if (s.effective_burn_in() >= g.horizon && g.horizon >= 1) r.fail("burn_in must be smaller than horizon");

    if (r.errors.empty()) {
        r.guarded([&] {
            s.validate();
            return true;
        });
    }
    if (!r.errors.empty()) throw ConfigError(std::move(r.errors));
    return s;
}

inline ScenarioConfig parse_config(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        const auto [line, column] = detail::line_and_column(text, e.byte > 0 ? e.byte - 1 : 0);
        std::string what = e.what();
        if (const auto pos = what.find("parse error"); pos != std::string::npos) what = what.substr(pos);
        throw ConfigError({"line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what});
    }
    return scenario_from_json(j);
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read config " + path.string());
    std::ostringstream buf;
    buf << f.rdbuf();
    try {
        return parse_config(buf.str());
    } catch (const ConfigError& e) {
        std::vector<std::string> errors;
        for (const auto& msg : e.errors()) errors.push_back(path.string() + ": " + msg);
        throw ConfigError(std::move(errors));
    }
}

//------------------------------------------------------------------------------
// Writing
//------------------------------------------------------------------------------

inline Json distribution_to_json(const ValueDistribution& d) {
    Json j;
    j["kind"] = d.name();
    std::visit(
        [&j](const auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, PointMass>) {
                j["value"] = k.value;
            } else if constexpr (std::is_same_v<T, Uniform>) {
                j["lo"] = k.lo;
                j["hi"] = k.hi;
            } else if constexpr (std::is_same_v<T, Exponential>) {
                j["mean"] = k.mean;
            } else if constexpr (std::is_same_v<T, Pareto>) {
                j["shape"] = k.shape;
                j["scale"] = k.scale;
            } else {
                j["values"] = k.sorted_values;
            }
        },
        d.kind());
    if (d.truncation_cap() != kDefaultTruncationCap) j["truncation_cap"] = d.truncation_cap();
    return j;
}

inline Json demand_to_json(const DemandProfile& d) {
    if (d.is_constant()) return Json{{"kind", "constant"}, {"n", d.schedule().front().n}};
    Json schedule = Json::array();
    for (const auto& b : d.schedule()) schedule.push_back({{"t", b.t}, {"n", b.n}});
    return Json{{"kind", "step"}, {"schedule", schedule}};
}

inline Json bidder_to_json(const BidderStrategy& b) {
    Json j{{"kind", std::string(to_string(b.kind))}};
    if (b.kind == BidderStrategy::Kind::kShade) j["factor"] = b.shade_factor;
    if (b.kind == BidderStrategy::Kind::kOverbid) j["cap"] = b.overbid_cap;
    return j;
}

inline Json config_to_json(const ScenarioConfig& s) {
    const GameConfig& g = s.game;
    Json j;
    j["name"] = s.name;
    j["mechanism"] = mechanism_name(g.mechanism);
    if (const auto* st = std::get_if<StaticMechanism>(&g.mechanism); st && st->is_posted_price()) {
        j["posted_price"] = st->posted_price;
    }
    j["m"] = g.m;
    j["demand"] = demand_to_json(g.demand);
    j["distribution"] = distribution_to_json(g.distribution);
    j["miner_strategy"] = std::string(to_string(g.miner));
    j["bidder_strategy"] = bidder_to_json(g.bidder);
    j["alpha"] = g.alpha;
    j["delta"] = g.delta;
    j["q0"] = g.q0;
    j["horizon"] = g.horizon;
    if (s.burn_in) j["burn_in"] = *s.burn_in;
    j["seed"] = g.seed;
    if (!s.output_dir.empty()) j["output_dir"] = s.output_dir;
    return j;
}

inline std::string write_config(const ScenarioConfig& s) { return config_to_json(s).dump(2) + "\n"; }

//------------------------------------------------------------------------------
// IC / DSIC reports
//------------------------------------------------------------------------------

inline Json bids_to_json(std::span<const Bid> bids) {
    Json arr = Json::array();
    for (const auto& b : bids) {
        Json e{{"id", b.id}, {"bid", b.bid}};
        if (b.is_fake) {
            e["fake"] = true;
        } else {
            e["value"] = b.value;
        }
        arr.push_back(e);
    }
    return arr;
}

inline Json instance_to_json(const Instance& inst) {
    Json j{{"mechanism", std::string(to_string(inst.mechanism.kind))}, {"m", inst.m}};
    if (inst.mechanism.is_posted_price()) j["posted_price"] = inst.mechanism.posted_price;
    j["bids"] = bids_to_json(inst.bids);
    return j;
}

inline Json ic_report_to_json(const IcReport& r) {
    Json j{{"trials", r.trials}, {"ic_holds", r.ic_holds}, {"dsic_holds", r.dsic_holds}};
    if (r.ic_counterexample) {
        const auto& c = *r.ic_counterexample;
        j["ic_counterexample"] = {{"instance", instance_to_json(c.instance)},
                                  {"bidder", c.bidder},
                                  {"value", c.value},
                                  {"truthful_utility", c.truthful_utility},
                                  {"best_bid", c.best_bid},
                                  {"best_utility", c.best_utility}};
    }
    if (r.dsic_counterexample) {
        const auto& c = *r.dsic_counterexample;
        j["dsic_counterexample"] = {{"instance", instance_to_json(c.instance)},
                                    {"honest_block", bids_to_json(c.honest_block)},
                                    {"honest_utility", c.honest_utility},
                                    {"deviation_block", bids_to_json(c.deviation_block)},
                                    {"deviation_utility", c.deviation_utility}};
    }
    return j;
}

}  // namespace tfmlab
