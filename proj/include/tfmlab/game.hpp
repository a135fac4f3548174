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
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tfmlab/core.hpp"
#include "tfmlab/dynamics.hpp"
#include "tfmlab/market.hpp"
#include "tfmlab/values.hpp"

namespace tfmlab {

//------------------------------------------------------------------------------
// Mechanisms and strategies
//------------------------------------------------------------------------------

struct Eip1559Mechanism {
    bool operator==(const Eip1559Mechanism&) const = default;
};

using Mechanism = std::variant<StaticMechanism, DynamicMechanism, Eip1559Mechanism>;

inline std::string mechanism_name(const Mechanism& mech) {
    if (const auto* s = std::get_if<StaticMechanism>(&mech)) return std::string(to_string(s->kind));
    if (const auto* d = std::get_if<DynamicMechanism>(&mech)) {
        if (*d == DynamicMechanism::wdpp()) return "wdpp";
        if (*d == DynamicMechanism::udpp()) return "udpp";
        if (*d == DynamicMechanism::twdpp()) return "twdpp";
        return "dpp";
    }
    return "eip1559";
}

// `posted_price` is only read by posted-mv / posted-rm.
inline Mechanism parse_mechanism(std::string_view name, double posted_price = 0.0) {
    if (name == "wdpp") return DynamicMechanism::wdpp();
    if (name == "udpp") return DynamicMechanism::udpp();
    if (name == "twdpp") return DynamicMechanism::twdpp();
    if (name == "eip1559") return Eip1559Mechanism{};
    if (name == "first-price") return StaticMechanism::first_price();
    if (name == "second-price") return StaticMechanism::second_price();
    if (name == "posted-mv") return StaticMechanism::posted_mv(posted_price);
    if (name == "posted-rm") return StaticMechanism::posted_rm(posted_price);
    if (name == "monopolistic") return StaticMechanism::monopolistic();
    if (name == "rsop") return StaticMechanism::rsop();
    if (name == "gsp-mod") return StaticMechanism::modified_gsp();
    throw ParameterError("unknown mechanism '" + std::string(name) + "'");
}

inline bool limited_supply(const Mechanism& mech) {
    if (const auto* s = std::get_if<StaticMechanism>(&mech)) return s->limited_supply();
    return true;
}

enum class MinerStrategy { kHonest, kRevenueMaximizing, kMVOverride };

inline std::string_view to_string(MinerStrategy s) {
    switch (s) {
        case MinerStrategy::kHonest: return "honest";
        case MinerStrategy::kRevenueMaximizing: return "revenue-maximizing";
        case MinerStrategy::kMVOverride: return "mv-override";
    }
    return "unknown";
}

inline MinerStrategy parse_miner_strategy(std::string_view name) {
    if (name == "honest") return MinerStrategy::kHonest;
    if (name == "revenue-maximizing") return MinerStrategy::kRevenueMaximizing;
    if (name == "mv-override") return MinerStrategy::kMVOverride;
    throw ParameterError("unknown miner strategy '" + std::string(name) + "'");
}

struct BidderStrategy {
    enum class Kind { kTruthful, kShade, kOverbid, kGridBestResponse };

    Kind kind = Kind::kTruthful;
    double shade_factor = 1.0;
    double overbid_cap = 1e6;

    static BidderStrategy truthful() { return {}; }
    static BidderStrategy shade(double factor) {
        require(factor > 0.0 && factor <= 1.0, "shade factor must lie in (0,1]");
        return {Kind::kShade, factor, 1e6};
    }
    static BidderStrategy overbid(double cap) {
        require(cap >= 0.0 && std::isfinite(cap), "overbid cap must be finite and >= 0");
        return {Kind::kOverbid, 1.0, cap};
    }
    static BidderStrategy grid_best_response() { return {Kind::kGridBestResponse, 1.0, 1e6}; }

    double bid_for(double value) const {
        switch (kind) {
            case Kind::kTruthful: return value;
            case Kind::kShade: return shade_factor * value;
            case Kind::kOverbid: return overbid_cap;
            case Kind::kGridBestResponse: break;
        }
        throw ParameterError("grid-best-response is only available to the deviation oracle");
    }

    bool operator==(const BidderStrategy&) const = default;
};

inline std::string_view to_string(BidderStrategy::Kind k) {
    switch (k) {
        case BidderStrategy::Kind::kTruthful: return "truthful";
        case BidderStrategy::Kind::kShade: return "shade";
        case BidderStrategy::Kind::kOverbid: return "overbid";
        case BidderStrategy::Kind::kGridBestResponse: return "grid-best-response";
    }
    return "unknown";
}

//------------------------------------------------------------------------------
// Expected utilities under the intended allocation
//------------------------------------------------------------------------------

inline constexpr std::size_t kMaxEnumeratedAllocations = 200000;

namespace detail {

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
    }
    return r;
}

// Calls visit(subset) for every k-subset of `items`, in lexicographic index order.
template <typename Visit>
void for_each_subset_of_size(const std::vector<Bid>& items, std::size_t k, Visit&& visit) {
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    std::vector<Bid> subset(k);
    while (true) {
        for (std::size_t i = 0; i < k; ++i) subset[i] = items[idx[i]];
        visit(std::span<const Bid>(subset));
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == items.size() - k + (i - 1)) --i;
        if (i == 0) return;
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

}  // namespace detail

// Expected utility of the given functional over the mechanism's randomness
// once `block` is submitted (RSOP partitions enumerated exactly).
template <typename Functional>
double expected_over_settlement(const StaticMechanism& mech, std::span<const Bid> block, std::size_t m,
                                Functional&& functional) {
    if (mech.kind == StaticKind::kRSOP) {
        auto by_id = detail::sorted_by_id(block);
        if (by_id.size() > kMaxRsopEnumeration) {
            throw SearchSpaceError("RSOP exact expectation limited to " + std::to_string(kMaxRsopEnumeration) +
                                   " bids");
        }
        const std::uint64_t partitions = std::uint64_t{1} << by_id.size();
        double total = 0.0;
        for (std::uint64_t mask = 0; mask < partitions; ++mask) {
            total += functional(detail::settle_rsop(by_id, mask));
        }
        return total / static_cast<double>(partitions);
    }
    Rng unused{0};
    return functional(settle_block(mech, block, m, unused));
}

// Miner's expected one-step utility when submitting `block`.
inline double expected_miner_utility(const StaticMechanism& mech, std::span<const Bid> block, std::size_t m) {
    return expected_over_settlement(mech, block, m, [](const Allocation& a) { return miner_utility(a); });
}

// Bidder `target`'s expected utility when the miner follows the intended rule.
// Random-maximal allocations are averaged over every maximal subset.
inline double expected_bidder_utility(const StaticMechanism& mech, std::span<const Bid> arrivals, std::size_t m,
                                      const Bid& target) {
    auto utility = [&target](const Allocation& a) { return bidder_utility(target, a); };
    if (mech.kind == StaticKind::kPostedPriceRM) {
        std::vector<Bid> eligible = eligible_at(arrivals, mech.posted_price);
        if (eligible.size() <= m) {
            return expected_over_settlement(mech, eligible, m, utility);
        }
        const auto count = detail::binomial(eligible.size(), m);
        if (count > kMaxEnumeratedAllocations) {
            // Symmetric closed form for large instances.
            const bool eligible_target = target.bid >= mech.posted_price;
            return eligible_target ? static_cast<double>(m) / static_cast<double>(eligible.size()) *
                                         (target.value - mech.posted_price)
                                   : 0.0;
        }
        double total = 0.0;
        detail::for_each_subset_of_size(eligible, m, [&](std::span<const Bid> subset) {
            total += expected_over_settlement(mech, subset, m, utility);
        });
        return total / static_cast<double>(count);
    }
    if (mech.kind == StaticKind::kRSOP) {
        return expected_over_settlement(mech, arrivals, m, utility);
    }
    Rng unused{0};
    const auto block = intended_block(mech, arrivals, m, unused);
    return expected_over_settlement(mech, block, m, utility);
}

//------------------------------------------------------------------------------
// Miner deviation oracle
//------------------------------------------------------------------------------

inline constexpr std::size_t kMaxDeviationArrivals = 12;

// Real bids, midpoints between consecutive distinct bids, and 0.
inline std::vector<double> default_fake_grid(std::span<const Bid> arrivals) {
    std::vector<double> points{0.0};
    for (const auto& b : arrivals) points.push_back(b.bid);
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    const std::size_t distinct = points.size();
    for (std::size_t i = 1; i < distinct; ++i) points.push_back(0.5 * (points[i - 1] + points[i]));
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    return points;
}

struct DeviationSearch {
    std::vector<double> fake_grid;          // empty: default_fake_grid(arrivals)
    std::optional<std::size_t> max_fakes;   // default: m for limited supply, 1 otherwise
};

struct DeviationResult {
    std::vector<Bid> best_block;
    double best_utility = 0.0;
    std::vector<Bid> honest_block;
    double honest_utility = 0.0;
    std::uint64_t blocks_examined = 0;

    bool profitable() const noexcept { return best_utility > honest_utility + kUtilityTolerance; }
};

// Exhaustive myopic search over every block the miner could submit: any
// subset of the arrivals plus a multiset of fake bids drawn from the grid.
// Ties keep the honest block.
inline DeviationResult miner_best_deviation(const StaticMechanism& mech, std::span<const Bid> arrivals,
                                            std::size_t m, const DeviationSearch& search = {},
                                            std::uint64_t seed = 0) {
    require(m >= 1, "deviation search: m must be >= 1");
    if (arrivals.size() > kMaxDeviationArrivals) {
        throw SearchSpaceError("deviation search supports at most " + std::to_string(kMaxDeviationArrivals) +
                               " arrivals, got " + std::to_string(arrivals.size()));
    }
    const std::size_t max_block = mech.max_block_size(m);
    const std::size_t max_fakes = search.max_fakes.value_or(mech.limited_supply() ? m : 1);

    std::vector<double> grid = search.fake_grid.empty() ? default_fake_grid(arrivals) : search.fake_grid;
    std::vector<Bid> candidates(arrivals.begin(), arrivals.end());
    if (mech.is_posted_price()) {
        // Bids under the posted price make the block invalid.
        std::erase_if(grid, [&](double g) { return g < mech.posted_price; });
        std::erase_if(candidates, [&](const Bid& b) { return b.bid < mech.posted_price; });
    }

    DeviationResult result;
    Rng rng{seed};
    result.honest_block = intended_block(mech, arrivals, m, rng);
    // All random-maximal blocks earn the same; RSOP is averaged inside.
    result.honest_utility = expected_miner_utility(mech, result.honest_block, m);
    result.best_block = result.honest_block;
    result.best_utility = result.honest_utility;

    std::vector<Bid> block;
    std::vector<std::size_t> fake_idx;
    auto evaluate = [&]() {
        ++result.blocks_examined;
        const double u = expected_miner_utility(mech, block, m);
        if (u > result.best_utility + kUtilityTolerance) {
            result.best_utility = u;
            result.best_block = block;
        }
    };
    // Multisets of fakes with nondecreasing grid index.
    auto add_fakes = [&](auto&& self, std::size_t start, std::size_t placed) -> void {
        evaluate();
        if (placed == max_fakes || block.size() >= max_block) return;
        for (std::size_t g = start; g < grid.size(); ++g) {
            block.push_back(Bid::fake(kFakeIdBase + placed, grid[g]));
            self(self, g, placed + 1);
            block.pop_back();
        }
    };

    const std::uint64_t subsets = std::uint64_t{1} << candidates.size();
    for (std::uint64_t mask = 0; mask < subsets; ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) > max_block) continue;
        block.clear();
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if ((mask >> i) & 1U) block.push_back(candidates[i]);
        }
        add_fakes(add_fakes, 0, 0);
    }
    return result;
}

//------------------------------------------------------------------------------
// Bidder best-response oracle
//------------------------------------------------------------------------------

struct BestResponse {
    std::vector<double> best_bids;  // every grid bid attaining the max
    double best_utility = 0.0;
    double truthful_utility = 0.0;

    bool truthful_is_best() const noexcept { return truthful_utility >= best_utility - kUtilityTolerance; }
};

// Bidder `id` with value `value` picks a bid from `bid_grid` against fixed
// `others`; every other participant follows the intended rule.
inline BestResponse bidder_best_response(const StaticMechanism& mech, std::span<const Bid> others, double value,
                                         std::span<const double> bid_grid, std::size_t m,
                                         std::optional<BidderId> id = std::nullopt) {
    expects(std::find(bid_grid.begin(), bid_grid.end(), value) != bid_grid.end(),
            "bidder_best_response: bid grid must contain the true value");
    BidderId self = id.value_or(0);
    if (!id) {
        for (const auto& o : others) self = std::max(self, o.id);
        ++self;
    }

    std::vector<Bid> arrivals(others.begin(), others.end());
    arrivals.push_back(Bid::real(self, value, value));
    std::vector<double> utilities(bid_grid.size());
    BestResponse out;
    out.best_utility = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < bid_grid.size(); ++g) {
        arrivals.back().bid = bid_grid[g];
        utilities[g] = expected_bidder_utility(mech, arrivals, m, arrivals.back());
        out.best_utility = std::max(out.best_utility, utilities[g]);
        if (bid_grid[g] == value) out.truthful_utility = utilities[g];
    }
    for (std::size_t g = 0; g < bid_grid.size(); ++g) {
        if (utilities[g] >= out.best_utility - kUtilityTolerance) out.best_bids.push_back(bid_grid[g]);
    }
    return out;
}

//------------------------------------------------------------------------------
// Randomized IC / DSIC checks
//------------------------------------------------------------------------------

struct InstanceFamily {
    std::size_t n_min = 2;
    std::size_t n_max = 8;
    std::size_t m_min = 1;
    std::size_t m_max = 3;
    double value_hi = 20.0;     // values ~ Uniform(0, value_hi), rounded to cents
    bool excess_demand = false;  // force |M(q)| > m (posted-price) / n > m

    void validate() const {
        require(n_min >= 1 && n_min <= n_max, "instance family: need 1 <= n_min <= n_max");
        require(m_min >= 1 && m_min <= m_max, "instance family: need 1 <= m_min <= m_max");
        require(n_max <= kMaxDeviationArrivals, "instance family: n_max exceeds the oracle bound");
        require(value_hi > 0.0, "instance family: value_hi must be positive");
        require(!excess_demand || n_max > m_min, "instance family: excess demand needs n_max > m_min");
    }
};

struct Instance {
    StaticMechanism mechanism;
    std::size_t m = 1;
    std::vector<Bid> bids;  // truthful: bid == value
};

struct BidderCounterexample {
    Instance instance;
    BidderId bidder = 0;
    double value = 0.0;
    double truthful_utility = 0.0;
    double best_bid = 0.0;
    double best_utility = 0.0;
};

struct MinerCounterexample {
    Instance instance;
    std::vector<Bid> honest_block;
    double honest_utility = 0.0;
    std::vector<Bid> deviation_block;
    double deviation_utility = 0.0;
};

struct IcReport {
    std::uint64_t trials = 0;
    bool ic_holds = true;
    std::optional<BidderCounterexample> ic_counterexample;
    bool dsic_holds = true;
    std::optional<MinerCounterexample> dsic_counterexample;
};

inline Instance draw_instance(StaticKind kind, const InstanceFamily& family, Rng& rng) {
    Instance inst;
    inst.m = family.m_min + uniform_index(rng, family.m_max - family.m_min + 1);
    std::size_t n_lo = family.n_min;
    if (family.excess_demand) n_lo = std::max(n_lo, inst.m + 1);
    if (n_lo > family.n_max) {
        inst.m = family.n_max - 1;
        n_lo = family.n_max;
    }
    const std::size_t n = n_lo + uniform_index(rng, family.n_max - n_lo + 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = std::round(100.0 * family.value_hi * uniform01(rng)) / 100.0;
        inst.bids.push_back(Bid::truthful(i + 1, v));
    }
    inst.mechanism.kind = kind;
    if (kind == StaticKind::kPostedPriceMV || kind == StaticKind::kPostedPriceRM) {
        std::vector<double> sorted;
        for (const auto& b : inst.bids) sorted.push_back(b.value);
        std::sort(sorted.begin(), sorted.end(), std::greater<>{});
        // Excess demand: price at or below the (m+1)-st value keeps m+1 bidders eligible.
        const double top = family.excess_demand ? sorted[std::min(inst.m, sorted.size() - 1)] : sorted.front();
        inst.mechanism.posted_price = std::round(100.0 * top * uniform01(rng)) / 100.0;
    }
    return inst;
}

// Candidate bids for one bidder: 0, its value, everyone's bids, midpoints
// between consecutive points, the posted price, and a large overbid.
inline std::vector<double> default_bid_grid(const Instance& inst, double value) {
    std::vector<double> points{0.0, value};
    double top = value;
    for (const auto& b : inst.bids) {
        points.push_back(b.bid);
        top = std::max(top, b.bid);
    }
    if (inst.mechanism.is_posted_price()) points.push_back(inst.mechanism.posted_price);
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    const std::size_t distinct = points.size();
    for (std::size_t i = 1; i < distinct; ++i) points.push_back(0.5 * (points[i - 1] + points[i]));
    points.push_back(2.0 * top + 1.0);
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    return points;
}

inline IcReport check_ic_dsic(StaticKind kind, const InstanceFamily& family, std::uint64_t trials,
                              std::uint64_t seed) {
    family.validate();
    IcReport report;
    report.trials = trials;
    for (std::uint64_t trial = 0; trial < trials; ++trial) {
        Rng rng = make_rng(seed, trial, StreamRole::kTrial);
        const Instance inst = draw_instance(kind, family, rng);

        if (report.ic_holds) {
            for (std::size_t i = 0; i < inst.bids.size(); ++i) {
                std::vector<Bid> others = inst.bids;
                const Bid self = others[i];
                others.erase(others.begin() + static_cast<std::ptrdiff_t>(i));
                const auto grid = default_bid_grid(inst, self.value);
                const auto br = bidder_best_response(inst.mechanism, others, self.value, grid, inst.m, self.id);
                if (!br.truthful_is_best()) {
                    report.ic_holds = false;
                    report.ic_counterexample =
                        BidderCounterexample{inst, self.id, self.value, br.truthful_utility, br.best_bids.front(),
                                             br.best_utility};
                    break;
                }
            }
        }
        if (report.dsic_holds) {
            const auto dev = miner_best_deviation(inst.mechanism, inst.bids, inst.m, {}, derive_seed(seed, trial, StreamRole::kMiner));
            if (dev.profitable()) {
                report.dsic_holds = false;
                report.dsic_counterexample =
                    MinerCounterexample{inst, dev.honest_block, dev.honest_utility, dev.best_block, dev.best_utility};
            }
        }
    }
    return report;
}

//------------------------------------------------------------------------------
// The multi-round game
//------------------------------------------------------------------------------

struct TraceRecord {
    std::uint64_t t = 0;
    std::size_t n = 0;
    double q = 0.0;
    std::size_t sold = 0;
    double welfare_achieved = 0.0;
    double welfare_opt = 0.0;
    double revenue = 0.0;
    double utilization = 0.0;

    double welfare_ratio() const noexcept { return welfare_opt > 0.0 ? welfare_achieved / welfare_opt : 1.0; }
    bool operator==(const TraceRecord&) const = default;
};

using SimulationTrace = std::vector<TraceRecord>;

struct GameConfig {
    Mechanism mechanism = DynamicMechanism::twdpp();
    std::size_t m = 100;
    DemandProfile demand = DemandProfile::constant(200);
    ValueDistribution distribution = ValueDistribution::uniform(0.0, 200.0);
    MinerStrategy miner = MinerStrategy::kHonest;
    BidderStrategy bidder = BidderStrategy::truthful();
    double alpha = kDefaultAlpha;
    double delta = kDefaultDelta;
    double q0 = 10.0;
    std::uint64_t horizon = 10000;
    std::uint64_t seed = 1;

    UpdateParams params() const { return UpdateParams(alpha, delta, m); }

    void validate() const {
        require(horizon >= 1, "horizon must be >= 1");
        require(m >= 1, "m must be >= 1");
        params().validate();
        require(q0 > 0.0 && std::isfinite(q0), "q0 must be strictly positive");
        if (bidder.kind == BidderStrategy::Kind::kGridBestResponse) {
            throw ParameterError("grid-best-response is only available to the deviation oracle");
        }
    }

    bool operator==(const GameConfig&) const = default;
};

namespace detail {

inline std::vector<Bid> miner_block(const StaticMechanism& mech, MinerStrategy strategy,
                                    std::span<const Bid> arrivals, std::size_t m, Rng& rng) {
    switch (strategy) {
        case MinerStrategy::kHonest:
            return intended_block(mech, arrivals, m, rng);
        case MinerStrategy::kMVOverride:
            if (mech.kind == StaticKind::kPostedPriceRM) return allocate_mv(arrivals, mech.posted_price, m);
            return intended_block(mech, arrivals, m, rng);
        case MinerStrategy::kRevenueMaximizing:
            return miner_best_deviation(mech, arrivals, m, {}, rng()).best_block;
    }
    return {};
}

inline double lowest_payment(const Allocation& a) {
    if (a.payments.empty()) return 0.0;
    double low = std::numeric_limits<double>::infinity();
    for (const auto& [id, p] : a.payments) low = std::min(low, p);
    return low;
}

}  // namespace detail

// Plays the game for `horizon` steps. Per step: draw n_t values, form bids,
// let the (single representative) active miner choose a block, settle the
// block through the pricing mechanism, record, and move the price.
//
// Column `q` is the posted price for dynamic and posted-price mechanisms and
// the lowest winning payment for auctions. Unlimited-supply mechanisms are
// measured against serving everyone, and their utilization is sold / n.
inline SimulationTrace run_game(const GameConfig& config) {
    config.validate();
    const UpdateParams params = config.params();
    const bool limited = limited_supply(config.mechanism);
    PriceState state = PriceState::initial(config.q0);

    SimulationTrace trace;
    trace.reserve(config.horizon);
    std::vector<double> values;
    std::vector<Bid> arrivals;
    std::vector<CappedBid> capped;

    for (std::uint64_t t = 1; t <= config.horizon; ++t) {
        const std::size_t n = config.demand.n_at(t);
        Rng value_rng = make_rng(config.seed, t, StreamRole::kBidderValues);
        Rng miner_rng = make_rng(config.seed, t, StreamRole::kMiner);
        sample_values_into(config.distribution, n, value_rng, values);

        arrivals.clear();
        for (std::size_t i = 0; i < n; ++i) {
            arrivals.push_back(Bid::real(i + 1, values[i], config.bidder.bid_for(values[i])));
        }

        TraceRecord rec;
        rec.t = t;
        rec.n = n;
        Allocation alloc;

        if (const auto* dyn = std::get_if<DynamicMechanism>(&config.mechanism)) {
            rec.q = state.q;
            const StaticMechanism one_step = dyn->at_price(state.q);
            std::vector<Bid> block;
            switch (config.miner) {
                case MinerStrategy::kHonest:
                    block = choose_block(dyn->allocation, arrivals, state.q, params.m, miner_rng);
                    break;
                case MinerStrategy::kMVOverride:
                    block = allocate_mv(arrivals, state.q, params.m);
                    break;
                case MinerStrategy::kRevenueMaximizing:
                    block = detail::miner_block(one_step, config.miner, arrivals, params.m, miner_rng);
                    break;
            }
            DppStep step = settle_dpp(state, block, dyn->update, params);
            alloc = std::move(step.allocation);
            state = step.next;
            rec.revenue = miner_utility(alloc);
        } else if (const auto* stat = std::get_if<StaticMechanism>(&config.mechanism)) {
            const auto block = detail::miner_block(*stat, config.miner, arrivals, params.m, miner_rng);
            alloc = settle_block(*stat, block, params.m, miner_rng);
            alloc.step = t;
            rec.q = stat->is_posted_price() ? stat->posted_price : detail::lowest_payment(alloc);
            rec.revenue = miner_utility(alloc);
        } else {
            // The intended top-tip selection already maximizes tips, and fake
            // tips are refunded, so every miner strategy plays it.
            capped.clear();
            for (std::size_t i = 0; i < n; ++i) {
                capped.push_back(CappedBid{i + 1, values[i], 0.0, config.bidder.bid_for(values[i]), false});
            }
            rec.q = state.q;
            Eip1559Step step = step_eip1559(state, capped, params);
            alloc = std::move(step.allocation);
            state = step.next;
            rec.revenue = step.miner_income;
        }

        rec.sold = alloc.size();
        rec.welfare_achieved = alloc.real_value_sum();
        if (limited) {
            rec.welfare_opt = optimal_welfare(values, params.m);
            rec.utilization = static_cast<double>(rec.sold) / static_cast<double>(params.m);
        } else {
            rec.welfare_opt = optimal_welfare(values, std::max<std::size_t>(1, n));
            rec.utilization = n > 0 ? static_cast<double>(rec.sold) / static_cast<double>(n) : 0.0;
        }
        trace.push_back(rec);
    }
    return trace;
}

}  // namespace tfmlab
