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
#include <span>
#include <string_view>
#include <vector>

#include "tfmlab/core.hpp"
#include "tfmlab/market.hpp"
#include "tfmlab/values.hpp"

namespace tfmlab {

inline constexpr double kDefaultAlpha = 1.0 / 16.0;
inline constexpr double kDefaultDelta = 1.0;

struct UpdateParams {
    double alpha = kDefaultAlpha;
    double delta = kDefaultDelta;
    std::size_t m = 100;

    UpdateParams() = default;
    UpdateParams(double alpha_, double delta_, std::size_t m_) : alpha(alpha_), delta(delta_), m(m_) { validate(); }

    void validate() const {
        require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
        require(delta > 0.0 && std::isfinite(delta), "delta must be positive");
        require(m >= 1, "m must be >= 1");
    }

    bool operator==(const UpdateParams&) const = default;
};

struct PriceState {
    double q = 1.0;
    std::uint64_t t = 1;

    static PriceState initial(double q0) {
        require(q0 > 0.0 && std::isfinite(q0), "initial price must be strictly positive");
        return {q0, 1};
    }
};

enum class UpdateRuleKind { kWelfare, kUtilization, kTruncatedWelfare };
enum class AllocationRuleKind { kMaxValue, kRandomMaximal };

inline std::string_view to_string(UpdateRuleKind kind) {
    switch (kind) {
        case UpdateRuleKind::kWelfare: return "welfare";
        case UpdateRuleKind::kUtilization: return "utilization";
        case UpdateRuleKind::kTruncatedWelfare: return "truncated-welfare";
    }
    return "unknown";
}

//------------------------------------------------------------------------------
// Update rules. Each reads only the current price and the submitted block.
//------------------------------------------------------------------------------

inline double update_welfare(double q, std::span<const Bid> block, const UpdateParams& p) {
    double sum = 0.0;
    for (const auto& b : block) sum += b.bid;
    return p.alpha * sum / static_cast<double>(p.m) + (1.0 - p.alpha) * q;
}

inline double update_utilization(double q, std::span<const Bid> block, const UpdateParams& p) {
    const double utilization = static_cast<double>(block.size()) / static_cast<double>(p.m);
    return p.alpha * utilization * (1.0 + p.delta) * q + (1.0 - p.alpha) * q;
}

inline double update_truncated_welfare(double q, std::span<const Bid> block, const UpdateParams& p) {
    expects(block.size() <= p.m, "truncated welfare rule: block larger than supply");
    const double cap = (1.0 + p.delta) * q;
    if (block.size() == p.m) {
        return p.alpha * cap + (1.0 - p.alpha) * q;
    }
    double sum = 0.0;
    for (const auto& b : block) sum += std::min(b.bid, cap);
    return p.alpha * sum / static_cast<double>(p.m) + (1.0 - p.alpha) * q;
}

inline double apply_update(UpdateRuleKind rule, double q, std::span<const Bid> block, const UpdateParams& p) {
    switch (rule) {
        case UpdateRuleKind::kWelfare: return update_welfare(q, block, p);
        case UpdateRuleKind::kUtilization: return update_utilization(q, block, p);
        case UpdateRuleKind::kTruncatedWelfare: return update_truncated_welfare(q, block, p);
    }
    return q;
}

//------------------------------------------------------------------------------
// Dynamic posted-price mechanisms
//------------------------------------------------------------------------------

struct DynamicMechanism {
    AllocationRuleKind allocation = AllocationRuleKind::kRandomMaximal;
    UpdateRuleKind update = UpdateRuleKind::kTruncatedWelfare;

    static DynamicMechanism wdpp() { return {AllocationRuleKind::kMaxValue, UpdateRuleKind::kWelfare}; }
    static DynamicMechanism udpp() { return {AllocationRuleKind::kRandomMaximal, UpdateRuleKind::kUtilization}; }
    static DynamicMechanism twdpp() { return {AllocationRuleKind::kRandomMaximal, UpdateRuleKind::kTruncatedWelfare}; }

    // The one-step mechanism a myopic participant faces at price q.
    StaticMechanism at_price(double q) const {
        return allocation == AllocationRuleKind::kMaxValue ? StaticMechanism::posted_mv(q)
                                                           : StaticMechanism::posted_rm(q);
    }

    bool operator==(const DynamicMechanism&) const = default;
};

inline std::vector<Bid> choose_block(AllocationRuleKind rule, std::span<const Bid> arrivals, double q, std::size_t m,
                                     Rng& rng) {
    return rule == AllocationRuleKind::kMaxValue ? allocate_mv(arrivals, q, m) : allocate_rm(arrivals, q, m, rng);
}

struct DppStep {
    Allocation allocation;
    PriceState next;
};

// Pricing-mechanism side of a step: every bid in the block pays q, then the
// price moves. Only the block is visible here.
inline DppStep settle_dpp(const PriceState& state, std::span<const Bid> block, UpdateRuleKind rule,
                          const UpdateParams& params) {
    DppStep out;
    out.allocation.step = state.t;
    for (const auto& b : block) {
        expects(b.bid >= state.q, "settle_dpp: block contains a bid below the posted price");
        out.allocation.payments[b.id] = state.q;
    }
    out.allocation.winners.assign(block.begin(), block.end());
    out.next = {apply_update(rule, state.q, block, params), state.t + 1};
    return out;
}

inline DppStep step_dpp(const PriceState& state, std::span<const Bid> arrivals, AllocationRuleKind alloc,
                        UpdateRuleKind rule, const UpdateParams& params, Rng& rng) {
    expects(state.q > 0.0, "step_dpp: price must be positive");
    const auto block = choose_block(alloc, arrivals, state.q, params.m, rng);
    return settle_dpp(state, block, rule, params);
}

inline DppStep step_dpp(const PriceState& state, std::span<const Bid> arrivals, AllocationRuleKind alloc,
                        UpdateRuleKind rule, const UpdateParams& params, std::uint64_t seed) {
    Rng rng{seed};
    return step_dpp(state, arrivals, alloc, rule, params, rng);
}

//------------------------------------------------------------------------------
// EIP-1559: bidders submit (tip, cap); winners pay tip + q, miner keeps tips.
//------------------------------------------------------------------------------

struct CappedBid {
    BidderId id = 0;
    double value = 0.0;
    double tip = 0.0;
    double cap = 0.0;
    bool is_fake = false;

    // The restricted strategy under which the mechanism is a posted price.
    static CappedBid zero_tip(BidderId id, double value) { return {id, value, 0.0, value, false}; }
};

struct Eip1559Step {
    Allocation allocation;
    PriceState next;
    double miner_income = 0.0;
};

inline Eip1559Step step_eip1559(const PriceState& state, std::span<const CappedBid> arrivals,
                                const UpdateParams& params) {
    expects(state.q > 0.0, "step_eip1559: price must be positive");
    std::vector<Bid> eligible;
    for (const auto& c : arrivals) {
        require(c.tip >= 0.0 && c.cap >= 0.0, "eip1559 tips and caps must be >= 0");
        if (c.tip + state.q <= c.cap) eligible.push_back(Bid{c.id, c.value, c.tip, c.is_fake});
    }
    const std::size_t k = std::min(params.m, eligible.size());
    std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(k), eligible.end(),
                      bid_precedes);
    eligible.resize(k);

    Eip1559Step out;
    out.allocation.step = state.t;
    for (const auto& w : eligible) {
        out.allocation.payments[w.id] = w.bid + state.q;
        if (!w.is_fake) out.miner_income += w.bid;
    }
    out.allocation.winners = std::move(eligible);
    out.next = {update_utilization(state.q, out.allocation.winners, params), state.t + 1};
    return out;
}

// The fixed seed argument is accepted for interface symmetry; selection is deterministic.
inline Eip1559Step step_eip1559(const PriceState& state, std::span<const CappedBid> arrivals,
                                const UpdateParams& params, std::uint64_t /*seed*/) {
    return step_eip1559(state, arrivals, params);
}

//------------------------------------------------------------------------------
// Expected-update kernels: E_T(q) = alpha * K(q) + (1 - alpha) * q.
//------------------------------------------------------------------------------

// One draw of the truncated-welfare kernel. When N(q) < m the random-maximal
// rule takes every eligible bid, so the allocation randomness drops out.
inline double ttw_kernel_draw(std::span<const double> values, double q, const UpdateParams& p) {
    const double cap = (1.0 + p.delta) * q;
    std::size_t eligible = 0;
    double sum = 0.0;
    for (double v : values) {
        if (v >= q) {
            ++eligible;
            sum += std::min(v, cap);
        }
    }
    if (eligible >= p.m) return cap;
    return sum / static_cast<double>(p.m);
}

inline Estimate kernel_ttw_mc(const ValueDistribution& dist, std::size_t n, const UpdateParams& params, double q,
                              std::uint64_t samples, std::uint64_t seed) {
    require(q > 0.0, "kernel: q must be positive");
    return monte_carlo_over_values(dist, n, samples, seed, [&params, q](Rng&, std::span<const double> values) {
        return ttw_kernel_draw(values, q, params);
    });
}

// Utilization kernel (1 + delta) / m * R(q).
inline Estimate kernel_udpp_mc(const ValueDistribution& dist, std::size_t n, const UpdateParams& params, double q,
                               std::uint64_t samples, std::uint64_t seed) {
    const Estimate r = revenue_curve_mc(dist, n, params.m, q, samples, seed);
    const double scale = (1.0 + params.delta) / static_cast<double>(params.m);
    return {scale * r.value, scale * r.se};
}

// Welfare kernel W(q) / m under the max-value rule.
inline Estimate kernel_wdpp_mc(const ValueDistribution& dist, std::size_t n, const UpdateParams& params, double q,
                               std::uint64_t samples, std::uint64_t seed) {
    require(q > 0.0, "kernel: q must be positive");
    return monte_carlo_over_values(dist, n, samples, seed, [&params, q](Rng&, std::span<const double> values) {
        std::vector<double> eligible;
        for (double v : values) {
            if (v >= q) eligible.push_back(v);
        }
        return optimal_welfare(eligible, params.m) / static_cast<double>(params.m);
    });
}

inline Estimate kernel_mc(UpdateRuleKind rule, const ValueDistribution& dist, std::size_t n,
                          const UpdateParams& params, double q, std::uint64_t samples, std::uint64_t seed) {
    switch (rule) {
        case UpdateRuleKind::kWelfare: return kernel_wdpp_mc(dist, n, params, q, samples, seed);
        case UpdateRuleKind::kUtilization: return kernel_udpp_mc(dist, n, params, q, samples, seed);
        case UpdateRuleKind::kTruncatedWelfare: return kernel_ttw_mc(dist, n, params, q, samples, seed);
    }
    return {};
}

}  // namespace tfmlab
