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
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "tfmlab/core.hpp"

namespace tfmlab {

using BidderId = std::uint64_t;

// Miner-originated bids get ids at or above this, so real bids win every tie.
inline constexpr BidderId kFakeIdBase = BidderId{1} << 40;

struct Bid {
    BidderId id = 0;
    double value = 0.0;  // private; fake bids book value == bid
    double bid = 0.0;
    bool is_fake = false;

    static Bid real(BidderId id, double value, double bid) { return Bid{id, value, bid, false}; }
    static Bid truthful(BidderId id, double value) { return Bid{id, value, value, false}; }
    static Bid fake(BidderId id, double bid) { return Bid{id, bid, bid, true}; }

    bool operator==(const Bid&) const = default;
};

// Higher bid first; ties go to the smaller id.
inline bool bid_precedes(const Bid& a, const Bid& b) noexcept {
    return a.bid != b.bid ? a.bid > b.bid : a.id < b.id;
}

inline void sort_by_bid(std::vector<Bid>& bids) {
    std::sort(bids.begin(), bids.end(), bid_precedes);
}

struct Allocation {
    std::vector<Bid> winners;
    std::map<BidderId, double> payments;
    std::uint64_t step = 0;

    std::size_t size() const noexcept { return winners.size(); }
    bool empty() const noexcept { return winners.empty(); }

    bool contains(BidderId id) const {
        return std::any_of(winners.begin(), winners.end(), [id](const Bid& b) { return b.id == id; });
    }

    double payment_of(BidderId id) const {
        auto it = payments.find(id);
        return it == payments.end() ? 0.0 : it->second;
    }

    double real_value_sum() const {
        double total = 0.0;
        for (const auto& w : winners) {
            if (!w.is_fake) total += w.value;
        }
        return total;
    }
};

//------------------------------------------------------------------------------
// Maximal allocations and the two allocation rules
//------------------------------------------------------------------------------

inline bool is_maximal(std::span<const Bid> block, std::span<const Bid> arrivals, std::size_t m) {
    std::unordered_set<BidderId> ids;
    for (const auto& b : arrivals) ids.insert(b.id);
    for (const auto& b : block) {
        expects(ids.count(b.id) == 1, "is_maximal: allocation is not a subset of the arrivals");
    }
    return block.size() <= m && (block.size() == m || block.size() == arrivals.size());
}

inline std::vector<Bid> eligible_at(std::span<const Bid> arrivals, double q) {
    std::vector<Bid> out;
    for (const auto& b : arrivals) {
        if (b.bid >= q) out.push_back(b);
    }
    return out;
}

// Maximum-value rule: the top min(m, |M(q)|) eligible bids.
inline std::vector<Bid> allocate_mv(std::span<const Bid> arrivals, double q, std::size_t m) {
    std::vector<Bid> eligible = eligible_at(arrivals, q);
    const std::size_t k = std::min(m, eligible.size());
    std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(k), eligible.end(),
                      bid_precedes);
    eligible.resize(k);
    return eligible;
}

// Random-maximal rule: all of M(q) under supply, otherwise a uniformly random
// m-subset (partial Fisher-Yates over M(q) in arrival order).
inline std::vector<Bid> allocate_rm(std::span<const Bid> arrivals, double q, std::size_t m, Rng& rng) {
    std::vector<Bid> eligible = eligible_at(arrivals, q);
    if (eligible.size() <= m) {
        return eligible;
    }
    for (std::size_t i = 0; i < m; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, eligible.size() - i));
        std::swap(eligible[i], eligible[j]);
    }
    eligible.resize(m);
    return eligible;
}

inline std::vector<Bid> allocate_rm(std::span<const Bid> arrivals, double q, std::size_t m, std::uint64_t seed) {
    Rng rng{seed};
    return allocate_rm(arrivals, q, m, rng);
}

//------------------------------------------------------------------------------
// Static mechanisms
//------------------------------------------------------------------------------

enum class StaticKind {
    kFirstPrice,
    kSecondPrice,
    kPostedPriceMV,
    kPostedPriceRM,
    kMonopolistic,
    kRSOP,
    kModifiedGSP,
};

struct StaticMechanism {
    StaticKind kind = StaticKind::kFirstPrice;
    double posted_price = 0.0;  // posted-price variants only

    static StaticMechanism first_price() { return {StaticKind::kFirstPrice, 0.0}; }
    static StaticMechanism second_price() { return {StaticKind::kSecondPrice, 0.0}; }
    static StaticMechanism posted_mv(double q) {
        require(q >= 0.0, "posted price must be >= 0");
        return {StaticKind::kPostedPriceMV, q};
    }
    static StaticMechanism posted_rm(double q) {
        require(q >= 0.0, "posted price must be >= 0");
        return {StaticKind::kPostedPriceRM, q};
    }
    static StaticMechanism monopolistic() { return {StaticKind::kMonopolistic, 0.0}; }
    static StaticMechanism rsop() { return {StaticKind::kRSOP, 0.0}; }
    static StaticMechanism modified_gsp() { return {StaticKind::kModifiedGSP, 0.0}; }

    bool limited_supply() const noexcept {
        return kind != StaticKind::kMonopolistic && kind != StaticKind::kRSOP;
    }
    bool is_posted_price() const noexcept {
        return kind == StaticKind::kPostedPriceMV || kind == StaticKind::kPostedPriceRM;
    }
    bool is_randomized() const noexcept {
        return kind == StaticKind::kPostedPriceRM || kind == StaticKind::kRSOP;
    }
    // Individually rational for real winners.
    bool individually_rational() const noexcept { return true; }

    // Largest block the miner may submit. Second-price blocks carry the m
    // winners plus the (m+1)-st bid that sets their price.
    std::size_t max_block_size(std::size_t m) const noexcept {
        if (!limited_supply()) return std::numeric_limits<std::size_t>::max();
        return kind == StaticKind::kSecondPrice ? m + 1 : m;
    }

    bool operator==(const StaticMechanism&) const = default;
};

inline std::string_view to_string(StaticKind kind) {
    switch (kind) {
        case StaticKind::kFirstPrice: return "first-price";
        case StaticKind::kSecondPrice: return "second-price";
        case StaticKind::kPostedPriceMV: return "posted-mv";
        case StaticKind::kPostedPriceRM: return "posted-rm";
        case StaticKind::kMonopolistic: return "monopolistic";
        case StaticKind::kRSOP: return "rsop";
        case StaticKind::kModifiedGSP: return "gsp-mod";
    }
    return "unknown";
}

struct MonopolyPrice {
    std::size_t k = 0;  // number of winners
    double price = std::numeric_limits<double>::infinity();
};

// k = argmax_i i * b_i over bids sorted descending; ties resolve to the smallest k.
inline MonopolyPrice monopolistic_price(std::span<const Bid> sorted_desc) {
    MonopolyPrice best;
    double best_revenue = -1.0;
    for (std::size_t i = 0; i < sorted_desc.size(); ++i) {
        const double revenue = static_cast<double>(i + 1) * sorted_desc[i].bid;
        if (revenue > best_revenue) {
            best_revenue = revenue;
            best = {i + 1, sorted_desc[i].bid};
        }
    }
    return best;
}

namespace detail {

inline Allocation pay_each(std::vector<Bid> winners, double price) {
    Allocation out;
    for (const auto& w : winners) out.payments[w.id] = price;
    out.winners = std::move(winners);
    return out;
}

// RSOP with an explicit partition: bit i of `group_b` puts sorted_by_id[i] in group B.
inline Allocation settle_rsop(const std::vector<Bid>& sorted_by_id, std::uint64_t group_b) {
    std::vector<Bid> a, b;
    for (std::size_t i = 0; i < sorted_by_id.size(); ++i) {
        ((group_b >> i) & 1U ? b : a).push_back(sorted_by_id[i]);
    }
    sort_by_bid(a);
    sort_by_bid(b);
    const double price_for_a = monopolistic_price(b).price;
    const double price_for_b = monopolistic_price(a).price;
    Allocation out;
    for (const auto& bid : a) {
        if (bid.bid >= price_for_a) {
            out.winners.push_back(bid);
            out.payments[bid.id] = price_for_a;
        }
    }
    for (const auto& bid : b) {
        if (bid.bid >= price_for_b) {
            out.winners.push_back(bid);
            out.payments[bid.id] = price_for_b;
        }
    }
    return out;
}

inline std::vector<Bid> sorted_by_id(std::span<const Bid> bids) {
    std::vector<Bid> out(bids.begin(), bids.end());
    std::sort(out.begin(), out.end(), [](const Bid& x, const Bid& y) { return x.id < y.id; });
    return out;
}

}  // namespace detail

inline constexpr std::size_t kMaxRsopEnumeration = 20;

// Winners and payments computed from the submitted block alone. The pricing
// mechanism never sees arrivals that were left out of the block.
// `rng` is only consumed by RSOP.
inline Allocation settle_block(const StaticMechanism& mech, std::span<const Bid> block, std::size_t m, Rng& rng) {
    expects(block.size() <= mech.max_block_size(m), "settle_block: block exceeds the mechanism's size limit");
    std::vector<Bid> sorted(block.begin(), block.end());
    sort_by_bid(sorted);

    switch (mech.kind) {
        case StaticKind::kFirstPrice: {
            Allocation out;
            for (const auto& w : sorted) out.payments[w.id] = w.bid;
            out.winners = std::move(sorted);
            return out;
        }
        case StaticKind::kSecondPrice: {
            const double price = sorted.size() > m ? sorted[m].bid : 0.0;
            sorted.resize(std::min(m, sorted.size()));
            return detail::pay_each(std::move(sorted), price);
        }
        case StaticKind::kPostedPriceMV:
        case StaticKind::kPostedPriceRM: {
            for (const auto& b : sorted) {
                expects(b.bid >= mech.posted_price, "settle_block: block contains a bid below the posted price");
            }
            return detail::pay_each(std::move(sorted), mech.posted_price);
        }
        case StaticKind::kMonopolistic: {
            const MonopolyPrice mp = monopolistic_price(sorted);
            sorted.resize(mp.k);
            return detail::pay_each(std::move(sorted), mp.price);
        }
        case StaticKind::kRSOP: {
            auto by_id = detail::sorted_by_id(block);
            expects(by_id.size() <= 64, "settle_block: RSOP blocks are limited to 64 bids");
            std::uint64_t mask = 0;
            for (std::size_t i = 0; i < by_id.size(); ++i) {
                if (fair_coin(rng)) mask |= std::uint64_t{1} << i;
            }
            return detail::settle_rsop(by_id, mask);
        }
        case StaticKind::kModifiedGSP: {
            if (sorted.empty()) return {};
            const double price = sorted.back().bid;  // m-th highest, or lowest if fewer than m
            return detail::pay_each(std::move(sorted), price);
        }
    }
    return {};
}

// The block an honest miner submits.
inline std::vector<Bid> intended_block(const StaticMechanism& mech, std::span<const Bid> arrivals, std::size_t m,
                                       Rng& rng) {
    switch (mech.kind) {
        case StaticKind::kFirstPrice:
        case StaticKind::kModifiedGSP:
            return allocate_mv(arrivals, -std::numeric_limits<double>::infinity(), m);
        case StaticKind::kSecondPrice:
            return allocate_mv(arrivals, -std::numeric_limits<double>::infinity(), m + 1);
        case StaticKind::kPostedPriceMV:
            return allocate_mv(arrivals, mech.posted_price, m);
        case StaticKind::kPostedPriceRM:
            return allocate_rm(arrivals, mech.posted_price, m, rng);
        case StaticKind::kMonopolistic:
        case StaticKind::kRSOP:
            return {arrivals.begin(), arrivals.end()};
    }
    return {};
}

inline Allocation run_static(const StaticMechanism& mech, std::span<const Bid> arrivals, std::size_t m,
                             std::uint64_t seed) {
    require(m >= 1, "run_static: m must be >= 1");
    Rng rng{seed};
    const auto block = intended_block(mech, arrivals, m, rng);
    return settle_block(mech, block, m, rng);
}

//------------------------------------------------------------------------------
// Utilities
//------------------------------------------------------------------------------

// Payments from fake winners are refunded to the miner.
inline double miner_utility(const Allocation& alloc) {
    double total = 0.0;
    for (const auto& w : alloc.winners) {
        if (!w.is_fake) total += alloc.payment_of(w.id);
    }
    return total;
}

inline double bidder_utility(const Bid& bid, const Allocation& alloc) {
    return alloc.contains(bid.id) ? bid.value - alloc.payment_of(bid.id) : 0.0;
}

}  // namespace tfmlab
