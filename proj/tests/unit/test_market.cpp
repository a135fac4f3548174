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

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "catch_amalgamated.hpp"
#include "tfmlab/market.hpp"

using namespace tfmlab;
using Catch::Approx;

namespace {

std::vector<Bid> truthful(std::initializer_list<double> values) {
    std::vector<Bid> out;
    BidderId id = 1;
    for (double v : values) out.push_back(Bid::truthful(id++, v));
    return out;
}

std::set<BidderId> ids_of(const std::vector<Bid>& bids) {
    std::set<BidderId> s;
    for (const auto& b : bids) s.insert(b.id);
    return s;
}

std::vector<Bid> random_bids(Rng& rng, std::size_t n, double hi) {
    std::vector<Bid> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(Bid::truthful(i + 1, std::round(hi * uniform01(rng))));
    return out;
}

// Monopoly price of a bid list, found by trying every candidate price.
double brute_monopoly_price(std::vector<double> bids) {
    double best_rev = -1.0;
    double best_price = 0.0;
    std::sort(bids.begin(), bids.end(), std::greater<>{});
    for (double p : bids) {
        const double rev = p * static_cast<double>(std::count_if(bids.begin(), bids.end(), [p](double b) { return b >= p; }));
        if (rev > best_rev) {
            best_rev = rev;
            best_price = p;
        }
    }
    return best_price;
}

}  // namespace

TEST_CASE("maximal allocations", "[market]") {
    const auto m3 = truthful({1, 2, 3});
    REQUIRE(is_maximal(m3, m3, 5));
    const auto m5 = truthful({1, 2, 3, 4, 5});
    REQUIRE(is_maximal(std::vector<Bid>{m5[0], m5[3]}, m5, 2));
    REQUIRE_FALSE(is_maximal(std::vector<Bid>{m3[1]}, m3, 2));
    REQUIRE_THROWS_AS(is_maximal(std::vector<Bid>{Bid::truthful(99, 1)}, m3, 2), ContractViolation);
}

TEST_CASE("max-value rule", "[market]") {
    const auto a = allocate_mv(truthful({10, 20}), 5, 5);
    REQUIRE(ids_of(a) == std::set<BidderId>{1, 2});

    const std::vector<Bid> tie{Bid::truthful(1, 10), Bid::truthful(2, 10), Bid::truthful(3, 7)};
    REQUIRE(ids_of(allocate_mv(tie, 5, 1)) == std::set<BidderId>{1});

    REQUIRE(allocate_mv(truthful({3, 4}), 5, 2).empty());
}

TEST_CASE("max-value rule beats every maximal allocation", "[market][oracle]") {
    Rng rng{123};
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 8);
        const std::size_t m = 1 + uniform_index(rng, 4);
        const auto bids = random_bids(rng, n, 30);
        const double q = std::round(15 * uniform01(rng));
        const auto eligible = eligible_at(bids, q);
        double mv_sum = 0.0;
        for (const auto& b : allocate_mv(bids, q, m)) mv_sum += b.bid;

        const std::uint64_t subsets = std::uint64_t{1} << eligible.size();
        for (std::uint64_t mask = 0; mask < subsets; ++mask) {
            std::vector<Bid> block;
            for (std::size_t i = 0; i < eligible.size(); ++i) {
                if ((mask >> i) & 1U) block.push_back(eligible[i]);
            }
            if (!is_maximal(block, eligible, m)) continue;
            double s = 0.0;
            for (const auto& b : block) s += b.bid;
            REQUIRE(mv_sum >= s);
        }
    }
}

TEST_CASE("random-maximal rule trivial branches", "[market]") {
    REQUIRE(ids_of(allocate_rm(truthful({6, 7, 8}), 5, 5, 1)) == std::set<BidderId>{1, 2, 3});
    REQUIRE(allocate_rm(truthful({1, 2}), 5, 2, 1).empty());
    REQUIRE(allocate_rm(std::vector<Bid>{}, 0, 2, 1).empty());
}

TEST_CASE("random-maximal rule is uniform over subsets", "[market][oracle]") {
    const auto bids = truthful({10, 11, 12, 13});
    std::map<std::set<BidderId>, int> counts;
    Rng rng{2024};
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) counts[ids_of(allocate_rm(bids, 5, 2, rng))]++;
    REQUIRE(counts.size() == 6);
    double chi2 = 0.0;
    const double expected = draws / 6.0;
    for (const auto& [subset, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 99.9th percentile of chi-square with 5 degrees of freedom.
    REQUIRE(chi2 < 20.515);
}

TEST_CASE("random-maximal inclusion probability is m over eligible", "[market][property]") {
    const auto bids = truthful({1, 9, 10, 11, 12, 13, 14});  // bid 1 is never eligible at q = 5
    const std::size_t m = 3;
    std::map<BidderId, int> wins;
    Rng rng{5};
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        for (const auto& w : allocate_rm(bids, 5, m, rng)) wins[w.id]++;
    }
    REQUIRE(wins.count(1) == 0);
    const double p = 3.0 / 6.0;
    const double se = std::sqrt(p * (1 - p) / draws);
    for (BidderId id = 2; id <= 7; ++id) REQUIRE(std::abs(wins[id] / double(draws) - p) <= 3 * se);
}

TEST_CASE("static mechanisms settle as specified", "[market]") {
    Rng rng{1};
    SECTION("monopolistic") {
        const auto a = run_static(StaticMechanism::monopolistic(), truthful({3, 2, 2, 1}), 1, 1);
        REQUIRE(a.size() == 3);
        for (const auto& [id, p] : a.payments) REQUIRE(p == 2.0);
    }
    SECTION("second price") {
        const auto a = run_static(StaticMechanism::second_price(), truthful({5, 4, 3}), 2, 1);
        REQUIRE(ids_of(a.winners) == std::set<BidderId>{1, 2});
        REQUIRE(a.payment_of(1) == 3.0);
        REQUIRE(a.payment_of(2) == 3.0);
        REQUIRE(a.payment_of(3) == 0.0);
    }
    SECTION("second price with exactly m bids pays zero") {
        const auto a = run_static(StaticMechanism::second_price(), truthful({5, 4}), 2, 1);
        REQUIRE(a.size() == 2);
        REQUIRE(miner_utility(a) == 0.0);
    }
    SECTION("first price") {
        const auto a = run_static(StaticMechanism::first_price(), truthful({5, 9, 3}), 2, 1);
        REQUIRE(ids_of(a.winners) == std::set<BidderId>{1, 2});
        REQUIRE(a.payment_of(2) == 9.0);
        REQUIRE(a.payment_of(1) == 5.0);
    }
    SECTION("posted price with nobody eligible") {
        const auto a = run_static(StaticMechanism::posted_rm(7), truthful({5, 4}), 2, 1);
        REQUIRE(a.empty());
        REQUIRE(miner_utility(a) == 0.0);
    }
    SECTION("modified GSP pays the m-th bid") {
        const auto a = run_static(StaticMechanism::modified_gsp(), truthful({9, 7, 5, 1}), 3, 1);
        REQUIRE(a.size() == 3);
        for (const auto& [id, p] : a.payments) REQUIRE(p == 5.0);
        const auto short_block = run_static(StaticMechanism::modified_gsp(), truthful({9, 7}), 3, 1);
        REQUIRE(short_block.size() == 2);
        for (const auto& [id, p] : short_block.payments) REQUIRE(p == 7.0);
    }
    SECTION("posted price rejects a block with a bid below the price") {
        REQUIRE_THROWS_AS(settle_block(StaticMechanism::posted_mv(5), truthful({4}), 1, rng), ContractViolation);
    }
    SECTION("limited supply blocks cannot exceed their size limit") {
        REQUIRE_THROWS_AS(settle_block(StaticMechanism::first_price(), truthful({4, 5, 6}), 2, rng),
                          ContractViolation);
    }
}

TEST_CASE("RSOP prices each group at the other's monopoly price", "[market][oracle]") {
    Rng rng{77};
    for (int trial = 0; trial < 200; ++trial) {
        const auto bids = random_bids(rng, 1 + uniform_index(rng, 8), 20);
        const auto by_id = detail::sorted_by_id(bids);
        const std::uint64_t mask = rng() & ((std::uint64_t{1} << by_id.size()) - 1);
        std::vector<double> a, b;
        for (std::size_t i = 0; i < by_id.size(); ++i) ((mask >> i) & 1U ? b : a).push_back(by_id[i].bid);
        const double price_for_a = b.empty() ? 0.0 : brute_monopoly_price(b);
        const double price_for_b = a.empty() ? 0.0 : brute_monopoly_price(a);

        const Allocation alloc = detail::settle_rsop(by_id, mask);
        for (std::size_t i = 0; i < by_id.size(); ++i) {
            const bool in_b = (mask >> i) & 1U;
            const double price = in_b ? price_for_b : price_for_a;
            const bool group_has_price = in_b ? !a.empty() : !b.empty();
            const bool should_win = group_has_price && by_id[i].bid >= price;
            INFO("trial " << trial << " bidder " << by_id[i].id);
            REQUIRE(alloc.contains(by_id[i].id) == should_win);
            if (should_win) REQUIRE(alloc.payment_of(by_id[i].id) == price);
        }
    }
}

TEST_CASE("supply and individual rationality hold on random inputs", "[market][property]") {
    Rng rng{31337};
    const std::vector<StaticKind> kinds{StaticKind::kFirstPrice,    StaticKind::kSecondPrice, StaticKind::kPostedPriceMV,
                                        StaticKind::kPostedPriceRM, StaticKind::kMonopolistic, StaticKind::kRSOP,
                                        StaticKind::kModifiedGSP};
    for (int trial = 0; trial < 500; ++trial) {
        const auto bids = random_bids(rng, uniform_index(rng, 12), 50);
        const std::size_t m = 1 + uniform_index(rng, 5);
        for (StaticKind k : kinds) {
            StaticMechanism mech{k, std::round(30 * uniform01(rng))};
            const Allocation a = run_static(mech, bids, m, rng());
            if (mech.limited_supply()) REQUIRE(a.size() <= m);
            REQUIRE(a.payments.size() == a.size());
            for (const auto& w : a.winners) {
                REQUIRE(a.payments.count(w.id) == 1);
                REQUIRE(a.payment_of(w.id) >= 0.0);
                if (mech.individually_rational()) REQUIRE(a.payment_of(w.id) <= w.bid);
            }
        }
    }
}

TEST_CASE("settlement only sees the submitted block", "[market][property]") {
    // A canary arrival the miner leaves out cannot move any payment.
    const auto arrivals = truthful({9, 8, 7, 6});
    const std::vector<Bid> block{arrivals[0], arrivals[1], arrivals[2]};
    Rng rng_a{4}, rng_b{4};
    const auto before = settle_block(StaticMechanism::second_price(), block, 2, rng_a);
    auto with_canary = arrivals;
    with_canary.push_back(Bid::truthful(99, 1000));
    const auto after = settle_block(StaticMechanism::second_price(), block, 2, rng_b);
    REQUIRE(before.payments == after.payments);
}

TEST_CASE("miner and bidder utility", "[market]") {
    Allocation a;
    a.winners = {Bid::truthful(1, 4), Bid::truthful(2, 5)};
    a.payments = {{1, 2.0}, {2, 3.0}};
    REQUIRE(miner_utility(a) == 5.0);

    Allocation fake;
    fake.winners = {Bid::fake(kFakeIdBase, 9)};
    fake.payments = {{kFakeIdBase, 9.0}};
    REQUIRE(miner_utility(fake) == 0.0);
    REQUIRE(miner_utility(Allocation{}) == 0.0);

    Allocation w;
    w.winners = {Bid::real(1, 10, 10)};
    w.payments = {{1, 7.0}};
    REQUIRE(bidder_utility(w.winners[0], w) == 3.0);
    REQUIRE(bidder_utility(Bid::truthful(2, 10), w) == 0.0);

    Allocation over;
    over.winners = {Bid::real(1, 5, 100)};
    over.payments = {{1, 8.0}};
    REQUIRE(bidder_utility(over.winners[0], over) == -3.0);
}

TEST_CASE("fake bids lose every tie to real bids", "[market]") {
    std::vector<Bid> bids{Bid::fake(kFakeIdBase, 10), Bid::truthful(5, 10)};
    REQUIRE(allocate_mv(bids, 0, 1).front().id == 5);
}
