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
#include <set>
#include <vector>

#include "catch_amalgamated.hpp"
#include "tfmlab/game.hpp"

using namespace tfmlab;
using Catch::Approx;

namespace {

std::vector<Bid> truthful(std::initializer_list<double> values) {
    std::vector<Bid> out;
    BidderId id = 1;
    for (double v : values) out.push_back(Bid::truthful(id++, v));
    return out;
}

std::vector<double> integer_grid(int lo, int hi) {
    std::vector<double> g;
    for (int i = lo; i <= hi; ++i) g.push_back(i);
    return g;
}

double sum_of_bids(const std::vector<Bid>& block) {
    double s = 0.0;
    for (const auto& b : block) s += b.bid;
    return s;
}

}  // namespace

TEST_CASE("first price: the honest block is already the best", "[game]") {
    const auto r = miner_best_deviation(StaticMechanism::first_price(), truthful({1, 2}), 1);
    REQUIRE(r.best_utility == 2.0);
    REQUIRE(r.honest_utility == 2.0);
    REQUIRE(r.best_block.size() == 1);
    REQUIRE(r.best_block.front().id == 2);
    REQUIRE_FALSE(r.profitable());
}

TEST_CASE("second price: a fake at the m-th bid pays off", "[game]") {
    DeviationSearch s;
    s.fake_grid = {4.0};
    const auto r = miner_best_deviation(StaticMechanism::second_price(), truthful({5, 4, 3}), 2, s);
    REQUIRE(r.honest_utility == 6.0);
    REQUIRE(r.best_utility == 8.0);
    REQUIRE(r.profitable());
    const bool has_fake = std::any_of(r.best_block.begin(), r.best_block.end(), [](const Bid& b) { return b.is_fake; });
    REQUIRE(has_fake);
}

TEST_CASE("second price deviation exists whenever bids are distinct and n > m", "[game][property]") {
    Rng rng{17};
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 1 + uniform_index(rng, 3);
        const std::size_t n = m + 1 + uniform_index(rng, 3);
        std::set<int> distinct;
        while (distinct.size() < n) distinct.insert(1 + static_cast<int>(uniform_index(rng, 50)));
        std::vector<Bid> bids;
        BidderId id = 1;
        for (int v : distinct) bids.push_back(Bid::truthful(id++, v));
        const auto r = miner_best_deviation(StaticMechanism::second_price(), bids, m);
        REQUIRE(r.profitable());
    }
}

TEST_CASE("posted RM: every maximal allocation earns the same", "[game]") {
    Rng rng{3};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Bid> bids;
        const std::size_t n = 1 + uniform_index(rng, 8);
        for (std::size_t i = 0; i < n; ++i) bids.push_back(Bid::truthful(i + 1, std::round(20 * uniform01(rng))));
        const std::size_t m = 1 + uniform_index(rng, 3);
        const double q = std::round(10 * uniform01(rng));
        const auto eligible = eligible_at(bids, q);
        if (eligible.empty()) continue;
        const auto r = miner_best_deviation(StaticMechanism::posted_rm(q), bids, m);
        const double expected = q * static_cast<double>(std::min(m, eligible.size()));
        REQUIRE(r.best_utility == Approx(expected));
        REQUIRE(r.honest_utility == Approx(expected));
    }
}

TEST_CASE("first price: the oracle's best block is the top m", "[game][property]") {
    Rng rng{11};
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Bid> bids;
        const std::size_t n = 1 + uniform_index(rng, 8);
        for (std::size_t i = 0; i < n; ++i) bids.push_back(Bid::truthful(i + 1, std::round(100 * uniform01(rng)) / 4));
        const std::size_t m = 1 + uniform_index(rng, 3);
        const auto r = miner_best_deviation(StaticMechanism::first_price(), bids, m);
        REQUIRE_FALSE(r.profitable());
        auto top = bids;
        sort_by_bid(top);
        top.resize(std::min(m, top.size()));
        REQUIRE(sum_of_bids(r.best_block) == Approx(sum_of_bids(top)));
        REQUIRE(std::none_of(r.best_block.begin(), r.best_block.end(), [](const Bid& b) { return b.is_fake; }));
    }
}

TEST_CASE("deviation search has an explicit size bound", "[game]") {
    std::vector<Bid> many;
    for (BidderId i = 1; i <= 13; ++i) many.push_back(Bid::truthful(i, static_cast<double>(i)));
    REQUIRE_THROWS_AS(miner_best_deviation(StaticMechanism::first_price(), many, 2), SearchSpaceError);
}

TEST_CASE("bidder best responses", "[game]") {
    SECTION("posted RM: truthful is a best response on both sides of q") {
        const auto mech = StaticMechanism::posted_rm(10);
        const auto others = truthful({12, 15, 9});
        auto grid = integer_grid(0, 20);
        grid.push_back(100);
        for (const double v : {14.0, 11.0, 10.0, 7.0}) {
            const auto br = bidder_best_response(mech, others, v, grid, 2);
            INFO("value " << v);
            REQUIRE(br.truthful_utility == Approx(br.best_utility));
        }
        const auto low = bidder_best_response(mech, others, 7.0, grid, 2);
        REQUIRE(low.truthful_utility == 0.0);
        REQUIRE(low.best_utility == 0.0);
    }
    SECTION("posted MV: overbidding wins the slot") {
        auto grid = integer_grid(0, 20);
        grid.push_back(100);
        const auto br = bidder_best_response(StaticMechanism::posted_mv(10), truthful({12}), 11, grid, 1, 2);
        REQUIRE(br.truthful_utility == 0.0);
        REQUIRE(br.best_utility == 1.0);
        REQUIRE(std::find(br.best_bids.begin(), br.best_bids.end(), 100.0) != br.best_bids.end());
    }
    SECTION("first price: shading to just above the rival") {
        const auto br = bidder_best_response(StaticMechanism::first_price(), truthful({5}), 10, integer_grid(0, 20), 1, 2);
        REQUIRE(br.truthful_utility == 0.0);
        REQUIRE(br.best_utility == 4.0);
        REQUIRE(br.best_bids == std::vector<double>{6.0});
    }
    SECTION("grid must contain the value") {
        REQUIRE_THROWS_AS(bidder_best_response(StaticMechanism::first_price(), truthful({5}), 10.5, integer_grid(0, 20), 1),
                          ContractViolation);
    }
}

TEST_CASE("individually rational mechanisms never force a loss", "[game][property]") {
    Rng rng{23};
    const std::vector<StaticKind> ir{StaticKind::kFirstPrice, StaticKind::kSecondPrice, StaticKind::kPostedPriceMV,
                                     StaticKind::kPostedPriceRM, StaticKind::kModifiedGSP, StaticKind::kMonopolistic,
                                     StaticKind::kRSOP};
    for (int trial = 0; trial < 60; ++trial) {
        InstanceFamily fam;
        for (StaticKind k : ir) {
            const Instance inst = draw_instance(k, fam, rng);
            if (!inst.mechanism.individually_rational()) continue;
            std::vector<Bid> others(inst.bids.begin() + 1, inst.bids.end());
            const double v = inst.bids.front().value;
            const auto grid = default_bid_grid(inst, v);
            REQUIRE(std::find(grid.begin(), grid.end(), 0.0) != grid.end());
            const auto br = bidder_best_response(inst.mechanism, others, v, grid, inst.m, inst.bids.front().id);
            REQUIRE(br.best_utility >= -kUtilityTolerance);
        }
    }
}

TEST_CASE("IC and DSIC checks reproduce the known table", "[game]") {
    SECTION("posted RM holds both") {
        const auto r = check_ic_dsic(StaticKind::kPostedPriceRM, {}, 200, 1);
        REQUIRE(r.ic_holds);
        REQUIRE(r.dsic_holds);
        InstanceFamily excess;
        excess.excess_demand = true;
        const auto e = check_ic_dsic(StaticKind::kPostedPriceRM, excess, 200, 2);
        REQUIRE(e.ic_holds);
        REQUIRE(e.dsic_holds);
    }
    SECTION("second price fails DSIC") {
        const auto r = check_ic_dsic(StaticKind::kSecondPrice, {}, 200, 1);
        REQUIRE_FALSE(r.dsic_holds);
        REQUIRE(r.dsic_counterexample.has_value());
        REQUIRE(r.dsic_counterexample->deviation_utility > r.dsic_counterexample->honest_utility);
    }
    SECTION("posted MV with excess demand fails IC by overbidding") {
        InstanceFamily excess;
        excess.excess_demand = true;
        const auto r = check_ic_dsic(StaticKind::kPostedPriceMV, excess, 200, 1);
        REQUIRE_FALSE(r.ic_holds);
        const auto& c = *r.ic_counterexample;
        REQUIRE(c.best_bid > c.value);
        REQUIRE(c.best_utility > c.truthful_utility);
    }
    SECTION("first price holds DSIC") {
        const auto r = check_ic_dsic(StaticKind::kFirstPrice, {}, 200, 1);
        REQUIRE(r.dsic_holds);
        REQUIRE_FALSE(r.ic_holds);
    }
}

TEST_CASE("run_game: TWDPP climbs with full blocks under a point mass", "[game]") {
    GameConfig g;
    g.mechanism = DynamicMechanism::twdpp();
    g.distribution = ValueDistribution::point_mass(100);
    g.demand = DemandProfile::constant(200);
    g.horizon = 2000;
    const auto trace = run_game(g);
    REQUIRE(trace.size() == 2000);
    for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
        if (trace[i].q <= 100.0) {
            REQUIRE(trace[i].sold == 100);
            REQUIRE(trace[i + 1].q == Approx(trace[i].q * (1 + 1.0 / 16)).epsilon(1e-12));
        }
        if (trace[i].q < 100.0) REQUIRE(trace[i + 1].q > trace[i].q);
    }
}

TEST_CASE("run_game: first price charges the winning bids", "[game]") {
    GameConfig g;
    g.mechanism = StaticMechanism::first_price();
    g.m = 5;
    g.demand = DemandProfile::constant(12);
    g.distribution = ValueDistribution::uniform(0, 10);
    g.horizon = 50;
    for (const auto& r : run_game(g)) {
        REQUIRE(r.sold == 5);
        REQUIRE(r.revenue == Approx(r.welfare_achieved));
        REQUIRE(r.welfare_achieved == Approx(r.welfare_opt));
    }
}

TEST_CASE("run_game: UDPP prices ignore which eligible bids win", "[game]") {
    GameConfig g;
    g.mechanism = DynamicMechanism::udpp();
    g.horizon = 3000;
    GameConfig o = g;
    o.miner = MinerStrategy::kMVOverride;
    const auto a = run_game(g);
    const auto b = run_game(o);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].q == b[i].q);
        REQUIRE(a[i].sold == b[i].sold);
    }
}

TEST_CASE("run_game: trace invariants for every mechanism", "[game][property]") {
    for (const char* name : {"wdpp", "udpp", "twdpp", "eip1559", "first-price", "second-price", "posted-mv",
                             "posted-rm", "monopolistic", "rsop", "gsp-mod"}) {
        GameConfig g;
        g.mechanism = parse_mechanism(name, 60.0);
        g.m = 10;
        g.demand = DemandProfile::step({{1, 15}, {100, 4}, {200, 30}});
        g.distribution = ValueDistribution::exponential(50);
        g.horizon = 300;
        g.seed = 5;
        const auto trace = run_game(g);
        REQUIRE(trace.size() == 300);
        for (const auto& r : trace) {
            INFO(name << " t=" << r.t);
            REQUIRE(r.n == g.demand.n_at(r.t));
            REQUIRE(r.welfare_achieved >= 0.0);
            REQUIRE(r.welfare_achieved <= r.welfare_opt * (1 + 1e-12) + 1e-12);
            REQUIRE(r.utilization >= 0.0);
            REQUIRE(r.utilization <= 1.0);
            REQUIRE(r.revenue >= 0.0);
        }
        REQUIRE(run_game(g) == trace);
    }
}

TEST_CASE("run_game: revenue-maximizing miner on small markets", "[game]") {
    GameConfig g;
    g.mechanism = StaticMechanism::second_price();
    g.m = 2;
    g.demand = DemandProfile::constant(5);
    g.distribution = ValueDistribution::uniform(0, 10);
    g.horizon = 40;
    GameConfig dev = g;
    dev.miner = MinerStrategy::kRevenueMaximizing;
    const auto honest = run_game(g);
    const auto greedy = run_game(dev);
    double h = 0.0, d = 0.0;
    for (std::size_t i = 0; i < honest.size(); ++i) {
        h += honest[i].revenue;
        d += greedy[i].revenue;
        REQUIRE(greedy[i].revenue >= honest[i].revenue - 1e-9);
    }
    REQUIRE(d > h);

    GameConfig big = dev;
    big.demand = DemandProfile::constant(20);
    REQUIRE_THROWS_AS(run_game(big), SearchSpaceError);
}

TEST_CASE("run_game: shading lowers posted-price sales", "[game]") {
    GameConfig g;
    g.mechanism = StaticMechanism::posted_mv(100);
    g.horizon = 200;
    GameConfig s = g;
    s.bidder = BidderStrategy::shade(0.5);
    std::size_t sold_t = 0, sold_s = 0;
    const auto a = run_game(g);
    const auto b = run_game(s);
    for (std::size_t i = 0; i < a.size(); ++i) {
        sold_t += a[i].sold;
        sold_s += b[i].sold;
    }
    REQUIRE(sold_s < sold_t);
}

TEST_CASE("game config validation", "[game]") {
    GameConfig g;
    g.horizon = 0;
    REQUIRE_THROWS_AS(run_game(g), ParameterError);
    GameConfig b;
    b.bidder = BidderStrategy::grid_best_response();
    REQUIRE_THROWS_AS(run_game(b), ParameterError);
    REQUIRE_THROWS_AS(BidderStrategy::shade(0.0), ParameterError);
    REQUIRE_THROWS_AS(BidderStrategy::shade(1.5), ParameterError);
    REQUIRE_THROWS_AS(parse_mechanism("dutch"), ParameterError);
}
