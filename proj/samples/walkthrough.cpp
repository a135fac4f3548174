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

// A short tour of the library: settle one block, run a pricing scenario,
// solve for its equilibrium, and ask whether a miner can profit by cheating.

#include <cstdio>

#include "tfmlab/tfmlab.hpp"

using namespace tfmlab;

int main() {
    // One second-price block with two slots.
    std::vector<Bid> bids{Bid::truthful(1, 5), Bid::truthful(2, 4), Bid::truthful(3, 3)};
    Rng rng{1};
    const auto mech = StaticMechanism::second_price();
    const auto block = intended_block(mech, bids, 2, rng);
    const auto alloc = settle_block(mech, block, 2, rng);
    std::printf("second price: %zu winners, miner earns %g\n", alloc.size(), miner_utility(alloc));

    // The miner can do better with a fake bid.
    const auto dev = miner_best_deviation(mech, bids, 2);
    std::printf("best deviation earns %g (honest %g)\n", dev.best_utility, dev.honest_utility);

    // A dynamic posted price under excess demand.
    ScenarioConfig s = builtin_scenario("excess-uniform");
    s.game.horizon = 4000;
    const auto result = run_scenario(s);
    std::printf("%s: mean price %.2f, welfare ratio %.3f\n", s.name.c_str(), result.summary.mean_price,
                result.summary.mean_welfare_ratio);

    // The same equilibrium from the expected update.
    const auto dist = s.game.distribution;
    const auto params = s.game.params();
    const Oracle kernel = [&](double q) { return kernel_ttw_mc(dist, 200, params, q, 5000, 3).value; };
    const auto solve = iterate_to_fixed_point({kernel, 400.0, 2.0, params.alpha}, 10.0);
    std::printf("fixed point of the expected update: %.2f after %llu iterations\n", solve.x_star,
                static_cast<unsigned long long>(solve.iterations));

    return solve.converged && dev.profitable() ? 0 : 1;
}
