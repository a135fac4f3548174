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
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iterator>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tfmlab/core.hpp"

namespace tfmlab {

//------------------------------------------------------------------------------
// Value distributions
//------------------------------------------------------------------------------

struct PointMass {
    double value = 0.0;
    bool operator==(const PointMass&) const = default;
};

struct Uniform {
    double lo = 0.0;
    double hi = 1.0;
    bool operator==(const Uniform&) const = default;
};

struct Exponential {
    double mean = 1.0;
    bool operator==(const Exponential&) const = default;
};

// Unshifted Pareto: P[v > x] = (scale / x)^shape for x >= scale.
struct Pareto {
    double shape = 2.0;
    double scale = 1.0;
    bool operator==(const Pareto&) const = default;
};

// Resamples uniformly from a fixed list of observed values.
struct Empirical {
    std::vector<double> sorted_values;
    bool operator==(const Empirical&) const = default;
};

// Pareto(2, 100/sqrt(2)) has median exactly 100.
inline constexpr double kDefaultParetoShape = 2.0;
inline const double kDefaultParetoScale = 100.0 / std::sqrt(2.0);

// Upper bound used for unbounded families wherever a finite support is needed.
inline constexpr double kDefaultTruncationCap = 1e6;

class ValueDistribution {
  public:
    using Kind = std::variant<PointMass, Uniform, Exponential, Pareto, Empirical>;

    static ValueDistribution point_mass(double v) { return ValueDistribution{PointMass{v}}; }
    static ValueDistribution uniform(double lo, double hi) { return ValueDistribution{Uniform{lo, hi}}; }
    static ValueDistribution exponential(double mean) { return ValueDistribution{Exponential{mean}}; }
    static ValueDistribution pareto(double shape = kDefaultParetoShape, double scale = kDefaultParetoScale) {
        return ValueDistribution{Pareto{shape, scale}};
    }
    static ValueDistribution empirical(std::vector<double> values) {
        std::sort(values.begin(), values.end());
        return ValueDistribution{Empirical{std::move(values)}};
    }

    explicit ValueDistribution(Kind kind, double truncation_cap = kDefaultTruncationCap)
        : kind_(std::move(kind)), truncation_cap_(truncation_cap) {
        validate();
    }

    const Kind& kind() const noexcept { return kind_; }
    double truncation_cap() const noexcept { return truncation_cap_; }

    std::string name() const {
        return std::visit(
            [](const auto& d) -> std::string {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, PointMass>) return "point-mass";
                else if constexpr (std::is_same_v<T, Uniform>) return "uniform";
                else if constexpr (std::is_same_v<T, Exponential>) return "exponential";
                else if constexpr (std::is_same_v<T, Pareto>) return "pareto";
                else return "empirical";
            },
            kind_);
    }

    bool is_deterministic() const noexcept {
        if (std::holds_alternative<PointMass>(kind_)) {
            return true;
        }
        if (const auto* e = std::get_if<Empirical>(&kind_)) {
            return e->sorted_values.front() == e->sorted_values.back();
        }
        return false;
    }

    // Finite upper end of the support; the truncation cap for unbounded families.
    double support_upper_bound() const {
        return std::visit(
            [this](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, PointMass>) return d.value;
                else if constexpr (std::is_same_v<T, Uniform>) return d.hi;
                else if constexpr (std::is_same_v<T, Empirical>) return d.sorted_values.back();
                else return truncation_cap_;
            },
            kind_);
    }

    // Sampling is never truncated.
    double sample(Rng& rng) const {
        return std::visit(
            [&rng](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, PointMass>) {
                    return d.value;
                } else if constexpr (std::is_same_v<T, Uniform>) {
                    return d.lo + (d.hi - d.lo) * uniform01(rng);
                } else if constexpr (std::is_same_v<T, Exponential>) {
                    return -d.mean * std::log1p(-uniform01(rng));
                } else if constexpr (std::is_same_v<T, Pareto>) {
                    return d.scale * std::pow(1.0 - uniform01(rng), -1.0 / d.shape);
                } else {
                    return d.sorted_values[uniform_index(rng, d.sorted_values.size())];
                }
            },
            kind_);
    }

    bool operator==(const ValueDistribution&) const = default;

  private:
    void validate() const {
        std::visit(
            [](const auto& d) {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, PointMass>) {
                    require(std::isfinite(d.value) && d.value >= 0.0, "point-mass value must be finite and >= 0");
                } else if constexpr (std::is_same_v<T, Uniform>) {
                    require(std::isfinite(d.lo) && std::isfinite(d.hi), "uniform bounds must be finite");
                    require(d.lo >= 0.0 && d.lo < d.hi, "uniform requires 0 <= lo < hi");
                } else if constexpr (std::is_same_v<T, Exponential>) {
                    require(std::isfinite(d.mean) && d.mean > 0.0, "exponential mean must be positive");
                } else if constexpr (std::is_same_v<T, Pareto>) {
                    require(std::isfinite(d.shape) && d.shape > 0.0, "pareto shape must be positive");
                    require(std::isfinite(d.scale) && d.scale > 0.0, "pareto scale must be positive");
                } else {
                    require(!d.sorted_values.empty(), "empirical distribution needs at least one value");
                    for (double v : d.sorted_values) {
                        require(std::isfinite(v) && v >= 0.0, "empirical values must be finite and >= 0");
                    }
                }
            },
            kind_);
        require(std::isfinite(truncation_cap_) && truncation_cap_ > 0.0, "truncation cap must be positive");
    }

    Kind kind_;
    double truncation_cap_ = kDefaultTruncationCap;
};

inline void sample_values_into(const ValueDistribution& dist, std::size_t n, Rng& rng, std::vector<double>& out) {
    out.resize(n);
    for (auto& v : out) {
        v = dist.sample(rng);
    }
}

inline std::vector<double> sample_values(const ValueDistribution& dist, std::size_t n, std::uint64_t seed) {
    Rng rng{seed};
    std::vector<double> out;
    sample_values_into(dist, n, rng, out);
    return out;
}

//------------------------------------------------------------------------------
// Demand profile: bidder count per step (steps are 1-based).
//------------------------------------------------------------------------------

class DemandProfile {
  public:
    struct Breakpoint {
        std::uint64_t t = 1;
        std::size_t n = 0;
        bool operator==(const Breakpoint&) const = default;
    };

    static DemandProfile constant(std::size_t n) { return DemandProfile{{{1, n}}, true}; }

    // Breakpoint (t, n) sets the bidder count from step t on. The first
    // breakpoint must be at t = 1.
    static DemandProfile step(std::vector<Breakpoint> schedule) { return DemandProfile{std::move(schedule), false}; }

    std::size_t n_at(std::uint64_t t) const {
        expects(t >= 1, "demand profile is indexed from t = 1");
        auto it = std::upper_bound(schedule_.begin(), schedule_.end(), t,
                                   [](std::uint64_t lhs, const Breakpoint& b) { return lhs < b.t; });
        return std::prev(it)->n;
    }

    bool is_constant() const noexcept { return constant_; }
    const std::vector<Breakpoint>& schedule() const noexcept { return schedule_; }

    bool operator==(const DemandProfile&) const = default;

  private:
    DemandProfile(std::vector<Breakpoint> schedule, bool constant)
        : schedule_(std::move(schedule)), constant_(constant) {
        require(!schedule_.empty(), "demand schedule must have at least one breakpoint");
        require(schedule_.front().t == 1, "demand schedule must start at t = 1");
        for (std::size_t i = 1; i < schedule_.size(); ++i) {
            require(schedule_[i].t > schedule_[i - 1].t, "demand breakpoints must be strictly increasing in t");
        }
    }

    std::vector<Breakpoint> schedule_;
    bool constant_ = true;
};

//------------------------------------------------------------------------------
// Demand and revenue curves
//------------------------------------------------------------------------------

inline std::size_t demand_at_price(std::span<const double> values, double q) {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [q](double v) { return v >= q; }));
}

// Sum of the min(m, n) largest values.
inline double optimal_welfare(std::span<const double> values, std::size_t m) {
    expects(m >= 1, "optimal_welfare: m must be >= 1");
    std::vector<double> sorted(values.begin(), values.end());
    const std::size_t k = std::min(m, sorted.size());
    std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end(), std::greater<>{});
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        total += sorted[i];
    }
    return total;
}

inline constexpr std::uint64_t kMonteCarloChunk = 4096;

// Mean and standard error of `draw(rng, values)` over `samples` draws of n
// i.i.d. values. Chunk c of the samples uses its own derived stream.
template <typename Draw>
Estimate monte_carlo_over_values(const ValueDistribution& dist, std::size_t n, std::uint64_t samples,
                                 std::uint64_t seed, Draw&& draw) {
    require(samples >= 1, "monte carlo needs at least one sample");
    RunningStats total;
    std::vector<double> values;
    const std::uint64_t chunks = (samples + kMonteCarloChunk - 1) / kMonteCarloChunk;
    for (std::uint64_t c = 0; c < chunks; ++c) {
        Rng rng = make_rng(seed, c, StreamRole::kMonteCarlo);
        const std::uint64_t begin = c * kMonteCarloChunk;
        const std::uint64_t end = std::min(samples, begin + kMonteCarloChunk);
        RunningStats chunk;
        for (std::uint64_t s = begin; s < end; ++s) {
            sample_values_into(dist, n, rng, values);
            chunk.add(draw(rng, std::span<const double>(values)));
        }
        total.merge(chunk);
    }
    return total.estimate();
}

// E[min(m, N(q))].
inline Estimate limited_demand_mc(const ValueDistribution& dist, std::size_t n, std::size_t m, double q,
                                  std::uint64_t samples, std::uint64_t seed) {
    require(m >= 1, "limited demand: m must be >= 1");
    require(q >= 0.0, "limited demand: q must be >= 0");
    return monte_carlo_over_values(dist, n, samples, seed, [m, q](Rng&, std::span<const double> values) {
        return static_cast<double>(std::min(m, demand_at_price(values, q)));
    });
}

// R(q) = q * E[min(m, N(q))].
inline Estimate revenue_curve_mc(const ValueDistribution& dist, std::size_t n, std::size_t m, double q,
                                 std::uint64_t samples, std::uint64_t seed) {
    const Estimate d = limited_demand_mc(dist, n, m, q, samples, seed);
    return {q * d.value, q * d.se};
}

//------------------------------------------------------------------------------
// Curve diagnostics
//------------------------------------------------------------------------------

struct CurveDiagnostics {
    double lipschitz_estimate = 0.0;
    // (a, b, c) with b the midpoint of a and c and curve(b) below the chord.
    std::vector<std::array<double, 3>> concavity_violations;
};

inline constexpr double kAnalyticConcavityTolerance = 1e-9;

inline CurveDiagnostics probe_curve(const std::function<double(double)>& curve, std::span<const double> grid,
                                    double tol = kAnalyticConcavityTolerance) {
    require(grid.size() >= 3, "probe_curve: grid needs at least 3 points");
    for (std::size_t i = 1; i < grid.size(); ++i) {
        require(grid[i] > grid[i - 1], "probe_curve: grid must be strictly increasing");
    }
    std::vector<double> y(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        y[i] = curve(grid[i]);
    }

    CurveDiagnostics out;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        out.lipschitz_estimate =
            std::max(out.lipschitz_estimate, std::abs((y[i] - y[i - 1]) / (grid[i] - grid[i - 1])));
    }
    const double span_scale = grid.back() - grid.front();
    for (std::size_t a = 0; a < grid.size(); ++a) {
        for (std::size_t c = a + 2; c < grid.size(); ++c) {
            const double mid = 0.5 * (grid[a] + grid[c]);
            auto it = std::lower_bound(grid.begin() + static_cast<std::ptrdiff_t>(a) + 1,
                                       grid.begin() + static_cast<std::ptrdiff_t>(c), mid - 1e-12 * span_scale);
            if (it == grid.begin() + static_cast<std::ptrdiff_t>(c) || std::abs(*it - mid) > 1e-12 * span_scale) {
                continue;
            }
            const auto b = static_cast<std::size_t>(it - grid.begin());
            if (y[b] < 0.5 * (y[a] + y[c]) - tol) {
                out.concavity_violations.push_back({grid[a], grid[b], grid[c]});
            }
        }
    }
    return out;
}

inline std::vector<double> linear_grid(double lo, double hi, std::size_t points) {
    require(points >= 2, "linear_grid needs at least 2 points");
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i) {
        grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    }
    return grid;
}

}  // namespace tfmlab
