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

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace tfmlab {

inline constexpr const char* kVersion = "0.3.0";

// Invalid distribution / mechanism parameters supplied by a caller.
class ParameterError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// A documented precondition was broken (e.g. allocation not a subset of arrivals).
class ContractViolation : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

// Exhaustive search asked to enumerate more than it is allowed to.
class SearchSpaceError : public std::length_error {
  public:
    using std::length_error::length_error;
};

// Too few samples / steps for the requested statistic.
class InsufficientData : public std::length_error {
  public:
    using std::length_error::length_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw ParameterError(message);
    }
}

inline void expects(bool condition, const std::string& message) {
    if (!condition) {
        throw ContractViolation(message);
    }
}

//------------------------------------------------------------------------------
// Random numbers
//
// Every random quantity is drawn from a std::mt19937_64, whose output sequence
// is fixed by the standard. The std:: distribution adaptors are not (their
// algorithms are implementation-defined), so the transforms below are written
// out explicitly. Traces therefore replay bit-for-bit across toolchains.
//
// Stream splitting: a run has one root seed. The generator used for role R at
// step t is seeded with derive_seed(root, t, R). Monte-Carlo estimators split
// their samples into fixed-size chunks and seed chunk c with
// derive_seed(root, c, StreamRole::kMonteCarlo), so the merged estimate does
// not depend on how chunks are scheduled.
//------------------------------------------------------------------------------

using Rng = std::mt19937_64;

enum class StreamRole : std::uint64_t {
    kBidderValues = 1,
    kMiner = 2,
    kBidderStrategy = 3,
    kMonteCarlo = 4,
    kTrial = 5,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index, StreamRole role) noexcept {
    std::uint64_t h = splitmix64(root);
    h = splitmix64(h ^ index);
    return splitmix64(h ^ static_cast<std::uint64_t>(role));
}

inline Rng make_rng(std::uint64_t root, std::uint64_t index, StreamRole role) {
    return Rng{derive_seed(root, index, role)};
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, bound), unbiased (rejection on the top of the range).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
    expects(bound > 0, "uniform_index: bound must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return x % bound;
}

inline bool fair_coin(Rng& rng) {
    return (rng() >> 63) != 0;
}

//------------------------------------------------------------------------------
// Streaming mean / standard error
//------------------------------------------------------------------------------

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

class RunningStats {
  public:
    void add(double x) noexcept {
        ++count_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(count_);
        m2_ += d * (x - mean_);
    }

    void merge(const RunningStats& other) noexcept {
        if (other.count_ == 0) {
            return;
        }
        if (count_ == 0) {
            *this = other;
            return;
        }
        const double n1 = static_cast<double>(count_);
        const double n2 = static_cast<double>(other.count_);
        const double d = other.mean_ - mean_;
        mean_ += d * n2 / (n1 + n2);
        m2_ += other.m2_ + d * d * n1 * n2 / (n1 + n2);
        count_ += other.count_;
    }

    std::uint64_t count() const noexcept { return count_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept {
        return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
    }
    double stddev() const noexcept { return std::sqrt(variance()); }
    double standard_error() const noexcept {
        return count_ > 0 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0;
    }
    Estimate estimate() const noexcept { return {mean_, standard_error()}; }

  private:
    std::uint64_t count_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

// Utility comparisons absorb floating-point noise at this scale.
inline constexpr double kUtilityTolerance = 1e-9;

}  // namespace tfmlab
