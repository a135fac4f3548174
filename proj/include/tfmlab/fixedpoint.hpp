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

/// \file
/// Fixed-point iteration for one-dimensional maps of the form
/// g(x) = alpha * f(x) + (1 - alpha) * x.
///
/// g and f share their fixed points. When f is L-Lipschitz, strictly concave on
/// [0, a_bar] and vanishes beyond a_bar, choosing alpha <= 1 / (L + 1) makes
/// the iteration of g converge from any positive start. The solver enforces that
/// bound by default and records when it had to lower alpha.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tfmlab/core.hpp"
#include "tfmlab/values.hpp"

namespace tfmlab {

using Oracle = std::function<double(double)>;

/// g(x) = alpha * f(x) + (1 - alpha) * x.
inline Oracle mixture(Oracle f, double alpha) {
    require(alpha >= 0.0 && alpha <= 1.0, "mixture: alpha must lie in [0,1]");
    return [f = std::move(f), alpha](double x) { return alpha * f(x) + (1.0 - alpha) * x; };
}

/// Linear interpolation through knots; constant beyond either end.
class PiecewiseLinear {
  public:
    PiecewiseLinear(std::vector<double> xs, std::vector<double> ys) : xs_(std::move(xs)), ys_(std::move(ys)) {
        require(xs_.size() >= 2 && xs_.size() == ys_.size(), "piecewise linear needs >= 2 matching knots");
        for (std::size_t i = 1; i < xs_.size(); ++i) {
            require(xs_[i] > xs_[i - 1], "piecewise linear knots must be strictly increasing");
        }
    }

    double operator()(double x) const {
        if (x <= xs_.front()) return ys_.front();
        if (x >= xs_.back()) return ys_.back();
        const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
        const auto i = static_cast<std::size_t>(it - xs_.begin());
        const double w = (x - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
        return ys_[i - 1] + w * (ys_[i] - ys_[i - 1]);
    }

    double lipschitz() const {
        double l = 0.0;
        for (std::size_t i = 1; i < xs_.size(); ++i) {
            l = std::max(l, std::abs((ys_[i] - ys_[i - 1]) / (xs_[i] - xs_[i - 1])));
        }
        return l;
    }

    const std::vector<double>& knots() const noexcept { return xs_; }
    const std::vector<double>& values() const noexcept { return ys_; }

  private:
    std::vector<double> xs_;
    std::vector<double> ys_;
};

struct FixedPointProblem {
    Oracle f;
    double a_bar = 1.0;
    double lipschitz_L = 1.0;
    double alpha = 0.5;

    double alpha_bound() const { return 1.0 / (lipschitz_L + 1.0); }

    void validate() const {
        require(static_cast<bool>(f), "fixed-point problem needs an oracle");
        require(std::isfinite(a_bar) && a_bar > 0.0, "a_bar must be finite and positive");
        require(std::isfinite(lipschitz_L) && lipschitz_L > 0.0, "Lipschitz constant must be positive");
        require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    }
};

struct SolveOptions {
    double tol = 1e-6;
    std::uint64_t max_iter = 100000;
    bool log_trajectory = false;
    bool enforce_alpha_bound = true;
    std::size_t tail_length = 32;  // kept on non-convergence
};

struct SolveReport {
    bool converged = false;
    double x_star = 0.0;
    std::uint64_t iterations = 0;
    double residual = 0.0;    // |g(x_star) - x_star|
    double f_residual = 0.0;  // |f(x_star) - x_star|
    double alpha_requested = 0.0;
    double alpha_used = 0.0;
    bool alpha_clamped = false;
    double noise_se = 0.0;  // noisy mode: standard error of the last oracle average
    std::vector<double> trajectory;  // full when logged, tail otherwise
};

namespace detail {

inline double resolve_alpha(const FixedPointProblem& problem, const SolveOptions& options, SolveReport& report) {
    report.alpha_requested = problem.alpha;
    report.alpha_used = problem.alpha;
    if (options.enforce_alpha_bound && problem.alpha > problem.alpha_bound()) {
        report.alpha_used = problem.alpha_bound();
        report.alpha_clamped = true;
    }
    return report.alpha_used;
}

class Trail {
  public:
    Trail(bool full, std::size_t tail) : full_(full), tail_(tail) {}

    void push(double x) {
        if (full_) {
            all_.push_back(x);
            return;
        }
        recent_.push_back(x);
        if (recent_.size() > tail_) recent_.pop_front();
    }

    std::vector<double> take() {
        if (full_) return std::move(all_);
        return {recent_.begin(), recent_.end()};
    }

  private:
    bool full_;
    std::size_t tail_;
    std::vector<double> all_;
    std::deque<double> recent_;
};

}  // namespace detail

/// Iterates x_{t+1} = g(x_t) from x0. Succeeds at the first iterate with
/// |g(x_t) - x_t| <= tol * max(1, x_t); then |f(x*) - x*| <= tol / alpha * max(1, x*).
/// Running out of iterations is reported, not thrown.
inline SolveReport iterate_to_fixed_point(const FixedPointProblem& problem, double x0,
                                          const SolveOptions& options = {}) {
    problem.validate();
    require(x0 > 0.0 && std::isfinite(x0), "x0 must be positive");
    require(options.tol > 0.0, "tol must be positive");

    SolveReport report;
    const double alpha = detail::resolve_alpha(problem, options, report);
    detail::Trail trail(options.log_trajectory, options.tail_length);

    double x = x0;
    trail.push(x);
    for (std::uint64_t it = 0; it < options.max_iter; ++it) {
        const double fx = problem.f(x);
        const double gx = alpha * fx + (1.0 - alpha) * x;
        if (std::abs(gx - x) <= options.tol * std::max(1.0, x)) {
            report.converged = true;
            report.x_star = x;
            report.iterations = it;
            report.residual = std::abs(gx - x);
            report.f_residual = std::abs(fx - x);
            report.trajectory = trail.take();
            return report;
        }
        x = gx;
        trail.push(x);
    }
    const double fx = problem.f(x);
    report.x_star = x;
    report.iterations = options.max_iter;
    report.f_residual = std::abs(fx - x);
    report.residual = alpha * report.f_residual;
    report.trajectory = trail.take();
    return report;
}

/// Oracle returning one noisy evaluation; the second argument numbers the call.
using NoisyOracle = std::function<double(double, std::uint64_t)>;

/// Noisy mode: each evaluation of f averages `repeats` oracle calls and the
/// stopping tolerance widens to three standard errors of the averaged g-step.
inline SolveReport iterate_to_fixed_point_noisy(const NoisyOracle& f, double a_bar, double lipschitz_L, double alpha,
                                                double x0, const SolveOptions& options = {},
                                                std::uint64_t repeats = 64) {
    require(static_cast<bool>(f), "noisy solve needs an oracle");
    require(repeats >= 2, "noisy mode needs at least two repeats per evaluation");
    FixedPointProblem shape{[](double) { return 0.0; }, a_bar, lipschitz_L, alpha};
    shape.validate();
    require(x0 > 0.0 && std::isfinite(x0), "x0 must be positive");

    SolveReport report;
    const double a = detail::resolve_alpha(shape, options, report);
    detail::Trail trail(options.log_trajectory, options.tail_length);

    std::uint64_t call = 0;
    auto average = [&](double x) {
        RunningStats stats;
        for (std::uint64_t r = 0; r < repeats; ++r) stats.add(f(x, call++));
        return stats.estimate();
    };

    double x = x0;
    trail.push(x);
    for (std::uint64_t it = 0; it < options.max_iter; ++it) {
        const Estimate fx = average(x);
        const double gx = a * fx.value + (1.0 - a) * x;
        const double widened = std::max(options.tol * std::max(1.0, x), 3.0 * a * fx.se);
        if (std::abs(gx - x) <= widened) {
            report.converged = true;
            report.x_star = x;
            report.iterations = it;
            report.residual = std::abs(gx - x);
            report.f_residual = std::abs(fx.value - x);
            report.noise_se = fx.se;
            report.trajectory = trail.take();
            return report;
        }
        x = gx;
        trail.push(x);
    }
    const Estimate fx = average(x);
    report.x_star = x;
    report.iterations = options.max_iter;
    report.f_residual = std::abs(fx.value - x);
    report.residual = a * report.f_residual;
    report.noise_se = fx.se;
    report.trajectory = trail.take();
    return report;
}

//------------------------------------------------------------------------------
// Diagnostics for the contraction argument on [0, a_bar]
//------------------------------------------------------------------------------

struct ContractionDiagnostics {
    std::vector<std::array<double, 3>> concavity_violations;
    double peak = 0.0;                        // grid argmax of g
    double decreasing_branch_lipschitz = 0.0;  // max |slope| right of the peak
    std::optional<double> witness;            // smallest positive grid b with g(b) < b
};

inline ContractionDiagnostics check_assumption_a2(const Oracle& g, std::span<const double> grid,
                                                  double tol = kAnalyticConcavityTolerance) {
    const CurveDiagnostics curve = probe_curve(g, grid, tol);
    ContractionDiagnostics out;
    out.concavity_violations = curve.concavity_violations;

    std::vector<double> y(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) y[i] = g(grid[i]);
    const auto peak = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
    out.peak = grid[peak];
    for (std::size_t i = peak + 1; i < grid.size(); ++i) {
        out.decreasing_branch_lipschitz =
            std::max(out.decreasing_branch_lipschitz, std::abs((y[i] - y[i - 1]) / (grid[i] - grid[i - 1])));
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] > 0.0 && y[i] < grid[i]) {
            out.witness = grid[i];
            break;
        }
    }
    return out;
}

//------------------------------------------------------------------------------
// Built-in test functions
//------------------------------------------------------------------------------

// 4 - (x - 2)^2 on [0, 4], zero beyond.
inline double builtin_f1(double x) {
    if (x >= 4.0 || x <= 0.0) return 0.0;
    return 4.0 - (x - 2.0) * (x - 2.0);
}

inline double builtin_f2(double x) { return 0.5 * builtin_f1(x); }

inline FixedPointProblem builtin_problem(const std::string& name, double alpha) {
    if (name == "f1") return {builtin_f1, 4.0, 4.0, alpha};
    if (name == "f2") return {builtin_f2, 4.0, 2.0, alpha};
    if (name == "zero") return {[](double) { return 0.0; }, 4.0, 1.0, alpha};
    throw ParameterError("unknown builtin function '" + name + "' (expected f1, f2 or zero)");
}

}  // namespace tfmlab
