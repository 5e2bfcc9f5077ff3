#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>

#include "optstop/engine/value_stack.hpp"
#include "optstop/markov/model.hpp"
#include "optstop/payoff/payoff.hpp"

namespace optstop::verify {

struct CheckResult {
  std::string name;
  bool pass = true;
  double worst_ratio = 0.0;  ///< max lhs / rhs over the sample
  std::size_t n_points = 0;
};

/// Passes when lhs[i] <= rhs[i] for every i.
CheckResult growth_bound_check(std::string name, std::span<const double> lhs, std::span<const double> rhs);

/// |g(t, x)| <= c d^q (1 + ||x||) for every t and every column x.
CheckResult payoff_growth_check(const payoff::Payoff& payoff, const relu::Matrix& points);

/// ||f_t(x, y)|| <= declared envelope at every (x, y) column pair.
CheckResult update_growth_check(const markov::MarkovModel& model, int t, const relu::Matrix& states,
                                const relu::Matrix& noise);

/// Bound on (E||X_s||^2)^{1/2} given X_t = x, iterating the model's second-moment step.
double conditional_moment_bound(const markov::MarkovModel& model, int t, int s, std::span<const double> x);

/// Monte Carlo E[||X_s|| | X_t = x] (n_inner paths per point) against conditional_moment_bound,
/// with the estimate allowed 3 standard errors of slack.
CheckResult conditional_moment_check(const markov::MarkovModel& model, int t, int s, const relu::Matrix& points,
                                     std::size_t n_inner, std::uint64_t seed);

/// |V(t, x)| <= sum_{s >= t} c d^q (1 + bound_s(x)) with V from the exact oracle.
CheckResult value_growth_check(const markov::MarkovModel& model, const payoff::Payoff& payoff, int t,
                               const relu::Matrix& points);

/// ((1/n) sum_j |V(t, x_j) - V(t, x_j + h)|^2)^{1/2} / ||h|| with x_j standard Gaussian.
double average_lipschitz_estimate(const std::function<double(int, std::span<const double>)>& value, int t,
                                  std::span<const double> h, std::size_t n, std::uint64_t seed);
double average_lipschitz_estimate(const engine::ValueStack& stack, int t, std::span<const double> h,
                                  std::size_t n, std::uint64_t seed);

struct MomentCheck {
  double estimate = 0.0;
  double standard_error = 0.0;
  std::optional<double> closed_form;
  double envelope = 0.0;
  bool pass = true;
};

/// Monte Carlo E||Y_t||^pbar (or E[Y_{t,i}^pbar] when `coordinate` is set) against the closed
/// form within 3 standard errors, and against the declared envelope.
MomentCheck moment_check(const markov::MarkovModel& model, int t, double pbar, std::size_t n_samples,
                         std::uint64_t seed, std::optional<std::size_t> coordinate = std::nullopt);

}  // namespace optstop::verify
