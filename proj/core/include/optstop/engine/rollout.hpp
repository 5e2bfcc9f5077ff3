#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "optstop/engine/value_stack.hpp"
#include "optstop/markov/model.hpp"
#include "optstop/payoff/payoff.hpp"

namespace optstop::engine {

/// Batch stopping rule: for time t and states (d x n), 1 marks paths that stop now.
using StoppingRule = std::function<std::vector<char>(int, const relu::Matrix&)>;

/// Stop when phi_t(x) - delta >= gamma_t(x); always stop at T.
StoppingRule stack_policy(const ValueStack& stack);
/// Stop when g(t, x) >= exact continuation value (finite-noise models only).
StoppingRule oracle_policy(const markov::MarkovModel& model, const payoff::Payoff& payoff);

struct RolloutResult {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t n_paths = 0;
};

/// Mean of g(tau, X_tau) over n_paths simulated paths; path p, step t draws from the
/// stream (seed, rollout, t, p). For any rule this is a lower bound on V(0, x0) in expectation.
RolloutResult rollout_price(const StoppingRule& rule, const markov::MarkovModel& model,
                            const payoff::Payoff& payoff, std::span<const double> x0, std::size_t n_paths,
                            std::uint64_t seed);
RolloutResult rollout_price(const ValueStack& stack, const markov::MarkovModel& model,
                            const payoff::Payoff& payoff, std::span<const double> x0, std::size_t n_paths,
                            std::uint64_t seed);

struct L2Error {
  double value = 0.0;
  std::size_t n = 0;
  double ci_low = 0.0;   ///< 95% percentile bootstrap interval
  double ci_high = 0.0;
};

using ReferenceValue = std::function<double(int, std::span<const double>)>;

/// Root mean squared gap between v_t and the reference V(t, .) over n points drawn from rho.
L2Error l2_error(const ValueStack& stack, int t, const ReferenceValue& oracle, const PointSampler& rho,
                 std::size_t n, std::uint64_t seed);
/// Same with the points and reference values supplied (points are columns).
L2Error l2_error(const ValueStack& stack, int t, const relu::Matrix& points, const relu::Vector& reference,
                 std::uint64_t seed);

}  // namespace optstop::engine
