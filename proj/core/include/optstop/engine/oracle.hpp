#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "optstop/markov/model.hpp"
#include "optstop/payoff/payoff.hpp"

namespace optstop::engine {

/// Largest number of noise sequences the exact recursion will enumerate.
inline constexpr double kExactDpGuard = 1e7;

/// V(t, x) by backward recursion over the finite noise atoms.
/// Throws ResourceError when k^(T - t) exceeds the guard.
double exact_dp_value(const markov::MarkovModel& model, const payoff::Payoff& payoff, int t,
                      std::span<const double> x);

/// E[V(t + 1, f_t(x, Y_t))] for t < T.
double exact_dp_continuation(const markov::MarkovModel& model, const payoff::Payoff& payoff, int t,
                             std::span<const double> x);

/// E[g(tau*, X_tau*)] with tau* = first t where g(t, X_t) >= continuation, by enumeration of
/// every noise sequence.
double exact_dp_policy_value(const markov::MarkovModel& model, const payoff::Payoff& payoff,
                             std::span<const double> x0);

enum class OptionType { put, call };

/// Cox-Ross-Rubinstein lattice with exercise allowed only at the listed lattice step indices
/// (the final step is always an exercise opportunity).
double binomial_american(double s0, double strike, double rate, double volatility, double maturity,
                         int n_steps, std::span<const int> exercise_steps,
                         OptionType type = OptionType::put);

/// Exercise times in years mapped to lattice steps; each must lie on the grid.
std::vector<int> exercise_steps_from_times(std::span<const double> times, double maturity, int n_steps);

double black_scholes_price(double s0, double strike, double rate, double volatility, double maturity,
                           OptionType type = OptionType::put);

}  // namespace optstop::engine
