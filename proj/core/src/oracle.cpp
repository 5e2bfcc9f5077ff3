#include "optstop/engine/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "optstop/errors.hpp"

namespace optstop::engine {

using markov::MarkovModel;
using payoff::Payoff;

namespace {

std::vector<std::size_t> live_atoms(const MarkovModel& model) {
  require(model.support == markov::NoiseSupport::finite, "exact DP requires a finite-noise model");
  std::vector<std::size_t> live;
  for (std::size_t a = 0; a < model.atoms.size(); ++a) {
    if (model.atoms[a].probability > 0.0) live.push_back(a);
  }
  return live;
}

void check_instance(const MarkovModel& model, const Payoff& payoff, int t, std::span<const double> x) {
  require(payoff.dim() == model.dim, "exact DP: payoff and model dimensions differ");
  require(payoff.horizon() == model.horizon, "exact DP: payoff and model horizons differ");
  require(t >= 0 && t <= model.horizon, "exact DP: time index out of range");
  require(x.size() == model.dim, "exact DP: state has wrong dimension");
}

void check_guard(std::size_t k, int steps, double multiplier = 1.0) {
  const double work = std::pow(static_cast<double>(k), steps) * multiplier;
  if (work > kExactDpGuard) {
    throw ResourceError("exact DP: " + std::to_string(k) + "^" + std::to_string(steps) +
                        " noise sequences exceed the enumeration guard");
  }
}

struct Recursion {
  const MarkovModel& model;
  const Payoff& payoff;
  std::vector<std::size_t> live;

  double continuation(int t, std::span<const double> x) const {
    double acc = 0.0;
    for (std::size_t a : live) {
      const auto next = model.step(t, x, model.atoms[a].value);
      acc += model.atoms[a].probability * value(t + 1, next);
    }
    return acc;
  }

  double value(int t, std::span<const double> x) const {
    const double g = payoff(t, x);
    if (t == model.horizon) return g;
    return std::max(g, continuation(t, x));
  }

  double policy(int t, std::span<const double> x) const {
    const double g = payoff(t, x);
    if (t == model.horizon || g >= continuation(t, x)) return g;
    double acc = 0.0;
    for (std::size_t a : live) {
      const auto next = model.step(t, x, model.atoms[a].value);
      acc += model.atoms[a].probability * policy(t + 1, next);
    }
    return acc;
  }
};

}  // namespace

double exact_dp_value(const MarkovModel& model, const Payoff& payoff, int t, std::span<const double> x) {
  check_instance(model, payoff, t, x);
  Recursion r{model, payoff, live_atoms(model)};
  check_guard(r.live.size(), model.horizon - t);
  return r.value(t, x);
}

double exact_dp_continuation(const MarkovModel& model, const Payoff& payoff, int t, std::span<const double> x) {
  check_instance(model, payoff, t, x);
  require(t < model.horizon, "exact_dp_continuation: t must be < T");
  Recursion r{model, payoff, live_atoms(model)};
  check_guard(r.live.size(), model.horizon - t);
  return r.continuation(t, x);
}

double exact_dp_policy_value(const MarkovModel& model, const Payoff& payoff, std::span<const double> x0) {
  check_instance(model, payoff, 0, x0);
  Recursion r{model, payoff, live_atoms(model)};
  check_guard(r.live.size(), model.horizon, static_cast<double>(model.horizon + 1));
  return r.policy(0, x0);
}

std::vector<int> exercise_steps_from_times(std::span<const double> times, double maturity, int n_steps) {
  require(maturity > 0.0 && n_steps >= 1, "exercise_steps_from_times: invalid grid");
  std::vector<int> steps;
  for (double s : times) {
    require(s >= 0.0 && s <= maturity * (1.0 + 1e-12), "exercise time outside [0, maturity]");
    const double pos = s / maturity * n_steps;
    const double rounded = std::round(pos);
    if (std::abs(pos - rounded) > 1e-6) {
      throw InputError("exercise time " + std::to_string(s) + " is not on the lattice grid");
    }
    steps.push_back(static_cast<int>(rounded));
  }
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  return steps;
}

double binomial_american(double s0, double strike, double rate, double volatility, double maturity,
                         int n_steps, std::span<const int> exercise_steps, OptionType type) {
  require(n_steps >= 1, "binomial_american: n_steps must be >= 1");
  require(s0 > 0.0 && strike > 0.0 && rate >= 0.0 && volatility >= 0.0 && maturity > 0.0,
          "binomial_american: invalid parameters");
  for (int s : exercise_steps) require(s >= 0 && s <= n_steps, "binomial_american: exercise step off grid");
  const double dt = maturity / n_steps;
  const double growth = std::exp(rate * dt);
  const double disc = 1.0 / growth;
  double u = std::exp(volatility * std::sqrt(dt));
  double d = 1.0 / u;
  double p = 0.5;
  if (volatility > 0.0) {
    p = (growth - d) / (u - d);
    require(p > 0.0 && p < 1.0, "binomial_american: risk-neutral probability outside (0, 1); refine the grid");
  } else {
    u = d = growth;  // deterministic growth at the riskless rate
  }
  auto intrinsic = [&](double s) { return type == OptionType::put ? std::max(strike - s, 0.0) : std::max(s - strike, 0.0); };
  std::vector<char> exercisable(static_cast<std::size_t>(n_steps) + 1, 0);
  for (int s : exercise_steps) exercisable[static_cast<std::size_t>(s)] = 1;
  exercisable[static_cast<std::size_t>(n_steps)] = 1;

  std::vector<double> v(static_cast<std::size_t>(n_steps) + 1);
  for (int j = 0; j <= n_steps; ++j) {
    v[static_cast<std::size_t>(j)] = intrinsic(s0 * std::pow(u, j) * std::pow(d, n_steps - j));
  }
  for (int step = n_steps - 1; step >= 0; --step) {
    for (int j = 0; j <= step; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      double cont = disc * (p * v[ju + 1] + (1.0 - p) * v[ju]);
      if (exercisable[static_cast<std::size_t>(step)]) {
        cont = std::max(cont, intrinsic(s0 * std::pow(u, j) * std::pow(d, step - j)));
      }
      v[ju] = cont;
    }
  }
  return v[0];
}

double black_scholes_price(double s0, double strike, double rate, double volatility, double maturity,
                           OptionType type) {
  require(s0 > 0.0 && strike > 0.0 && volatility > 0.0 && maturity > 0.0,
          "black_scholes_price: invalid parameters");
  const double sq = volatility * std::sqrt(maturity);
  const double d1 = (std::log(s0 / strike) + (rate + 0.5 * volatility * volatility) * maturity) / sq;
  const double d2 = d1 - sq;
  auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  const double df = std::exp(-rate * maturity);
  if (type == OptionType::call) return s0 * cdf(d1) - strike * df * cdf(d2);
  return strike * df * cdf(-d2) - s0 * cdf(-d1);
}

}  // namespace optstop::engine
