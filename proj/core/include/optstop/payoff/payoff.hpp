#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "optstop/relu/network.hpp"

namespace optstop::payoff {

enum class PayoffKind { max_call, basket_call, basket_put, put_on_min, put_on_max, call_on_min, custom };

std::string to_string(PayoffKind kind);
PayoffKind parse_payoff_kind(std::string_view name);

/// |g(t, x)| <= c * d^q * (1 + ||x||)
struct GrowthConstants {
  double c = 1.0;
  double q = 0.0;
};

struct PayoffParams {
  PayoffKind kind = PayoffKind::max_call;
  std::size_t dim = 1;
  int horizon = 1;
  double strike = 1.0;
  double rate = 0.0;
  double step_length = 1.0;     ///< calendar time per step; discount is exp(-rate * t * step_length)
  std::vector<double> weights;  ///< basket weights; empty means equal weights
};

/// Reward g(t, x) with a direct evaluator and an exact ReLU realization per time step.
class Payoff {
 public:
  using Evaluator = std::function<double(int, std::span<const double>)>;
  using NetworkBuilder = std::function<relu::NeuralNetwork(int)>;

  static Payoff make(const PayoffParams& params);

  /// User-supplied reward. The network may approximate the evaluator; the declared
  /// growth constants and Lipschitz constant are trusted and only spot-checked.
  static Payoff custom(std::size_t dim, int horizon, Evaluator evaluator, NetworkBuilder builder,
                       GrowthConstants growth, double lipschitz, std::size_t size_bound);

  [[nodiscard]] double operator()(int t, std::span<const double> x) const;
  [[nodiscard]] relu::NeuralNetwork network(int t) const;

  [[nodiscard]] std::size_t dim() const { return params_.dim; }
  [[nodiscard]] int horizon() const { return params_.horizon; }
  [[nodiscard]] PayoffKind kind() const { return params_.kind; }
  [[nodiscard]] const PayoffParams& params() const { return params_; }
  [[nodiscard]] double discount(int t) const;
  [[nodiscard]] GrowthConstants growth() const { return growth_; }
  /// Declared Lipschitz constant of g(t, .) (Euclidean).
  [[nodiscard]] double lipschitz(int t) const;
  /// Declared bound on size(network(t)).
  [[nodiscard]] std::size_t size_bound() const { return size_bound_; }

 private:
  Payoff() = default;

  PayoffParams params_;
  Evaluator evaluator_;
  NetworkBuilder builder_;
  GrowthConstants growth_;
  double lipschitz_ = 1.0;
  std::size_t size_bound_ = 0;
};

relu::NeuralNetwork max_call_network(std::size_t d, double strike, double rate, int t,
                                     double step_length = 1.0);
relu::NeuralNetwork basket_put_network(std::size_t d, double strike, double rate, int t,
                                       std::span<const double> weights, double step_length = 1.0);
relu::NeuralNetwork basket_call_network(std::size_t d, double strike, double rate, int t,
                                        std::span<const double> weights, double step_length = 1.0);
relu::NeuralNetwork extreme_option_network(PayoffKind kind, std::size_t d, double strike, double rate,
                                           int t, double step_length = 1.0);

}  // namespace optstop::payoff
