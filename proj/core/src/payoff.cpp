#include "optstop/payoff/payoff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "optstop/errors.hpp"
#include "optstop/relu/calculus.hpp"

namespace optstop::payoff {

using relu::AffineLayer;
using relu::Matrix;
using relu::NeuralNetwork;
using relu::Vector;

std::string to_string(PayoffKind kind) {
  switch (kind) {
    case PayoffKind::max_call: return "max_call";
    case PayoffKind::basket_call: return "basket_call";
    case PayoffKind::basket_put: return "basket_put";
    case PayoffKind::put_on_min: return "put_on_min";
    case PayoffKind::put_on_max: return "put_on_max";
    case PayoffKind::call_on_min: return "call_on_min";
    case PayoffKind::custom: return "custom";
  }
  return "unknown";
}

PayoffKind parse_payoff_kind(std::string_view name) {
  for (auto k : {PayoffKind::max_call, PayoffKind::basket_call, PayoffKind::basket_put,
                 PayoffKind::put_on_min, PayoffKind::put_on_max, PayoffKind::call_on_min}) {
    if (name == to_string(k)) return k;
  }
  throw InputError("unknown payoff kind '" + std::string(name) + "'");
}

namespace {

double discount_factor(double rate, int t, double step) { return std::exp(-rate * t * step); }

void check_common(std::size_t d, double strike, double rate, double step) {
  require(d >= 1, "payoff: dimension must be >= 1");
  require(strike > 0.0 && std::isfinite(strike), "payoff: strike must be positive");
  require(rate >= 0.0 && std::isfinite(rate), "payoff: rate must be nonnegative");
  require(step > 0.0 && std::isfinite(step), "payoff: step length must be positive");
}

std::vector<double> checked_weights(std::size_t d, std::span<const double> weights) {
  if (weights.empty()) return std::vector<double>(d, 1.0 / static_cast<double>(d));
  require(weights.size() == d, "basket payoff: need one weight per asset");
  double sum = 0.0;
  for (double w : weights) {
    require(w >= 0.0 && std::isfinite(w), "basket payoff: weights must be nonnegative");
    sum += w;
  }
  require(std::abs(sum - 1.0) <= 1e-12, "basket payoff: weights must sum to 1");
  return {weights.begin(), weights.end()};
}

// z -> disc * relu(sign * z - sign * K) on a scalar input.
NeuralNetwork hinge(double sign, double strike, double disc) {
  Matrix w1(1, 1), w2(1, 1);
  w1 << sign;
  w2 << disc;
  Vector b1(1);
  b1 << -sign * strike;
  return NeuralNetwork({AffineLayer::from_dense(w1, b1), AffineLayer::from_dense(w2, Vector::Zero(1))});
}

}  // namespace

NeuralNetwork max_call_network(std::size_t d, double strike, double rate, int t, double step_length) {
  check_common(d, strike, rate, step_length);
  return relu::compose(hinge(1.0, strike, discount_factor(rate, t, step_length)), relu::max_k(d));
}

namespace {

NeuralNetwork basket_network(double sign, std::size_t d, double strike, double rate, int t,
                             std::span<const double> weights, double step_length) {
  check_common(d, strike, rate, step_length);
  const auto w = checked_weights(d, weights);
  Matrix w1(1, static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) w1(0, static_cast<Eigen::Index>(i)) = sign * w[i];
  Vector b1(1);
  b1 << -sign * strike;
  Matrix w2(1, 1);
  w2 << discount_factor(rate, t, step_length);
  return NeuralNetwork({AffineLayer::from_dense(w1, b1), AffineLayer::from_dense(w2, Vector::Zero(1))});
}

}  // namespace

NeuralNetwork basket_put_network(std::size_t d, double strike, double rate, int t,
                                 std::span<const double> weights, double step_length) {
  return basket_network(-1.0, d, strike, rate, t, weights, step_length);
}

NeuralNetwork basket_call_network(std::size_t d, double strike, double rate, int t,
                                  std::span<const double> weights, double step_length) {
  return basket_network(1.0, d, strike, rate, t, weights, step_length);
}

NeuralNetwork extreme_option_network(PayoffKind kind, std::size_t d, double strike, double rate, int t,
                                     double step_length) {
  check_common(d, strike, rate, step_length);
  const double disc = discount_factor(rate, t, step_length);
  switch (kind) {
    case PayoffKind::put_on_min: return relu::compose(hinge(-1.0, strike, disc), relu::min_k(d));
    case PayoffKind::put_on_max: return relu::compose(hinge(-1.0, strike, disc), relu::max_k(d));
    case PayoffKind::call_on_min: return relu::compose(hinge(1.0, strike, disc), relu::min_k(d));
    default: throw InputError("extreme_option_network: kind must be put_on_min, put_on_max or call_on_min");
  }
}

Payoff Payoff::make(const PayoffParams& params) {
  check_common(params.dim, params.strike, params.rate, params.step_length);
  require(params.horizon >= 0, "payoff: horizon must be nonnegative");
  Payoff p;
  p.params_ = params;
  const std::size_t d = params.dim;
  const double K = params.strike;
  const double d3 = static_cast<double>(d * d * d);
  switch (params.kind) {
    case PayoffKind::max_call:
      p.evaluator_ = [K](int, std::span<const double> x) {
        return std::max(*std::max_element(x.begin(), x.end()) - K, 0.0);
      };
      p.builder_ = [=](int t) { return max_call_network(d, K, params.rate, t, params.step_length); };
      p.growth_ = {1.0, 0.0};
      p.size_bound_ = static_cast<std::size_t>(6.0 * d3);
      break;
    case PayoffKind::basket_call:
    case PayoffKind::basket_put: {
      p.params_.weights = checked_weights(d, params.weights);
      const auto w = p.params_.weights;
      const double sign = params.kind == PayoffKind::basket_call ? 1.0 : -1.0;
      p.evaluator_ = [w, K, sign](int, std::span<const double> x) {
        const double s = std::inner_product(w.begin(), w.end(), x.begin(), 0.0);
        return std::max(sign * (s - K), 0.0);
      };
      p.builder_ = [=](int t) {
        return sign > 0 ? basket_call_network(d, K, params.rate, t, w, params.step_length)
                        : basket_put_network(d, K, params.rate, t, w, params.step_length);
      };
      p.growth_ = {sign > 0 ? 1.0 : std::max(K, 1.0), 0.0};
      p.size_bound_ = 3 * (d + 2);
      break;
    }
    case PayoffKind::put_on_min:
    case PayoffKind::put_on_max:
    case PayoffKind::call_on_min: {
      const auto kind = params.kind;
      p.evaluator_ = [kind, K](int, std::span<const double> x) {
        const double lo = *std::min_element(x.begin(), x.end());
        const double hi = *std::max_element(x.begin(), x.end());
        switch (kind) {
          case PayoffKind::put_on_min: return std::max(K - lo, 0.0);
          case PayoffKind::put_on_max: return std::max(K - hi, 0.0);
          default: return std::max(lo - K, 0.0);
        }
      };
      p.builder_ = [=](int t) { return extreme_option_network(kind, d, K, params.rate, t, params.step_length); };
      p.growth_ = {kind == PayoffKind::call_on_min ? 1.0 : std::max(K, 1.0), 0.0};
      p.size_bound_ = static_cast<std::size_t>(12.0 * d3) + 4 * d + 8;
      break;
    }
    case PayoffKind::custom:
      throw InputError("Payoff::make: use Payoff::custom for user-supplied payoffs");
  }
  p.lipschitz_ = 1.0;
  return p;
}

Payoff Payoff::custom(std::size_t dim, int horizon, Evaluator evaluator, NetworkBuilder builder,
                      GrowthConstants growth, double lipschitz, std::size_t size_bound) {
  require(dim >= 1 && horizon >= 0, "Payoff::custom: invalid dimension or horizon");
  require(evaluator && builder, "Payoff::custom: evaluator and network builder required");
  Payoff p;
  p.params_.kind = PayoffKind::custom;
  p.params_.dim = dim;
  p.params_.horizon = horizon;
  p.evaluator_ = std::move(evaluator);
  p.builder_ = std::move(builder);
  p.growth_ = growth;
  p.lipschitz_ = lipschitz;
  p.size_bound_ = size_bound;
  return p;
}

double Payoff::discount(int t) const {
  if (params_.kind == PayoffKind::custom) return 1.0;
  return discount_factor(params_.rate, t, params_.step_length);
}

double Payoff::operator()(int t, std::span<const double> x) const {
  if (x.size() != params_.dim) throw InputError("payoff: state dimension mismatch");
  if (params_.kind == PayoffKind::custom) return evaluator_(t, x);
  return discount(t) * evaluator_(t, x);
}

relu::NeuralNetwork Payoff::network(int t) const {
  require(t >= 0 && t <= params_.horizon, "payoff: time index out of range");
  return builder_(t);
}

double Payoff::lipschitz(int t) const {
  if (params_.kind == PayoffKind::custom) return lipschitz_;
  return lipschitz_ * discount(t);
}

}  // namespace optstop::payoff
