#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "optstop/markov/model.hpp"
#include "optstop/payoff/payoff.hpp"
#include "optstop/relu/network.hpp"

namespace optstop::engine {

/// How x -> f_t(x, y) is realized for a frozen noise draw y.
enum class UpdateMode {
  eta,    ///< approximate update network eta_{eps}(x, y) with y pinned via fix_inputs
  exact,  ///< the model's exact-update network (finite-noise oracle comparisons)
};

std::string to_string(UpdateMode mode);
UpdateMode parse_update_mode(const std::string& name);

/// Fills a validation point for time t; `index` selects the point.
using PointSampler = std::function<void(int, std::uint64_t, std::span<double>)>;

struct BuildParams {
  double eps_bar = 0.1;
  std::size_t n_samples = 100;  ///< N
  double delta = 0.0;           ///< exercise margin
  std::size_t n_val = 100;
  std::size_t max_retries = 3;
  std::size_t inner_batch = 256;
  std::size_t pilot_batch = 4096;
  UpdateMode mode = UpdateMode::eta;
  std::uint64_t seed = 1;
  std::size_t max_size = 50'000'000;  ///< tractability guard on any single continuation network
  PointSampler rho;  ///< empty: marginal law of X_t started at the model's x0

  /// N = ceil(eps^-2), delta = eps^(1/2).
  static BuildParams defaults_for(double eps_bar);
};

/// A distinct noise value with the fraction of the N draws that produced it.
struct NoiseDraw {
  std::vector<double> value;
  double weight = 0.0;
};

struct StepDiagnostics {
  std::size_t attempts = 0;
  std::size_t accepted_attempt = 0;
  bool accepted = true;  ///< false: retries exhausted, best attempt kept
  double validation_error = 0.0;            ///< U of the kept attempt
  std::vector<double> attempt_errors;
  double max_noise_norm = 0.0;
  double noise_norm_threshold = 0.0;        ///< 3 N M_2
  std::size_t distinct_pieces = 0;
};

class ValueStack {
 public:
  ValueStack() = default;

  [[nodiscard]] int horizon() const { return static_cast<int>(values.size()) - 1; }
  [[nodiscard]] std::size_t dim() const { return values.empty() ? 0 : values.front().input_dim(); }
  [[nodiscard]] const relu::NeuralNetwork& value(int t) const;
  [[nodiscard]] const relu::NeuralNetwork& continuation(int t) const;
  [[nodiscard]] const relu::NeuralNetwork& payoff(int t) const;
  [[nodiscard]] std::vector<std::size_t> size_by_t() const;
  [[nodiscard]] std::size_t total_size() const;
  [[nodiscard]] bool warning() const;

  std::vector<relu::NeuralNetwork> values;         ///< v_0 ... v_T
  std::vector<relu::NeuralNetwork> continuations;  ///< gamma_0 ... gamma_{T-1}
  std::vector<relu::NeuralNetwork> payoffs;        ///< phi_0 ... phi_T
  std::vector<std::vector<NoiseDraw>> draws;       ///< accepted draws per t < T
  std::vector<StepDiagnostics> steps;              ///< per t < T
  double eps_bar = 0.0;
  std::size_t n_samples = 0;
  double delta = 0.0;
  std::size_t n_val = 0;
  std::size_t max_retries = 0;
  UpdateMode mode = UpdateMode::eta;
  std::uint64_t seed = 0;
};

/// Backward construction v_T = phi_T, gamma_t = (1/N) sum_i v_{t+1}(eta(., Y^i)),
/// v_t = max(phi_t - delta, gamma_t), with realization selection at every step.
ValueStack build_value_stack(const markov::MarkovModel& model, const payoff::Payoff& payoff,
                             const BuildParams& params);

/// gamma_t of the stack.
const relu::NeuralNetwork& continuation_network(const ValueStack& stack, int t);

/// Default validation law: state at time t of path `index` from the model's x0.
PointSampler marginal_sampler(const markov::MarkovModel& model, std::uint64_t seed);

/// Monte Carlo standard error of v_0(x0) implied by the finite-N averages:
/// SE^2 = sum_t E[Var_Y v_{t+1}(f_t(X_t, Y))] / N with X_t following the model from x0,
/// the variance taken over the stored draws.
double stack_standard_error(const ValueStack& stack, const markov::MarkovModel& model,
                            std::span<const double> x0, std::size_t n_paths, std::uint64_t seed);

}  // namespace optstop::engine
