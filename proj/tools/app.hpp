#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"
#include "optstop/engine/value_stack.hpp"
#include "optstop/markov/model.hpp"
#include "optstop/payoff/payoff.hpp"

namespace optstop::app {

enum ExitCode : int { kSuccess = 0, kCheckFailed = 1, kInputError = 2 };

struct RunSettings {
  std::size_t n_paths = 10000;
  std::size_t l2_points = 200;
  std::size_t se_paths = 500;
  std::string oracle = "auto";  ///< auto | dp | binomial | none
  int lattice_steps = 5000;
  std::string rollout_family = "same";  ///< same | black_scholes
  std::vector<std::size_t> dims;
  std::vector<double> eps_list;
  double max_slope = 4.0;
  std::size_t verify_samples = 100000;
  std::size_t moment_samples = 1000000;
};

struct ProductSettings {
  double eps = 1e-3;
  double bound = 1.0;
  std::size_t grid = 401;
  std::size_t pairs = 100000;
};

/// Everything a command needs, validated before any work starts.
struct Experiment {
  markov::MarkovModel model;
  std::optional<payoff::Payoff> payoff;
  engine::BuildParams build;
  RunSettings run;
  ProductSettings product;
  double step = 1.0;        ///< model step length (calendar time per period)
  double volatility = 0.0;  ///< first volatility entry, for lattice and rollout models
  double drift = 0.0;       ///< first drift entry
  std::vector<std::pair<std::string, std::string>> resolved;
};

/// Reads every section of the config (unknown keys are an input error).
Experiment load_experiment(Config& cfg, std::optional<std::uint64_t> seed_override);

/// Command-line entry point; returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace optstop::app
