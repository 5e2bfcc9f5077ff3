#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "optstop/engine/value_stack.hpp"
#include "optstop/markov/model.hpp"
#include "optstop/payoff/payoff.hpp"

namespace optstop::verify {

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<double> residuals;
};

/// Least squares of log(y) on log(x).
LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y);

struct ScalingRecord {
  std::size_t d = 0;
  double eps_bar = 0.0;
  std::size_t size_total = 0;
  std::vector<std::size_t> size_by_t;
  double slope_partial = 0.0;  ///< slope fitted on the records up to this one (NaN for the first)
  double wall_ms = 0.0;
};

struct ScalingStudy {
  std::vector<ScalingRecord> records;
  LogLogFit fit;  ///< log(size_total) against log(d), or against log(1/eps_bar)
};

struct ScalingFamily {
  std::function<markov::MarkovModel(std::size_t)> model;
  std::function<payoff::Payoff(std::size_t)> payoff;
};

/// Builds one stack per d with every other parameter fixed; d list ascending with >= 3 entries.
ScalingStudy scaling_study(const ScalingFamily& family, std::span<const std::size_t> dims,
                           const engine::BuildParams& params);

/// Fixed d, varying eps_bar; the fit is log(size_total) against log(1/eps_bar).
ScalingStudy epsilon_study(const ScalingFamily& family, std::size_t d, std::span<const double> eps_list,
                           const engine::BuildParams& params);

/// Columns: d, eps_bar, size_total, slope_partial, wall_ms (wall_ms printed as "na" unless timed).
std::string format_scaling_table(const ScalingStudy& study, bool include_timing);

}  // namespace optstop::verify
