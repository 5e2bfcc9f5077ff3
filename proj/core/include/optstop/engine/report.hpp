#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace optstop::engine {

struct PricingReport {
  std::string command;
  std::optional<double> value_oracle;
  std::optional<double> value_network;
  std::optional<double> value_rollout;
  std::optional<double> se_rollout;
  std::size_t n_paths = 0;
  std::vector<std::optional<double>> l2_by_t;
  std::vector<std::size_t> size_by_t;
  std::optional<double> wall_ms;  ///< omitted from the text unless set
  std::uint64_t seed = 0;
  bool selection_warning = false;
  std::vector<std::pair<std::string, std::string>> extra;   ///< additional diagnostics, in order
  std::vector<std::pair<std::string, std::string>> config;  ///< resolved configuration, in order
};

/// "key = value" lines with fixed field names; reals printed with 17 significant digits,
/// missing values as "na".
std::string format_report(const PricingReport& report);

std::string format_real(double v);
std::string format_optional(const std::optional<double>& v);

}  // namespace optstop::engine
