#include "optstop/engine/report.hpp"

#include <cstdio>
#include <sstream>

namespace optstop::engine {

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_real(*v) : "na"; }

std::string format_report(const PricingReport& r) {
  std::ostringstream out;
  out << "command = " << r.command << '\n';
  out << "value_oracle = " << format_optional(r.value_oracle) << '\n';
  out << "value_network = " << format_optional(r.value_network) << '\n';
  out << "value_rollout = " << format_optional(r.value_rollout) << '\n';
  out << "se_rollout = " << format_optional(r.se_rollout) << '\n';
  out << "n_paths = " << r.n_paths << '\n';
  out << "l2_by_t =";
  for (const auto& v : r.l2_by_t) out << ' ' << format_optional(v);
  out << '\n';
  out << "size_by_t =";
  for (auto s : r.size_by_t) out << ' ' << s;
  out << '\n';
  if (r.wall_ms) out << "wall_ms = " << format_real(*r.wall_ms) << '\n';
  out << "seed = " << r.seed << '\n';
  out << "selection_warning = " << (r.selection_warning ? "true" : "false") << '\n';
  for (const auto& [k, v] : r.extra) out << k << " = " << v << '\n';
  if (!r.config.empty()) {
    out << "[config]\n";
    for (const auto& [k, v] : r.config) out << k << " = " << v << '\n';
  }
  return out.str();
}

}  // namespace optstop::engine
