#include "optstop/verify/scaling.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "optstop/errors.hpp"

namespace optstop::verify {

LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "fit_loglog: need at least two points");
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, "fit_loglog: values must be positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  require(sxx > 0.0, "fit_loglog: x values must not all coincide");
  LogLogFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < n; ++i) f.residuals.push_back(ly[i] - (f.intercept + f.slope * lx[i]));
  return f;
}

namespace {

ScalingRecord build_record(const ScalingFamily& family, std::size_t d, const engine::BuildParams& params) {
  const auto start = std::chrono::steady_clock::now();
  const auto model = family.model(d);
  const auto payoff = family.payoff(d);
  const auto stack = engine::build_value_stack(model, payoff, params);
  ScalingRecord r;
  r.d = d;
  r.eps_bar = params.eps_bar;
  r.size_by_t = stack.size_by_t();
  r.size_total = stack.total_size();
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

void fill_partial_slopes(ScalingStudy& s, const std::vector<double>& xs) {
  std::vector<double> sizes;
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    sizes.push_back(static_cast<double>(s.records[i].size_total));
    s.records[i].slope_partial =
        i == 0 ? std::numeric_limits<double>::quiet_NaN()
               : fit_loglog(std::span(xs).first(i + 1), std::span(sizes)).slope;
  }
  s.fit = fit_loglog(xs, sizes);
}

}  // namespace

ScalingStudy scaling_study(const ScalingFamily& family, std::span<const std::size_t> dims,
                           const engine::BuildParams& params) {
  require(dims.size() >= 3, "scaling_study: need at least 3 dimensions");
  for (std::size_t i = 1; i < dims.size(); ++i) {
    require(dims[i] > dims[i - 1], "scaling_study: dimension list must be strictly ascending");
  }
  require(dims.front() >= 1, "scaling_study: dimensions must be >= 1");
  ScalingStudy s;
  std::vector<double> xs;
  for (std::size_t d : dims) {
    s.records.push_back(build_record(family, d, params));
    xs.push_back(static_cast<double>(d));
  }
  fill_partial_slopes(s, xs);
  return s;
}

ScalingStudy epsilon_study(const ScalingFamily& family, std::size_t d, std::span<const double> eps_list,
                           const engine::BuildParams& params) {
  require(eps_list.size() >= 2, "epsilon_study: need at least 2 accuracies");
  ScalingStudy s;
  std::vector<double> xs;
  for (double eps : eps_list) {
    auto p = params;
    p.eps_bar = eps;
    s.records.push_back(build_record(family, d, p));
    xs.push_back(1.0 / eps);
  }
  fill_partial_slopes(s, xs);
  return s;
}

std::string format_scaling_table(const ScalingStudy& study, bool include_timing) {
  auto real = [](double v) {
    if (std::isnan(v)) return std::string("na");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "d\teps_bar\tsize_total\tslope_partial\twall_ms\n";
  for (const auto& r : study.records) {
    out << r.d << '\t' << real(r.eps_bar) << '\t' << r.size_total << '\t' << real(r.slope_partial) << '\t'
        << (include_timing ? real(r.wall_ms) : std::string("na")) << '\n';
  }
  out << "# fitted slope " << real(study.fit.slope) << '\n';
  return out.str();
}

}  // namespace optstop::verify
