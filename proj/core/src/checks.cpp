#include "optstop/verify/checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "optstop/engine/oracle.hpp"
#include "optstop/errors.hpp"

namespace optstop::verify {

using markov::StreamDomain;
using markov::StreamRng;
using relu::Matrix;

namespace {

double norm(std::span<const double> v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

std::vector<double> column(const Matrix& m, Eigen::Index j) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m(i, j);
  return v;
}

double growth_factor(const payoff::Payoff& payoff) {
  const auto g = payoff.growth();
  return g.c * std::pow(static_cast<double>(payoff.dim()), g.q);
}

}  // namespace

CheckResult growth_bound_check(std::string name, std::span<const double> lhs, std::span<const double> rhs) {
  require(lhs.size() == rhs.size(), "growth_bound_check: size mismatch");
  CheckResult r;
  r.name = std::move(name);
  r.n_points = lhs.size();
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    if (!(lhs[i] <= rhs[i])) r.pass = false;
    const double ratio = rhs[i] > 0.0 ? lhs[i] / rhs[i] : (lhs[i] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    r.worst_ratio = std::max(r.worst_ratio, ratio);
  }
  return r;
}

CheckResult payoff_growth_check(const payoff::Payoff& payoff, const Matrix& points) {
  require(static_cast<std::size_t>(points.rows()) == payoff.dim(), "payoff_growth_check: wrong point dimension");
  const double c = growth_factor(payoff);
  std::vector<double> lhs, rhs;
  for (int t = 0; t <= payoff.horizon(); ++t) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      const auto x = column(points, j);
      lhs.push_back(std::abs(payoff(t, x)));
      rhs.push_back(c * (1.0 + norm(x)));
    }
  }
  return growth_bound_check("payoff growth (" + payoff::to_string(payoff.kind()) + ")", lhs, rhs);
}

CheckResult update_growth_check(const markov::MarkovModel& model, int t, const Matrix& states, const Matrix& noise) {
  require(states.cols() == noise.cols(), "update_growth_check: need one noise column per state");
  require(static_cast<bool>(model.growth_envelope), "update_growth_check: model declares no growth envelope");
  std::vector<double> lhs, rhs;
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    const auto x = column(states, j);
    const auto y = column(noise, j);
    lhs.push_back(norm(model.step(t, x, y)));
    rhs.push_back(model.growth_envelope(x, y));
  }
  return growth_bound_check("update growth (" + model.family + ")", lhs, rhs);
}

double conditional_moment_bound(const markov::MarkovModel& model, int t, int s, std::span<const double> x) {
  require(0 <= t && t <= s && s <= model.horizon, "conditional_moment_bound: need 0 <= t <= s <= T");
  require(static_cast<bool>(model.second_moment_step), "conditional_moment_bound: model declares no moment step");
  double m = norm(x);
  for (int u = t; u < s; ++u) m = model.second_moment_step(u, m);
  return m;
}

CheckResult conditional_moment_check(const markov::MarkovModel& model, int t, int s, const Matrix& points,
                                     std::size_t n_inner, std::uint64_t seed) {
  require(n_inner >= 2, "conditional_moment_check: need at least 2 inner paths");
  CheckResult r;
  r.name = "conditional moment (" + model.family + ")";
  r.n_points = static_cast<std::size_t>(points.cols());
  std::vector<double> y(model.dim);
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    const auto x0 = column(points, j);
    const double bound = conditional_moment_bound(model, t, s, x0);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t k = 0; k < n_inner; ++k) {
      std::vector<double> x = x0;
      const auto index = static_cast<std::uint64_t>(j) * n_inner + k;
      for (int u = t; u < s; ++u) {
        StreamRng rng(seed, StreamDomain::study, static_cast<std::uint64_t>(u), index);
        model.sample_noise(u, rng, y);
        x = model.step(u, x, y);
      }
      const double v = norm(x);
      sum += v;
      sum_sq += v * v;
    }
    const double n = static_cast<double>(n_inner);
    const double mean = sum / n;
    const double se = std::sqrt(std::max(sum_sq / n - mean * mean, 0.0) / (n - 1.0));
    if (mean - 3.0 * se > bound) r.pass = false;
    r.worst_ratio = std::max(r.worst_ratio, bound > 0.0 ? mean / bound : 0.0);
  }
  return r;
}

CheckResult value_growth_check(const markov::MarkovModel& model, const payoff::Payoff& payoff, int t,
                               const Matrix& points) {
  const double c = growth_factor(payoff);
  std::vector<double> lhs, rhs;
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    const auto x = column(points, j);
    lhs.push_back(std::abs(engine::exact_dp_value(model, payoff, t, x)));
    double bound = 0.0;
    for (int s = t; s <= model.horizon; ++s) bound += c * (1.0 + conditional_moment_bound(model, t, s, x));
    rhs.push_back(bound);
  }
  return growth_bound_check("value growth (" + model.family + ")", lhs, rhs);
}

double average_lipschitz_estimate(const std::function<double(int, std::span<const double>)>& value, int t,
                                  std::span<const double> h, std::size_t n, std::uint64_t seed) {
  const double hn = norm(h);
  require(hn > 0.0, "average_lipschitz_estimate: h must be nonzero");
  require(n >= 1, "average_lipschitz_estimate: n must be >= 1");
  const std::size_t d = h.size();
  std::vector<double> x(d), xh(d);
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    StreamRng rng(seed, StreamDomain::study, static_cast<std::uint64_t>(t), j);
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = rng.normal();
      xh[i] = x[i] + h[i];
    }
    const double diff = value(t, x) - value(t, xh);
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(n)) / hn;
}

double average_lipschitz_estimate(const engine::ValueStack& stack, int t, std::span<const double> h, std::size_t n,
                                  std::uint64_t seed) {
  require(h.size() == stack.dim(), "average_lipschitz_estimate: h has wrong dimension");
  const auto& net = stack.value(t);
  return average_lipschitz_estimate([&net](int, std::span<const double> x) { return net.evaluate_scalar(x); }, t, h,
                                    n, seed);
}

MomentCheck moment_check(const markov::MarkovModel& model, int t, double pbar, std::size_t n_samples,
                         std::uint64_t seed, std::optional<std::size_t> coordinate) {
  require(n_samples >= 2, "moment_check: need at least 2 samples");
  require(t >= 0 && t < model.horizon, "moment_check: t out of range");
  if (coordinate) require(*coordinate < model.dim, "moment_check: coordinate out of range");
  MomentCheck r;
  if (coordinate) {
    if (model.noise_coordinate_moment) r.closed_form = model.noise_coordinate_moment(t, *coordinate, pbar);
  } else if (model.noise_norm_moment) {
    r.closed_form = model.noise_norm_moment(t, pbar);
  }
  std::vector<double> y(model.dim);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    StreamRng rng(seed, StreamDomain::study, static_cast<std::uint64_t>(t), i);
    model.sample_noise(t, rng, y);
    const double v = coordinate ? std::pow(y[*coordinate], pbar) : std::pow(norm(y), pbar);
    if (!std::isfinite(v)) throw DomainError("moment_check: sampled value of order " + std::to_string(pbar) + " is not finite");
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(n_samples);
  r.estimate = sum / n;
  r.standard_error = std::sqrt(std::max(sum_sq / n - r.estimate * r.estimate, 0.0) / (n - 1.0));
  if (r.closed_form) {
    const double slack = 3.0 * r.standard_error + 1e-12 * std::abs(*r.closed_form);
    r.pass = std::abs(r.estimate - *r.closed_form) <= slack;
  }
  r.envelope = std::numeric_limits<double>::infinity();
  if (!coordinate && pbar >= 0.0 && model.noise_moment_envelope) {
    r.envelope = model.noise_moment_envelope(t, pbar);
    if (r.estimate - 3.0 * r.standard_error > r.envelope) r.pass = false;
  }
  return r;
}

}  // namespace optstop::verify
