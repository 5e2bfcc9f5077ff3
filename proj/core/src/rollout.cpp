#include "optstop/engine/rollout.hpp"

#include <algorithm>
#include <cmath>

#include "optstop/engine/oracle.hpp"
#include "optstop/errors.hpp"
#include "optstop/util/parallel.hpp"

namespace optstop::engine {

using markov::StreamDomain;
using markov::StreamRng;
using relu::Matrix;
using relu::Vector;

namespace {

constexpr std::size_t kChunk = 2048;

std::vector<double> column(const Matrix& m, Eigen::Index j) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m(i, j);
  return v;
}

// Mean and standard error, shifted by the first value so that constant samples give
// that constant exactly and a zero standard error.
RolloutResult summarize(const std::vector<double>& v) {
  RolloutResult r;
  r.n_paths = v.size();
  const double shift = v.front();
  double s = 0.0;
  for (double x : v) s += x - shift;
  const double n = static_cast<double>(v.size());
  r.mean = shift + s / n;
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.standard_error = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return r;
}

}  // namespace

StoppingRule stack_policy(const ValueStack& stack) {
  return [&stack](int t, const Matrix& states) {
    std::vector<char> stop(static_cast<std::size_t>(states.cols()), 1);
    if (t >= stack.horizon()) return stop;
    const Vector phi = stack.payoff(t).evaluate_batch(states).row(0).transpose();
    const Vector gamma = stack.continuation(t).evaluate_batch(states).row(0).transpose();
    for (Eigen::Index j = 0; j < states.cols(); ++j) {
      stop[static_cast<std::size_t>(j)] = phi(j) - stack.delta >= gamma(j) ? 1 : 0;
    }
    return stop;
  };
}

StoppingRule oracle_policy(const markov::MarkovModel& model, const payoff::Payoff& payoff) {
  return [&model, &payoff](int t, const Matrix& states) {
    std::vector<char> stop(static_cast<std::size_t>(states.cols()), 1);
    if (t >= model.horizon) return stop;
    for (Eigen::Index j = 0; j < states.cols(); ++j) {
      const auto x = column(states, j);
      stop[static_cast<std::size_t>(j)] = payoff(t, x) >= exact_dp_continuation(model, payoff, t, x) ? 1 : 0;
    }
    return stop;
  };
}

RolloutResult rollout_price(const StoppingRule& rule, const markov::MarkovModel& model,
                            const payoff::Payoff& payoff, std::span<const double> x0, std::size_t n_paths,
                            std::uint64_t seed) {
  require(n_paths >= 100, "rollout_price: n_paths must be >= 100");
  require(x0.size() == model.dim && payoff.dim() == model.dim, "rollout_price: dimension mismatch");
  require(payoff.horizon() == model.horizon, "rollout_price: payoff and model horizons differ");
  const std::size_t d = model.dim;
  const int horizon = model.horizon;
  std::vector<double> result(n_paths, 0.0);
  const std::size_t n_chunks = (n_paths + kChunk - 1) / kChunk;

  parallel_for(n_chunks, [&](std::size_t c_begin, std::size_t c_end) {
    std::vector<double> x(d), y(d), f(d);
    for (std::size_t c = c_begin; c < c_end; ++c) {
      const std::size_t p0 = c * kChunk;
      const std::size_t p1 = std::min(n_paths, p0 + kChunk);
      std::vector<std::size_t> alive(p1 - p0);
      for (std::size_t p = p0; p < p1; ++p) alive[p - p0] = p;
      Matrix states(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(alive.size()));
      for (Eigen::Index j = 0; j < states.cols(); ++j) {
        for (std::size_t i = 0; i < d; ++i) states(static_cast<Eigen::Index>(i), j) = x0[i];
      }
      for (int t = 0; t <= horizon && !alive.empty(); ++t) {
        // Every path starts at x0, so the first decision is shared.
        const auto stop = t == 0 ? std::vector<char>(alive.size(), rule(0, states.leftCols(1)).front())
                                 : rule(t, states);
        std::vector<std::size_t> still;
        Matrix next(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(alive.size()));
        Eigen::Index kept = 0;
        for (std::size_t j = 0; j < alive.size(); ++j) {
          const auto jj = static_cast<Eigen::Index>(j);
          for (std::size_t i = 0; i < d; ++i) x[i] = states(static_cast<Eigen::Index>(i), jj);
          if (stop[j] || t == horizon) {
            result[alive[j]] = payoff(t, x);
            continue;
          }
          StreamRng rng(seed, StreamDomain::rollout, static_cast<std::uint64_t>(t), alive[j]);
          model.sample_noise(t, rng, y);
          model.update(t, x, y, f);
          for (std::size_t i = 0; i < d; ++i) next(static_cast<Eigen::Index>(i), kept) = f[i];
          ++kept;
          still.push_back(alive[j]);
        }
        alive = std::move(still);
        states = next.leftCols(kept);
      }
    }
  });
  return summarize(result);
}

RolloutResult rollout_price(const ValueStack& stack, const markov::MarkovModel& model,
                            const payoff::Payoff& payoff, std::span<const double> x0, std::size_t n_paths,
                            std::uint64_t seed) {
  require(stack.dim() == model.dim && stack.horizon() == model.horizon, "rollout_price: stack does not match model");
  return rollout_price(stack_policy(stack), model, payoff, x0, n_paths, seed);
}

L2Error l2_error(const ValueStack& stack, int t, const Matrix& points, const Vector& reference, std::uint64_t seed) {
  require(points.cols() == reference.size() && points.cols() > 0, "l2_error: need one reference value per point");
  require(static_cast<std::size_t>(points.rows()) == stack.dim(), "l2_error: points have wrong dimension");
  const Vector fitted = stack.value(t).evaluate_batch(points).row(0).transpose();
  const Vector sq = (fitted - reference).array().square().matrix();
  const auto n = static_cast<std::size_t>(sq.size());
  L2Error e;
  e.n = n;
  e.value = std::sqrt(sq.mean());
  constexpr std::size_t kResamples = 200;
  std::vector<double> boot(kResamples);
  for (std::size_t b = 0; b < kResamples; ++b) {
    StreamRng rng(seed, StreamDomain::bootstrap, static_cast<std::uint64_t>(t), b);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += sq(static_cast<Eigen::Index>(rng() % n));
    boot[b] = std::sqrt(s / static_cast<double>(n));
  }
  std::sort(boot.begin(), boot.end());
  e.ci_low = boot[static_cast<std::size_t>(0.025 * (kResamples - 1))];
  e.ci_high = boot[static_cast<std::size_t>(std::ceil(0.975 * (kResamples - 1)))];
  return e;
}

L2Error l2_error(const ValueStack& stack, int t, const ReferenceValue& oracle, const PointSampler& rho,
                 std::size_t n, std::uint64_t seed) {
  require(static_cast<bool>(oracle), "l2_error: no oracle or reference values available");
  require(static_cast<bool>(rho), "l2_error: no sampling law given");
  require(n >= 1, "l2_error: n must be >= 1");
  const std::size_t d = stack.dim();
  Matrix points(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  Vector reference(static_cast<Eigen::Index>(n));
  std::vector<double> x(d);
  for (std::size_t j = 0; j < n; ++j) {
    rho(t, j, x);
    for (std::size_t i = 0; i < d; ++i) points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[i];
    reference(static_cast<Eigen::Index>(j)) = oracle(t, x);
  }
  return l2_error(stack, t, points, reference, seed);
}

}  // namespace optstop::engine
