#include "optstop/engine/value_stack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "optstop/errors.hpp"
#include "optstop/relu/calculus.hpp"
#include "optstop/util/parallel.hpp"

namespace optstop::engine {

using markov::MarkovModel;
using markov::StreamDomain;
using markov::StreamRng;
using relu::Matrix;
using relu::NeuralNetwork;

std::string to_string(UpdateMode mode) { return mode == UpdateMode::eta ? "eta" : "exact"; }

UpdateMode parse_update_mode(const std::string& name) {
  if (name == "eta") return UpdateMode::eta;
  if (name == "exact") return UpdateMode::exact;
  throw InputError("unknown update mode '" + name + "' (expected eta or exact)");
}

BuildParams BuildParams::defaults_for(double eps_bar) {
  require(eps_bar > 0.0 && eps_bar < 1.0, "eps_bar must lie in (0, 1)");
  BuildParams p;
  p.eps_bar = eps_bar;
  p.n_samples = static_cast<std::size_t>(std::ceil(std::pow(eps_bar, -2.0)));
  p.delta = std::sqrt(eps_bar);
  return p;
}

const NeuralNetwork& ValueStack::value(int t) const {
  require(t >= 0 && t <= horizon(), "ValueStack::value: t out of range");
  return values[static_cast<std::size_t>(t)];
}

const NeuralNetwork& ValueStack::continuation(int t) const {
  require(t >= 0 && t < horizon(), "ValueStack::continuation: t out of range");
  return continuations[static_cast<std::size_t>(t)];
}

const NeuralNetwork& ValueStack::payoff(int t) const {
  require(t >= 0 && t <= horizon(), "ValueStack::payoff: t out of range");
  return payoffs[static_cast<std::size_t>(t)];
}

std::vector<std::size_t> ValueStack::size_by_t() const {
  std::vector<std::size_t> s;
  s.reserve(values.size());
  for (const auto& v : values) s.push_back(v.size());
  return s;
}

std::size_t ValueStack::total_size() const {
  const auto s = size_by_t();
  return std::accumulate(s.begin(), s.end(), std::size_t{0});
}

bool ValueStack::warning() const {
  return std::any_of(steps.begin(), steps.end(), [](const StepDiagnostics& s) { return !s.accepted; });
}

const NeuralNetwork& continuation_network(const ValueStack& stack, int t) { return stack.continuation(t); }

PointSampler marginal_sampler(const MarkovModel& model, std::uint64_t seed) {
  return [model, seed](int t, std::uint64_t index, std::span<double> out) {
    std::vector<double> x = model.x0;
    std::vector<double> y(model.dim);
    for (int s = 0; s < t; ++s) {
      StreamRng rng(seed, StreamDomain::validation, static_cast<std::uint64_t>(s), index);
      model.sample_noise(s, rng, y);
      x = model.step(s, x, y);
    }
    std::copy(x.begin(), x.end(), out.begin());
  };
}

namespace {

double norm(std::span<const double> v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Drawn {
  std::vector<NoiseDraw> distinct;
  double max_norm = 0.0;
};

std::uint64_t attempt_key(int t, std::size_t attempt) {
  return (static_cast<std::uint64_t>(attempt) << 32) | static_cast<std::uint64_t>(t);
}

Drawn draw_noise(const MarkovModel& model, int t, std::size_t attempt, std::size_t n, std::uint64_t seed) {
  Drawn out;
  const auto key = attempt_key(t, attempt);
  const double inv_n = 1.0 / static_cast<double>(n);
  if (model.support == markov::NoiseSupport::finite) {
    // Identical draws give identical pieces; aggregate them with weight count / N.
    std::vector<std::size_t> counts(model.atoms.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      StreamRng rng(seed, StreamDomain::build_noise, key, i);
      ++counts[model.draw_atom(rng)];
    }
    for (std::size_t a = 0; a < counts.size(); ++a) {
      if (counts[a] == 0) continue;
      out.distinct.push_back({model.atoms[a].value, static_cast<double>(counts[a]) * inv_n});
      out.max_norm = std::max(out.max_norm, norm(model.atoms[a].value));
    }
    return out;
  }
  out.distinct.assign(n, NoiseDraw{std::vector<double>(model.dim), inv_n});
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      StreamRng rng(seed, StreamDomain::build_noise, key, i);
      model.sample_noise(t, rng, out.distinct[i].value);
    }
  });
  for (const auto& d : out.distinct) out.max_norm = std::max(out.max_norm, norm(d.value));
  return out;
}

double mean_noise_norm(const MarkovModel& model, int t, std::size_t pilot, std::uint64_t seed) {
  if (model.support == markov::NoiseSupport::finite) {
    double s = 0.0;
    for (const auto& a : model.atoms) s += a.probability * norm(a.value);
    return s;
  }
  std::vector<double> y(model.dim);
  double s = 0.0;
  for (std::size_t i = 0; i < pilot; ++i) {
    StreamRng rng(seed, StreamDomain::pilot, static_cast<std::uint64_t>(t), i);
    model.sample_noise(t, rng, y);
    s += norm(y);
  }
  return s / static_cast<double>(pilot);
}

// Evaluates `net` at f_t(x_j, y) for every column x_j of `points` and every y in `ys`,
// returning a (points.cols() x ys.size()) matrix.
Matrix evaluate_after_step(const NeuralNetwork& net, const MarkovModel& model, int t, const Matrix& points,
                           const std::vector<std::vector<double>>& ys) {
  const auto n = points.cols();
  const auto k = static_cast<Eigen::Index>(ys.size());
  Matrix out(n, k);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t begin, std::size_t end) {
    Matrix next(points.rows(), k);
    std::vector<double> x(model.dim), f(model.dim);
    for (std::size_t j = begin; j < end; ++j) {
      for (std::size_t i = 0; i < model.dim; ++i) x[i] = points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      for (Eigen::Index a = 0; a < k; ++a) {
        model.update(t, x, ys[static_cast<std::size_t>(a)], f);
        for (std::size_t i = 0; i < model.dim; ++i) next(static_cast<Eigen::Index>(i), a) = f[i];
      }
      out.row(static_cast<Eigen::Index>(j)) = net.evaluate_batch(next).row(0);
    }
  });
  return out;
}

relu::Vector reference_continuation(const NeuralNetwork& v_next, const MarkovModel& model, int t,
                                    const Matrix& points, const BuildParams& params) {
  const auto n = points.cols();
  relu::Vector ref(n);
  if (model.support == markov::NoiseSupport::finite) {
    std::vector<std::vector<double>> ys;
    std::vector<double> ps;
    for (const auto& a : model.atoms) {
      if (a.probability == 0.0) continue;
      ys.push_back(a.value);
      ps.push_back(a.probability);
    }
    const Matrix vals = evaluate_after_step(v_next, model, t, points, ys);
    for (Eigen::Index j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t a = 0; a < ps.size(); ++a) acc += ps[a] * vals(j, static_cast<Eigen::Index>(a));
      ref(j) = acc;
    }
    return ref;
  }
  // Nested Monte Carlo with an independent inner batch per validation point.
  const std::size_t b = params.inner_batch;
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t begin, std::size_t end) {
    Matrix next(points.rows(), static_cast<Eigen::Index>(b));
    std::vector<double> x(model.dim), y(model.dim), f(model.dim);
    for (std::size_t j = begin; j < end; ++j) {
      for (std::size_t i = 0; i < model.dim; ++i) x[i] = points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      for (std::size_t s = 0; s < b; ++s) {
        StreamRng rng(params.seed, StreamDomain::inner, static_cast<std::uint64_t>(t), j * b + s);
        model.sample_noise(t, rng, y);
        model.update(t, x, y, f);
        for (std::size_t i = 0; i < model.dim; ++i) next(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = f[i];
      }
      ref(static_cast<Eigen::Index>(j)) = v_next.evaluate_batch(next).row(0).mean();
    }
  });
  return ref;
}

NeuralNetwork assemble_continuation(const NeuralNetwork& v_next, const MarkovModel& model, int t,
                                    const std::vector<NoiseDraw>& draws, const BuildParams& params,
                                    const markov::EtaNetwork* eta) {
  std::vector<std::size_t> noise_coords(model.dim);
  std::iota(noise_coords.begin(), noise_coords.end(), model.dim);
  auto piece = [&](std::size_t i) {
    const NeuralNetwork inner = params.mode == UpdateMode::exact
                                    ? model.exact_update(t, draws[i].value)
                                    : relu::fix_inputs(eta->network, noise_coords, draws[i].value);
    return relu::compose(v_next, inner);
  };
  // Pieces share one shape, so the first one predicts the sum.
  const NeuralNetwork first = piece(0);
  const double predicted = static_cast<double>(first.size()) * static_cast<double>(draws.size());
  if (predicted > static_cast<double>(params.max_size)) {
    throw ResourceError("build_value_stack: continuation at t=" + std::to_string(t) + " would hold about " +
                        std::to_string(static_cast<std::uint64_t>(predicted)) + " parameters (guard " +
                        std::to_string(params.max_size) + "); lower N or the horizon");
  }
  std::vector<NeuralNetwork> pieces(draws.size(), first);
  std::vector<double> weights(draws.size());
  weights[0] = draws[0].weight;
  parallel_for(draws.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = std::max<std::size_t>(begin, 1); i < end; ++i) {
      pieces[i] = piece(i);
      weights[i] = draws[i].weight;
    }
  });
  const auto synced = relu::depth_sync(pieces);
  return relu::sum_equal_depth(synced, weights);
}

}  // namespace

ValueStack build_value_stack(const MarkovModel& model, const payoff::Payoff& payoff, const BuildParams& params) {
  require(params.eps_bar > 0.0 && params.eps_bar < 1.0, "build_value_stack: eps_bar must lie in (0, 1)");
  require(params.n_samples >= 1, "build_value_stack: N must be >= 1");
  require(params.delta >= 0.0 && std::isfinite(params.delta), "build_value_stack: delta must be >= 0");
  require(params.n_val >= 100, "build_value_stack: n_val must be >= 100");
  require(params.inner_batch >= 1 && params.pilot_batch >= 1, "build_value_stack: empty inner or pilot batch");
  require(payoff.dim() == model.dim, "build_value_stack: payoff and model dimensions differ");
  require(payoff.horizon() == model.horizon, "build_value_stack: payoff and model horizons differ");
  if (params.mode == UpdateMode::exact) {
    require(model.has_exact_update(), "build_value_stack: model has no exact-update network");
  } else {
    require(model.has_eta(), "build_value_stack: model has no eta builder");
  }

  const int horizon = model.horizon;
  const std::size_t d = model.dim;
  const auto T = static_cast<std::size_t>(horizon);
  ValueStack stack;
  stack.eps_bar = params.eps_bar;
  stack.n_samples = params.n_samples;
  stack.delta = params.delta;
  stack.n_val = params.n_val;
  stack.max_retries = params.max_retries;
  stack.mode = params.mode;
  stack.seed = params.seed;
  for (int t = 0; t <= horizon; ++t) stack.payoffs.push_back(payoff.network(t));
  stack.values.assign(T + 1, stack.payoffs.back());
  stack.continuations.assign(T, stack.payoffs.back());
  stack.draws.resize(T);
  stack.steps.resize(T);

  const PointSampler rho = params.rho ? params.rho : marginal_sampler(model, params.seed);
  const double n = static_cast<double>(params.n_samples);

  for (int t = horizon - 1; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    const NeuralNetwork& v_next = stack.values[ts + 1];

    Matrix points(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(params.n_val));
    {
      std::vector<double> x(d);
      for (std::size_t j = 0; j < params.n_val; ++j) {
        rho(t, j, x);
        for (std::size_t i = 0; i < d; ++i) points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[i];
      }
    }
    const relu::Vector reference = reference_continuation(v_next, model, t, points, params);
    const double m2 = mean_noise_norm(model, t, params.pilot_batch, params.seed);

    std::optional<markov::EtaNetwork> eta;
    if (params.mode == UpdateMode::eta) eta = model.eta(t, params.eps_bar);

    StepDiagnostics diag;
    diag.noise_norm_threshold = 3.0 * n * m2;
    std::optional<NeuralNetwork> best;
    std::vector<NoiseDraw> best_draws;
    double best_u = 0.0;
    double best_norm = 0.0;
    std::size_t best_attempt = 0;
    bool accepted = false;
    for (std::size_t attempt = 0; attempt <= params.max_retries; ++attempt) {
      Drawn drawn = draw_noise(model, t, attempt, params.n_samples, params.seed);
      NeuralNetwork gamma = assemble_continuation(v_next, model, t, drawn.distinct, params, eta ? &*eta : nullptr);
      const relu::Vector fitted = gamma.evaluate_batch(points).row(0).transpose();
      const double u = (fitted - reference).squaredNorm() / static_cast<double>(params.n_val);
      diag.attempt_errors.push_back(u);
      ++diag.attempts;
      const bool ok = drawn.max_norm <= diag.noise_norm_threshold && u <= 3.0 * median(diag.attempt_errors);
      if (!best || u < best_u || ok) {
        best = std::move(gamma);
        best_draws = std::move(drawn.distinct);
        best_u = u;
        best_norm = drawn.max_norm;
        best_attempt = attempt;
      }
      if (ok) {
        accepted = true;
        break;
      }
    }
    diag.accepted = accepted;
    diag.accepted_attempt = best_attempt;
    diag.validation_error = best_u;
    diag.max_noise_norm = best_norm;
    diag.distinct_pieces = best_draws.size();

    stack.continuations[ts] = std::move(*best);
    stack.draws[ts] = std::move(best_draws);
    stack.steps[ts] = std::move(diag);

    const std::vector<NeuralNetwork> heads{relu::shift_output(stack.payoffs[ts], params.delta),
                                           stack.continuations[ts]};
    stack.values[ts] = relu::compose(relu::max2(), relu::parallelize_shared(relu::depth_sync(heads)));
  }
  return stack;
}

double stack_standard_error(const ValueStack& stack, const MarkovModel& model, std::span<const double> x0,
                            std::size_t n_paths, std::uint64_t seed) {
  require(n_paths >= 1, "stack_standard_error: n_paths must be >= 1");
  require(model.dim == stack.dim() && model.horizon == stack.horizon(), "stack_standard_error: model mismatch");
  const int horizon = stack.horizon();
  const std::size_t d = model.dim;
  double total = 0.0;
  for (int t = 0; t < horizon; ++t) {
    const auto& draws = stack.draws[static_cast<std::size_t>(t)];
    std::vector<std::vector<double>> ys;
    std::vector<double> w;
    for (const auto& dr : draws) {
      ys.push_back(dr.value);
      w.push_back(dr.weight);
    }
    Matrix points(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(t == 0 ? 1 : n_paths));
    for (Eigen::Index p = 0; p < points.cols(); ++p) {
      const auto path = markov::sample_path(model, x0, seed, static_cast<std::uint64_t>(p));
      const auto& x = path.states[static_cast<std::size_t>(t)];
      for (std::size_t i = 0; i < d; ++i) points(static_cast<Eigen::Index>(i), p) = x[i];
    }
    const Matrix vals = evaluate_after_step(stack.value(t + 1), model, t, points, ys);
    double var_sum = 0.0;
    for (Eigen::Index p = 0; p < vals.rows(); ++p) {
      double mean = 0.0;
      for (std::size_t a = 0; a < w.size(); ++a) mean += w[a] * vals(p, static_cast<Eigen::Index>(a));
      double var = 0.0;
      for (std::size_t a = 0; a < w.size(); ++a) {
        const double e = vals(p, static_cast<Eigen::Index>(a)) - mean;
        var += w[a] * e * e;
      }
      var_sum += var;
    }
    total += var_sum / static_cast<double>(vals.rows()) / static_cast<double>(stack.n_samples);
  }
  return std::sqrt(total);
}

}  // namespace optstop::engine
