#include "optstop/markov/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "optstop/approx/product.hpp"
#include "optstop/errors.hpp"
#include "optstop/relu/calculus.hpp"

namespace optstop::markov {

using relu::Matrix;
using relu::NeuralNetwork;
using relu::Vector;

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> broadcast(const std::vector<double>& v, std::size_t d, const char* what) {
  if (v.size() == d) return v;
  if (v.size() == 1) return std::vector<double>(d, v.front());
  throw InputError(std::string(what) + ": expected 1 or " + std::to_string(d) + " values, got " +
                   std::to_string(v.size()));
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) require(std::isfinite(x), std::string(what) + ": non-finite value");
}

std::vector<std::size_t> iota_indices(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return idx;
}

NeuralNetwork diagonal_network(std::span<const double> y) {
  const auto d = static_cast<Eigen::Index>(y.size());
  Matrix w = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) w(i, i) = y[static_cast<std::size_t>(i)];
  return relu::affine_network(w, Vector::Zero(d));
}

NeuralNetwork translation_network(std::span<const double> y) {
  const auto d = static_cast<Eigen::Index>(y.size());
  Vector b(d);
  for (Eigen::Index i = 0; i < d; ++i) b(i) = y[static_cast<std::size_t>(i)];
  return relu::affine_network(Matrix::Identity(d, d), b);
}

double default_levy_beta(int horizon) { return 1.0 / std::max(horizon, 1); }

}  // namespace

std::vector<double> MarkovModel::step(int t, std::span<const double> x, std::span<const double> y) const {
  if (x.size() != dim || y.size() != dim) throw InputError("MarkovModel::step: dimension mismatch");
  std::vector<double> out(dim);
  update(t, x, y, out);
  return out;
}

std::size_t MarkovModel::draw_atom(StreamRng& rng) const {
  require(support == NoiseSupport::finite && !atoms.empty(), "draw_atom: model has no finite support");
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    acc += atoms[a].probability;
    if (u < acc) return a;
  }
  // rounding in the cumulative sum; fall back to the last atom with positive mass
  for (std::size_t a = atoms.size(); a-- > 0;) {
    if (atoms[a].probability > 0.0) return a;
  }
  return atoms.size() - 1;
}

SampledPath sample_path(const MarkovModel& model, std::span<const double> x0, std::uint64_t seed,
                        std::uint64_t index) {
  require(x0.size() == model.dim, "sample_path: x0 has wrong dimension");
  require_finite(x0, "sample_path");
  SampledPath path;
  path.states.reserve(static_cast<std::size_t>(model.horizon) + 1);
  path.noise.reserve(static_cast<std::size_t>(model.horizon));
  path.states.emplace_back(x0.begin(), x0.end());
  std::vector<double> y(model.dim);
  for (int t = 0; t < model.horizon; ++t) {
    StreamRng rng(seed, StreamDomain::path, static_cast<std::uint64_t>(t), index);
    model.sample_noise(t, rng, y);
    path.states.push_back(model.step(t, path.states.back(), y));
    path.noise.push_back(y);
  }
  return path;
}

// ---------------------------------------------------------------------------

double levy_exponential_moment(const LevyIncrement& inc, double pbar) {
  require(inc.variance >= 0.0 && inc.jump_rate >= 0.0 && inc.jump_std >= 0.0,
          "levy_exponential_moment: negative variance or jump rate");
  require(std::isfinite(pbar), "levy_exponential_moment: pbar must be finite");
  const double jump_mgf = std::exp(pbar * inc.jump_mean + 0.5 * pbar * pbar * inc.jump_std * inc.jump_std);
  const double exponent =
      0.5 * pbar * pbar * inc.variance + pbar * inc.gamma + inc.jump_rate * (jump_mgf - 1.0);
  const double value = std::exp(exponent);
  if (!std::isfinite(value) || !std::isfinite(jump_mgf)) {
    throw DomainError("levy_exponential_moment: moment of order " + std::to_string(pbar) + " diverges");
  }
  return value;
}

LevyIncrement exp_levy_increment(const ExpLevyParams& params, std::size_t coordinate) {
  require(coordinate < params.dim, "exp_levy_increment: coordinate out of range");
  const auto mu = broadcast(params.drift.empty() ? std::vector<double>{0.0} : params.drift, params.dim, "drift");
  const auto sigma = broadcast(params.volatility.empty() ? std::vector<double>{0.0} : params.volatility,
                               params.dim, "volatility");
  const double kappa = std::exp(params.jump_mean + 0.5 * params.jump_std * params.jump_std) - 1.0;
  const double s = sigma[coordinate];
  LevyIncrement inc;
  inc.gamma = (mu[coordinate] - 0.5 * s * s - params.jump_intensity * kappa) * params.step;
  inc.variance = s * s * params.step;
  inc.jump_rate = params.jump_intensity * params.step;
  inc.jump_mean = params.jump_mean;
  inc.jump_std = params.jump_std;
  return inc;
}

EtaNetwork exp_levy_eta(std::size_t dim, double beta, double eps) {
  require(dim >= 1, "exp_levy_eta: dimension must be >= 1");
  require(eps > 0.0 && eps <= 1.0, "exp_levy_eta: eps must lie in (0, 1]");
  require(beta >= 0.0 && std::isfinite(beta), "exp_levy_eta: beta must be nonnegative");
  const double bound = std::pow(eps, -beta);
  const NeuralNetwork prod = approx::product_network(eps, bound);
  const std::vector<NeuralNetwork> copies(dim, prod);
  const NeuralNetwork stacked = relu::parallelize_separate(copies);
  std::vector<std::size_t> perm(2 * dim);
  for (std::size_t i = 0; i < dim; ++i) {
    perm[i] = 2 * i;
    perm[dim + i] = 2 * i + 1;
  }
  EtaNetwork out{relu::permute_inputs(stacked, perm), {}};
  auto& c = out.certificate;
  c.epsilon = eps;
  c.region_halfwidth = bound;
  c.product_bound = bound;
  c.error_bound = eps * std::sqrt(static_cast<double>(dim));
  c.lipschitz_bound = std::sqrt(2.0) * bound * approx::kProductLipschitzConstant;
  c.lipschitz_convention = relu::LipschitzConvention::euclidean;
  c.size = out.network.size();
  return out;
}

MarkovModel exp_levy_model(const ExpLevyParams& params) {
  const std::size_t d = params.dim;
  require(d >= 1, "exp_levy_model: dimension must be >= 1");
  require(params.horizon >= 1, "exp_levy_model: horizon must be >= 1");
  require(params.step > 0.0 && std::isfinite(params.step), "exp_levy_model: step must be positive");
  require(params.jump_intensity >= 0.0 && params.jump_std >= 0.0,
          "exp_levy_model: jump intensity and jump std must be nonnegative");
  require(std::isfinite(params.correlation) && std::isfinite(params.jump_mean) &&
              std::isfinite(params.jump_intensity) && std::isfinite(params.jump_std),
          "exp_levy_model: non-finite parameter");
  const auto sigma = broadcast(params.volatility.empty() ? std::vector<double>{0.0} : params.volatility, d,
                               "volatility");
  for (double s : sigma) require(s >= 0.0 && std::isfinite(s), "exp_levy_model: volatility must be >= 0");
  require_finite(broadcast(params.drift.empty() ? std::vector<double>{0.0} : params.drift, d, "drift"),
                 "drift");

  // Gaussian factor of the correlation matrix rho 11^T + (1 - rho) I.
  Matrix corr = Matrix::Constant(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d), params.correlation);
  corr.diagonal().setOnes();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(corr);
  if (eig.eigenvalues().minCoeff() < -1e-12) {
    throw InputError("exp_levy_model: correlation " + std::to_string(params.correlation) +
                     " gives a covariance that is not positive semidefinite");
  }
  const Matrix factor =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  std::vector<LevyIncrement> inc(d);
  for (std::size_t i = 0; i < d; ++i) inc[i] = exp_levy_increment(params, i);

  MarkovModel m;
  m.family = params.jump_intensity > 0.0 ? "merton" : "black_scholes";
  m.dim = d;
  m.horizon = params.horizon;
  m.x0 = broadcast(params.x0.empty() ? std::vector<double>{1.0} : params.x0, d, "x0");
  require_finite(m.x0, "x0");
  m.support = NoiseSupport::continuous;
  m.update = [](int, std::span<const double> x, std::span<const double> y, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  };
  const bool correlated = params.correlation != 0.0 && d > 1;
  m.sample_noise = [inc, factor, correlated, d](int, StreamRng& rng, std::span<double> y) {
    Vector z(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    if (correlated) z = factor * z;
    for (std::size_t i = 0; i < d; ++i) {
      double log_y = inc[i].gamma + std::sqrt(inc[i].variance) * z(static_cast<Eigen::Index>(i));
      if (inc[i].jump_rate > 0.0) {
        const int n = rng.poisson(inc[i].jump_rate);
        if (n > 0) {
          log_y += n * inc[i].jump_mean + std::sqrt(static_cast<double>(n)) * inc[i].jump_std * rng.normal();
        }
      }
      y[i] = std::exp(log_y);
    }
  };
  const double beta = params.beta.value_or(default_levy_beta(params.horizon));
  require(beta >= 0.0, "exp_levy_model: beta must be nonnegative");
  m.eta = [d, beta](int, double eps) { return exp_levy_eta(d, beta, eps); };
  m.exact_update = [](int, std::span<const double> y) { return diagonal_network(y); };
  m.constants.beta = beta;
  m.constants.zeta = beta;
  m.constants.theta = beta;
  m.constants.c = 1.0;
  m.constants.q = 0.0;
  m.constants.p = 2.0;
  m.growth_envelope = [](std::span<const double> x, std::span<const double> y) {
    return 0.5 * (norm(x) * norm(x) + norm(y) * norm(y));
  };
  double max_second = 0.0;
  for (const auto& i : inc) max_second = std::max(max_second, levy_exponential_moment(i, 2.0));
  m.second_moment_step = [max_second](int, double s) { return s * std::sqrt(max_second); };
  m.noise_coordinate_moment = [inc](int, std::size_t i, double pbar) -> std::optional<double> {
    if (i >= inc.size()) return std::nullopt;
    return levy_exponential_moment(inc[i], pbar);
  };
  m.noise_norm_moment = [inc, d](int, double pbar) -> std::optional<double> {
    if (d != 1) return std::nullopt;
    return levy_exponential_moment(inc[0], pbar);
  };
  // Power-mean for pbar >= 2, Jensen on E||Y||^2 below.
  m.noise_moment_envelope = [inc, d](int, double pbar) {
    require(pbar >= 0.0, "noise moment envelope: pbar must be >= 0");
    const double dd = static_cast<double>(d);
    double worst = 0.0;
    if (pbar >= 2.0) {
      for (const auto& i : inc) worst = std::max(worst, levy_exponential_moment(i, pbar));
      return std::pow(dd, 0.5 * pbar) * worst;
    }
    for (const auto& i : inc) worst = std::max(worst, levy_exponential_moment(i, 2.0));
    return std::pow(dd * worst, 0.5 * pbar);
  };
  return m;
}

// ---------------------------------------------------------------------------

namespace {

void check_coefficients(const AffineCoefficients& c, std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  require(c.drift_const.size() == n, "diffusion: drift constant must have d entries");
  require(c.drift_linear.rows() == n && c.drift_linear.cols() == n, "diffusion: drift matrix must be d x d");
  require(c.vol_const.rows() == n && c.vol_const.cols() == n, "diffusion: volatility constant must be d x d");
  require(c.vol_linear.rows() == n * n && c.vol_linear.cols() == n,
          "diffusion: volatility slope must be (d*d) x d");
  require(c.drift_const.allFinite() && c.drift_linear.allFinite() && c.vol_const.allFinite() &&
              c.vol_linear.allFinite(),
          "diffusion: non-finite coefficient");
}

double spectral(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

}  // namespace

EtaNetwork discrete_diffusion_eta(const AffineCoefficients& coef, double delta, double beta, double eps) {
  const std::size_t d = static_cast<std::size_t>(coef.drift_const.size());
  require(d >= 1, "discrete_diffusion_eta: empty coefficients");
  check_coefficients(coef, d);
  require(eps > 0.0 && eps <= 1.0, "discrete_diffusion_eta: eps must lie in (0, 1]");
  require(delta > 0.0, "discrete_diffusion_eta: step must be positive");
  require(beta >= 0.0, "discrete_diffusion_eta: beta must be nonnegative");
  const auto n = static_cast<Eigen::Index>(d);
  const double region = std::pow(eps, -beta);

  double coef_scale = 0.0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double slope = coef.vol_linear.row(i * n + j).lpNorm<1>();
      coef_scale = std::max({coef_scale, std::abs(coef.vol_const(i, j)), slope});
      if (slope != 0.0) pairs.emplace_back(i, j);
    }
  }
  const double bound = 4.0 * std::max(coef_scale, 1.0) * std::sqrt(static_cast<double>(d)) * region;

  const Matrix drift_map = Matrix::Identity(n, n) + delta * coef.drift_linear;
  EtaNetwork out{relu::affine_network(Matrix::Zero(1, 1), Vector::Zero(1)), {}};
  auto& cert = out.certificate;
  cert.epsilon = eps;
  cert.region_halfwidth = region;
  cert.lipschitz_convention = relu::LipschitzConvention::sum_of_blocks;

  // Entries of sigma that do not depend on x enter linearly in y.
  Matrix const_vol = coef.vol_const;
  for (const auto& [i, j] : pairs) const_vol(i, j) = 0.0;

  if (pairs.empty()) {
    Matrix w = Matrix::Zero(n, 2 * n);
    w.leftCols(n) = drift_map;
    w.rightCols(n) = const_vol;
    out.network = relu::affine_network(w, delta * coef.drift_const);
    cert.error_bound = 0.0;
    cert.lipschitz_bound = spectral(drift_map) + spectral(const_vol);
    cert.size = out.network.size();
    return out;
  }

  const auto np = static_cast<Eigen::Index>(pairs.size());
  // (x, y) -> (x + mu(x) delta, (sigma_ij(x), y_j) for each active pair)
  Matrix a = Matrix::Zero(n + 2 * np, 2 * n);
  Vector b = Vector::Zero(n + 2 * np);
  a.topLeftCorner(n, n) = drift_map;
  a.block(0, n, n, n) = const_vol;
  b.head(n) = delta * coef.drift_const;
  for (Eigen::Index p = 0; p < np; ++p) {
    const auto [i, j] = pairs[static_cast<std::size_t>(p)];
    a.block(n + 2 * p, 0, 1, n) = coef.vol_linear.row(i * n + j);
    b(n + 2 * p) = coef.vol_const(i, j);
    a(n + 2 * p + 1, n + j) = 1.0;
  }
  const NeuralNetwork prod = approx::product_network(eps, bound);
  std::vector<NeuralNetwork> blocks;
  blocks.reserve(pairs.size() + 1);
  blocks.push_back(relu::identity_network(d, prod.depth()));
  for (std::size_t p = 0; p < pairs.size(); ++p) blocks.push_back(prod);
  const NeuralNetwork middle = relu::parallelize_separate(blocks);

  Matrix s = Matrix::Zero(n, n + np);
  s.leftCols(n).setIdentity();
  for (Eigen::Index p = 0; p < np; ++p) s(pairs[static_cast<std::size_t>(p)].first, n + p) = 1.0;

  out.network = relu::compose(relu::affine_network(s, Vector::Zero(n)),
                              relu::compose(middle, relu::affine_network(a, b)));
  const double dd = static_cast<double>(d);
  cert.product_bound = bound;
  cert.error_bound = eps * std::pow(dd, 1.5);
  cert.lipschitz_bound = spectral(drift_map) + spectral(const_vol) + approx::kProductLipschitzConstant * bound * std::sqrt(dd) *
                                                   (coef.vol_linear.norm() + std::sqrt(dd));
  cert.size = out.network.size();
  return out;
}

MarkovModel discrete_diffusion_model(const DiffusionParams& params) {
  const std::size_t d = params.dim;
  require(d >= 1, "discrete_diffusion_model: dimension must be >= 1");
  require(params.time_grid.size() >= 2, "discrete_diffusion_model: time grid needs at least 2 points");
  require_finite(params.time_grid, "time grid");
  require(params.time_grid.front() >= 0.0, "discrete_diffusion_model: time grid must start at >= 0");
  for (std::size_t i = 1; i < params.time_grid.size(); ++i) {
    if (!(params.time_grid[i] > params.time_grid[i - 1])) {
      throw InputError("discrete_diffusion_model: time grid must be strictly increasing (point " +
                       std::to_string(i) + ")");
    }
  }
  check_coefficients(params.coefficients, d);
  const int horizon = static_cast<int>(params.time_grid.size()) - 1;
  std::vector<double> deltas(static_cast<std::size_t>(horizon));
  for (int t = 0; t < horizon; ++t) {
    deltas[static_cast<std::size_t>(t)] = params.time_grid[static_cast<std::size_t>(t) + 1] -
                                          params.time_grid[static_cast<std::size_t>(t)];
  }
  const double max_delta = *std::max_element(deltas.begin(), deltas.end());
  const auto coef = params.coefficients;
  const auto n = static_cast<Eigen::Index>(d);

  MarkovModel m;
  m.family = "diffusion";
  m.dim = d;
  m.horizon = horizon;
  m.x0 = broadcast(params.x0.empty() ? std::vector<double>{0.0} : params.x0, d, "x0");
  require_finite(m.x0, "x0");
  m.support = NoiseSupport::continuous;
  m.update = [coef, deltas, n](int t, std::span<const double> x, std::span<const double> y, std::span<double> out) {
    const double delta = deltas.at(static_cast<std::size_t>(t));
    const Eigen::Map<const Vector> xv(x.data(), n);
    const Eigen::Map<const Vector> yv(y.data(), n);
    Vector r = xv + delta * (coef.drift_const + coef.drift_linear * xv);
    const Vector slope = coef.vol_linear * xv;
    for (Eigen::Index i = 0; i < n; ++i) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) acc += (coef.vol_const(i, j) + slope(i * n + j)) * yv(j);
      r(i) += acc;
    }
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = r(i);
  };
  m.sample_noise = [deltas](int t, StreamRng& rng, std::span<double> y) {
    const double s = std::sqrt(deltas.at(static_cast<std::size_t>(t)));
    for (double& v : y) v = s * rng.normal();
  };
  m.exact_update = [coef, deltas, n](int t, std::span<const double> y) {
    const double delta = deltas.at(static_cast<std::size_t>(t));
    Matrix w = Matrix::Identity(n, n) + delta * coef.drift_linear;
    Vector b = delta * coef.drift_const;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double yj = y[static_cast<std::size_t>(j)];
        w.row(i) += yj * coef.vol_linear.row(i * n + j);
        b(i) += yj * coef.vol_const(i, j);
      }
    }
    return relu::affine_network(w, b);
  };
  const double beta = params.beta.value_or(horizon == 1 ? 1.0 : 1.0 / (2.0 * (horizon - 1)));
  require(beta >= 0.0, "discrete_diffusion_model: beta must be nonnegative");
  m.eta = [coef, deltas, beta](int t, double eps) {
    return discrete_diffusion_eta(coef, deltas.at(static_cast<std::size_t>(t)), beta, eps);
  };
  m.constants.beta = beta;
  m.constants.c = 1.0;
  m.constants.q = 0.0;
  m.constants.p = 1.0;

  const double b_norm = spectral(coef.drift_linear);
  const double a_norm = coef.drift_const.norm();
  const double c_norm = coef.vol_const.norm();
  const double d_norm = coef.vol_linear.norm();
  m.growth_envelope = [=](std::span<const double> x, std::span<const double> y) {
    const double nx = norm(x), ny = norm(y);
    return (1.0 + max_delta * b_norm) * nx + max_delta * a_norm + (c_norm + d_norm * nx) * ny;
  };
  m.second_moment_step = [=](int t, double s) {
    const double delta = deltas.at(static_cast<std::size_t>(t));
    const double drift = (1.0 + delta * b_norm) * s + delta * a_norm;
    const double vol = c_norm + d_norm * s;
    return std::sqrt(drift * drift + delta * vol * vol);
  };
  m.noise_norm_moment = [deltas, d](int t, double pbar) -> std::optional<double> {
    const double dd = static_cast<double>(d);
    if (pbar <= -dd) throw DomainError("noise moment of order " + std::to_string(pbar) + " diverges");
    const double delta = deltas.at(static_cast<std::size_t>(t));
    return std::pow(2.0 * delta, 0.5 * pbar) * std::exp(std::lgamma(0.5 * (dd + pbar)) - std::lgamma(0.5 * dd));
  };
  m.noise_coordinate_moment = [](int, std::size_t, double) -> std::optional<double> { return std::nullopt; };
  m.noise_moment_envelope = [deltas, d](int t, double pbar) {
    require(pbar >= 0.0, "noise moment envelope: pbar must be >= 0");
    const double delta = deltas.at(static_cast<std::size_t>(t));
    return std::pow(delta * (static_cast<double>(d) + std::max(pbar, 2.0)), 0.5 * pbar);
  };
  return m;
}

// ---------------------------------------------------------------------------

namespace {

NeuralNetwork extreme_k(ExtremeMode mode, std::size_t k) {
  return mode == ExtremeMode::min ? relu::min_k(k) : relu::max_k(k);
}

// (w, e) in R^{b+1} -> (w, extreme(extreme_j w_j, e))
NeuralNetwork extreme_head(ExtremeMode mode, std::size_t b) {
  const std::vector<NeuralNetwork> inner_parts{extreme_k(mode, b), relu::identity_network(1, 1)};
  const auto synced = relu::depth_sync(inner_parts);
  const NeuralNetwork inner = relu::parallelize_separate(synced);
  const NeuralNetwork last = relu::compose(mode == ExtremeMode::min ? relu::min2() : relu::max2(), inner);
  const auto keep = iota_indices(0, b);
  const std::vector<NeuralNetwork> heads{relu::select_network(b + 1, keep), last};
  return relu::parallelize_shared(relu::depth_sync(heads));
}

}  // namespace

MarkovModel augment_running_extreme(const MarkovModel& base, ExtremeMode mode) {
  const std::size_t b = base.dim;
  const std::size_t d = b + 1;
  require(d >= 2, "augment_running_extreme: augmented dimension must be >= 2");
  const bool is_min = mode == ExtremeMode::min;
  auto extreme = [is_min](double u, double v) { return is_min ? std::min(u, v) : std::max(u, v); };

  MarkovModel m;
  m.family = base.family + (is_min ? "+running_min" : "+running_max");
  m.dim = d;
  m.horizon = base.horizon;
  m.x0 = base.x0;
  m.x0.push_back(is_min ? *std::min_element(base.x0.begin(), base.x0.end())
                        : *std::max_element(base.x0.begin(), base.x0.end()));
  m.support = base.support;
  for (const auto& a : base.atoms) {
    Atom aug = a;
    aug.value.push_back(0.0);
    m.atoms.push_back(std::move(aug));
  }
  const auto base_update = base.update;
  m.update = [base_update, b, extreme](int t, std::span<const double> x, std::span<const double> y,
                                       std::span<double> out) {
    base_update(t, x.first(b), y.first(b), out.first(b));
    double e = out[0];
    for (std::size_t j = 1; j < b; ++j) e = extreme(e, out[j]);
    out[b] = extreme(e, x[b]);
  };
  const auto base_sampler = base.sample_noise;
  m.sample_noise = [base_sampler, b](int t, StreamRng& rng, std::span<double> y) {
    base_sampler(t, rng, y.first(b));
    y[b] = 0.0;
  };
  if (base.eta) {
    const auto base_eta = base.eta;
    m.eta = [base_eta, b, d, mode](int t, double eps) {
      const EtaNetwork inner = base_eta(t, eps);
      std::vector<std::size_t> xy = iota_indices(0, b);
      const auto ys = iota_indices(b + 1, 2 * b + 1);
      xy.insert(xy.end(), ys.begin(), ys.end());
      const std::size_t e_index = b;
      const std::vector<NeuralNetwork> parts{relu::compose(inner.network, relu::select_network(2 * d, xy)),
                                             relu::select_network(2 * d, std::span(&e_index, 1))};
      const NeuralNetwork gather = relu::parallelize_shared(relu::depth_sync(parts));
      EtaNetwork out{relu::compose(extreme_head(mode, b), gather), inner.certificate};
      out.certificate.error_bound = std::sqrt(2.0) * inner.certificate.error_bound;
      out.certificate.lipschitz_bound = 2.0 * inner.certificate.lipschitz_bound + 1.0;
      out.certificate.size = out.network.size();
      return out;
    };
  }
  if (base.exact_update) {
    const auto base_exact = base.exact_update;
    m.exact_update = [base_exact, b, mode](int t, std::span<const double> y) {
      const NeuralNetwork f = base_exact(t, y.first(b));
      const std::size_t e_index = b;
      const std::vector<NeuralNetwork> parts{relu::compose(f, relu::select_network(b + 1, iota_indices(0, b))),
                                             relu::select_network(b + 1, std::span(&e_index, 1))};
      return relu::compose(extreme_head(mode, b), relu::parallelize_shared(relu::depth_sync(parts)));
    };
  }
  m.constants = base.constants;
  const auto base_env = base.growth_envelope;
  m.growth_envelope = [base_env, b](std::span<const double> x, std::span<const double> y) {
    return 2.0 * base_env(x.first(b), y.first(b)) + std::abs(x[b]);
  };
  const auto base_step = base.second_moment_step;
  m.second_moment_step = [base_step](int t, double s) {
    const double next = base_step(t, s);
    return std::sqrt(2.0 * next * next + s * s);
  };
  m.noise_norm_moment = base.noise_norm_moment;
  m.noise_moment_envelope = base.noise_moment_envelope;
  const auto base_coord = base.noise_coordinate_moment;
  m.noise_coordinate_moment = [base_coord, b](int t, std::size_t i, double pbar) -> std::optional<double> {
    if (i >= b || !base_coord) return std::nullopt;
    return base_coord(t, i, pbar);
  };
  return m;
}

// ---------------------------------------------------------------------------

namespace {

void check_atoms(const std::vector<Atom>& atoms, std::size_t d) {
  require(!atoms.empty(), "finite noise: at least one atom required");
  double total = 0.0;
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    require(atoms[a].value.size() == d,
            "finite noise: atom " + std::to_string(a) + " has " + std::to_string(atoms[a].value.size()) +
                " values, expected " + std::to_string(d));
    require_finite(atoms[a].value, "atom");
    require(atoms[a].probability >= 0.0 && std::isfinite(atoms[a].probability),
            "finite noise: atom " + std::to_string(a) + " has an invalid probability");
    total += atoms[a].probability;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw InputError("finite noise: probabilities sum to " + std::to_string(total) + ", expected 1");
  }
}

}  // namespace

MarkovModel finite_noise_model(const FiniteNoiseParams& params) {
  const std::size_t d = params.dim;
  require(d >= 1, "finite_noise_model: dimension must be >= 1");
  require(params.horizon >= 1, "finite_noise_model: horizon must be >= 1");
  check_atoms(params.atoms, d);
  const bool mult = params.update == FiniteUpdate::multiplicative;

  MarkovModel m;
  m.family = mult ? "finite_multiplicative" : "finite_additive";
  m.dim = d;
  m.horizon = params.horizon;
  m.x0 = broadcast(params.x0.empty() ? std::vector<double>{1.0} : params.x0, d, "x0");
  require_finite(m.x0, "x0");
  m.support = NoiseSupport::finite;
  m.atoms = params.atoms;
  if (mult) {
    m.update = [](int, std::span<const double> x, std::span<const double> y, std::span<double> out) {
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    };
    m.exact_update = [](int, std::span<const double> y) { return diagonal_network(y); };
  } else {
    m.update = [](int, std::span<const double> x, std::span<const double> y, std::span<double> out) {
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    };
    m.exact_update = [](int, std::span<const double> y) { return translation_network(y); };
  }
  const auto atoms = params.atoms;
  m.sample_noise = [atoms, d](int, StreamRng& rng, std::span<double> y) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = atoms.size() - 1;
    for (std::size_t a = 0; a < atoms.size(); ++a) {
      acc += atoms[a].probability;
      if (u < acc) {
        pick = a;
        break;
      }
    }
    std::copy_n(atoms[pick].value.begin(), d, y.begin());
  };
  const double beta = params.beta.value_or(default_levy_beta(params.horizon));
  m.constants.beta = beta;
  if (mult) {
    m.eta = [d, beta](int, double eps) { return exp_levy_eta(d, beta, eps); };
  } else {
    m.eta = [d](int, double eps) {
      const auto n = static_cast<Eigen::Index>(d);
      Matrix w(n, 2 * n);
      w << Matrix::Identity(n, n), Matrix::Identity(n, n);
      EtaNetwork out{relu::affine_network(w, Vector::Zero(n)), {}};
      out.certificate.epsilon = eps;
      out.certificate.region_halfwidth = std::numeric_limits<double>::infinity();
      out.certificate.lipschitz_bound = std::sqrt(2.0);
      out.certificate.size = out.network.size();
      return out;
    };
  }

  double max_coord_second = 0.0;
  double norm_second = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0.0;
    for (const auto& a : atoms) s += a.probability * a.value[i] * a.value[i];
    max_coord_second = std::max(max_coord_second, s);
    norm_second += s;
  }
  if (mult) {
    m.growth_envelope = [](std::span<const double> x, std::span<const double> y) { return norm(x) * norm(y); };
    m.second_moment_step = [max_coord_second](int, double s) { return s * std::sqrt(max_coord_second); };
  } else {
    m.growth_envelope = [](std::span<const double> x, std::span<const double> y) { return norm(x) + norm(y); };
    m.second_moment_step = [norm_second](int, double s) { return s + std::sqrt(norm_second); };
  }
  m.noise_norm_moment = [atoms](int, double pbar) -> std::optional<double> {
    double s = 0.0;
    for (const auto& a : atoms) {
      if (a.probability == 0.0) continue;
      const double r = norm(a.value);
      if (r == 0.0 && pbar < 0.0) throw DomainError("noise moment of negative order at a zero atom");
      s += a.probability * std::pow(r, pbar);
    }
    return s;
  };
  m.noise_moment_envelope = [atoms](int, double pbar) {
    require(pbar >= 0.0, "noise moment envelope: pbar must be >= 0");
    double worst = 0.0;
    for (const auto& a : atoms) {
      if (a.probability > 0.0) worst = std::max(worst, std::pow(norm(a.value), pbar));
    }
    return worst;
  };
  m.noise_coordinate_moment = [atoms](int, std::size_t i, double pbar) -> std::optional<double> {
    double s = 0.0;
    for (const auto& a : atoms) {
      if (a.probability == 0.0) continue;
      const double v = std::pow(a.value.at(i), pbar);
      if (!std::isfinite(v)) return std::nullopt;
      s += a.probability * v;
    }
    return s;
  };
  return m;
}

std::vector<Atom> parse_atoms(const std::string& text) {
  std::vector<Atom> atoms;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::vector<double> values;
    std::string tok;
    while (fields >> tok) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        throw InputError("atoms line " + std::to_string(lineno) + ": cannot parse '" + tok + "'");
      }
      values.push_back(v);
    }
    if (values.empty()) continue;
    if (values.size() < 2) {
      throw InputError("atoms line " + std::to_string(lineno) + ": need at least one value and a probability");
    }
    if (width == 0) width = values.size();
    if (values.size() != width) {
      throw InputError("atoms line " + std::to_string(lineno) + ": expected " + std::to_string(width) +
                       " columns, got " + std::to_string(values.size()));
    }
    Atom a;
    a.probability = values.back();
    values.pop_back();
    a.value = std::move(values);
    atoms.push_back(std::move(a));
  }
  if (atoms.empty()) throw InputError("atoms: no atom rows found");
  return atoms;
}

std::vector<Atom> load_atoms(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open atoms file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_atoms(ss.str());
}

MarkovModel binomial_surrogate_model(double s0, double rate, double volatility, double step, int horizon) {
  require(s0 > 0.0 && volatility > 0.0 && step > 0.0 && rate >= 0.0,
          "binomial_surrogate_model: need s0 > 0, volatility > 0, step > 0, rate >= 0");
  const double u = std::exp(volatility * std::sqrt(step));
  const double dn = 1.0 / u;
  const double p = (std::exp(rate * step) - dn) / (u - dn);
  require(p > 0.0 && p < 1.0, "binomial_surrogate_model: risk-neutral probability outside (0, 1)");
  FiniteNoiseParams fp;
  fp.dim = 1;
  fp.horizon = horizon;
  fp.update = FiniteUpdate::multiplicative;
  fp.atoms = {Atom{{u}, p}, Atom{{dn}, 1.0 - p}};
  fp.x0 = {s0};
  MarkovModel m = finite_noise_model(fp);
  m.family = "crr_binomial";
  return m;
}

}  // namespace optstop::markov
