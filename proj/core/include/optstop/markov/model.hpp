#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "optstop/markov/rng.hpp"
#include "optstop/relu/lipschitz.hpp"
#include "optstop/relu/network.hpp"

namespace optstop::markov {

enum class NoiseSupport { continuous, finite };

struct Atom {
  std::vector<double> value;
  double probability = 0.0;
};

/// What an eta network promises: ||f(x,y) - eta(x,y)|| <= error_bound whenever every
/// coordinate of (x, y) lies in [-region_halfwidth, region_halfwidth].
struct EtaCertificate {
  double epsilon = 0.0;
  double region_halfwidth = 0.0;
  double product_bound = 0.0;  ///< M of the product blocks
  double error_bound = 0.0;
  double lipschitz_bound = 0.0;
  relu::LipschitzConvention lipschitz_convention = relu::LipschitzConvention::euclidean;
  std::size_t size = 0;
};

struct EtaNetwork {
  relu::NeuralNetwork network;  ///< R^{2d} -> R^d, inputs ordered (x, y)
  EtaCertificate certificate;
};

/// Declared constants carried as metadata. Only spot-checked.
struct ModelConstants {
  double p = 1.0;
  double c = 1.0;
  double q = 0.0;
  double beta = 1.0;
  double zeta = 0.0;
  double theta = 0.0;
  double m = 1.0;
};

/// Discrete-time Markov driver X_{t+1} = f_t(X_t, Y_t) with independent noise Y_t in R^d.
struct MarkovModel {
  using Update = std::function<void(int, std::span<const double>, std::span<const double>, std::span<double>)>;
  using NoiseSampler = std::function<void(int, StreamRng&, std::span<double>)>;
  using EtaBuilder = std::function<EtaNetwork(int, double)>;
  using ExactUpdate = std::function<relu::NeuralNetwork(int, std::span<const double>)>;

  std::string family;
  std::size_t dim = 1;
  int horizon = 1;
  std::vector<double> x0;
  NoiseSupport support = NoiseSupport::continuous;
  std::vector<Atom> atoms;  ///< finite support only
  Update update;
  NoiseSampler sample_noise;
  EtaBuilder eta;             ///< optional
  ExactUpdate exact_update;   ///< optional: network realizing x -> f_t(x, y) for fixed y
  ModelConstants constants;

  /// Declared envelope E(x, y) with ||f_t(x, y)|| <= E(x, y).
  std::function<double(std::span<const double>, std::span<const double>)> growth_envelope;
  /// Maps a bound on (E||X_t||^2)^{1/2} to a bound on (E||X_{t+1}||^2)^{1/2}.
  std::function<double(int, double)> second_moment_step;
  /// Closed-form E||Y_t||^pbar where known.
  std::function<std::optional<double>(int, double)> noise_norm_moment;
  /// Declared bound on E||Y_t||^pbar of the form c d^q.
  std::function<double(int, double)> noise_moment_envelope;
  /// Closed-form E[Y_{t,i}^pbar] where known.
  std::function<std::optional<double>(int, std::size_t, double)> noise_coordinate_moment;

  [[nodiscard]] std::vector<double> step(int t, std::span<const double> x, std::span<const double> y) const;
  /// Atom index drawn with the model's atom probabilities (finite support only).
  [[nodiscard]] std::size_t draw_atom(StreamRng& rng) const;
  [[nodiscard]] bool has_eta() const { return static_cast<bool>(eta); }
  [[nodiscard]] bool has_exact_update() const { return static_cast<bool>(exact_update); }
};

struct SampledPath {
  std::vector<std::vector<double>> states;  ///< T+1 states
  std::vector<std::vector<double>> noise;   ///< T noise vectors
};

/// Path number `index` under `seed`; step t uses the stream (seed, path, t, index).
SampledPath sample_path(const MarkovModel& model, std::span<const double> x0, std::uint64_t seed,
                        std::uint64_t index = 0);

// ---------------------------------------------------------------------------
// Exponential Levy

/// One-step log increment gamma + sqrt(A) Z + sum_{k <= Poisson(lambda)} J_k, J_k ~ N(jump_mean, jump_std^2).
struct LevyIncrement {
  double gamma = 0.0;
  double variance = 0.0;
  double jump_rate = 0.0;  ///< Poisson mean per step
  double jump_mean = 0.0;
  double jump_std = 0.0;
};

/// E[exp(pbar * L)] for one-step increment L.
double levy_exponential_moment(const LevyIncrement& inc, double pbar);

struct ExpLevyParams {
  std::size_t dim = 1;
  int horizon = 1;
  double step = 1.0;                 ///< Delta
  std::vector<double> drift;         ///< mu per coordinate (size 1 broadcasts)
  std::vector<double> volatility;    ///< sigma per coordinate (size 1 broadcasts)
  double correlation = 0.0;          ///< constant pairwise correlation of the Gaussian parts
  double jump_intensity = 0.0;       ///< Merton lambda per unit time
  double jump_mean = 0.0;
  double jump_std = 0.0;
  std::vector<double> x0;            ///< size 1 broadcasts
  std::optional<double> beta;        ///< defaults to 1/T
};

/// f_t(x, y) = (x_1 y_1, ..., x_d y_d), Y_{t,i} = exp(L increment). Mean of Y_i is exp(mu_i Delta).
MarkovModel exp_levy_model(const ExpLevyParams& params);
LevyIncrement exp_levy_increment(const ExpLevyParams& params, std::size_t coordinate);

/// d parallel product networks n_{eps,M}, M = eps^{-beta}, inputs paired as (x_i, y_i).
EtaNetwork exp_levy_eta(std::size_t dim, double beta, double eps);

// ---------------------------------------------------------------------------
// Discrete diffusion with affine coefficients

struct AffineCoefficients {
  relu::Vector drift_const;   ///< a, mu(x) = a + B x
  relu::Matrix drift_linear;  ///< B (d x d)
  relu::Matrix vol_const;     ///< C, sigma_ij(x) = C_ij + D_(i*d+j) . x
  relu::Matrix vol_linear;    ///< D ((d*d) x d)
};

struct DiffusionParams {
  std::size_t dim = 1;
  std::vector<double> time_grid;  ///< T+1 strictly increasing points
  AffineCoefficients coefficients;
  std::vector<double> x0;
  std::optional<double> beta;     ///< defaults to 1/(2(T-1)), or 1 when T = 1
};

/// f_t(x, y) = x + mu(x) Delta_t + sigma(x) y with y ~ N(0, Delta_t I).
MarkovModel discrete_diffusion_model(const DiffusionParams& params);

/// eta_i(x, y) = x_i + mu_i(x) Delta_t + sum_j n_{eps,M}(sigma_ij(x), y_j).
EtaNetwork discrete_diffusion_eta(const AffineCoefficients& coefficients, double delta, double beta,
                                  double eps);

// ---------------------------------------------------------------------------
// Running extreme augmentation

enum class ExtremeMode { min, max };

/// State (X, E) in R^{d_base + 1} where E_{t+1} = extreme(extreme_j X_{t+1,j}, E_t).
/// Noise is (Y, 0); the initial extra coordinate is the extreme of x0.
MarkovModel augment_running_extreme(const MarkovModel& base, ExtremeMode mode);

// ---------------------------------------------------------------------------
// Finite noise

enum class FiniteUpdate { multiplicative, additive };

struct FiniteNoiseParams {
  std::size_t dim = 1;
  int horizon = 1;
  FiniteUpdate update = FiniteUpdate::multiplicative;
  std::vector<Atom> atoms;
  std::vector<double> x0;
  std::optional<double> beta;
};

MarkovModel finite_noise_model(const FiniteNoiseParams& params);

/// One atom per non-empty row: d values followed by the probability. '#' starts a comment.
std::vector<Atom> load_atoms(const std::string& path);
std::vector<Atom> parse_atoms(const std::string& text);

/// Cox-Ross-Rubinstein one-period multiplicative model for a single asset:
/// u = exp(sigma sqrt(Delta)), d = 1/u, p = (exp(r Delta) - d) / (u - d).
MarkovModel binomial_surrogate_model(double s0, double rate, double volatility, double step, int horizon);

}  // namespace optstop::markov
