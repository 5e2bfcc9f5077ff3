#include "optstop/relu/lipschitz.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "optstop/errors.hpp"

namespace optstop::relu {

double spectral_norm(const SparseMatrix& weights, int iterations, double tolerance) {
  if (weights.nonZeros() == 0) return 0.0;
  const Eigen::Index n = weights.cols();
  // Deterministic, non-symmetric start so that structured matrices (e.g. [1, -1])
  // do not annihilate it.
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + 0.5 * std::sin(1.0 + 1.7 * static_cast<double>(i));
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector wv = weights * v;
    Vector next = weights.transpose() * wv;
    const double norm = next.norm();
    if (norm == 0.0) break;
    const double estimate = std::sqrt(norm);
    next /= norm;
    const bool converged = std::abs(estimate - sigma) <= tolerance * std::max(1.0, estimate);
    sigma = estimate;
    v = std::move(next);
    if (converged) break;
  }
  // ||W v|| for the final unit vector is the Rayleigh estimate of sigma_max.
  return std::max(sigma, (weights * v).norm());
}

double lipschitz_upper_bound(const NeuralNetwork& net) {
  double bound = 1.0;
  for (const auto& layer : net.layers()) bound *= spectral_norm(layer.weights());
  return bound;
}

double empirical_lipschitz(const NeuralNetwork& net,
                           const std::function<void(std::uint64_t, std::span<double>)>& sampler,
                           std::size_t n_pairs, LipschitzConvention convention, std::size_t split) {
  const std::size_t in = net.input_dim();
  if (convention == LipschitzConvention::sum_of_blocks) {
    require(split >= 1 && split < in, "empirical_lipschitz: block split must lie inside the input");
  }
  auto distance = [&](const Vector& a, const Vector& b) {
    const Vector diff = a - b;
    if (convention == LipschitzConvention::euclidean) return diff.norm();
    const auto s = static_cast<Eigen::Index>(split);
    return diff.head(s).norm() + diff.tail(diff.size() - s).norm();
  };
  Vector a(static_cast<Eigen::Index>(in)), b(static_cast<Eigen::Index>(in));
  double best = 0.0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    sampler(2 * i, std::span<double>(a.data(), in));
    sampler(2 * i + 1, std::span<double>(b.data(), in));
    if (i % 2 == 1) {
      // Local pair: small step from a toward b.
      const double step = 1e-3;
      b = a + step * (b - a);
    }
    const double dist = distance(a, b);
    if (dist <= 0.0) continue;
    const double q = (net.evaluate(b) - net.evaluate(a)).norm() / dist;
    best = std::max(best, q);
  }
  return best;
}

}  // namespace optstop::relu
