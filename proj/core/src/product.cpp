#include "optstop/approx/product.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "optstop/errors.hpp"
#include "optstop/markov/rng.hpp"
#include "optstop/relu/calculus.hpp"

namespace optstop::approx {

using relu::AffineLayer;
using relu::Matrix;
using relu::NeuralNetwork;
using relu::SparseMatrix;
using relu::Vector;

ProductNetSpec ProductNetSpec::make(double epsilon, double bound) {
  require(epsilon > 0.0 && epsilon <= 1.0, "product_network: eps must lie in (0, 1]");
  require(bound >= 1.0 && std::isfinite(bound), "product_network: M must be >= 1");
  ProductNetSpec spec;
  spec.epsilon = epsilon;
  spec.bound = bound;
  spec.base_epsilon = epsilon / (3.0 * bound * bound);
  spec.sawtooth_depth = squaring_depth(spec.base_epsilon / 2.0);
  return spec;
}

int squaring_depth(double eps) {
  require(eps > 0.0, "squaring_depth: eps must be positive");
  int m = 0;
  while (std::ldexp(1.0, -2 * m - 2) > eps) ++m;
  return m;
}

NeuralNetwork squaring_network_depth(int m) {
  require(m >= 0 && m <= 30, "squaring_network: depth out of range");
  using T = Eigen::Triplet<double>;
  if (m == 0) return relu::identity_network(1, 1);

  std::vector<AffineLayer> layers;
  // Layer 1 units: [relu(z), relu(z - 1/2), relu(z - 1), relu(-z)]; carry s_0 = u0 - u3.
  {
    std::vector<T> t{{0, 0, 1.0}, {1, 0, 1.0}, {2, 0, 1.0}, {3, 0, -1.0}};
    SparseMatrix w(4, 1);
    w.setFromTriplets(t.begin(), t.end());
    Vector b(4);
    b << 0.0, -0.5, -1.0, 0.0;
    layers.emplace_back(std::move(w), std::move(b));
  }
  // Positions of the hat units (a, b, c) and the carry pair (p, q) in the previous layer.
  std::array<Eigen::Index, 3> hat{0, 1, 2};
  Eigen::Index p = 0, q = 3;
  double scale = 0.25;  // 4^-k
  for (int k = 1; k < m; ++k) {
    // g_k = 2a - 4b + 2c ; s_k = (p - q) - g_k * 4^-k
    std::vector<T> t;
    const Eigen::Index in = layers.back().weights().rows();
    for (Eigen::Index r = 0; r < 3; ++r) {
      t.emplace_back(r, hat[0], 2.0);
      t.emplace_back(r, hat[1], -4.0);
      t.emplace_back(r, hat[2], 2.0);
    }
    for (int sign = 0; sign < 2; ++sign) {
      const double s = sign == 0 ? 1.0 : -1.0;
      const Eigen::Index r = 3 + sign;
      t.emplace_back(r, p, s);
      t.emplace_back(r, q, -s);
      t.emplace_back(r, hat[0], -s * 2.0 * scale);
      t.emplace_back(r, hat[1], s * 4.0 * scale);
      t.emplace_back(r, hat[2], -s * 2.0 * scale);
    }
    SparseMatrix w(5, in);
    w.setFromTriplets(t.begin(), t.end());
    Vector b(5);
    b << 0.0, -0.5, -1.0, 0.0, 0.0;
    layers.emplace_back(std::move(w), std::move(b));
    hat = {0, 1, 2};
    p = 3;
    q = 4;
    scale *= 0.25;
  }
  {
    std::vector<T> t;
    t.emplace_back(0, p, 1.0);
    t.emplace_back(0, q, -1.0);
    t.emplace_back(0, hat[0], -2.0 * scale);
    t.emplace_back(0, hat[1], 4.0 * scale);
    t.emplace_back(0, hat[2], -2.0 * scale);
    SparseMatrix w(1, layers.back().weights().rows());
    w.setFromTriplets(t.begin(), t.end());
    layers.emplace_back(std::move(w), Vector::Zero(1));
  }
  return NeuralNetwork(std::move(layers));
}

NeuralNetwork squaring_network(double eps) {
  require(eps > 0.0 && eps < 0.5, "squaring_network: eps must lie in (0, 1/2)");
  return squaring_network_depth(squaring_depth(eps));
}

NeuralNetwork product_network(double epsilon, double bound) {
  const ProductNetSpec spec = ProductNetSpec::make(epsilon, bound);
  const double inv = 1.0 / bound;

  // (x, y) -> (pi_1(x/M), pi_1(y/M))
  Matrix scale = Matrix::Identity(2, 2) * inv;
  const NeuralNetwork cap = relu::compose(relu::clip_network(2, 1.0),
                                          relu::affine_network(scale, Vector::Zero(2)));
  // (p, q) -> ((p+q)/2, (p-q)/2)
  Matrix uv(2, 2);
  uv << 0.5, 0.5,
        0.5, -0.5;
  // (u, v) -> (|u|, |v|)
  Matrix abs1(4, 2);
  abs1 << 1, 0,
         -1, 0,
          0, 1,
          0, -1;
  Matrix abs2(2, 4);
  abs2 << 1, 1, 0, 0,
          0, 0, 1, 1;
  const NeuralNetwork absnet({AffineLayer::from_dense(abs1, Vector::Zero(4)),
                              AffineLayer::from_dense(abs2, Vector::Zero(2))});
  const NeuralNetwork sq = squaring_network_depth(spec.sawtooth_depth);
  const std::array<NeuralNetwork, 2> pair{sq, sq};
  const NeuralNetwork squares = relu::parallelize_separate(pair);
  Matrix diff(1, 2);
  diff << bound * bound, -bound * bound;

  NeuralNetwork net = relu::compose(relu::affine_network(uv, Vector::Zero(2)), cap);
  net = relu::compose(absnet, net);
  net = relu::compose(squares, net);
  return relu::compose(relu::affine_network(diff, Vector::Zero(1)), net);
}

ProductCertificate certify_product(double epsilon, double bound, std::size_t grid, std::size_t pairs,
                                   std::uint64_t seed) {
  require(grid >= 2, "certify_product: grid needs at least 2 points per axis");
  ProductCertificate cert;
  cert.spec = ProductNetSpec::make(epsilon, bound);
  const NeuralNetwork net = product_network(epsilon, bound);
  cert.size = net.size();
  cert.depth = net.depth();
  cert.size_constant =
      static_cast<double>(cert.size) / (std::log(1.0 / epsilon) + std::log(bound) + 1.0);
  cert.grid_points_per_axis = grid;

  const auto n = static_cast<Eigen::Index>(grid);
  Matrix pts(2, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = -bound + 2.0 * bound * static_cast<double>(i) / static_cast<double>(n - 1);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double y = -bound + 2.0 * bound * static_cast<double>(j) / static_cast<double>(n - 1);
      pts(0, i * n + j) = x;
      pts(1, i * n + j) = y;
    }
  }
  const Matrix vals = net.evaluate_batch(pts);
  double sup = 0.0;
  for (Eigen::Index k = 0; k < pts.cols(); ++k) {
    sup = std::max(sup, std::abs(vals(0, k) - pts(0, k) * pts(1, k)));
  }
  cert.measured_sup_error = sup;

  cert.lipschitz_pairs = pairs;
  if (pairs > 0) {
    const double wide = 10.0 * bound;
    Matrix a(2, static_cast<Eigen::Index>(pairs)), b(2, static_cast<Eigen::Index>(pairs));
    for (std::size_t k = 0; k < pairs; ++k) {
      auto rng = markov::StreamRng(seed, markov::StreamDomain::certificate, 0, k);
      const auto c = static_cast<Eigen::Index>(k);
      for (int r = 0; r < 2; ++r) a(r, c) = wide * (2.0 * rng.uniform() - 1.0);
      // Half the pairs are local perturbations, half are independent points.
      const double step = (k % 2 == 0) ? wide : 1e-3 * bound;
      for (int r = 0; r < 2; ++r) b(r, c) = std::clamp(a(r, c) + step * (2.0 * rng.uniform() - 1.0), -wide, wide);
    }
    const Matrix fa = net.evaluate_batch(a), fb = net.evaluate_batch(b);
    double best = 0.0;
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      const double dist = std::abs(a(0, k) - b(0, k)) + std::abs(a(1, k) - b(1, k));
      if (dist > 0.0) best = std::max(best, std::abs(fa(0, k) - fb(0, k)) / dist);
    }
    cert.measured_lipschitz = best / bound;
  }
  return cert;
}

}  // namespace optstop::approx
