#pragma once

#include <cstddef>
#include <cstdint>

#include "optstop/relu/network.hpp"

namespace optstop::approx {

/// Parameters of the product network n_{eps,M}.
struct ProductNetSpec {
  double epsilon = 0.0;       ///< target sup error on [-M, M]^2
  double bound = 1.0;         ///< M
  int sawtooth_depth = 0;     ///< m, number of hat compositions per squaring block
  double base_epsilon = 0.0;  ///< eps / (3 M^2), target error on [-1, 1]^2

  static ProductNetSpec make(double epsilon, double bound);
};

/// Smallest m >= 0 with 2^(-2m-2) <= eps.
int squaring_depth(double eps);

/// z -> z - sum_{k=1..m} h^{ok}(z) / 4^k with the hat h(z) = 2relu(z) - 4relu(z-1/2) + 2relu(z-1).
/// Piecewise-linear interpolant of z^2 on the dyadic grid of [0,1]. The carry and the first hat
/// unit share a neuron, so the size is 10 for m = 1 and 21m - 12 for m >= 2.
relu::NeuralNetwork squaring_network_depth(int m);

/// squaring_network_depth(squaring_depth(eps)); requires 0 < eps < 1/2.
relu::NeuralNetwork squaring_network(double eps);

/// n_{eps,M}(x, y) = M^2 * nbar(pi_1(x/M), pi_1(y/M)) with
/// nbar(p, q) = sq(|p+q|/2) - sq(|p-q|/2). Requires eps in (0,1], M >= 1.
relu::NeuralNetwork product_network(double epsilon, double bound);

/// Lipschitz constant C' of n_{eps,M} / M in the |dx| + |dy| convention.
/// The squaring interpolant has slope < 2 on [0,1] and the capped inputs stay in
/// that range, so |d nbar| <= 2 max(|dp|, |dq|).
inline constexpr double kProductLipschitzConstant = 2.0;

struct ProductCertificate {
  ProductNetSpec spec;
  std::size_t size = 0;
  std::size_t depth = 0;
  double size_constant = 0.0;        ///< C = size / (log(1/eps) + log(M) + 1)
  double lipschitz_constant = kProductLipschitzConstant;  ///< C'
  double measured_sup_error = 0.0;   ///< over the grid on [-M, M]^2
  std::size_t grid_points_per_axis = 0;
  double measured_lipschitz = 0.0;   ///< max sampled quotient / M over [-10M, 10M]^2
  std::size_t lipschitz_pairs = 0;
};

/// Builds n_{eps,M} and measures it: sup error on a (grid x grid) lattice of [-M,M]^2
/// and the largest sampled difference quotient over `pairs` random pairs in [-10M,10M]^2.
ProductCertificate certify_product(double epsilon, double bound, std::size_t grid = 401,
                                   std::size_t pairs = 100000, std::uint64_t seed = 7);

}  // namespace optstop::approx
