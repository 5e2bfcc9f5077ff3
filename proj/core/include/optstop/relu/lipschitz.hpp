#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "optstop/relu/network.hpp"

namespace optstop::relu {

/// How the input difference is measured in a Lipschitz quotient.
enum class LipschitzConvention {
  euclidean,      ///< |f(a) - f(b)| / ||a - b||
  sum_of_blocks,  ///< inputs split in two blocks (x, y): denominator ||x - x'|| + ||y - y'||
};

/// Spectral norm of one matrix by power iteration on W^T W.
double spectral_norm(const SparseMatrix& weights, int iterations = 100, double tolerance = 1e-10);

/// Product of per-layer spectral norms; an upper bound on Lip(net) in the Euclidean
/// convention because relu is 1-Lipschitz.
double lipschitz_upper_bound(const NeuralNetwork& net);

/// Supremum of sampled difference quotients, a lower bound on Lip(net).
/// `sampler` fills an input point. For sum_of_blocks, the first `split` coordinates
/// form the first block. Pairs are formed as (a, a + step * direction) with
/// direction drawn by the same sampler, plus fully independent pairs.
double empirical_lipschitz(const NeuralNetwork& net,
                           const std::function<void(std::uint64_t, std::span<double>)>& sampler,
                           std::size_t n_pairs,
                           LipschitzConvention convention = LipschitzConvention::euclidean,
                           std::size_t split = 0);

}  // namespace optstop::relu
