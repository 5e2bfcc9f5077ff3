#pragma once

// Certified operations on ReLU networks. Every construction here is exact in
// exact arithmetic; size bounds are the ones quoted on each function and are
// checked by recounting in the test suite.

#include <cstddef>
#include <span>
#include <vector>

#include "optstop/relu/network.hpp"

namespace optstop::relu {

/// outer o inner. size <= 2 (size(outer) + size(inner)).
///
/// Two realizations are available at the seam: the identity split
/// x = relu(x) - relu(-x), which keeps both operands' layers intact, and the
/// affine merge W1_outer * W_L_inner, which saves a layer but may densify.
/// The merge is used only when its recounted size does not exceed the split's,
/// so the 2(s1+s2) bound holds either way.
NeuralNetwork compose(const NeuralNetwork& outer, const NeuralNetwork& inner);

/// Same as compose() but always uses the identity-split seam.
NeuralNetwork compose_split(const NeuralNetwork& outer, const NeuralNetwork& inner);

/// Block-diagonal stacking; input and output are concatenations. Equal depths required.
NeuralNetwork parallelize_separate(std::span<const NeuralNetwork> nets);

/// Shared input, concatenated outputs. Equal depths and input dims required.
NeuralNetwork parallelize_shared(std::span<const NeuralNetwork> nets);

/// sum_i weights[i] * nets[i](x). Equal depth, input and output dims required.
NeuralNetwork sum_equal_depth(std::span<const NeuralNetwork> nets, std::span<const double> weights);

/// Exact identity on R^dim with the given depth; size 2*dim*depth for depth >= 2, dim for depth 1.
NeuralNetwork identity_network(std::size_t dim, std::size_t depth);

/// Pads every network to the maximum depth by appending identity layers at the output.
/// Padding k >= 1 layers costs nnz(last layer) + 2*output_dim*k.
std::vector<NeuralNetwork> depth_sync(std::span<const NeuralNetwork> nets);

/// Pads a single network to `depth` layers (no-op when already that deep).
NeuralNetwork pad_to_depth(const NeuralNetwork& net, std::size_t depth);

/// Pins the listed input coordinates to `values`; the pinned first-layer columns
/// are folded into the bias. size(result) <= size(net).
NeuralNetwork fix_inputs(const NeuralNetwork& net, std::span<const std::size_t> fixed_coords,
                         std::span<const double> values);

/// net(x) - delta, for scalar-output networks.
NeuralNetwork shift_output(const NeuralNetwork& net, double delta);

/// Multiplies every output by `factor` (last layer rescale).
NeuralNetwork scale_output(const NeuralNetwork& net, double factor);

/// Permutes input coordinates: result(x) = net(y) with y[perm[i]] = x[i].
NeuralNetwork permute_inputs(const NeuralNetwork& net, std::span<const std::size_t> perm);

/// Linear network x -> A x + b (single layer).
NeuralNetwork affine_network(const Matrix& weights, const Vector& bias);

/// x -> (x[indices[0]], x[indices[1]], ...), single layer.
NeuralNetwork select_network(std::size_t input_dim, std::span<const std::size_t> indices);

/// max(x, y) = relu(x - y) + relu(y) - relu(-y). size 7.
NeuralNetwork max2();

/// min(x, y) = relu(y) - relu(-y) - relu(y - x). size 7.
NeuralNetwork min2();

/// Exact minimum of k inputs via a pairwise tree of min2 stages. size <= 12 k^3.
NeuralNetwork min_k(std::size_t k);

/// Exact maximum of k inputs, max(z) = -min(-z).
NeuralNetwork max_k(std::size_t k);

/// Componentwise clamp to [-M, M] as relu(z + M) - relu(z - M) - M.
NeuralNetwork clip_network(std::size_t dim, double bound);

}  // namespace optstop::relu
