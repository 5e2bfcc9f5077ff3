#include "optstop/relu/calculus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "optstop/errors.hpp"

namespace optstop::relu {

namespace {

using Triplet = Eigen::Triplet<double>;
using Index = Eigen::Index;

void append_block(std::vector<Triplet>& out, const SparseMatrix& m, Index row0, Index col0,
                  double scale = 1.0) {
  for (Index r = 0; r < m.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) {
      out.emplace_back(row0 + it.row(), col0 + it.col(), scale * it.value());
    }
  }
}

SparseMatrix from_triplets(Index rows, Index cols, const std::vector<Triplet>& t) {
  SparseMatrix m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

SparseMatrix sparse_identity(Index n) {
  SparseMatrix m(n, n);
  m.setIdentity();
  return m;
}

// [W; -W]
SparseMatrix split_rows(const SparseMatrix& w) {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(2 * w.nonZeros()));
  append_block(t, w, 0, 0);
  append_block(t, w, w.rows(), 0, -1.0);
  return from_triplets(2 * w.rows(), w.cols(), t);
}

// [W, -W]
SparseMatrix split_cols(const SparseMatrix& w) {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(2 * w.nonZeros()));
  append_block(t, w, 0, 0);
  append_block(t, w, 0, w.cols(), -1.0);
  return from_triplets(w.rows(), 2 * w.cols(), t);
}

void require_same_depth(std::span<const NeuralNetwork> nets, const char* op) {
  require(!nets.empty(), std::string(op) + ": empty network list");
  for (const auto& n : nets) {
    if (n.depth() != nets.front().depth()) {
      throw InputError(std::string(op) + ": depth mismatch (" + std::to_string(n.depth()) +
                       " vs " + std::to_string(nets.front().depth()) + "); use depth_sync first");
    }
  }
}

AffineLayer merged_seam_layer(const NeuralNetwork& outer, const NeuralNetwork& inner) {
  const auto& first = outer.layers().front();
  const auto& last = inner.layers().back();
  SparseMatrix w = first.weights() * last.weights();
  Vector b = first.weights() * last.bias() + first.bias();
  return AffineLayer(std::move(w), std::move(b));
}

NeuralNetwork compose_merge(const NeuralNetwork& outer, const NeuralNetwork& inner, AffineLayer seam) {
  std::vector<AffineLayer> layers;
  layers.reserve(outer.depth() + inner.depth() - 1);
  for (std::size_t l = 0; l + 1 < inner.depth(); ++l) layers.push_back(inner.layers()[l]);
  layers.push_back(std::move(seam));
  for (std::size_t l = 1; l < outer.depth(); ++l) layers.push_back(outer.layers()[l]);
  return NeuralNetwork(std::move(layers));
}

}  // namespace

NeuralNetwork compose_split(const NeuralNetwork& outer, const NeuralNetwork& inner) {
  if (outer.input_dim() != inner.output_dim()) {
    throw InputError("compose: outer expects input dim " + std::to_string(outer.input_dim()) +
                     " but inner outputs " + std::to_string(inner.output_dim()));
  }
  std::vector<AffineLayer> layers;
  layers.reserve(outer.depth() + inner.depth());
  for (std::size_t l = 0; l + 1 < inner.depth(); ++l) layers.push_back(inner.layers()[l]);
  const auto& last = inner.layers().back();
  Vector b2(2 * last.bias().size());
  b2 << last.bias(), -last.bias();
  layers.emplace_back(split_rows(last.weights()), std::move(b2));
  const auto& first = outer.layers().front();
  layers.emplace_back(split_cols(first.weights()), first.bias());
  for (std::size_t l = 1; l < outer.depth(); ++l) layers.push_back(outer.layers()[l]);
  return NeuralNetwork(std::move(layers));
}

NeuralNetwork compose(const NeuralNetwork& outer, const NeuralNetwork& inner) {
  if (outer.input_dim() != inner.output_dim()) {
    throw InputError("compose: outer expects input dim " + std::to_string(outer.input_dim()) +
                     " but inner outputs " + std::to_string(inner.output_dim()));
  }
  const auto& first = outer.layers().front();
  const auto& last = inner.layers().back();
  const std::size_t base = outer.size() + inner.size();
  const std::size_t split_size =
      base + last.nonzeros() + static_cast<std::size_t>(first.weights().nonZeros());
  AffineLayer seam = merged_seam_layer(outer, inner);
  const std::size_t merge_size = base - first.nonzeros() - last.nonzeros() + seam.nonzeros();
  if (merge_size <= split_size) return compose_merge(outer, inner, std::move(seam));
  return compose_split(outer, inner);
}

NeuralNetwork parallelize_separate(std::span<const NeuralNetwork> nets) {
  require_same_depth(nets, "parallelize_separate");
  if (nets.size() == 1) return nets.front();
  const std::size_t depth = nets.front().depth();
  std::vector<AffineLayer> layers;
  layers.reserve(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    Index rows = 0, cols = 0;
    std::size_t nnz = 0;
    for (const auto& n : nets) {
      rows += n.layers()[l].weights().rows();
      cols += n.layers()[l].weights().cols();
      nnz += static_cast<std::size_t>(n.layers()[l].weights().nonZeros());
    }
    std::vector<Triplet> t;
    t.reserve(nnz);
    Vector b(rows);
    Index r0 = 0, c0 = 0;
    for (const auto& n : nets) {
      const auto& layer = n.layers()[l];
      append_block(t, layer.weights(), r0, c0);
      b.segment(r0, layer.bias().size()) = layer.bias();
      r0 += layer.weights().rows();
      c0 += layer.weights().cols();
    }
    layers.emplace_back(from_triplets(rows, cols, t), std::move(b));
  }
  return NeuralNetwork(std::move(layers));
}

NeuralNetwork parallelize_shared(std::span<const NeuralNetwork> nets) {
  require_same_depth(nets, "parallelize_shared");
  for (const auto& n : nets) {
    require(n.input_dim() == nets.front().input_dim(), "parallelize_shared: input dim mismatch");
  }
  if (nets.size() == 1) return nets.front();
  const std::size_t depth = nets.front().depth();
  std::vector<AffineLayer> layers;
  layers.reserve(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    Index rows = 0, cols = 0;
    std::size_t nnz = 0;
    for (const auto& n : nets) {
      rows += n.layers()[l].weights().rows();
      cols = (l == 0) ? n.layers()[l].weights().cols() : cols + n.layers()[l].weights().cols();
      nnz += static_cast<std::size_t>(n.layers()[l].weights().nonZeros());
    }
    std::vector<Triplet> t;
    t.reserve(nnz);
    Vector b(rows);
    Index r0 = 0, c0 = 0;
    for (const auto& n : nets) {
      const auto& layer = n.layers()[l];
      append_block(t, layer.weights(), r0, c0);
      b.segment(r0, layer.bias().size()) = layer.bias();
      r0 += layer.weights().rows();
      if (l > 0) c0 += layer.weights().cols();
    }
    layers.emplace_back(from_triplets(rows, cols, t), std::move(b));
  }
  return NeuralNetwork(std::move(layers));
}

NeuralNetwork sum_equal_depth(std::span<const NeuralNetwork> nets, std::span<const double> weights) {
  require(!nets.empty(), "sum_equal_depth: empty network list");
  require(nets.size() == weights.size(), "sum_equal_depth: need one weight per network");
  require_same_depth(nets, "sum_equal_depth");
  for (const auto& n : nets) {
    require(n.input_dim() == nets.front().input_dim(), "sum_equal_depth: input dim mismatch");
    require(n.output_dim() == nets.front().output_dim(), "sum_equal_depth: output dim mismatch");
  }
  for (double w : weights) require(std::isfinite(w), "sum_equal_depth: non-finite weight");

  const std::size_t depth = nets.front().depth();
  const Index out = static_cast<Index>(nets.front().output_dim());
  if (depth == 1) {
    SparseMatrix w(out, static_cast<Index>(nets.front().input_dim()));
    Vector b = Vector::Zero(out);
    for (std::size_t k = 0; k < nets.size(); ++k) {
      w += weights[k] * nets[k].layers()[0].weights();
      b += weights[k] * nets[k].layers()[0].bias();
    }
    return NeuralNetwork({AffineLayer(std::move(w), std::move(b))});
  }

  NeuralNetwork stacked = parallelize_shared(nets);
  std::vector<AffineLayer> layers(stacked.layers().begin(), stacked.layers().end() - 1);
  // Last layer: horizontal concatenation of weighted last layers.
  Index cols = 0;
  std::size_t nnz = 0;
  for (const auto& n : nets) {
    cols += n.layers().back().weights().cols();
    nnz += static_cast<std::size_t>(n.layers().back().weights().nonZeros());
  }
  std::vector<Triplet> t;
  t.reserve(nnz);
  Vector b = Vector::Zero(out);
  Index c0 = 0;
  for (std::size_t k = 0; k < nets.size(); ++k) {
    const auto& last = nets[k].layers().back();
    append_block(t, last.weights(), 0, c0, weights[k]);
    b += weights[k] * last.bias();
    c0 += last.weights().cols();
  }
  layers.emplace_back(from_triplets(out, cols, t), std::move(b));
  return NeuralNetwork(std::move(layers));
}

NeuralNetwork identity_network(std::size_t dim, std::size_t depth) {
  require(dim >= 1 && depth >= 1, "identity_network: dim and depth must be >= 1");
  const Index n = static_cast<Index>(dim);
  if (depth == 1) return NeuralNetwork({AffineLayer(sparse_identity(n), Vector::Zero(n))});
  std::vector<AffineLayer> layers;
  layers.reserve(depth);
  layers.emplace_back(split_rows(sparse_identity(n)), Vector::Zero(2 * n));
  for (std::size_t l = 2; l < depth; ++l) {
    layers.emplace_back(sparse_identity(2 * n), Vector::Zero(2 * n));
  }
  layers.emplace_back(split_cols(sparse_identity(n)), Vector::Zero(n));
  return NeuralNetwork(std::move(layers));
}

NeuralNetwork pad_to_depth(const NeuralNetwork& net, std::size_t depth) {
  require(depth >= net.depth(), "pad_to_depth: target depth below network depth");
  const std::size_t extra = depth - net.depth();
  if (extra == 0) return net;
  const Index out = static_cast<Index>(net.output_dim());
  std::vector<AffineLayer> layers(net.layers().begin(), net.layers().end() - 1);
  const auto& last = net.layers().back();
  Vector b2(2 * out);
  b2 << last.bias(), -last.bias();
  layers.emplace_back(split_rows(last.weights()), std::move(b2));
  for (std::size_t l = 1; l < extra; ++l) {
    layers.emplace_back(sparse_identity(2 * out), Vector::Zero(2 * out));
  }
  layers.emplace_back(split_cols(sparse_identity(out)), Vector::Zero(out));
  return NeuralNetwork(std::move(layers));
}

std::vector<NeuralNetwork> depth_sync(std::span<const NeuralNetwork> nets) {
  std::size_t depth = 0;
  for (const auto& n : nets) depth = std::max(depth, n.depth());
  std::vector<NeuralNetwork> out;
  out.reserve(nets.size());
  for (const auto& n : nets) out.push_back(pad_to_depth(n, depth));
  return out;
}

NeuralNetwork fix_inputs(const NeuralNetwork& net, std::span<const std::size_t> fixed_coords,
                         std::span<const double> values) {
  require(fixed_coords.size() == values.size(), "fix_inputs: need one value per fixed coordinate");
  const std::size_t in = net.input_dim();
  std::vector<char> fixed(in, 0);
  std::vector<double> pinned(in, 0.0);
  for (std::size_t k = 0; k < fixed_coords.size(); ++k) {
    const std::size_t c = fixed_coords[k];
    if (c >= in) {
      throw InputError("fix_inputs: coordinate " + std::to_string(c) + " out of range for input dim " +
                       std::to_string(in));
    }
    require(!fixed[c], "fix_inputs: duplicate coordinate " + std::to_string(c));
    require(std::isfinite(values[k]), "fix_inputs: non-finite value");
    fixed[c] = 1;
    pinned[c] = values[k];
  }
  require(fixed_coords.size() < in, "fix_inputs: at least one input must remain free");

  std::vector<Index> new_col(in, -1);
  Index next = 0;
  for (std::size_t c = 0; c < in; ++c) {
    if (!fixed[c]) new_col[c] = next++;
  }
  const auto& first = net.layers().front();
  Vector b = first.bias();
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(first.weights().nonZeros()));
  for (Index r = 0; r < first.weights().outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(first.weights(), r); it; ++it) {
      const auto c = static_cast<std::size_t>(it.col());
      if (fixed[c]) {
        b[it.row()] += it.value() * pinned[c];
      } else {
        t.emplace_back(it.row(), new_col[c], it.value());
      }
    }
  }
  std::vector<AffineLayer> layers;
  layers.reserve(net.depth());
  layers.emplace_back(from_triplets(first.weights().rows(), next, t), std::move(b));
  for (std::size_t l = 1; l < net.depth(); ++l) layers.push_back(net.layers()[l]);
  return NeuralNetwork(std::move(layers));
}

NeuralNetwork shift_output(const NeuralNetwork& net, double delta) {
  require(net.output_dim() == 1, "shift_output: network output must be scalar");
  require(std::isfinite(delta), "shift_output: non-finite shift");
  std::vector<AffineLayer> layers(net.layers().begin(), net.layers().end() - 1);
  const auto& last = net.layers().back();
  Vector b = last.bias();
  b[0] -= delta;
  layers.emplace_back(last.weights(), std::move(b));
  return NeuralNetwork(std::move(layers));
}

NeuralNetwork scale_output(const NeuralNetwork& net, double factor) {
  require(std::isfinite(factor), "scale_output: non-finite factor");
  std::vector<AffineLayer> layers(net.layers().begin(), net.layers().end() - 1);
  const auto& last = net.layers().back();
  SparseMatrix w = factor * last.weights();
  layers.emplace_back(std::move(w), factor * last.bias());
  return NeuralNetwork(std::move(layers));
}

NeuralNetwork permute_inputs(const NeuralNetwork& net, std::span<const std::size_t> perm) {
  const std::size_t in = net.input_dim();
  require(perm.size() == in, "permute_inputs: permutation length must equal input dim");
  std::vector<Index> inverse(in, -1);
  for (std::size_t i = 0; i < in; ++i) {
    require(perm[i] < in && inverse[perm[i]] < 0, "permute_inputs: not a permutation");
    inverse[perm[i]] = static_cast<Index>(i);
  }
  const auto& first = net.layers().front();
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(first.weights().nonZeros()));
  for (Index r = 0; r < first.weights().outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(first.weights(), r); it; ++it) {
      t.emplace_back(it.row(), inverse[static_cast<std::size_t>(it.col())], it.value());
    }
  }
  std::vector<AffineLayer> layers;
  layers.emplace_back(from_triplets(first.weights().rows(), first.weights().cols(), t), first.bias());
  for (std::size_t l = 1; l < net.depth(); ++l) layers.push_back(net.layers()[l]);
  return NeuralNetwork(std::move(layers));
}

NeuralNetwork affine_network(const Matrix& weights, const Vector& bias) {
  return NeuralNetwork({AffineLayer::from_dense(weights, bias)});
}

NeuralNetwork select_network(std::size_t input_dim, std::span<const std::size_t> indices) {
  require(!indices.empty(), "select_network: no indices");
  std::vector<Triplet> t;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    require(indices[r] < input_dim, "select_network: index out of range");
    t.emplace_back(static_cast<Index>(r), static_cast<Index>(indices[r]), 1.0);
  }
  const Index rows = static_cast<Index>(indices.size());
  return NeuralNetwork({AffineLayer(from_triplets(rows, static_cast<Index>(input_dim), t), Vector::Zero(rows))});
}

NeuralNetwork max2() {
  Matrix a1(3, 2);
  a1 << 1, -1,
        0, 1,
        0, -1;
  Matrix a2(1, 3);
  a2 << 1, 1, -1;
  return NeuralNetwork({AffineLayer::from_dense(a1, Vector::Zero(3)),
                        AffineLayer::from_dense(a2, Vector::Zero(1))});
}

NeuralNetwork min2() {
  Matrix a1(3, 2);
  a1 << -1, 1,
         0, 1,
         0, -1;
  Matrix a2(1, 3);
  a2 << -1, 1, -1;
  return NeuralNetwork({AffineLayer::from_dense(a1, Vector::Zero(3)),
                        AffineLayer::from_dense(a2, Vector::Zero(1))});
}

namespace {

// One tree stage: pairs (0,1), (2,3), ... reduced by min2; an odd last input
// passes through relu(z) - relu(-z).
NeuralNetwork min_stage(std::size_t m) {
  const std::size_t pairs = m / 2;
  const bool odd = (m % 2) == 1;
  const Index hidden = static_cast<Index>(3 * pairs + (odd ? 2 : 0));
  const Index out = static_cast<Index>(pairs + (odd ? 1 : 0));
  std::vector<Triplet> t1, t2;
  for (std::size_t p = 0; p < pairs; ++p) {
    const Index x = static_cast<Index>(2 * p), y = x + 1, h = static_cast<Index>(3 * p);
    t1.emplace_back(h, x, -1.0);
    t1.emplace_back(h, y, 1.0);
    t1.emplace_back(h + 1, y, 1.0);
    t1.emplace_back(h + 2, y, -1.0);
    t2.emplace_back(static_cast<Index>(p), h, -1.0);
    t2.emplace_back(static_cast<Index>(p), h + 1, 1.0);
    t2.emplace_back(static_cast<Index>(p), h + 2, -1.0);
  }
  if (odd) {
    const Index z = static_cast<Index>(m - 1), h = static_cast<Index>(3 * pairs);
    t1.emplace_back(h, z, 1.0);
    t1.emplace_back(h + 1, z, -1.0);
    t2.emplace_back(out - 1, h, 1.0);
    t2.emplace_back(out - 1, h + 1, -1.0);
  }
  return NeuralNetwork({AffineLayer(from_triplets(hidden, static_cast<Index>(m), t1), Vector::Zero(hidden)),
                        AffineLayer(from_triplets(out, hidden, t2), Vector::Zero(out))});
}

NeuralNetwork negate_io(const NeuralNetwork& net) {
  std::vector<AffineLayer> layers;
  layers.reserve(net.depth());
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& layer = net.layers()[l];
    SparseMatrix w = layer.weights();
    Vector b = layer.bias();
    if (l == 0) w = -w;
    if (l + 1 == net.depth()) {
      w = -w;
      b = -b;
    }
    layers.emplace_back(std::move(w), std::move(b));
  }
  return NeuralNetwork(std::move(layers));
}

}  // namespace

NeuralNetwork min_k(std::size_t k) {
  require(k >= 1, "min_k: k must be >= 1");
  if (k == 1) return identity_network(1, 1);
  NeuralNetwork net = min_stage(k);
  std::size_t m = (k + 1) / 2;
  while (m > 1) {
    net = compose(min_stage(m), net);
    m = (m + 1) / 2;
  }
  return net;
}

NeuralNetwork max_k(std::size_t k) {
  // max(z) = -min(-z): negate the first-layer weights and the output layer.
  // For a single layer both negations apply to the same matrix and cancel.
  return negate_io(min_k(k));
}

NeuralNetwork clip_network(std::size_t dim, double bound) {
  require(dim >= 1, "clip_network: dim must be >= 1");
  require(bound > 0.0 && std::isfinite(bound), "clip_network: bound must be positive");
  const Index n = static_cast<Index>(dim);
  std::vector<Triplet> t1, t2;
  Vector b1(2 * n);
  for (Index i = 0; i < n; ++i) {
    t1.emplace_back(2 * i, i, 1.0);
    t1.emplace_back(2 * i + 1, i, 1.0);
    b1[2 * i] = bound;
    b1[2 * i + 1] = -bound;
    t2.emplace_back(i, 2 * i, 1.0);
    t2.emplace_back(i, 2 * i + 1, -1.0);
  }
  return NeuralNetwork({AffineLayer(from_triplets(2 * n, n, t1), std::move(b1)),
                        AffineLayer(from_triplets(n, 2 * n, t2), Vector::Constant(n, -bound))});
}

}  // namespace optstop::relu
