#include "optstop/relu/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "optstop/errors.hpp"

namespace optstop::relu {

namespace {

void drop_exact_zeros(SparseMatrix& m) {
  m.prune([](const Eigen::Index&, const Eigen::Index&, const double& v) { return v != 0.0; });
  m.makeCompressed();
}

bool all_finite(const SparseMatrix& m) {
  for (Eigen::Index k = 0; k < m.nonZeros(); ++k) {
    if (!std::isfinite(m.valuePtr()[k])) return false;
  }
  return true;
}

}  // namespace

AffineLayer::AffineLayer(SparseMatrix weights, Vector bias)
    : weights_(std::move(weights)), bias_(std::move(bias)) {
  require(weights_.rows() >= 1 && weights_.cols() >= 1, "AffineLayer: dimensions must be >= 1");
  require(bias_.size() == weights_.rows(), "AffineLayer: bias length must equal out_dim");
  drop_exact_zeros(weights_);
  require(all_finite(weights_) && bias_.allFinite(), "AffineLayer: non-finite parameter");
}

AffineLayer AffineLayer::from_dense(const Matrix& weights, const Vector& bias) {
  return AffineLayer(weights.sparseView(0.0, 0.0), bias);
}

std::size_t AffineLayer::nonzeros() const {
  std::size_t n = static_cast<std::size_t>(weights_.nonZeros());
  for (Eigen::Index i = 0; i < bias_.size(); ++i) {
    if (bias_[i] != 0.0) ++n;
  }
  return n;
}

NeuralNetwork::NeuralNetwork(std::vector<AffineLayer> layers) : layers_(std::move(layers)) {
  require(!layers_.empty(), "NeuralNetwork: at least one layer required");
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    if (layers_[l].in_dim() != layers_[l - 1].out_dim()) {
      throw InputError("NeuralNetwork: layer " + std::to_string(l) + " expects input dim " +
                       std::to_string(layers_[l].in_dim()) + " but previous layer outputs " +
                       std::to_string(layers_[l - 1].out_dim()));
    }
  }
}

std::vector<std::size_t> NeuralNetwork::dims() const {
  std::vector<std::size_t> d;
  d.reserve(layers_.size() + 1);
  d.push_back(input_dim());
  for (const auto& layer : layers_) d.push_back(layer.out_dim());
  return d;
}

std::size_t NeuralNetwork::size() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.nonzeros();
  return n;
}

Vector NeuralNetwork::evaluate(std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw InputError("evaluate: expected input of length " + std::to_string(input_dim()) +
                     ", got " + std::to_string(x.size()));
  }
  Vector h(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw InputError("evaluate: non-finite input");
    h[static_cast<Eigen::Index>(i)] = x[i];
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Vector next = layers_[l].weights() * h + layers_[l].bias();
    if (l + 1 < layers_.size()) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return h;
}

Vector NeuralNetwork::evaluate(const Vector& x) const {
  return evaluate(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

double NeuralNetwork::evaluate_scalar(std::span<const double> x) const {
  if (output_dim() != 1) throw InputError("evaluate_scalar: network output is not scalar");
  return evaluate(x)[0];
}

Matrix NeuralNetwork::evaluate_batch(const Matrix& points) const {
  if (static_cast<std::size_t>(points.rows()) != input_dim()) {
    throw InputError("evaluate_batch: expected " + std::to_string(input_dim()) + " rows, got " +
                     std::to_string(points.rows()));
  }
  if (!points.allFinite()) throw InputError("evaluate_batch: non-finite input");
  // Tile columns so the widest hidden layer stays near 8M doubles.
  std::size_t widest = 1;
  for (auto w : dims()) widest = std::max(widest, w);
  const Eigen::Index tile = std::max<Eigen::Index>(1, static_cast<Eigen::Index>((std::size_t{1} << 23) / widest));
  Matrix out(static_cast<Eigen::Index>(output_dim()), points.cols());
  for (Eigen::Index c0 = 0; c0 < points.cols(); c0 += tile) {
    const Eigen::Index nc = std::min(tile, points.cols() - c0);
    Matrix h = points.middleCols(c0, nc);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix next = layers_[l].weights() * h;
      next.colwise() += layers_[l].bias();
      if (l + 1 < layers_.size()) next = next.cwiseMax(0.0);
      h = std::move(next);
    }
    out.middleCols(c0, nc) = h;
  }
  return out;
}

SizeCertificate SizeCertificate::recount(const NeuralNetwork& net, std::optional<double> lipschitz) {
  return SizeCertificate{net.size(), lipschitz};
}

std::string describe(const NeuralNetwork& net) {
  std::ostringstream os;
  os << "L=" << net.depth() << " dims=[";
  const auto d = net.dims();
  for (std::size_t i = 0; i < d.size(); ++i) os << (i ? "," : "") << d[i];
  os << "] size=" << net.size();
  return os.str();
}

}  // namespace optstop::relu
