#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace optstop::relu {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// One affine map x -> W x + b. Exact zeros are never stored, so the number of
/// stored entries is the layer's contribution to the network size.
class AffineLayer {
 public:
  AffineLayer(SparseMatrix weights, Vector bias);
  static AffineLayer from_dense(const Matrix& weights, const Vector& bias);

  [[nodiscard]] const SparseMatrix& weights() const { return weights_; }
  [[nodiscard]] const Vector& bias() const { return bias_; }
  [[nodiscard]] std::size_t in_dim() const { return static_cast<std::size_t>(weights_.cols()); }
  [[nodiscard]] std::size_t out_dim() const { return static_cast<std::size_t>(weights_.rows()); }
  [[nodiscard]] std::size_t nonzeros() const;

 private:
  SparseMatrix weights_;
  Vector bias_;
};

/// Deep ReLU network W_L o (relu o W_{L-1}) o ... o (relu o W_1).
/// No activation after the last layer. Immutable once built.
class NeuralNetwork {
 public:
  explicit NeuralNetwork(std::vector<AffineLayer> layers);

  [[nodiscard]] std::size_t depth() const { return layers_.size(); }
  [[nodiscard]] std::size_t input_dim() const { return layers_.front().in_dim(); }
  [[nodiscard]] std::size_t output_dim() const { return layers_.back().out_dim(); }
  [[nodiscard]] const std::vector<AffineLayer>& layers() const { return layers_; }
  [[nodiscard]] const AffineLayer& layer(std::size_t i) const { return layers_.at(i); }

  /// Dimension list N_0, ..., N_L.
  [[nodiscard]] std::vector<std::size_t> dims() const;

  /// Exact number of nonzero weight and bias entries.
  [[nodiscard]] std::size_t size() const;

  [[nodiscard]] Vector evaluate(std::span<const double> x) const;
  [[nodiscard]] Vector evaluate(const Vector& x) const;
  [[nodiscard]] double evaluate_scalar(std::span<const double> x) const;

  /// Column-wise batch evaluation: `points` is input_dim x n, result is output_dim x n.
  [[nodiscard]] Matrix evaluate_batch(const Matrix& points) const;

 private:
  std::vector<AffineLayer> layers_;
};

/// Size and Lipschitz bookkeeping attached to a network. The declared size is
/// always a recount, never a formula.
struct SizeCertificate {
  std::size_t declared_size = 0;
  std::optional<double> declared_lipschitz_upper;

  static SizeCertificate recount(const NeuralNetwork& net,
                                 std::optional<double> lipschitz = std::nullopt);
  [[nodiscard]] bool matches(const NeuralNetwork& net) const {
    return declared_size == net.size();
  }
};

/// Short human-readable shape summary, e.g. "L=3 dims=[2,3,3,1] size=13".
std::string describe(const NeuralNetwork& net);

}  // namespace optstop::relu
