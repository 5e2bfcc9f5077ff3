#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "optstop/markov/model.hpp"
#include "optstop/payoff/payoff.hpp"
#include "optstop/relu/network.hpp"

namespace testsupport {

using optstop::relu::AffineLayer;
using optstop::relu::Matrix;
using optstop::relu::NeuralNetwork;
using optstop::relu::Vector;

/// Random network with the given dims; roughly a quarter of the weights are exact zeros.
inline NeuralNetwork random_network(std::mt19937_64& rng, const std::vector<std::size_t>& dims) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01;
  std::vector<AffineLayer> layers;
  for (std::size_t l = 1; l < dims.size(); ++l) {
    Matrix w(static_cast<Eigen::Index>(dims[l]), static_cast<Eigen::Index>(dims[l - 1]));
    Vector b(static_cast<Eigen::Index>(dims[l]));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u01(rng) < 0.25 ? 0.0 : n01(rng);
      b(i) = u01(rng) < 0.25 ? 0.0 : 0.5 * n01(rng);
    }
    layers.push_back(AffineLayer::from_dense(w, b));
  }
  return NeuralNetwork(std::move(layers));
}

inline std::vector<std::size_t> random_dims(std::mt19937_64& rng, std::size_t in, std::size_t out,
                                            std::size_t max_depth = 4, std::size_t max_width = 6) {
  std::uniform_int_distribution<std::size_t> depth(1, max_depth), width(1, max_width);
  std::vector<std::size_t> dims{in};
  const auto L = depth(rng);
  for (std::size_t l = 1; l < L; ++l) dims.push_back(width(rng));
  dims.push_back(out);
  return dims;
}

/// Plain dense forward pass written out loop by loop, independent of the library's kernel.
inline std::vector<double> reference_eval(const NeuralNetwork& net, std::vector<double> x) {
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const Matrix w(net.layer(l).weights());
    const auto& b = net.layer(l).bias();
    std::vector<double> y(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      double s = b(i);
      for (Eigen::Index j = 0; j < w.cols(); ++j) s += w(i, j) * x[static_cast<std::size_t>(j)];
      y[static_cast<std::size_t>(i)] = (l + 1 < net.depth()) ? std::max(s, 0.0) : s;
    }
    x = std::move(y);
  }
  return x;
}

inline std::vector<double> gaussian_point(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> n01;
  std::vector<double> x(d);
  for (auto& v : x) v = scale * n01(rng);
  return x;
}

/// V(t, x) by enumerating every atom sequence, written as plain recursion over a map-free tree.
inline double brute_force_value(const optstop::markov::MarkovModel& m, const optstop::payoff::Payoff& g, int t,
                                const std::vector<double>& x) {
  const double stop = g(t, x);
  if (t == m.horizon) return stop;
  double cont = 0.0;
  for (const auto& a : m.atoms) {
    cont += a.probability * brute_force_value(m, g, t + 1, m.step(t, x, a.value));
  }
  return std::max(stop, cont);
}

inline double brute_force_continuation(const optstop::markov::MarkovModel& m, const optstop::payoff::Payoff& g,
                                       int t, const std::vector<double>& x) {
  double cont = 0.0;
  for (const auto& a : m.atoms) cont += a.probability * brute_force_value(m, g, t + 1, m.step(t, x, a.value));
  return cont;
}

}  // namespace testsupport
