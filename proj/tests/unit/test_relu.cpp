#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "optstop/errors.hpp"
#include "optstop/relu/calculus.hpp"
#include "optstop/relu/lipschitz.hpp"
#include "optstop/relu/serialize.hpp"

using namespace optstop;
using namespace optstop::relu;
using testsupport::random_network;
using testsupport::reference_eval;

namespace {

double max_gap(const std::vector<double>& a, const Vector& b) {
  REQUIRE(a.size() == static_cast<std::size_t>(b.size()));
  double g = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) g = std::max(g, std::abs(a[i] - b(static_cast<Eigen::Index>(i))));
  return g;
}

}  // namespace

TEST_SUITE("relu_calculus") {

TEST_CASE("size counts stored nonzeros of weights and biases") {
  Matrix w(2, 3);
  w << 1, 0, 2, 0, 0, -1;
  Vector b(2);
  b << 0, 3;
  const NeuralNetwork net({AffineLayer::from_dense(w, b)});
  CHECK(net.size() == 4);
  CHECK(net.dims() == std::vector<std::size_t>{3, 2});
  CHECK(SizeCertificate::recount(net).matches(net));
}

TEST_CASE("layer chain must agree on widths") {
  const auto a = AffineLayer::from_dense(Matrix::Ones(2, 3), Vector::Zero(2));
  const auto b = AffineLayer::from_dense(Matrix::Ones(1, 3), Vector::Zero(1));
  CHECK_THROWS_AS(NeuralNetwork({a, b}), InputError);
  CHECK_THROWS_AS(NeuralNetwork(std::vector<AffineLayer>{}), InputError);
}

TEST_CASE("evaluate agrees with a loop-by-loop forward pass, batch agrees with single") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const auto net = random_network(rng, testsupport::random_dims(rng, 3, 2));
    Matrix pts(3, 16);
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      const auto x = testsupport::gaussian_point(rng, 3);
      for (int i = 0; i < 3; ++i) pts(i, j) = x[static_cast<std::size_t>(i)];
      CHECK(max_gap(reference_eval(net, x), net.evaluate(x)) < 1e-12);
    }
    const Matrix batch = net.evaluate_batch(pts);
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      const Vector single = net.evaluate(Vector(pts.col(j)));
      CHECK((batch.col(j) - single).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("evaluate rejects wrong arity and non-finite input") {
  const auto net = max2();
  CHECK_THROWS_AS((void)net.evaluate(std::vector<double>{1.0}), InputError);
  CHECK_THROWS_AS((void)net.evaluate(std::vector<double>{1.0, NAN}), InputError);
}

TEST_CASE("max2 and min2 are exact with size 7") {
  const auto mx = max2();
  const auto mn = min2();
  CHECK(mx.size() == 7);
  CHECK(mn.size() == 7);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> xy{u(rng), u(rng)};
    CHECK(mx.evaluate_scalar(xy) == doctest::Approx(std::max(xy[0], xy[1])).epsilon(1e-14));
    CHECK(mn.evaluate_scalar(xy) == doctest::Approx(std::min(xy[0], xy[1])).epsilon(1e-14));
  }
  CHECK(mx.evaluate_scalar(std::vector<double>{3.0, 3.0}) == 3.0);
}

TEST_CASE("min_k and max_k are exact within the cubic size bound") {
  std::mt19937_64 rng(3);
  for (std::size_t k : {1u, 2u, 3u, 5u, 8u, 13u, 33u}) {
    const auto mn = min_k(k);
    const auto mx = max_k(k);
    CHECK(mn.size() <= 12 * k * k * k);
    CHECK(mx.size() <= 12 * k * k * k);
    for (int rep = 0; rep < 50; ++rep) {
      const auto z = testsupport::gaussian_point(rng, k, 10.0);
      CHECK(std::abs(mn.evaluate_scalar(z) - *std::min_element(z.begin(), z.end())) <= 1e-12 * 10);
      CHECK(std::abs(mx.evaluate_scalar(z) - *std::max_element(z.begin(), z.end())) <= 1e-12 * 10);
    }
  }
  CHECK_THROWS_AS(min_k(0), InputError);
}

TEST_CASE("compose matches function composition and obeys 2(s1+s2)") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    const auto inner = random_network(rng, testsupport::random_dims(rng, 3, 4));
    const auto outer = random_network(rng, testsupport::random_dims(rng, 4, 2));
    for (const auto& c : {compose(outer, inner), compose_split(outer, inner)}) {
      CHECK(c.size() <= 2 * (outer.size() + inner.size()));
      CHECK(c.input_dim() == 3);
      CHECK(c.output_dim() == 2);
      for (int k = 0; k < 10; ++k) {
        const auto x = testsupport::gaussian_point(rng, 3);
        CHECK(max_gap(reference_eval(outer, reference_eval(inner, x)), c.evaluate(x)) < 1e-10);
      }
    }
    CHECK(compose(outer, inner).size() <= compose_split(outer, inner).size());
  }
  CHECK_THROWS_AS(compose(max2(), max2()), InputError);
}

TEST_CASE("parallelize_separate stacks blocks and sums sizes") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 30; ++rep) {
    const auto da = testsupport::random_dims(rng, 2, 3);
    auto db = testsupport::random_dims(rng, 3, 1);
    db.resize(da.size(), 2);
    db.front() = 3;
    db.back() = 1;
    const std::vector<NeuralNetwork> nets{random_network(rng, da), random_network(rng, db)};
    const auto p = parallelize_separate(nets);
    CHECK(p.size() == nets[0].size() + nets[1].size());
    const auto x = testsupport::gaussian_point(rng, 5);
    const auto ya = reference_eval(nets[0], {x.begin(), x.begin() + 2});
    const auto yb = reference_eval(nets[1], {x.begin() + 2, x.end()});
    std::vector<double> both = ya;
    both.insert(both.end(), yb.begin(), yb.end());
    CHECK(max_gap(both, p.evaluate(x)) < 1e-12);
  }
  const std::vector<NeuralNetwork> uneven{max2(), identity_network(2, 1)};
  CHECK_THROWS_AS(parallelize_separate(uneven), InputError);
}

TEST_CASE("parallelize_shared feeds one input to every block") {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 30; ++rep) {
    auto dims = testsupport::random_dims(rng, 3, 2);
    auto dims2 = dims;
    dims2.back() = 1;
    const std::vector<NeuralNetwork> nets{random_network(rng, dims), random_network(rng, dims2)};
    const auto p = parallelize_shared(nets);
    CHECK(p.size() <= nets[0].size() + nets[1].size());
    const auto x = testsupport::gaussian_point(rng, 3);
    auto expect = reference_eval(nets[0], x);
    const auto b = reference_eval(nets[1], x);
    expect.insert(expect.end(), b.begin(), b.end());
    CHECK(max_gap(expect, p.evaluate(x)) < 1e-12);
  }
}

TEST_CASE("sum_equal_depth forms the weighted sum") {
  std::mt19937_64 rng(7);
  const auto dims = testsupport::random_dims(rng, 2, 1);
  std::vector<NeuralNetwork> nets;
  for (int i = 0; i < 4; ++i) nets.push_back(random_network(rng, dims));
  const std::vector<double> w{0.1, -2.0, 0.5, 1.0};
  const auto s = sum_equal_depth(nets, w);
  std::size_t total = 0;
  for (const auto& n : nets) total += n.size();
  CHECK(s.size() <= total);
  for (int k = 0; k < 20; ++k) {
    const auto x = testsupport::gaussian_point(rng, 2);
    double e = 0.0;
    for (std::size_t i = 0; i < nets.size(); ++i) e += w[i] * reference_eval(nets[i], x)[0];
    CHECK(s.evaluate_scalar(x) == doctest::Approx(e).epsilon(1e-12));
  }
  const std::vector<double> short_w{1.0};
  CHECK_THROWS_AS(sum_equal_depth(nets, short_w), InputError);
}

TEST_CASE("identity_network is exact with the stated size") {
  for (std::size_t depth : {1u, 2u, 5u}) {
    const auto id = identity_network(3, depth);
    CHECK(id.depth() == depth);
    CHECK(id.size() == (depth == 1 ? 3u : 2u * 3u * depth));
    const std::vector<double> x{-1.5, 0.0, 2.25};
    CHECK(max_gap(x, id.evaluate(x)) == 0.0);
  }
}

TEST_CASE("depth_sync pads at the output with the stated cost") {
  std::mt19937_64 rng(8);
  const auto shallow = random_network(rng, {2, 3, 2});
  const auto deep = random_network(rng, {2, 4, 4, 4, 2});
  const std::vector<NeuralNetwork> nets{shallow, deep};
  const auto synced = depth_sync(nets);
  CHECK(synced[0].depth() == 4);
  CHECK(synced[1].size() == deep.size());
  CHECK(synced[0].size() == shallow.size() + shallow.layers().back().nonzeros() + 2 * 2 * 2);
  const auto x = testsupport::gaussian_point(rng, 2);
  CHECK(max_gap(reference_eval(shallow, x), synced[0].evaluate(x)) < 1e-12);
}

TEST_CASE("fix_inputs pins coordinates without growing") {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 30; ++rep) {
    const auto net = random_network(rng, testsupport::random_dims(rng, 4, 2));
    const std::vector<std::size_t> coords{1, 3};
    const std::vector<double> vals{0.7, -1.2};
    const auto f = fix_inputs(net, coords, vals);
    CHECK(f.input_dim() == 2);
    CHECK(f.size() <= net.size());
    const auto x = testsupport::gaussian_point(rng, 2);
    CHECK(max_gap(reference_eval(net, {x[0], 0.7, x[1], -1.2}), f.evaluate(x)) < 1e-12);
  }
  const std::vector<std::size_t> bad{7};
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(fix_inputs(max2(), bad, one), InputError);
}

TEST_CASE("shift_output, scale_output, permute_inputs, select_network, clip_network") {
  std::mt19937_64 rng(10);
  const auto net = random_network(rng, {3, 4, 1});
  const auto x = testsupport::gaussian_point(rng, 3);
  const double base = reference_eval(net, x)[0];
  CHECK(shift_output(net, 0.25).evaluate_scalar(x) == doctest::Approx(base - 0.25).epsilon(1e-14));
  CHECK(shift_output(net, 0.25).size() <= net.size() + 1);
  CHECK(scale_output(net, -3.0).evaluate_scalar(x) == doctest::Approx(-3.0 * base).epsilon(1e-14));

  const std::vector<std::size_t> perm{2, 0, 1};
  const auto p = permute_inputs(net, perm);
  std::vector<double> y(3);
  for (std::size_t i = 0; i < 3; ++i) y[perm[i]] = x[i];
  CHECK(p.evaluate_scalar(x) == doctest::Approx(reference_eval(net, y)[0]).epsilon(1e-14));

  const std::vector<std::size_t> idx{2, 2, 0};
  CHECK(max_gap({x[2], x[2], x[0]}, select_network(3, idx).evaluate(x)) == 0.0);

  const auto clip = clip_network(3, 1.0);
  const std::vector<double> z{-4.0, 0.3, 9.0};
  CHECK(max_gap({-1.0, 0.3, 1.0}, clip.evaluate(z)) < 1e-15);
  CHECK_THROWS_AS(shift_output(identity_network(2, 2), 1.0), InputError);
}

TEST_CASE("spectral norm and Lipschitz bounds bracket the sampled quotient") {
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 1.0, -4.0, 2.0;
  CHECK(spectral_norm(d.sparseView()) == doctest::Approx(4.0).epsilon(1e-9));
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const auto net = random_network(rng, {3, 5, 5, 1});
    const double upper = lipschitz_upper_bound(net);
    const double lower = empirical_lipschitz(
        net,
        [](std::uint64_t i, std::span<double> x) {
          std::mt19937_64 r(i);
          std::normal_distribution<double> n;
          for (auto& v : x) v = n(r);
        },
        2000);
    CHECK(lower <= upper * (1 + 1e-9));
    CHECK(lower > 0.0);
  }
}

TEST_CASE("serialization round-trips bit for bit in both layouts") {
  std::mt19937_64 rng(12);
  const auto net = random_network(rng, {4, 6, 3, 2});
  const NetworkMetadata meta{net.size(), 3.5, "unit"};
  for (Layout layout : {Layout::dense, Layout::sparse}) {
    const auto bytes = serialize(net, meta, layout);
    const auto back = deserialize(bytes);
    CHECK(bitwise_equal(net, back.network));
    REQUIRE(back.metadata.has_value());
    CHECK(*back.metadata == meta);
    CHECK(serialize(back.network, meta, layout) == bytes);
  }
  const auto plain = deserialize(serialize(net));
  CHECK_FALSE(plain.metadata.has_value());
}

TEST_CASE("serialization keeps negative zero, subnormals and extreme values") {
  Matrix w(1, 3);
  w << -0.0, 4.9406564584124654e-324, 1.7976931348623157e308;
  Vector b(1);
  b << -2.2250738585072014e-308;
  const NeuralNetwork net({AffineLayer::from_dense(w, b)});
  const auto back = deserialize(serialize(net, std::nullopt, Layout::dense)).network;
  CHECK(bitwise_equal(net, back));
}

TEST_CASE("corrupt or truncated streams are rejected") {
  const auto bytes = serialize(max2());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize(bad_magic), InputError);
  auto truncated = bytes;
  truncated.resize(truncated.size() / 2);
  CHECK_THROWS_AS(deserialize(truncated), InputError);
  auto bad_version = bytes;
  bad_version[8] = 99;
  CHECK_THROWS_AS(deserialize(bad_version), InputError);
}

TEST_CASE("layout choice switches to sparse above the dense limit") {
  const auto net = identity_network(50, 3);
  CHECK(choose_layout(net) == Layout::dense);
  CHECK(choose_layout(net, 100) == Layout::sparse);
}

}  // TEST_SUITE
