#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>

#include "optstop/errors.hpp"
#include "optstop/markov/model.hpp"
#include "optstop/markov/rng.hpp"
#include "optstop/util/parallel.hpp"

using namespace optstop;
using namespace optstop::markov;

namespace {

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

template <class F>
Moments sample_mean(std::size_t n, F&& draw) {
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = draw(i);
    s += v;
    s2 += v * v;
  }
  const double m = s / static_cast<double>(n);
  return {m, std::sqrt(std::max(s2 / static_cast<double>(n) - m * m, 0.0) / static_cast<double>(n))};
}

ExpLevyParams bs(std::size_t d, double mu = 0.05, double sigma = 0.2) {
  ExpLevyParams p;
  p.dim = d;
  p.horizon = 3;
  p.step = 0.5;
  p.drift = {mu};
  p.volatility = {sigma};
  p.x0 = {1.0};
  return p;
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("markov_models") {

TEST_CASE("streams are keyed, reproducible and domain separated") {
  StreamRng a(42, StreamDomain::path, 3, 7), b(42, StreamDomain::path, 3, 7);
  for (int i = 0; i < 100; ++i) CHECK(a() == b());
  std::set<std::uint64_t> firsts;
  for (auto dom : {StreamDomain::path, StreamDomain::build_noise, StreamDomain::validation, StreamDomain::rollout}) {
    firsts.insert(StreamRng(42, dom, 3, 7)());
  }
  firsts.insert(StreamRng(42, StreamDomain::path, 4, 7)());
  firsts.insert(StreamRng(42, StreamDomain::path, 3, 8)());
  firsts.insert(StreamRng(43, StreamDomain::path, 3, 7)());
  CHECK(firsts.size() == 7);
}

TEST_CASE("uniform and normal draws have the right first two moments") {
  const auto u = sample_mean(200000, [](std::size_t i) { return StreamRng(1, StreamDomain::study, 0, i).uniform(); });
  CHECK(std::abs(u.mean - 0.5) < 3 * u.se + 1e-12);
  const auto z = sample_mean(200000, [](std::size_t i) { return StreamRng(1, StreamDomain::study, 1, i).normal(); });
  CHECK(std::abs(z.mean) < 3 * z.se);
  const auto z2 = sample_mean(200000, [](std::size_t i) {
    const double v = StreamRng(1, StreamDomain::study, 2, i).normal();
    return v * v;
  });
  CHECK(std::abs(z2.mean - 1.0) < 3 * z2.se);
}

TEST_CASE("parallel_for covers every index once regardless of thread count") {
  for (std::size_t threads : {1u, 3u, 8u}) {
    set_thread_count(threads);
    std::vector<std::atomic<int>> hits(1001);
    parallel_for(hits.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) hits[i]++;
    });
    CHECK(std::all_of(hits.begin(), hits.end(), [](const auto& h) { return h.load() == 1; }));
    CHECK(thread_count() == threads);
  }
  set_thread_count(1);
}

TEST_CASE("Black-Scholes update is componentwise multiplication with lognormal noise") {
  const auto m = exp_levy_model(bs(2));
  CHECK(m.family == "black_scholes");
  CHECK(m.dim == 2);
  const std::vector<double> x{2.0, 3.0}, y{0.5, 1.5};
  CHECK(m.step(0, x, y) == std::vector<double>{1.0, 4.5});
  const double expect = std::exp(0.05 * 0.5);
  const auto mean = sample_mean(200000, [&](std::size_t i) {
    StreamRng rng(9, StreamDomain::study, 0, i);
    std::vector<double> yy(2);
    m.sample_noise(0, rng, yy);
    return yy[1];
  });
  CHECK(std::abs(mean.mean - expect) < 3 * mean.se);
}

TEST_CASE("exponential moments of the Levy increment match Monte Carlo") {
  auto p = bs(1, 0.1, 0.3);
  p.jump_intensity = 2.0;
  p.jump_mean = -0.1;
  p.jump_std = 0.15;
  const auto inc = exp_levy_increment(p, 0);
  const auto m = exp_levy_model(p);
  CHECK(m.family == "merton");
  for (double pbar : {1.0, 2.0, 3.0}) {
    const double closed = levy_exponential_moment(inc, pbar);
    const auto mc = sample_mean(400000, [&](std::size_t i) {
      StreamRng rng(5, StreamDomain::study, static_cast<std::uint64_t>(pbar), i);
      std::vector<double> y(1);
      m.sample_noise(0, rng, y);
      return std::pow(y[0], pbar);
    });
    CHECK(std::abs(mc.mean - closed) < 3 * mc.se);
  }
  // Pure diffusion: exp(p gamma + p^2 A / 2).
  LevyIncrement g{0.02, 0.09, 0.0, 0.0, 0.0};
  CHECK(levy_exponential_moment(g, 2.0) == doctest::Approx(std::exp(0.04 + 2.0 * 0.09)));
}

TEST_CASE("correlation outside the PSD range is rejected") {
  auto p = bs(3);
  p.correlation = -0.9;
  CHECK_THROWS_AS(exp_levy_model(p), InputError);
  p.correlation = 0.5;
  const auto m = exp_levy_model(p);
  // Sample log-correlation of two coordinates.
  double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    StreamRng rng(3, StreamDomain::study, 0, i);
    std::vector<double> y(3);
    m.sample_noise(0, rng, y);
    const double a = std::log(y[0]), b = std::log(y[2]);
    sx += a, sy += b, sxy += a * b, sxx += a * a, syy += b * b;
  }
  const double cov = sxy / n - sx / n * sy / n;
  const double rho = cov / std::sqrt((sxx / n - sx / n * sx / n) * (syy / n - sy / n * sy / n));
  CHECK(rho == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("exp-Levy eta network honours its certificate inside the region") {
  for (std::size_t d : {1u, 3u}) {
    const auto eta = exp_levy_eta(d, 0.5, 0.05);
    CHECK(eta.network.input_dim() == 2 * d);
    CHECK(eta.network.output_dim() == d);
    CHECK(eta.certificate.size == eta.network.size());
    const double r = eta.certificate.region_halfwidth;
    CHECK(r == doctest::Approx(std::pow(0.05, -0.5)));
    double worst = 0.0;
    for (std::size_t j = 0; j < 3000; ++j) {
      StreamRng rng(1, StreamDomain::study, d, j);
      std::vector<double> xy(2 * d);
      for (auto& v : xy) v = r * (2 * rng.uniform() - 1);
      const auto h = eta.network.evaluate(xy);
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += std::pow(h(static_cast<Eigen::Index>(i)) - xy[i] * xy[d + i], 2);
      worst = std::max(worst, std::sqrt(s));
    }
    CHECK(worst <= eta.certificate.error_bound);
  }
}

TEST_CASE("default beta per family") {
  CHECK(exp_levy_model(bs(1)).constants.beta == doctest::Approx(1.0 / 3.0));
  DiffusionParams p;
  p.dim = 1;
  p.time_grid = {0.0, 1.0, 2.0, 3.0};
  p.coefficients = {Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Ones(1, 1),
                    Eigen::MatrixXd::Zero(1, 1)};
  p.x0 = {0.0};
  CHECK(discrete_diffusion_model(p).constants.beta == doctest::Approx(0.25));
  p.time_grid = {0.0, 1.0};
  CHECK(discrete_diffusion_model(p).constants.beta == 1.0);
}

TEST_CASE("diffusion update is one Euler step") {
  DiffusionParams p;
  p.dim = 2;
  p.time_grid = {0.0, 0.25, 0.75};
  AffineCoefficients c;
  c.drift_const = Eigen::Vector2d(0.1, -0.2);
  c.drift_linear = Eigen::Matrix2d{{-0.5, 0.1}, {0.0, 0.3}};
  c.vol_const = Eigen::Matrix2d{{0.2, 0.0}, {0.05, 0.3}};
  c.vol_linear = Eigen::MatrixXd::Zero(4, 2);
  c.vol_linear(0, 0) = 0.1;  // sigma_00 depends on x_0
  c.vol_linear(3, 1) = -0.05;
  p.coefficients = c;
  p.x0 = {1.0, 2.0};
  const auto m = discrete_diffusion_model(p);
  CHECK(m.horizon == 2);
  const std::vector<double> x{0.7, -1.1}, y{0.3, -0.4};
  const double dt = 0.5;  // step 1
  const Eigen::Vector2d xv(x[0], x[1]), yv(y[0], y[1]);
  Eigen::Matrix2d sigma = c.vol_const;
  sigma(0, 0) += 0.1 * x[0];
  sigma(1, 1) += -0.05 * x[1];
  const Eigen::Vector2d expect = xv + dt * (c.drift_const + c.drift_linear * xv) + sigma * yv;
  const auto got = m.step(1, x, y);
  CHECK(got[0] == doctest::Approx(expect(0)).epsilon(1e-14));
  CHECK(got[1] == doctest::Approx(expect(1)).epsilon(1e-14));

  const auto eta = m.eta(1, 0.1);
  const double r = eta.certificate.region_halfwidth;
  double worst = 0.0;
  for (std::size_t j = 0; j < 2000; ++j) {
    StreamRng rng(2, StreamDomain::study, 0, j);
    std::vector<double> xy(4);
    for (auto& v : xy) v = r * (2 * rng.uniform() - 1);
    const auto f = m.step(1, std::span(xy).first(2), std::span(xy).subspan(2));
    const auto h = eta.network.evaluate(xy);
    worst = std::max(worst, std::hypot(f[0] - h(0), f[1] - h(1)));
  }
  CHECK(worst <= eta.certificate.error_bound);
}

TEST_CASE("state-independent volatility gives an exact affine eta") {
  AffineCoefficients c{Eigen::VectorXd::Constant(2, 0.1), Eigen::MatrixXd::Zero(2, 2),
                       Eigen::Matrix2d{{1.0, 0.5}, {0.0, 2.0}}, Eigen::MatrixXd::Zero(4, 2)};
  const auto eta = discrete_diffusion_eta(c, 0.5, 1.0, 0.1);
  CHECK(eta.certificate.error_bound == 0.0);
  CHECK(eta.network.depth() == 1);
  const std::vector<double> xy{1.0, 2.0, 0.3, -0.2};
  const auto h = eta.network.evaluate(xy);
  CHECK(h(0) == doctest::Approx(1.0 + 0.05 + 0.3 - 0.1));
  CHECK(h(1) == doctest::Approx(2.0 + 0.05 - 0.4));
}

TEST_CASE("Gaussian increments: E||Y||^2 = d Delta and chi closed form for other orders") {
  DiffusionParams p;
  p.dim = 3;
  p.time_grid = {0.0, 0.4};
  p.coefficients = {Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Identity(3, 3),
                    Eigen::MatrixXd::Zero(9, 3)};
  p.x0 = {0.0, 0.0, 0.0};
  const auto m = discrete_diffusion_model(p);
  CHECK(*m.noise_norm_moment(0, 2.0) == doctest::Approx(3 * 0.4));
  CHECK(*m.noise_norm_moment(0, 0.0) == doctest::Approx(1.0));
  CHECK(*m.noise_norm_moment(0, 4.0) == doctest::Approx(0.16 * 15.0));  // d(d+2) Delta^2
  CHECK_THROWS_AS(m.noise_norm_moment(0, -3.0), DomainError);
  CHECK(m.noise_moment_envelope(0, 4.0) >= *m.noise_norm_moment(0, 4.0));
}

TEST_CASE("running extreme augmentation tracks the extreme and realizes it exactly") {
  auto base = exp_levy_model(bs(2));
  base.x0 = {1.0, 1.2};
  for (auto mode : {ExtremeMode::max, ExtremeMode::min}) {
    const auto m = augment_running_extreme(base, mode);
    CHECK(m.dim == 3);
    CHECK(m.x0[2] == (mode == ExtremeMode::max ? 1.2 : 1.0));
    const std::vector<double> x{1.0, 2.0, 1.5}, y{1.1, 0.5, 0.0};
    const auto f = m.step(0, x, y);
    CHECK(f[0] == doctest::Approx(1.1));
    CHECK(f[1] == doctest::Approx(1.0));
    CHECK(f[2] == doctest::Approx(mode == ExtremeMode::max ? 1.5 : 1.0));
    REQUIRE(m.has_exact_update());
    const auto net = m.exact_update(0, y);
    const auto h = net.evaluate(x);
    for (int i = 0; i < 3; ++i) CHECK(h(i) == doctest::Approx(f[static_cast<std::size_t>(i)]).epsilon(1e-14));
    std::vector<double> yy(3);
    StreamRng rng(1, StreamDomain::study, 0, 0);
    m.sample_noise(0, rng, yy);
    CHECK(yy[2] == 0.0);
  }
}

TEST_CASE("finite noise: exact updates, atom draws and validation") {
  FiniteNoiseParams p;
  p.dim = 2;
  p.horizon = 2;
  p.atoms = {{{2.0, 0.5}, 0.3}, {{0.5, 1.0}, 0.7}};
  p.x0 = {1.0, 1.0};
  const auto m = finite_noise_model(p);
  CHECK(m.support == NoiseSupport::finite);
  const std::vector<double> x{3.0, -1.0};
  for (const auto& a : m.atoms) {
    const auto f = m.step(0, x, a.value);
    const auto h = m.exact_update(0, a.value).evaluate(x);
    CHECK(h(0) == doctest::Approx(f[0]));
    CHECK(h(1) == doctest::Approx(f[1]));
  }
  const auto freq = sample_mean(100000, [&](std::size_t i) {
    StreamRng rng(4, StreamDomain::study, 0, i);
    return m.draw_atom(rng) == 0 ? 1.0 : 0.0;
  });
  CHECK(std::abs(freq.mean - 0.3) < 3 * freq.se);

  p.update = FiniteUpdate::additive;
  const auto add = finite_noise_model(p);
  CHECK(add.step(0, x, p.atoms[0].value) == std::vector<double>{5.0, -0.5});
  CHECK(add.exact_update(0, p.atoms[0].value).evaluate(x)(1) == doctest::Approx(-0.5));

  p.atoms[1].probability = 0.6;
  CHECK_THROWS_AS(finite_noise_model(p), InputError);
}

TEST_CASE("atom text parsing reports the offending line") {
  const auto atoms = parse_atoms("# up and down\n2.0, 0.5\n\n0.5 0.5\n");
  REQUIRE(atoms.size() == 2);
  CHECK(atoms[0].value == std::vector<double>{2.0});
  CHECK(atoms[1].probability == 0.5);
  try {
    (void)parse_atoms("1 0.5\n2 x\n");
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_atoms("1 0.5\n1 2 0.5\n"), InputError);
  CHECK_THROWS_AS(load_atoms("/nonexistent/atoms.txt"), InputError);
}

TEST_CASE("CRR surrogate is risk neutral with reciprocal moves") {
  const auto m = binomial_surrogate_model(100.0, 0.05, 0.2, 0.1, 10);
  REQUIRE(m.atoms.size() == 2);
  const double u = m.atoms[0].value[0], d = m.atoms[1].value[0];
  CHECK(u * d == doctest::Approx(1.0));
  CHECK(u == doctest::Approx(std::exp(0.2 * std::sqrt(0.1))));
  const double mean = m.atoms[0].probability * u + m.atoms[1].probability * d;
  CHECK(mean == doctest::Approx(std::exp(0.005)));
  CHECK_THROWS_AS(binomial_surrogate_model(100.0, 3.0, 0.01, 1.0, 1), InputError);
}

TEST_CASE("sampled paths are reproducible and follow the update") {
  const auto m = exp_levy_model(bs(2));
  const auto a = sample_path(m, m.x0, 17, 3);
  const auto b = sample_path(m, m.x0, 17, 3);
  CHECK(a.states == b.states);
  REQUIRE(a.states.size() == 4);
  for (int t = 0; t < 3; ++t) {
    CHECK(m.step(t, a.states[t], a.noise[t]) == a.states[t + 1]);
  }
  CHECK(sample_path(m, m.x0, 17, 4).states != a.states);
}

TEST_CASE("declared growth envelopes dominate the update on samples") {
  const auto m = exp_levy_model(bs(3));
  for (std::size_t j = 0; j < 2000; ++j) {
    StreamRng rng(6, StreamDomain::study, 0, j);
    std::vector<double> x(3), y(3);
    for (auto& v : x) v = std::exp(rng.normal());
    m.sample_noise(0, rng, y);
    CHECK(norm(m.step(0, x, y)) <= m.growth_envelope(x, y) + 1e-12);
  }
}

TEST_CASE("invalid model parameters are input errors") {
  auto p = bs(2);
  p.volatility = {0.2, 0.3, 0.4};
  CHECK_THROWS_AS(exp_levy_model(p), InputError);
  p = bs(2);
  p.step = 0.0;
  CHECK_THROWS_AS(exp_levy_model(p), InputError);
  DiffusionParams q;
  q.dim = 1;
  q.time_grid = {0.0, 0.0};
  q.coefficients = {Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Ones(1, 1),
                    Eigen::MatrixXd::Zero(1, 1)};
  q.x0 = {0.0};
  CHECK_THROWS_AS(discrete_diffusion_model(q), InputError);
}

}  // TEST_SUITE
