#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "optstop/engine/oracle.hpp"
#include "optstop/engine/report.hpp"
#include "optstop/engine/rollout.hpp"
#include "optstop/engine/stack_io.hpp"
#include "optstop/engine/value_stack.hpp"
#include "optstop/errors.hpp"
#include "optstop/relu/calculus.hpp"
#include "optstop/relu/serialize.hpp"
#include "optstop/util/parallel.hpp"

using namespace optstop;
using namespace optstop::engine;
using markov::Atom;
using markov::FiniteNoiseParams;
using payoff::Payoff;
using payoff::PayoffKind;
using payoff::PayoffParams;

namespace {

markov::MarkovModel two_atom(int T = 1, std::size_t d = 1) {
  FiniteNoiseParams p;
  p.dim = d;
  p.horizon = T;
  p.atoms = {{std::vector<double>(d, 2.0), 0.5}, {std::vector<double>(d, 0.5), 0.5}};
  p.x0 = std::vector<double>(d, 1.0);
  return markov::finite_noise_model(p);
}

Payoff put(std::size_t d, int T, double K = 1.0, double r = 0.0) {
  PayoffParams p;
  p.kind = PayoffKind::basket_put;
  p.dim = d;
  p.horizon = T;
  p.strike = K;
  p.rate = r;
  return Payoff::make(p);
}

markov::MarkovModel random_finite(std::mt19937_64& rng, std::size_t d, int T) {
  std::uniform_real_distribution<double> up(1.05, 1.6), pr(0.2, 0.8);
  FiniteNoiseParams p;
  p.dim = d;
  p.horizon = T;
  std::vector<double> u(d), dn(d);
  for (std::size_t i = 0; i < d; ++i) {
    u[i] = up(rng);
    dn[i] = 1.0 / up(rng);
  }
  const double q = pr(rng);
  p.atoms = {{u, q}, {dn, 1.0 - q}};
  p.x0 = std::vector<double>(d, 1.0);
  return markov::finite_noise_model(p);
}

BuildParams exact_params(std::size_t n, std::uint64_t seed = 3) {
  BuildParams b = BuildParams::defaults_for(0.1);
  b.n_samples = n;
  b.delta = 0.0;
  b.mode = UpdateMode::exact;
  b.seed = seed;
  return b;
}

}  // namespace

TEST_SUITE("stopping_engine") {

TEST_CASE("two-atom instance has value one quarter") {
  const auto m = two_atom();
  const auto g = put(1, 1);
  const std::vector<double> x0{1.0};
  CHECK(exact_dp_value(m, g, 0, x0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(exact_dp_continuation(m, g, 0, x0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(exact_dp_policy_value(m, g, x0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(exact_dp_value(m, g, 1, x0) == 0.0);
}

TEST_CASE("exact DP agrees with brute-force enumeration and its own policy") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t d = 1 + rep % 3;
    const int T = 2 + rep % 3;
    const auto m = random_finite(rng, d, T);
    const auto g = put(d, T, 1.0, 0.02);
    for (int t = 0; t < T; ++t) {
      const auto x = std::vector<double>(d, 0.8 + 0.1 * t);
      CHECK(exact_dp_value(m, g, t, x) == doctest::Approx(testsupport::brute_force_value(m, g, t, x)).epsilon(1e-13));
      CHECK(exact_dp_continuation(m, g, t, x) ==
            doctest::Approx(testsupport::brute_force_continuation(m, g, t, x)).epsilon(1e-13));
    }
    CHECK(std::abs(exact_dp_policy_value(m, g, m.x0) - exact_dp_value(m, g, 0, m.x0)) <= 1e-10);
  }
}

TEST_CASE("deterministic model: value is the best exercise along the single path") {
  FiniteNoiseParams p;
  p.dim = 1;
  p.horizon = 4;
  p.atoms = {{{0.9}, 1.0}};
  p.x0 = {1.0};
  const auto m = markov::finite_noise_model(p);
  const auto g = put(1, 4, 1.0, 0.05);
  double best = 0.0, x = 1.0;
  for (int t = 0; t <= 4; ++t, x *= 0.9) best = std::max(best, g(t, std::vector<double>{x}));
  CHECK(exact_dp_value(m, g, 0, m.x0) == doctest::Approx(best).epsilon(1e-14));
}

TEST_CASE("exact DP refuses models beyond its guard or without finite noise") {
  FiniteNoiseParams p;
  p.dim = 1;
  p.horizon = 30;
  p.atoms = {{{1.1}, 0.5}, {{0.9}, 0.5}};
  p.x0 = {1.0};
  const auto m = markov::finite_noise_model(p);
  CHECK_THROWS_AS((void)exact_dp_value(m, put(1, 30), 0, m.x0), ResourceError);
  markov::ExpLevyParams q;
  q.drift = {0.0};
  q.volatility = {0.2};
  q.x0 = {1.0};
  const auto bs = markov::exp_levy_model(q);
  CHECK_THROWS_AS((void)exact_dp_value(bs, put(1, 1), 0, bs.x0), InputError);
}

TEST_CASE("lattice: European limit, early exercise premium and zero volatility") {
  const std::vector<int> last{2000};
  const double eu = binomial_american(100, 100, 0.05, 0.2, 1.0, 2000, last);
  CHECK(eu == doctest::Approx(black_scholes_price(100, 100, 0.05, 0.2, 1.0)).epsilon(2e-3));
  std::vector<int> all(2001);
  std::iota(all.begin(), all.end(), 0);
  CHECK(binomial_american(100, 100, 0.05, 0.2, 1.0, 2000, all) > eu);
  CHECK(black_scholes_price(100, 100, 0.05, 0.2, 1.0) == doctest::Approx(5.573526).epsilon(1e-6));
  // sigma = 0: S grows at r, so the put is worth (K - S0)^+ now.
  std::vector<int> every(101);
  std::iota(every.begin(), every.end(), 0);
  CHECK(binomial_american(80, 100, 0.05, 0.0, 1.0, 100, every) == doctest::Approx(20.0).epsilon(1e-12));
  const std::vector<double> times{0.1, 0.55};
  CHECK(exercise_steps_from_times(std::vector<double>{0.1, 0.5, 1.0}, 1.0, 10) == std::vector<int>{1, 5, 10});
  CHECK_THROWS_AS(exercise_steps_from_times(times, 1.0, 10), InputError);
}

TEST_CASE("T = 1 construction audit: v0 = max(phi0 - delta, gamma0)") {
  const auto m = two_atom();
  const auto g = put(1, 1);
  auto params = exact_params(1000);
  params.delta = 0.01;
  const auto s = build_value_stack(m, g, params);
  CHECK(s.horizon() == 1);
  CHECK(relu::bitwise_equal(s.value(1), g.network(1)));
  CHECK(&continuation_network(s, 0) == &s.continuation(0));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> x{u(rng)};
    double gamma = 0.0;
    for (const auto& d : s.draws[0]) gamma += d.weight * g(1, m.step(0, x, d.value));
    CHECK(s.continuation(0).evaluate_scalar(x) == doctest::Approx(gamma).epsilon(1e-12));
    CHECK(s.value(0).evaluate_scalar(x) == doctest::Approx(std::max(g(0, x) - 0.01, gamma)).epsilon(1e-12));
  }
  double weight = 0.0;
  for (const auto& d : s.draws[0]) weight += d.weight;
  CHECK(weight == doctest::Approx(1.0));
}

TEST_CASE("size ledger: v_t <= 2(7 + size(phi_t) + size(gamma_t)) and matches recount") {
  std::mt19937_64 rng(3);
  const auto m = random_finite(rng, 2, 3);
  const auto g = put(2, 3);
  const auto s = build_value_stack(m, g, exact_params(500));
  const auto sizes = s.size_by_t();
  for (int t = 0; t < 3; ++t) {
    CHECK(s.value(t).size() <= 2 * (7 + s.payoff(t).size() + s.continuation(t).size()));
    CHECK(sizes[static_cast<std::size_t>(t)] == s.value(t).size());
  }
}

TEST_CASE("two-atom exact build lands within 3 standard errors of one quarter") {
  const auto m = two_atom();
  const auto g = put(1, 1);
  const auto s = build_value_stack(m, g, exact_params(100000, 11));
  const double v = s.value(0).evaluate_scalar(m.x0);
  const double se = stack_standard_error(s, m, m.x0, 500, 11);
  CHECK(se > 0.0);
  CHECK(std::abs(v - 0.25) <= 3 * se);
}

TEST_CASE("continuation error shrinks with N") {
  const auto m = two_atom(2);
  const auto g = put(1, 2);
  const auto rho = marginal_sampler(m, 5);
  auto mse = [&](std::size_t n) {
    double acc = 0.0;
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
      const auto s = build_value_stack(m, g, exact_params(n, seed));
      for (int j = 0; j < 50; ++j) {
        std::vector<double> x(1);
        rho(1, static_cast<std::uint64_t>(j), x);
        const double gap = s.continuation(1).evaluate_scalar(x) - exact_dp_continuation(m, g, 1, x);
        acc += gap * gap;
      }
    }
    return acc;
  };
  const double a = mse(100), b = mse(1000), c = mse(10000);
  CHECK(a > b);
  CHECK(b > c);
}

TEST_CASE("builds are reproducible and independent of the thread count") {
  std::mt19937_64 rng(4);
  const auto m = random_finite(rng, 2, 2);
  const auto g = put(2, 2);
  set_thread_count(1);
  const auto a = build_value_stack(m, g, exact_params(300, 9));
  set_thread_count(4);
  const auto b = build_value_stack(m, g, exact_params(300, 9));
  set_thread_count(1);
  CHECK(stacks_bitwise_equal(a, b));
  const auto c = build_value_stack(m, g, exact_params(300, 10));
  CHECK_FALSE(stacks_bitwise_equal(a, c));
}

TEST_CASE("eta-mode build on a lognormal model stays close to the lattice value") {
  markov::ExpLevyParams q;
  q.horizon = 1;
  q.step = 1.0;
  q.drift = {0.0};
  q.volatility = {0.2};
  q.x0 = {1.0};
  const auto m = markov::exp_levy_model(q);
  const auto g = put(1, 1);
  auto params = BuildParams::defaults_for(0.1);
  params.n_samples = 2000;
  params.delta = 0.0;
  const auto s = build_value_stack(m, g, params);
  CHECK(s.mode == UpdateMode::eta);
  const double v = s.value(0).evaluate_scalar(m.x0);
  CHECK(v == doctest::Approx(black_scholes_price(1.0, 1.0, 0.0, 0.2, 1.0)).epsilon(0.1));
  CHECK(s.steps[0].attempts >= 1);
  CHECK(s.steps[0].max_noise_norm <= s.steps[0].noise_norm_threshold);
}

TEST_CASE("builder validates its inputs") {
  const auto m = two_atom();
  const auto g = put(1, 1);
  auto p = exact_params(10);
  p.eps_bar = 1.5;
  CHECK_THROWS_AS(build_value_stack(m, g, p), InputError);
  p = exact_params(0);
  CHECK_THROWS_AS(build_value_stack(m, g, p), InputError);
  p = exact_params(10);
  p.n_val = 50;
  CHECK_THROWS_AS(build_value_stack(m, g, p), InputError);
  p = exact_params(10);
  p.delta = -1.0;
  CHECK_THROWS_AS(build_value_stack(m, g, p), InputError);
  CHECK_THROWS_AS(build_value_stack(m, put(2, 1), exact_params(10)), InputError);
  p = exact_params(100);
  p.max_size = 10;
  CHECK_THROWS_AS(build_value_stack(two_atom(3), put(1, 3), p), ResourceError);
}

TEST_CASE("always-stop stack pays g(0, x0) with zero standard error") {
  const auto m = two_atom(2);
  const auto g = put(1, 2, 1.3);
  auto s = build_value_stack(m, g, exact_params(100));
  s.delta = -1e9;
  const auto r = rollout_price(s, m, g, m.x0, 1000, 1);
  CHECK(r.mean == g(0, m.x0));
  CHECK(r.standard_error == 0.0);
  CHECK(r.n_paths == 1000);
  CHECK_THROWS_AS(rollout_price(s, m, g, m.x0, 99, 1), InputError);
}

TEST_CASE("oracle policy rollout recovers the DP value") {
  const auto m = two_atom();
  const auto g = put(1, 1);
  const auto r = rollout_price(oracle_policy(m, g), m, g, m.x0, 100000, 3);
  CHECK(std::abs(r.mean - 0.25) <= 3 * r.standard_error);
}

TEST_CASE("network policy never beats the oracle beyond noise") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    const auto m = random_finite(rng, 1 + rep % 2, 3);
    const auto g = put(m.dim, 3);
    const auto s = build_value_stack(m, g, exact_params(200, static_cast<std::uint64_t>(rep)));
    const auto r = rollout_price(s, m, g, m.x0, 20000, 7);
    CHECK(r.mean <= exact_dp_value(m, g, 0, m.x0) + 3 * r.standard_error);
  }
}

TEST_CASE("l2 error against the oracle and against supplied values") {
  const auto m = two_atom(2);
  const auto g = put(1, 2);
  const auto s = build_value_stack(m, g, exact_params(5000));
  const ReferenceValue oracle = [&](int t, std::span<const double> x) { return exact_dp_value(m, g, t, x); };
  const auto e2 = l2_error(s, 2, oracle, marginal_sampler(m, 1), 200, 1);
  CHECK(e2.value < 1e-12);
  const auto e0 = l2_error(s, 0, oracle, marginal_sampler(m, 1), 200, 1);
  CHECK(e0.n == 200);
  // Percentile bounds can differ from the point estimate by rounding when the gaps are all equal.
  CHECK(e0.ci_low <= e0.value * (1 + 1e-12));
  CHECK(e0.value <= e0.ci_high * (1 + 1e-12));

  relu::Matrix pts(1, 3);
  pts << 0.5, 1.0, 1.5;
  relu::Vector ref(3);
  for (int j = 0; j < 3; ++j) ref(j) = s.value(1).evaluate_scalar(std::vector<double>{pts(0, j)});
  CHECK(l2_error(s, 1, pts, ref, 1).value == 0.0);
  ref(0) += 3.0;
  CHECK(l2_error(s, 1, pts, ref, 1).value == doctest::Approx(std::sqrt(3.0)));
  CHECK_THROWS_AS(l2_error(s, 0, ReferenceValue{}, marginal_sampler(m, 1), 10, 1), InputError);
}

TEST_CASE("stack save and load are bit exact, corrupt manifests are rejected") {
  const auto m = two_atom(2);
  const auto g = put(1, 2);
  const auto s = build_value_stack(m, g, exact_params(300));
  const auto dir = std::filesystem::temp_directory_path() / "optstop_unit_stack";
  std::filesystem::remove_all(dir);
  save_stack(s, dir);
  const auto back = load_stack(dir);
  CHECK(stacks_bitwise_equal(s, back));
  CHECK(stack_manifest(back) == stack_manifest(s));

  {
    std::ofstream f(dir / "manifest.txt", std::ios::app);
    f << "bogus 1\n";
  }
  CHECK_THROWS_AS(load_stack(dir), InputError);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_stack(dir), InputError);
}

TEST_CASE("report text: fixed fields, na for missing values, timing only on request") {
  PricingReport r;
  r.command = "price";
  r.value_oracle = 0.25;
  r.size_by_t = {16, 3};
  r.l2_by_t = {0.5, std::nullopt};
  r.config = {{"build.seed", "1"}};
  const auto text = format_report(r);
  CHECK(text.find("value_oracle = 0.25\n") != std::string::npos);
  CHECK(text.find("value_network = na\n") != std::string::npos);
  CHECK(text.find("l2_by_t = 0.5 na\n") != std::string::npos);
  CHECK(text.find("size_by_t = 16 3\n") != std::string::npos);
  CHECK(text.find("wall_ms") == std::string::npos);
  CHECK(text.find("[config]\nbuild.seed = 1\n") != std::string::npos);
  r.wall_ms = 12.5;
  CHECK(format_report(r).find("wall_ms = 12.5") != std::string::npos);
  CHECK(format_real(0.1) == "0.10000000000000001");
  CHECK(format_report(r) == format_report(r));
}

}  // TEST_SUITE
