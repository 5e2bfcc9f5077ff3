#include <doctest.h>

#include <cmath>

#include "optstop/engine/oracle.hpp"
#include "optstop/errors.hpp"
#include "optstop/relu/lipschitz.hpp"
#include "optstop/verify/checks.hpp"
#include "optstop/verify/scaling.hpp"

using namespace optstop;
using namespace optstop::verify;

namespace {

markov::MarkovModel bs_model(std::size_t d, int T = 2) {
  markov::ExpLevyParams p;
  p.dim = d;
  p.horizon = T;
  p.step = 0.5;
  p.drift = {0.05};
  p.volatility = {0.2};
  p.x0 = {1.0};
  return markov::exp_levy_model(p);
}

payoff::Payoff max_call(std::size_t d, int T = 2) {
  payoff::PayoffParams p;
  p.kind = payoff::PayoffKind::max_call;
  p.dim = d;
  p.horizon = T;
  p.strike = 1.0;
  return payoff::Payoff::make(p);
}

relu::Matrix lognormal_points(std::size_t d, std::size_t n) {
  relu::Matrix pts(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < pts.cols(); ++j) {
    markov::StreamRng rng(1, markov::StreamDomain::study, 99, static_cast<std::uint64_t>(j));
    for (Eigen::Index i = 0; i < pts.rows(); ++i) pts(i, j) = std::exp(0.5 * rng.normal());
  }
  return pts;
}

markov::MarkovModel finite(int T) {
  markov::FiniteNoiseParams p;
  p.dim = 1;
  p.horizon = T;
  p.atoms = {{{1.3}, 0.4}, {{0.8}, 0.6}};
  p.x0 = {1.0};
  return markov::finite_noise_model(p);
}

}  // namespace

TEST_SUITE("verification_suite") {

TEST_CASE("growth_bound_check reports the worst ratio and fails on any violation") {
  const std::vector<double> lhs{1.0, 2.0, 0.5}, rhs{2.0, 2.5, 1.0};
  const auto ok = growth_bound_check("ok", lhs, rhs);
  CHECK(ok.pass);
  CHECK(ok.worst_ratio == doctest::Approx(0.8));
  CHECK(ok.n_points == 3);
  const std::vector<double> bad_rhs{2.0, 1.9, 1.0};
  CHECK_FALSE(growth_bound_check("bad", lhs, bad_rhs).pass);
  const std::vector<double> short_rhs{1.0};
  CHECK_THROWS_AS(growth_bound_check("x", lhs, short_rhs), InputError);
}

TEST_CASE("payoff and update growth hold on the provided instances") {
  const auto m = bs_model(3);
  const auto pts = lognormal_points(3, 2000);
  CHECK(payoff_growth_check(max_call(3), pts).pass);
  relu::Matrix noise(3, 2000);
  for (Eigen::Index j = 0; j < noise.cols(); ++j) {
    markov::StreamRng rng(2, markov::StreamDomain::study, 0, static_cast<std::uint64_t>(j));
    std::vector<double> y(3);
    m.sample_noise(0, rng, y);
    for (int i = 0; i < 3; ++i) noise(i, j) = y[static_cast<std::size_t>(i)];
  }
  CHECK(update_growth_check(m, 0, pts, noise).pass);
}

TEST_CASE("conditional second moments stay below the chained bound") {
  const auto m = bs_model(2, 3);
  const std::vector<double> x{1.0, 2.0};
  CHECK(conditional_moment_bound(m, 0, 0, x) == doctest::Approx(std::sqrt(5.0)));
  CHECK(conditional_moment_bound(m, 0, 3, x) >= conditional_moment_bound(m, 0, 1, x));
  CHECK(conditional_moment_check(m, 0, 3, lognormal_points(2, 10), 2000, 4).pass);
}

TEST_CASE("value growth holds against the exact oracle") {
  const auto m = finite(3);
  payoff::PayoffParams p;
  p.kind = payoff::PayoffKind::basket_put;
  p.horizon = 3;
  p.strike = 2.0;
  const auto g = payoff::Payoff::make(p);
  CHECK(value_growth_check(m, g, 0, lognormal_points(1, 50)).pass);
}

TEST_CASE("average Lipschitz estimate: zero for constants, bounded for networks, stable in h") {
  const std::vector<double> h{0.1, 0.0};
  CHECK(average_lipschitz_estimate([](int, std::span<const double>) { return 3.0; }, 0, h, 500, 1) == 0.0);
  const std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS(average_lipschitz_estimate([](int, std::span<const double>) { return 0.0; }, 0, zero, 10, 1),
                  InputError);

  const auto m = finite(2);
  payoff::PayoffParams p;
  p.kind = payoff::PayoffKind::basket_put;
  p.horizon = 2;
  const auto g = payoff::Payoff::make(p);
  auto b = engine::BuildParams::defaults_for(0.1);
  b.mode = engine::UpdateMode::exact;
  b.n_samples = 1000;
  const auto s = engine::build_value_stack(m, g, b);
  std::vector<double> estimates;
  for (double scale : {1e-1, 1e-2, 1e-3}) {
    const std::vector<double> hh{scale};
    const double est = average_lipschitz_estimate(s, 0, hh, 2000, 3);
    CHECK(est <= relu::lipschitz_upper_bound(s.value(0)));
    estimates.push_back(est);
  }
  for (std::size_t i = 1; i < estimates.size(); ++i) {
    CHECK(estimates[i] <= 4.0 * estimates[i - 1] + 1e-12);
    CHECK(estimates[i - 1] <= 4.0 * estimates[i] + 1e-12);
  }
}

TEST_CASE("moment checks: order zero, Gaussian closed form, lognormal coordinates") {
  const auto m = bs_model(2);
  const auto zero = moment_check(m, 0, 0.0, 1000, 1);
  CHECK(zero.estimate == 1.0);
  CHECK(zero.pass);
  for (double pbar : {1.0, 2.0, 3.0}) {
    const auto r = moment_check(m, 0, pbar, 200000, 2, 1);
    REQUIRE(r.closed_form.has_value());
    CHECK(r.pass);
    CHECK(std::abs(r.estimate - *r.closed_form) <= 3 * r.standard_error);
  }
  markov::DiffusionParams p;
  p.dim = 4;
  p.time_grid = {0.0, 0.25};
  p.coefficients = {Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Zero(4, 4), Eigen::MatrixXd::Identity(4, 4),
                    Eigen::MatrixXd::Zero(16, 4)};
  p.x0 = std::vector<double>(4, 0.0);
  const auto gauss = markov::discrete_diffusion_model(p);
  const auto r = moment_check(gauss, 0, 2.0, 200000, 3);
  REQUIRE(r.closed_form.has_value());
  CHECK(*r.closed_form == doctest::Approx(4 * 0.25));
  CHECK(r.pass);
  CHECK_THROWS_AS(moment_check(gauss, 0, -5.0, 100, 1), DomainError);
}

TEST_CASE("log-log fit recovers an exact power law") {
  const std::vector<double> x{2, 4, 8, 16}, y{12, 48, 192, 768};
  const auto f = fit_loglog(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(std::log(3.0)));
  for (double r : f.residuals) CHECK(std::abs(r) < 1e-12);
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(fit_loglog(one, one), InputError);
}

TEST_CASE("scaling study: input checks, reproducible table, polynomial slope") {
  ScalingFamily fam{[](std::size_t d) { return bs_model(d, 1); }, [](std::size_t d) { return max_call(d, 1); }};
  auto b = engine::BuildParams::defaults_for(0.1);
  b.n_samples = 20;
  const std::vector<std::size_t> two{2, 4}, unsorted{4, 2, 8}, dims{2, 3, 4};
  CHECK_THROWS_AS(scaling_study(fam, two, b), InputError);
  CHECK_THROWS_AS(scaling_study(fam, unsorted, b), InputError);
  const auto s1 = scaling_study(fam, dims, b);
  const auto s2 = scaling_study(fam, dims, b);
  CHECK(format_scaling_table(s1, false) == format_scaling_table(s2, false));
  REQUIRE(s1.records.size() == 3);
  CHECK(std::isnan(s1.records[0].slope_partial));
  CHECK(s1.fit.slope > 0.0);
  CHECK(s1.fit.slope <= 4.0);
  const auto table = format_scaling_table(s1, false);
  CHECK(table.rfind("d\teps_bar\tsize_total\tslope_partial\twall_ms\n", 0) == 0);
  CHECK(table.find("\tna\n") != std::string::npos);
  const std::vector<double> eps{0.2, 0.1, 0.05};
  const auto e = epsilon_study(fam, 2, eps, b);
  CHECK(std::isfinite(e.fit.slope));
}

}  // TEST_SUITE
