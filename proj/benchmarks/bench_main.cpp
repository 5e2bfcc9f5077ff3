#include <benchmark/benchmark.h>

#include <random>

#include "optstop/approx/product.hpp"
#include "optstop/engine/rollout.hpp"
#include "optstop/engine/value_stack.hpp"
#include "optstop/relu/calculus.hpp"

using namespace optstop;

namespace {

payoff::Payoff max_call(std::size_t d, int T) {
  payoff::PayoffParams p;
  p.kind = payoff::PayoffKind::max_call;
  p.dim = d;
  p.horizon = T;
  p.strike = 1.0;
  p.rate = 0.05;
  return payoff::Payoff::make(p);
}

markov::MarkovModel black_scholes(std::size_t d, int T) {
  markov::ExpLevyParams p;
  p.dim = d;
  p.horizon = T;
  p.step = 1.0 / T;
  p.drift = {0.05};
  p.volatility = {0.2};
  p.x0 = {1.0};
  return markov::exp_levy_model(p);
}

relu::Matrix lognormal_batch(std::size_t d, Eigen::Index n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.0, 0.3);
  relu::Matrix x(static_cast<Eigen::Index>(d), n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = std::exp(z(rng));
  return x;
}

void BM_MaxCallEvalBatch(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto net = max_call(d, 1).network(0);
  const auto x = lognormal_batch(d, 4096);
  for (auto _ : state) benchmark::DoNotOptimize(net.evaluate_batch(x));
  state.SetItemsProcessed(state.iterations() * x.cols());
}
BENCHMARK(BM_MaxCallEvalBatch)->Arg(2)->Arg(8)->Arg(32);

void BM_MinKBuild(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(relu::min_k(static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_MinKBuild)->Arg(8)->Arg(64);

void BM_Compose(benchmark::State& state) {
  const auto inner = max_call(16, 1).network(0);
  const auto outer = relu::max2();
  const auto pair = relu::parallelize_shared(std::vector<relu::NeuralNetwork>{inner, inner});
  for (auto _ : state) benchmark::DoNotOptimize(relu::compose(outer, pair));
}
BENCHMARK(BM_Compose);

void BM_ProductNetwork(benchmark::State& state) {
  const double eps = 1.0 / static_cast<double>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(approx::product_network(eps, 10.0));
}
BENCHMARK(BM_ProductNetwork)->Arg(10)->Arg(1000);

void BM_BuildValueStack(benchmark::State& state) {
  const auto m = black_scholes(2, 2);
  const auto g = max_call(2, 2);
  auto b = engine::BuildParams::defaults_for(0.1);
  b.n_samples = static_cast<std::size_t>(state.range(0));
  b.seed = 3;
  for (auto _ : state) benchmark::DoNotOptimize(engine::build_value_stack(m, g, b));
}
BENCHMARK(BM_BuildValueStack)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_Rollout(benchmark::State& state) {
  const auto m = black_scholes(2, 2);
  const auto g = max_call(2, 2);
  auto b = engine::BuildParams::defaults_for(0.1);
  b.n_samples = 100;
  b.seed = 3;
  const auto stack = engine::build_value_stack(m, g, b);
  const auto paths = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(engine::rollout_price(stack, m, g, m.x0, paths, 4));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(paths));
}
BENCHMARK(BM_Rollout)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
