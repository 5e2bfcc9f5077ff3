#include "app.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "optstop/approx/product.hpp"
#include "optstop/engine/oracle.hpp"
#include "optstop/engine/report.hpp"
#include "optstop/engine/rollout.hpp"
#include "optstop/engine/stack_io.hpp"
#include "optstop/errors.hpp"
#include "optstop/relu/lipschitz.hpp"
#include "optstop/util/parallel.hpp"
#include "optstop/verify/checks.hpp"
#include "optstop/verify/scaling.hpp"

namespace optstop::app {

namespace fs = std::filesystem;
using engine::format_optional;
using engine::format_real;

namespace {

std::vector<markov::Atom> inline_atoms(const std::string& text) {
  std::string rows = text;
  for (char& c : rows) {
    if (c == ';') c = '\n';
  }
  return markov::parse_atoms(rows);
}

markov::MarkovModel make_model(Config& c, Experiment& e) {
  const std::string family = c.require_string("model.family");
  const auto dim = static_cast<std::size_t>(c.get_uint("model.dim", 1));
  const auto horizon = static_cast<int>(c.get_uint("model.horizon", 1));
  e.step = c.get_double("model.step", 1.0);
  const auto x0 = c.get_doubles("model.x0", {1.0});
  const auto beta = c.get_optional_double("model.beta");
  const std::string running = c.get_string("model.running", "none");

  markov::MarkovModel m;
  if (family == "black_scholes" || family == "merton") {
    markov::ExpLevyParams p;
    p.dim = dim;
    p.horizon = horizon;
    p.step = e.step;
    p.drift = c.get_doubles("model.drift", {0.0});
    p.volatility = c.get_doubles("model.volatility", {0.2});
    p.correlation = c.get_double("model.correlation", 0.0);
    if (family == "merton") {
      p.jump_intensity = c.get_double("model.jump_intensity", 0.0);
      p.jump_mean = c.get_double("model.jump_mean", 0.0);
      p.jump_std = c.get_double("model.jump_std", 0.0);
    }
    p.x0 = x0;
    p.beta = beta;
    require(!p.drift.empty() && !p.volatility.empty(), "field model.drift / model.volatility: empty list");
    e.drift = p.drift.front();
    e.volatility = p.volatility.front();
    m = markov::exp_levy_model(p);
  } else if (family == "diffusion") {
    markov::DiffusionParams p;
    p.dim = dim;
    p.time_grid = c.get_doubles("model.time_grid", {});
    if (p.time_grid.empty()) {
      for (int t = 0; t <= horizon; ++t) p.time_grid.push_back(t * e.step);
    }
    const auto n = static_cast<Eigen::Index>(dim);
    auto read = [&](const std::string& key, Eigen::Index rows, Eigen::Index cols, const relu::Matrix& fallback) {
      const auto v = c.get_doubles(key, {});
      if (v.empty()) return fallback;
      if (static_cast<Eigen::Index>(v.size()) != rows * cols) {
        throw InputError("field " + key + ": expected " + std::to_string(rows * cols) + " values, got " +
                         std::to_string(v.size()));
      }
      relu::Matrix out(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = v[static_cast<std::size_t>(i * cols + j)];
      }
      return out;
    };
    p.coefficients.drift_const = read("model.drift_const", n, 1, relu::Matrix::Zero(n, 1)).col(0);
    p.coefficients.drift_linear = read("model.drift_linear", n, n, relu::Matrix::Zero(n, n));
    p.coefficients.vol_const = read("model.vol_const", n, n, relu::Matrix::Identity(n, n));
    p.coefficients.vol_linear = read("model.vol_linear", n * n, n, relu::Matrix::Zero(n * n, n));
    p.x0 = x0;
    p.beta = beta;
    m = markov::discrete_diffusion_model(p);
  } else if (family == "finite") {
    markov::FiniteNoiseParams p;
    p.dim = dim;
    p.horizon = horizon;
    const std::string update = c.get_string("model.update", "multiplicative");
    if (update == "multiplicative") {
      p.update = markov::FiniteUpdate::multiplicative;
    } else if (update == "additive") {
      p.update = markov::FiniteUpdate::additive;
    } else {
      throw InputError("field model.update: expected multiplicative or additive, got '" + update + "'");
    }
    const std::string file = c.get_string("model.atoms_file", "");
    const std::string rows = c.get_string("model.atoms", "");
    require(file.empty() != rows.empty(), "model: give exactly one of model.atoms or model.atoms_file");
    p.atoms = file.empty() ? inline_atoms(rows) : markov::load_atoms(file);
    p.x0 = x0;
    p.beta = beta;
    m = markov::finite_noise_model(p);
  } else if (family == "crr_binomial") {
    require(dim == 1, "field model.dim: crr_binomial is one-dimensional");
    e.drift = c.get_double("model.drift", 0.0);
    e.volatility = c.get_double("model.volatility", 0.2);
    require(x0.size() == 1, "field model.x0: crr_binomial takes one initial value");
    m = markov::binomial_surrogate_model(x0.front(), e.drift, e.volatility, e.step, horizon);
  } else {
    throw InputError("field model.family: unknown family '" + family +
                     "' (black_scholes, merton, diffusion, finite, crr_binomial)");
  }
  if (running == "min" || running == "max") {
    m = markov::augment_running_extreme(m, running == "min" ? markov::ExtremeMode::min : markov::ExtremeMode::max);
  } else if (running != "none") {
    throw InputError("field model.running: expected none, min or max, got '" + running + "'");
  }
  return m;
}

payoff::Payoff make_payoff(Config& c, const Experiment& e) {
  payoff::PayoffParams p;
  p.kind = payoff::parse_payoff_kind(c.get_string("payoff.kind", "max_call"));
  p.dim = e.model.dim;
  p.horizon = e.model.horizon;
  p.strike = c.get_double("payoff.strike", 1.0);
  p.rate = c.get_double("payoff.rate", 0.0);
  p.step_length = c.get_double("payoff.step_length", e.step);
  p.weights = c.get_doubles("payoff.weights", {});
  return payoff::Payoff::make(p);
}

}  // namespace

Experiment load_experiment(Config& c, std::optional<std::uint64_t> seed_override) {
  Experiment e;
  if (c.has("model.family")) {
    e.model = make_model(c, e);
    e.payoff = make_payoff(c, e);
  }
  const double eps = c.get_double("build.eps_bar", 0.1);
  require(eps > 0.0 && eps < 1.0, "field build.eps_bar: must lie in (0, 1)");
  const auto defaults = engine::BuildParams::defaults_for(eps);
  e.build = defaults;
  e.build.n_samples = static_cast<std::size_t>(c.get_uint("build.n_samples", defaults.n_samples));
  e.build.delta = c.get_double("build.delta", defaults.delta);
  e.build.n_val = static_cast<std::size_t>(c.get_uint("build.n_val", 100));
  e.build.max_retries = static_cast<std::size_t>(c.get_uint("build.max_retries", 3));
  e.build.max_size = static_cast<std::size_t>(c.get_uint("build.max_size", e.build.max_size));
  e.build.inner_batch = static_cast<std::size_t>(c.get_uint("build.inner_batch", 256));
  e.build.pilot_batch = static_cast<std::size_t>(c.get_uint("build.pilot_batch", 4096));
  e.build.mode = engine::parse_update_mode(c.get_string("build.mode", "eta"));
  if (seed_override) c.set("build.seed=" + std::to_string(*seed_override));
  e.build.seed = c.get_uint("build.seed", 1);
  require(e.build.n_samples >= 1, "field build.n_samples: must be >= 1");
  require(e.build.delta >= 0.0, "field build.delta: must be >= 0");
  require(e.build.n_val >= 100, "field build.n_val: must be >= 100");

  e.run.n_paths = static_cast<std::size_t>(c.get_uint("run.n_paths", 10000));
  e.run.l2_points = static_cast<std::size_t>(c.get_uint("run.l2_points", 200));
  e.run.se_paths = static_cast<std::size_t>(c.get_uint("run.se_paths", 500));
  e.run.oracle = c.get_string("run.oracle", "auto");
  e.run.lattice_steps = static_cast<int>(c.get_uint("run.lattice_steps", 5000));
  e.run.rollout_family = c.get_string("run.rollout_family", "same");
  e.run.dims = c.get_sizes("run.dims", {2, 4, 8, 16});
  e.run.eps_list = c.get_doubles("run.eps_list", {});
  e.run.max_slope = c.get_double("run.max_slope", 4.0);
  e.run.verify_samples = static_cast<std::size_t>(c.get_uint("run.verify_samples", 100000));
  e.run.moment_samples = static_cast<std::size_t>(c.get_uint("run.moment_samples", 1000000));
  require(e.run.n_paths >= 100, "field run.n_paths: must be >= 100");
  require(e.run.oracle == "auto" || e.run.oracle == "dp" || e.run.oracle == "binomial" || e.run.oracle == "none",
          "field run.oracle: expected auto, dp, binomial or none");
  require(e.run.rollout_family == "same" || e.run.rollout_family == "black_scholes",
          "field run.rollout_family: expected same or black_scholes");
  for (double v : e.run.eps_list) require(v > 0.0 && v < 1.0, "field run.eps_list: entries must lie in (0, 1)");

  e.product.eps = c.get_double("product.eps", 1e-3);
  e.product.bound = c.get_double("product.M", 1.0);
  e.product.grid = static_cast<std::size_t>(c.get_uint("product.grid", 401));
  e.product.pairs = static_cast<std::size_t>(c.get_uint("product.pairs", 100000));
  require(e.product.eps > 0.0 && e.product.eps <= 1.0, "field product.eps: must lie in (0, 1]");
  require(e.product.bound >= 1.0, "field product.M: must be >= 1");
  require(e.product.grid >= 2, "field product.grid: must be >= 2");

  c.reject_unused();
  e.resolved = c.resolved();
  return e;
}

namespace {

struct GlobalOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool timing = false;
};

class Timer {
 public:
  [[nodiscard]] double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

Experiment prepare(const GlobalOptions& g) {
  Config cfg = g.config.empty() ? Config{} : Config::load(g.config);
  for (const auto& s : g.sets) cfg.set(s);
  return load_experiment(cfg, g.seed);
}

const markov::MarkovModel& need_model(const Experiment& e) {
  if (!e.payoff) throw InputError("missing required field model.family");
  return e.model;
}

void emit(const GlobalOptions& g, std::ostream& out, const std::string& name, const std::string& text,
          std::optional<double> wall_ms) {
  out << text;
  if (g.out.empty()) return;
  fs::create_directories(g.out);
  std::ofstream f(fs::path(g.out) / name, std::ios::binary);
  if (!f) throw InputError("cannot write " + (fs::path(g.out) / name).string());
  f << text;
  if (wall_ms) {
    std::ofstream t(fs::path(g.out) / "timing.txt", std::ios::binary);
    t << "wall_ms = " << format_real(*wall_ms) << '\n';
  }
}

bool dp_feasible(const markov::MarkovModel& m) {
  if (m.support != markov::NoiseSupport::finite) return false;
  std::size_t k = 0;
  for (const auto& a : m.atoms) k += a.probability > 0.0 ? 1 : 0;
  return std::pow(static_cast<double>(k), m.horizon) <= engine::kExactDpGuard;
}

bool binomial_applicable(const Experiment& e) {
  return e.model.dim == 1 && e.payoff->kind() == payoff::PayoffKind::basket_put &&
         (e.model.family == "crr_binomial" || e.model.family == "black_scholes");
}

double lattice_value(const Experiment& e) {
  const int T = e.model.horizon;
  const double maturity = T * e.step;
  require(e.run.lattice_steps % T == 0, "field run.lattice_steps: must be a multiple of model.horizon");
  std::vector<int> steps;
  for (int t = 0; t <= T; ++t) steps.push_back(t * (e.run.lattice_steps / T));
  return engine::binomial_american(e.model.x0.front(), e.payoff->params().strike, e.payoff->params().rate,
                                   e.volatility, maturity, e.run.lattice_steps, steps);
}

std::optional<double> oracle_value(const Experiment& e, std::string& method) {
  const auto& m = need_model(e);
  const std::string want = e.run.oracle;
  if (want == "none") return std::nullopt;
  if ((want == "auto" || want == "dp") && dp_feasible(m)) {
    method = "exact_dp";
    return engine::exact_dp_value(m, *e.payoff, 0, m.x0);
  }
  if (want == "dp") throw InputError("run.oracle = dp needs a finite-noise model within the enumeration guard");
  if (binomial_applicable(e)) {
    method = "binomial_lattice";
    return lattice_value(e);
  }
  if (want == "binomial") throw InputError("run.oracle = binomial needs a one-dimensional put on a lognormal model");
  return std::nullopt;
}

markov::MarkovModel rollout_model(const Experiment& e) {
  if (e.run.rollout_family == "same") return e.model;
  require(e.model.dim == 1, "run.rollout_family = black_scholes needs a one-dimensional model");
  markov::ExpLevyParams p;
  p.dim = 1;
  p.horizon = e.model.horizon;
  p.step = e.step;
  p.drift = {e.drift};
  p.volatility = {e.volatility};
  p.x0 = e.model.x0;
  return markov::exp_levy_model(p);
}

engine::PricingReport base_report(const Experiment& e, const std::string& command) {
  engine::PricingReport r;
  r.command = command;
  r.seed = e.build.seed;
  r.config = e.resolved;
  return r;
}

int cmd_price(const GlobalOptions& g, std::ostream& out) {
  const Experiment e = prepare(g);
  const auto& m = need_model(e);
  const Timer timer;
  auto report = base_report(e, "price");
  const auto stack = engine::build_value_stack(m, *e.payoff, e.build);
  report.value_network = stack.value(0).evaluate_scalar(m.x0);
  report.size_by_t = stack.size_by_t();
  report.selection_warning = stack.warning();

  const auto sim = rollout_model(e);
  const auto roll = engine::rollout_price(stack, sim, *e.payoff, m.x0, e.run.n_paths, e.build.seed);
  report.value_rollout = roll.mean;
  report.se_rollout = roll.standard_error;
  report.n_paths = roll.n_paths;

  std::string method = "none";
  report.value_oracle = oracle_value(e, method);
  report.l2_by_t.assign(static_cast<std::size_t>(m.horizon) + 1, std::nullopt);
  if (method == "exact_dp") {
    const auto rho = engine::marginal_sampler(m, e.build.seed ^ 0x5bd1e995u);
    const engine::ReferenceValue oracle = [&](int t, std::span<const double> x) {
      return engine::exact_dp_value(m, *e.payoff, t, x);
    };
    for (int t = 0; t <= m.horizon; ++t) {
      report.l2_by_t[static_cast<std::size_t>(t)] =
          engine::l2_error(stack, t, oracle, rho, e.run.l2_points, e.build.seed).value;
    }
  }
  report.extra.emplace_back("oracle_method", method);
  report.extra.emplace_back("se_network", format_real(engine::stack_standard_error(stack, m, m.x0, e.run.se_paths,
                                                                                   e.build.seed)));
  report.extra.emplace_back("size_total", std::to_string(stack.total_size()));
  report.extra.emplace_back("rollout_model", sim.family);
  const double wall = timer.ms();
  if (g.timing) report.wall_ms = wall;
  emit(g, out, "report.txt", engine::format_report(report), wall);
  return kSuccess;
}

int cmd_oracle(const GlobalOptions& g, std::ostream& out) {
  const Experiment e = prepare(g);
  need_model(e);
  const Timer timer;
  auto report = base_report(e, "oracle");
  std::string method = "none";
  report.value_oracle = oracle_value(e, method);
  if (!report.value_oracle) throw InputError("no oracle available for this model and payoff");
  report.extra.emplace_back("oracle_method", method);
  if (method == "exact_dp") {
    report.extra.emplace_back("value_policy",
                              format_real(engine::exact_dp_policy_value(e.model, *e.payoff, e.model.x0)));
  }
  const double wall = timer.ms();
  if (g.timing) report.wall_ms = wall;
  emit(g, out, "report.txt", engine::format_report(report), wall);
  return kSuccess;
}

std::string describe_stack(const engine::ValueStack& s) {
  std::ostringstream o;
  o << "horizon = " << s.horizon() << '\n' << "dim = " << s.dim() << '\n';
  o << "eps_bar = " << format_real(s.eps_bar) << '\n' << "n_samples = " << s.n_samples << '\n';
  o << "delta = " << format_real(s.delta) << '\n' << "mode = " << engine::to_string(s.mode) << '\n';
  o << "seed = " << s.seed << '\n' << "selection_warning = " << (s.warning() ? "true" : "false") << '\n';
  o << "t\tvalue_size\tvalue_depth\tcontinuation_size\tattempts\tvalidation_error\n";
  for (int t = 0; t <= s.horizon(); ++t) {
    o << t << '\t' << s.value(t).size() << '\t' << s.value(t).depth() << '\t';
    if (t < s.horizon()) {
      const auto& d = s.steps[static_cast<std::size_t>(t)];
      o << s.continuation(t).size() << '\t' << d.attempts << '\t' << format_real(d.validation_error);
    } else {
      o << "na\tna\tna";
    }
    o << '\n';
  }
  return o.str();
}

int cmd_stack_build(const GlobalOptions& g, std::ostream& out) {
  require(!g.out.empty(), "stack build needs --out DIR");
  const Experiment e = prepare(g);
  const auto stack = engine::build_value_stack(need_model(e), *e.payoff, e.build);
  engine::save_stack(stack, fs::path(g.out) / "stack");
  emit(g, out, "stack_summary.txt", describe_stack(stack), std::nullopt);
  return kSuccess;
}

int cmd_stack_inspect(const std::string& dir, std::ostream& out) {
  out << describe_stack(engine::load_stack(dir));
  return kSuccess;
}

int cmd_stack_eval(const std::string& dir, int t, const std::vector<double>& x, std::ostream& out) {
  const auto s = engine::load_stack(dir);
  require(x.size() == s.dim(), "stack eval: --x needs " + std::to_string(s.dim()) + " values");
  out << "value = " << format_real(s.value(t).evaluate_scalar(x)) << '\n';
  out << "payoff = " << format_real(s.payoff(t).evaluate_scalar(x)) << '\n';
  out << "continuation = "
      << (t < s.horizon() ? format_real(s.continuation(t).evaluate_scalar(x)) : std::string("na")) << '\n';
  return kSuccess;
}

relu::Matrix lognormal_points(std::size_t d, std::size_t n, std::uint64_t seed, double scale) {
  relu::Matrix p(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    markov::StreamRng rng(seed, markov::StreamDomain::study, 0, static_cast<std::uint64_t>(j));
    for (Eigen::Index i = 0; i < p.rows(); ++i) p(i, j) = scale * std::exp(0.5 * rng.normal());
  }
  return p;
}

int cmd_verify(const GlobalOptions& g, const std::string& groups, std::ostream& out) {
  const Experiment e = prepare(g);
  const auto& m = need_model(e);
  const auto& g_pay = *e.payoff;
  auto wants = [&](const std::string& name) { return groups == "all" || groups.find(name) != std::string::npos; };
  std::ostringstream o;
  bool all_pass = true;
  auto line = [&](bool pass, const std::string& name, const std::string& detail) {
    all_pass = all_pass && pass;
    o << (pass ? "PASS " : "FAIL ") << name << " | " << detail << '\n';
  };
  const std::uint64_t seed = e.build.seed;
  const double scale = std::max(1.0, std::abs(m.x0.front()));
  const std::size_t n = e.run.verify_samples;

  if (wants("certificates")) {
    const auto cert = approx::certify_product(e.product.eps, e.product.bound, e.product.grid, 1000, seed);
    line(cert.measured_sup_error < e.product.eps && cert.measured_lipschitz <= cert.lipschitz_constant,
         "product certificate", "sup_error=" + format_real(cert.measured_sup_error) +
                                    " size=" + std::to_string(cert.size));
    const auto pts = lognormal_points(m.dim, std::min<std::size_t>(n, 10000), seed, scale);
    double worst = 0.0;
    for (int t = 0; t <= m.horizon; ++t) {
      const auto net = g_pay.network(t);
      const relu::Matrix vals = net.evaluate_batch(pts);
      for (Eigen::Index j = 0; j < pts.cols(); ++j) {
        std::vector<double> x(pts.col(j).data(), pts.col(j).data() + pts.rows());
        const double direct = g_pay(t, x);
        worst = std::max(worst, std::abs(vals(0, j) - direct) / (1.0 + std::abs(direct)));
      }
    }
    line(worst <= 1e-12, "payoff network exactness", "max_rel_gap=" + format_real(worst));
    if (m.has_eta()) {
      const auto eta = m.eta(0, e.build.eps_bar);
      const double r = std::min(eta.certificate.region_halfwidth, 1e6);
      double err = 0.0;
      std::vector<double> xy(2 * m.dim);
      for (std::size_t j = 0; j < 2000; ++j) {
        markov::StreamRng rng(seed, markov::StreamDomain::certificate, 0, j);
        for (double& v : xy) v = r * (2.0 * rng.uniform() - 1.0);
        const auto f = m.step(0, std::span(xy).first(m.dim), std::span(xy).subspan(m.dim));
        const auto h = eta.network.evaluate(xy);
        double s = 0.0;
        for (std::size_t i = 0; i < m.dim; ++i) s += (f[i] - h(static_cast<Eigen::Index>(i))) * (f[i] - h(static_cast<Eigen::Index>(i)));
        err = std::max(err, std::sqrt(s));
      }
      line(err <= eta.certificate.error_bound, "update network certificate",
           "sampled_error=" + format_real(err) + " bound=" + format_real(eta.certificate.error_bound));
    }
  }
  if (wants("growth")) {
    const auto pts = lognormal_points(m.dim, n, seed, scale);
    const auto pay = verify::payoff_growth_check(g_pay, pts);
    line(pay.pass, pay.name, "worst_ratio=" + format_real(pay.worst_ratio));
    relu::Matrix noise(pts.rows(), pts.cols());
    std::vector<double> y(m.dim);
    for (Eigen::Index j = 0; j < noise.cols(); ++j) {
      markov::StreamRng rng(seed, markov::StreamDomain::study, 1, static_cast<std::uint64_t>(j));
      m.sample_noise(0, rng, y);
      for (std::size_t i = 0; i < m.dim; ++i) noise(static_cast<Eigen::Index>(i), j) = y[i];
    }
    const auto upd = verify::update_growth_check(m, 0, pts, noise);
    line(upd.pass, upd.name, "worst_ratio=" + format_real(upd.worst_ratio));
    const auto few = lognormal_points(m.dim, 20, seed + 1, scale);
    const auto mom = verify::conditional_moment_check(m, 0, m.horizon, few, 2000, seed);
    line(mom.pass, mom.name, "worst_ratio=" + format_real(mom.worst_ratio));
    if (dp_feasible(m)) {
      const auto val = verify::value_growth_check(m, g_pay, 0, lognormal_points(m.dim, 50, seed + 2, scale));
      line(val.pass, val.name, "worst_ratio=" + format_real(val.worst_ratio));
    }
  }
  if (wants("moments")) {
    for (double pbar : {0.0, 2.0, 4.0}) {
      const auto r = verify::moment_check(m, 0, pbar, e.run.moment_samples, seed);
      line(r.pass, "noise moment order " + format_real(pbar),
           "estimate=" + format_real(r.estimate) + " se=" + format_real(r.standard_error) +
               " closed_form=" + format_optional(r.closed_form) + " envelope=" + format_real(r.envelope));
      if (pbar > 0.0) {
        const auto c = verify::moment_check(m, 0, pbar, e.run.moment_samples, seed, 0);
        line(c.pass, "noise coordinate moment order " + format_real(pbar),
             "estimate=" + format_real(c.estimate) + " se=" + format_real(c.standard_error) +
                 " closed_form=" + format_optional(c.closed_form));
      }
    }
  }
  if (wants("lipschitz")) {
    std::vector<double> h(m.dim, 0.0);
    h[0] = 1e-2;
    if (dp_feasible(m)) {
      const double est = verify::average_lipschitz_estimate(
          [&](int t, std::span<const double> x) { return engine::exact_dp_value(m, g_pay, t, x); }, 0, h, 200, seed);
      line(std::isfinite(est), "average Lipschitz (oracle)", "estimate=" + format_real(est));
    }
    const auto stack = engine::build_value_stack(m, g_pay, e.build);
    const double est = verify::average_lipschitz_estimate(stack, 0, h, 1000, seed);
    const double bound = relu::lipschitz_upper_bound(stack.value(0));
    line(est <= bound, "average Lipschitz (network)", "estimate=" + format_real(est) + " bound=" + format_real(bound));
  }
  emit(g, out, "verify.txt", o.str(), std::nullopt);
  return all_pass ? kSuccess : kCheckFailed;
}

int cmd_scaling(const GlobalOptions& g, std::ostream& out) {
  Experiment e = prepare(g);
  const auto& base = need_model(e);
  require(base.family == "black_scholes" || base.family == "merton",
          "scaling-study: model.family must be black_scholes or merton");
  Config cfg = g.config.empty() ? Config{} : Config::load(g.config);
  for (const auto& s : g.sets) cfg.set(s);
  verify::ScalingFamily family;
  family.model = [cfg, e](std::size_t d) mutable {
    cfg.set("model.dim=" + std::to_string(d));
    Experiment tmp;
    return make_model(cfg, tmp);
  };
  family.payoff = [cfg, e](std::size_t d) mutable {
    cfg.set("model.dim=" + std::to_string(d));
    Experiment tmp;
    tmp.model = make_model(cfg, tmp);
    return make_payoff(cfg, tmp);
  };
  const auto study = verify::scaling_study(family, e.run.dims, e.build);
  std::string text = verify::format_scaling_table(study, g.timing);
  bool pass = study.fit.slope <= e.run.max_slope;
  if (!e.run.eps_list.empty()) {
    const auto eps_study = verify::epsilon_study(family, e.run.dims.front(), e.run.eps_list, e.build);
    text += verify::format_scaling_table(eps_study, g.timing);
    pass = pass && std::isfinite(eps_study.fit.slope);
  }
  text += std::string("# slope check (<= ") + format_real(e.run.max_slope) + "): " + (pass ? "pass" : "fail") + '\n';
  emit(g, out, "scaling.tsv", text, std::nullopt);
  return pass ? kSuccess : kCheckFailed;
}

int cmd_product_cert(const GlobalOptions& g, std::ostream& out) {
  const Experiment e = prepare(g);
  const auto c = approx::certify_product(e.product.eps, e.product.bound, e.product.grid, e.product.pairs,
                                         g.seed.value_or(7));
  std::ostringstream o;
  o << "eps = " << format_real(c.spec.epsilon) << '\n';
  o << "M = " << format_real(c.spec.bound) << '\n';
  o << "base_eps = " << format_real(c.spec.base_epsilon) << '\n';
  o << "sawtooth_depth = " << c.spec.sawtooth_depth << '\n';
  o << "size = " << c.size << '\n';
  o << "depth = " << c.depth << '\n';
  o << "size_constant_C = " << format_real(c.size_constant) << '\n';
  o << "lipschitz_constant_C_prime = " << format_real(c.lipschitz_constant) << '\n';
  o << "measured_sup_error = " << format_real(c.measured_sup_error) << '\n';
  o << "grid_points_per_axis = " << c.grid_points_per_axis << '\n';
  o << "measured_lipschitz_over_M = " << format_real(c.measured_lipschitz) << '\n';
  o << "lipschitz_pairs = " << c.lipschitz_pairs << '\n';
  const bool pass = c.measured_sup_error < c.spec.epsilon && c.measured_lipschitz <= c.lipschitz_constant;
  o << "certificate = " << (pass ? "pass" : "fail") << '\n';
  emit(g, out, "product_certificate.txt", o.str(), std::nullopt);
  return pass ? kSuccess : kCheckFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural value-function construction for discrete-time optimal stopping", "optstop"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  app.add_option("--config", g.config, "configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "override section.key=value (repeatable)");
  app.add_option("--out", g.out, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides build.seed)");
  auto* threads_opt = app.add_option("--threads", threads, "worker threads (default $OPTSTOP_THREADS)");
  app.add_flag("--timing", g.timing, "embed wall_ms in reports");

  auto* price = app.add_subcommand("price", "build a value stack, roll out its policy, report");
  auto* oracle = app.add_subcommand("oracle", "exact dynamic programming or lattice value");
  auto* stack = app.add_subcommand("stack", "build, inspect or evaluate a stored value stack");
  stack->require_subcommand(1);
  auto* stack_build = stack->add_subcommand("build", "build and store a value stack under --out/stack");
  std::string stack_dir;
  int eval_t = 0;
  std::vector<double> eval_x;
  auto* stack_inspect = stack->add_subcommand("inspect", "summarize a stored stack");
  stack_inspect->add_option("dir", stack_dir, "stack directory")->required();
  auto* stack_eval = stack->add_subcommand("eval", "evaluate a stored stack at a point");
  stack_eval->add_option("dir", stack_dir, "stack directory")->required();
  stack_eval->add_option("--t", eval_t, "time index")->default_val(0);
  stack_eval->add_option("--x", eval_x, "state, comma separated")->delimiter(',')->required();
  auto* verify = app.add_subcommand("verify", "growth, moment, Lipschitz and certificate checks");
  std::string groups = "all";
  verify->add_option("--groups", groups, "comma list of certificates,growth,moments,lipschitz or all");
  auto* scaling = app.add_subcommand("scaling-study", "stack size against dimension and accuracy");
  auto* product = app.add_subcommand("product-cert", "certificate for the product network");
  for (auto* sub : {price, oracle, stack, stack_build, stack_inspect, stack_eval, verify, scaling, product}) {
    sub->fallthrough();
  }

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
  if (seed_opt->count() > 0) g.seed = seed;
  if (threads_opt->count() > 0) {
    if (threads == 0) {
      err << "error: --threads must be >= 1\n";
      return kInputError;
    }
    set_thread_count(threads);
  }

  try {
    if (price->parsed()) return cmd_price(g, out);
    if (oracle->parsed()) return cmd_oracle(g, out);
    if (stack_build->parsed()) return cmd_stack_build(g, out);
    if (stack_inspect->parsed()) return cmd_stack_inspect(stack_dir, out);
    if (stack_eval->parsed()) return cmd_stack_eval(stack_dir, eval_t, eval_x, out);
    if (verify->parsed()) return cmd_verify(g, groups, out);
    if (scaling->parsed()) return cmd_scaling(g, out);
    if (product->parsed()) return cmd_product_cert(g, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
  err << "error: no command given\n";
  return kInputError;
}

}  // namespace optstop::app
