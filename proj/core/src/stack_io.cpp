#include "optstop/engine/stack_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "optstop/errors.hpp"
#include "optstop/relu/serialize.hpp"

namespace optstop::engine {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestHeader = "optstop-value-stack 1";

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_real(const std::string& tok, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') {
    throw InputError("stack manifest line " + std::to_string(line) + ": bad number '" + tok + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& tok, std::size_t line) {
  char* end = nullptr;
  const auto v = std::strtoull(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0') {
    throw InputError("stack manifest line " + std::to_string(line) + ": bad integer '" + tok + "'");
  }
  return v;
}

fs::path net_path(const fs::path& dir, const char* kind, std::size_t t) {
  return dir / (std::string(kind) + "_" + std::to_string(t) + ".osnn");
}

relu::NeuralNetwork load_checked(const fs::path& p) {
  auto stored = relu::load_network(p);
  if (stored.metadata && stored.metadata->declared_size != stored.network.size()) {
    throw InputError("stack file " + p.string() + ": declared size does not match the recount");
  }
  return std::move(stored.network);
}

}  // namespace

std::string stack_manifest(const ValueStack& s) {
  std::ostringstream out;
  out << kManifestHeader << '\n';
  out << "horizon " << s.horizon() << '\n';
  out << "dim " << s.dim() << '\n';
  out << "eps_bar " << hex(s.eps_bar) << '\n';
  out << "n_samples " << s.n_samples << '\n';
  out << "delta " << hex(s.delta) << '\n';
  out << "n_val " << s.n_val << '\n';
  out << "max_retries " << s.max_retries << '\n';
  out << "mode " << to_string(s.mode) << '\n';
  out << "seed " << s.seed << '\n';
  out << "size_by_t";
  for (auto v : s.size_by_t()) out << ' ' << v;
  out << '\n';
  for (std::size_t t = 0; t < s.steps.size(); ++t) {
    const auto& d = s.steps[t];
    out << "step " << t << ' ' << d.attempts << ' ' << d.accepted_attempt << ' ' << (d.accepted ? 1 : 0) << ' '
        << hex(d.validation_error) << ' ' << hex(d.max_noise_norm) << ' ' << hex(d.noise_norm_threshold) << ' '
        << d.distinct_pieces;
    for (double e : d.attempt_errors) out << ' ' << hex(e);
    out << '\n';
  }
  for (std::size_t t = 0; t < s.draws.size(); ++t) {
    for (const auto& d : s.draws[t]) {
      out << "draw " << t << ' ' << hex(d.weight);
      for (double v : d.value) out << ' ' << hex(v);
      out << '\n';
    }
  }
  return out.str();
}

void save_stack(const ValueStack& stack, const fs::path& dir) {
  require(!stack.values.empty(), "save_stack: empty stack");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "manifest.txt", std::ios::binary);
    if (!f) throw InputError("save_stack: cannot write " + (dir / "manifest.txt").string());
    f << stack_manifest(stack);
  }
  auto save = [&](const char* kind, std::size_t t, const relu::NeuralNetwork& net) {
    relu::NetworkMetadata meta{net.size(), std::nullopt, std::string(kind) + " t=" + std::to_string(t)};
    relu::save_network(net_path(dir, kind, t), net, meta);
  };
  for (std::size_t t = 0; t < stack.values.size(); ++t) {
    save("payoff", t, stack.payoffs[t]);
    save("value", t, stack.values[t]);
    if (t < stack.continuations.size()) save("continuation", t, stack.continuations[t]);
  }
}

ValueStack load_stack(const fs::path& dir) {
  std::ifstream f(dir / "manifest.txt", std::ios::binary);
  if (!f) throw InputError("load_stack: cannot open " + (dir / "manifest.txt").string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(f, line) || line != kManifestHeader) {
    throw InputError("load_stack: not a value-stack manifest");
  }
  ValueStack s;
  long long horizon = -1;
  std::vector<std::size_t> ledger;
  while (std::getline(f, line)) {
    ++lineno;
    std::istringstream in(line);
    std::string key;
    if (!(in >> key)) continue;
    std::vector<std::string> toks;
    for (std::string tok; in >> tok;) toks.push_back(tok);
    auto need = [&](std::size_t n) {
      if (toks.size() < n) throw InputError("stack manifest line " + std::to_string(lineno) + ": too few fields");
    };
    if (key == "horizon") {
      need(1);
      horizon = static_cast<long long>(parse_uint(toks[0], lineno));
      s.steps.resize(static_cast<std::size_t>(horizon));
      s.draws.resize(static_cast<std::size_t>(horizon));
    } else if (key == "dim") {
      need(1);
    } else if (key == "eps_bar") {
      need(1);
      s.eps_bar = parse_real(toks[0], lineno);
    } else if (key == "n_samples") {
      need(1);
      s.n_samples = parse_uint(toks[0], lineno);
    } else if (key == "delta") {
      need(1);
      s.delta = parse_real(toks[0], lineno);
    } else if (key == "n_val") {
      need(1);
      s.n_val = parse_uint(toks[0], lineno);
    } else if (key == "max_retries") {
      need(1);
      s.max_retries = parse_uint(toks[0], lineno);
    } else if (key == "mode") {
      need(1);
      s.mode = parse_update_mode(toks[0]);
    } else if (key == "seed") {
      need(1);
      s.seed = parse_uint(toks[0], lineno);
    } else if (key == "size_by_t") {
      for (const auto& t : toks) ledger.push_back(parse_uint(t, lineno));
    } else if (key == "step") {
      need(8);
      const auto t = parse_uint(toks[0], lineno);
      require(t < s.steps.size(), "stack manifest line " + std::to_string(lineno) + ": step index out of range");
      auto& d = s.steps[t];
      d.attempts = parse_uint(toks[1], lineno);
      d.accepted_attempt = parse_uint(toks[2], lineno);
      d.accepted = parse_uint(toks[3], lineno) != 0;
      d.validation_error = parse_real(toks[4], lineno);
      d.max_noise_norm = parse_real(toks[5], lineno);
      d.noise_norm_threshold = parse_real(toks[6], lineno);
      d.distinct_pieces = parse_uint(toks[7], lineno);
      for (std::size_t i = 8; i < toks.size(); ++i) d.attempt_errors.push_back(parse_real(toks[i], lineno));
    } else if (key == "draw") {
      need(2);
      const auto t = parse_uint(toks[0], lineno);
      require(t < s.draws.size(), "stack manifest line " + std::to_string(lineno) + ": draw index out of range");
      NoiseDraw d;
      d.weight = parse_real(toks[1], lineno);
      for (std::size_t i = 2; i < toks.size(); ++i) d.value.push_back(parse_real(toks[i], lineno));
      s.draws[t].push_back(std::move(d));
    } else {
      throw InputError("stack manifest line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  require(horizon >= 0, "load_stack: manifest has no horizon");
  const auto T = static_cast<std::size_t>(horizon);
  for (std::size_t t = 0; t <= T; ++t) {
    s.payoffs.push_back(load_checked(net_path(dir, "payoff", t)));
    s.values.push_back(load_checked(net_path(dir, "value", t)));
    if (t < T) s.continuations.push_back(load_checked(net_path(dir, "continuation", t)));
  }
  if (!ledger.empty() && ledger != s.size_by_t()) {
    throw InputError("load_stack: size ledger does not match the recounted networks");
  }
  return s;
}

bool stacks_bitwise_equal(const ValueStack& a, const ValueStack& b) {
  if (stack_manifest(a) != stack_manifest(b)) return false;
  auto same = [](const std::vector<relu::NeuralNetwork>& x, const std::vector<relu::NeuralNetwork>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!relu::bitwise_equal(x[i], y[i])) return false;
    }
    return true;
  };
  return same(a.values, b.values) && same(a.continuations, b.continuations) && same(a.payoffs, b.payoffs);
}

}  // namespace optstop::engine
