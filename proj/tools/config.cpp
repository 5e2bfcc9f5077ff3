#include "config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "optstop/errors.hpp"

namespace optstop::app {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bool parse_double(const std::string& s, double& v) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size() && std::isfinite(v);
}

bool parse_uint(const std::string& s, std::uint64_t& v) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size();
}

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  }
  return true;
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + " line " + std::to_string(lineno);
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw InputError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_key(section)) throw InputError(where + ": invalid section name '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) throw InputError(where + ": invalid key '" + key + "'");
    if (section.empty()) throw InputError(where + ": key '" + key + "' appears before any [section]");
    const std::string full = section + "." + key;
    if (cfg.entries_.count(full)) throw InputError(where + ": duplicate key '" + full + "'");
    cfg.entries_[full] = {trim(line.substr(eq + 1)), where};
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path);
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  if (!valid_key(key) || key.find('.') == std::string::npos) {
    throw InputError("--set key must look like section.key, got '" + key + "'");
  }
  entries_[key] = {trim(assignment.substr(eq + 1)), "--set " + key};
}

bool Config::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string Config::field_error(const std::string& key, const std::string& what) const {
  const auto it = entries_.find(key);
  const std::string where = it == entries_.end() ? "default" : it->second.where;
  return where + ": field " + key + ": " + what;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) {
  const auto it = entries_.find(key);
  const std::string v = it == entries_.end() ? fallback : it->second.value;
  resolved_[key] = v;
  return v;
}

std::string Config::require_string(const std::string& key) {
  if (!has(key)) throw InputError("missing required field " + key);
  return get_string(key, "");
}

double Config::get_double(const std::string& key, double fallback) {
  const auto it = entries_.find(key);
  double v = fallback;
  if (it != entries_.end() && !parse_double(it->second.value, v)) {
    throw InputError(field_error(key, "expected a finite number, got '" + it->second.value + "'"));
  }
  resolved_[key] = real(v);
  return v;
}

std::optional<double> Config::get_optional_double(const std::string& key) {
  if (!has(key) || entries_.at(key).value.empty()) {
    resolved_[key] = "default";
    return std::nullopt;
  }
  return get_double(key, 0.0);
}

std::uint64_t Config::get_uint(const std::string& key, std::uint64_t fallback) {
  const auto it = entries_.find(key);
  std::uint64_t v = fallback;
  if (it != entries_.end() && !parse_uint(it->second.value, v)) {
    throw InputError(field_error(key, "expected a nonnegative integer, got '" + it->second.value + "'"));
  }
  resolved_[key] = std::to_string(v);
  return v;
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) {
  std::vector<double> out = fallback;
  if (const auto it = entries_.find(key); it != entries_.end()) {
    out.clear();
    for (const auto& tok : split_list(it->second.value)) {
      double v = 0.0;
      if (!parse_double(tok, v)) throw InputError(field_error(key, "cannot parse '" + tok + "' as a number"));
      out.push_back(v);
    }
  }
  std::string echo;
  for (double v : out) echo += (echo.empty() ? "" : ",") + real(v);
  resolved_[key] = echo;
  return out;
}

std::vector<std::size_t> Config::get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) {
  std::vector<std::size_t> out = fallback;
  if (const auto it = entries_.find(key); it != entries_.end()) {
    out.clear();
    for (const auto& tok : split_list(it->second.value)) {
      std::uint64_t v = 0;
      if (!parse_uint(tok, v)) throw InputError(field_error(key, "cannot parse '" + tok + "' as an integer"));
      out.push_back(static_cast<std::size_t>(v));
    }
  }
  std::string echo;
  for (auto v : out) echo += (echo.empty() ? "" : ",") + std::to_string(v);
  resolved_[key] = echo;
  return out;
}

std::vector<std::pair<std::string, std::string>> Config::resolved() const {
  return {resolved_.begin(), resolved_.end()};
}

std::vector<std::string> Config::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, e] : entries_) {
    if (!resolved_.count(k)) out.push_back(k);
  }
  return out;
}

void Config::reject_unused() const {
  for (const auto& [k, e] : entries_) {
    if (!resolved_.count(k)) throw InputError(e.where + ": unknown field " + k);
  }
}

}  // namespace optstop::app
