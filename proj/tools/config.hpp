#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace optstop::app {

/// Sectioned key = value text. Keys are addressed as "section.key".
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "config");
  static Config load(const std::string& path);

  /// "section.key=value" override; creates the key if absent.
  void set(const std::string& assignment);

  [[nodiscard]] bool has(const std::string& key) const;
  [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback);
  [[nodiscard]] std::string require_string(const std::string& key);
  [[nodiscard]] double get_double(const std::string& key, double fallback);
  [[nodiscard]] std::optional<double> get_optional_double(const std::string& key);
  [[nodiscard]] std::uint64_t get_uint(const std::string& key, std::uint64_t fallback);
  [[nodiscard]] std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback);
  [[nodiscard]] std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback);

  /// Every key read so far with the value actually used, sorted by key.
  [[nodiscard]] std::vector<std::pair<std::string, std::string>> resolved() const;
  /// Keys present in the text but never read.
  [[nodiscard]] std::vector<std::string> unused() const;
  /// Throws InputError naming the first unknown key.
  void reject_unused() const;

 private:
  struct Entry {
    std::string value;
    std::string where;  ///< "config line N" or "--set"
  };
  [[nodiscard]] std::string field_error(const std::string& key, const std::string& what) const;

  std::map<std::string, Entry> entries_;
  std::map<std::string, std::string> resolved_;
};

}  // namespace optstop::app
