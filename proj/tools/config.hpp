#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace repalloc::cli {

// Raised for anything wrong with user input (flags, config files, sample
// files). The CLI maps it to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using ConfigValue = std::variant<std::string, double, bool, std::vector<double>>;

// Flat key = value config, a TOML-compatible subset: one assignment per
// line, '#' comments, quoted strings, bare numbers, true/false, and
// one-level numeric arrays like [0.25, 0.5]. No tables, no nesting.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string_or(const std::string& key, const std::string& fallback) const;
  double get_number(const std::string& key) const;
  double get_number_or(const std::string& key, double fallback) const;
  // Nonnegative integer-valued number (trial counts, seeds, ...).
  std::uint64_t get_count(const std::string& key) const;
  std::uint64_t get_count_or(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_array_or(const std::string& key, std::vector<double> fallback) const;

  // Rejects keys outside the given set. A prefix entry accepts
  // prefix + decimal index (contract lists: d1, d2, ..., t1, t2, ...).
  void check_known_keys(const std::vector<std::string>& exact,
                        const std::vector<std::string>& prefixes) const;

 private:
  const ConfigValue& require(const std::string& key) const;

  std::map<std::string, ConfigValue> values_;
  std::string origin_;
};

}  // namespace repalloc::cli
