#include "config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace repalloc::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) {
      return false;
    }
  }
  return true;
}

double parse_number(const std::string& token, const std::string& key) {
  const char* begin = token.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + token.size() || token.empty() || !std::isfinite(v)) {
    throw ConfigError("key '" + key + "': invalid number '" + token + "'");
  }
  return v;
}

// Cut a trailing comment, honoring quoted strings.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

Config Config::parse_string(const std::string& text, const std::string& origin) {
  Config config;
  config.origin_ = origin;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": invalid key '" + key + "'");
    }
    if (config.values_.count(key)) {
      throw ConfigError("duplicate key '" + key + "'");
    }
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) {
      throw ConfigError("key '" + key + "': missing value");
    }
    if (value.front() == '"') {
      if (value.size() < 2 || value.back() != '"' ||
          value.find('"', 1) != value.size() - 1) {
        throw ConfigError("key '" + key + "': malformed string value");
      }
      config.values_.emplace(key, value.substr(1, value.size() - 2));
    } else if (value.front() == '[') {
      if (value.back() != ']') {
        throw ConfigError("key '" + key + "': unterminated array");
      }
      std::vector<double> items;
      const std::string inner = trim(value.substr(1, value.size() - 2));
      if (!inner.empty()) {
        std::size_t pos = 0;
        while (pos <= inner.size()) {
          const std::size_t comma = inner.find(',', pos);
          const std::string token =
              trim(comma == std::string::npos ? inner.substr(pos)
                                              : inner.substr(pos, comma - pos));
          items.push_back(parse_number(token, key));
          if (comma == std::string::npos) break;
          pos = comma + 1;
        }
      }
      config.values_.emplace(key, std::move(items));
    } else if (value == "true" || value == "false") {
      config.values_.emplace(key, value == "true");
    } else {
      config.values_.emplace(key, parse_number(value, key));
    }
  }
  return config;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

const ConfigValue& Config::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw ConfigError("missing required key '" + key + "'");
  }
  return it->second;
}

std::string Config::get_string(const std::string& key) const {
  const auto& v = require(key);
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  throw ConfigError("key '" + key + "': expected a quoted string");
}

std::string Config::get_string_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double Config::get_number(const std::string& key) const {
  const auto& v = require(key);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  throw ConfigError("key '" + key + "': expected a number");
}

double Config::get_number_or(const std::string& key, double fallback) const {
  return has(key) ? get_number(key) : fallback;
}

std::uint64_t Config::get_count(const std::string& key) const {
  const double v = get_number(key);
  if (!(v >= 0.0) || v != std::floor(v) || v > 9.007199254740992e15) {
    throw ConfigError("key '" + key + "': expected a nonnegative integer");
  }
  return static_cast<std::uint64_t>(v);
}

std::uint64_t Config::get_count_or(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? get_count(key) : fallback;
}

std::vector<double> Config::get_array_or(const std::string& key,
                                         std::vector<double> fallback) const {
  if (!has(key)) return fallback;
  const auto& v = require(key);
  if (const auto* a = std::get_if<std::vector<double>>(&v)) return *a;
  if (const auto* d = std::get_if<double>(&v)) return {*d};
  throw ConfigError("key '" + key + "': expected an array of numbers");
}

void Config::check_known_keys(const std::vector<std::string>& exact,
                              const std::vector<std::string>& prefixes) const {
  for (const auto& [key, value] : values_) {
    bool ok = false;
    for (const auto& e : exact) {
      if (key == e) {
        ok = true;
        break;
      }
    }
    for (const auto& p : prefixes) {
      if (!ok && key.size() > p.size() && key.compare(0, p.size(), p) == 0) {
        bool digits = true;
        for (std::size_t i = p.size(); i < key.size(); ++i) {
          if (!std::isdigit(static_cast<unsigned char>(key[i]))) digits = false;
        }
        ok = digits;
      }
    }
    if (!ok) {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
}

}  // namespace repalloc::cli
