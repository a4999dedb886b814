#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vrank {

/**
 * Flat key-value configuration with dotted section keys, one `key=value` per
 * line; `#` starts a comment. Unknown keys are kept so a config can be
 * round-tripped verbatim.
 */
class Config {
 public:
  Config() = default;

  static Config parse(std::istream& is) {
    Config cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const std::string stripped = strip(line);
      if (stripped.empty() || stripped[0] == '#') continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos) {
        throw std::invalid_argument("config: missing '=' on line " + std::to_string(lineno));
      }
      cfg.values_[strip(stripped.substr(0, eq))] = strip(stripped.substr(eq + 1));
    }
    return cfg;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    return parse(f);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  int get_int(const std::string& key, int fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stoi(it->second);
    } catch (const std::exception&) {
      throw std::invalid_argument("config: key " + key + " is not an integer");
    }
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw std::invalid_argument("config: key " + key + " is not an unsigned integer");
    }
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw std::invalid_argument("config: key " + key + " is not a number");
    }
  }

  template <class T, class Parse>
  std::vector<T> get_list(const std::string& key, const std::vector<T>& fallback,
                          Parse parse_one) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<T> out;
    std::istringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const std::string t = strip(tok);
      if (!t.empty()) out.push_back(parse_one(t));
    }
    if (out.empty()) throw std::invalid_argument("config: key " + key + " has an empty list");
    return out;
  }

  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const {
    return get_list<int>(key, fallback, [](const std::string& t) { return std::stoi(t); });
  }
  std::vector<std::uint64_t> get_u64s(const std::string& key,
                                      const std::vector<std::uint64_t>& fallback) const {
    return get_list<std::uint64_t>(key, fallback,
                                   [](const std::string& t) { return std::stoull(t); });
  }
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const {
    return get_list<double>(key, fallback, [](const std::string& t) { return std::stod(t); });
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  static std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace vrank
