#pragma once

// Physical parameters and the flat `name = value` configuration format.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "router/errors.hpp"

namespace router {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Frequencies are entered as value/2pi in MHz; rates used in equations are angular (rad/us).
inline constexpr double angular(double mhz) { return kTwoPi * mhz; }

/// Shortest decimal form that parses back to the same double.
inline std::string format_number(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

/// Fixed-precision form for tabular output.
inline std::string format_value(double x, int precision = 10) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", precision, x);
  return buf;
}

using ConfigMap = std::map<std::string, std::string>;

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

/// Parses `name = value` lines; `#` starts a comment. Lines of the form
/// `# config: name = value` (as echoed into output files) are read as entries,
/// and once such lines have been seen the first non-comment line ends the block,
/// so an output file can be fed back as a configuration.
inline ConfigMap parse_key_values(std::istream& in) {
  static constexpr std::string_view kEcho = "# config:";
  ConfigMap out;
  std::string line;
  std::size_t lineno = 0;
  bool echoed = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = trim(line);
    if (v.starts_with(kEcho)) {
      v = trim(v.substr(kEcho.size()));
      echoed = true;
    } else if (v.empty() || v.front() == '#') {
      continue;
    } else if (echoed) {
      break;
    }
    if (auto hash = v.find('#'); hash != std::string_view::npos) v = trim(v.substr(0, hash));
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected `name = value`", lineno);
    std::string key(trim(v.substr(0, eq)));
    std::string value(trim(v.substr(eq + 1)));
    if (key.empty()) throw ParseError("empty key", lineno);
    out[key] = value;
  }
  return out;
}

inline ConfigMap read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path, 0);
  return parse_key_values(in);
}

inline double parse_double(const std::string& key, const std::string& value) {
  double x = 0.0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, x);
  if (ec != std::errc() || ptr != last || !std::isfinite(x)) {
    throw ConfigError("invalid number for `" + key + "`: '" + value + "'");
  }
  return x;
}

/// Reads every field listed in T::fields that is present in `cfg`.
template <class T>
void load_fields(T& obj, const ConfigMap& cfg) {
  for (const auto& [name, member] : T::fields) {
    if (auto it = cfg.find(name); it != cfg.end()) obj.*member = parse_double(name, it->second);
  }
}

template <class T>
std::vector<std::pair<std::string, std::string>> describe_fields(const T& obj) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, member] : T::fields) out.emplace_back(name, format_number(obj.*member));
  return out;
}

template <class T>
bool fields_equal(const T& a, const T& b) {
  for (const auto& [name, member] : T::fields)
    if (a.*member != b.*member) return false;
  return true;
}

/// Physical rates and detunings, all in MHz (value/2pi) except kx (radians).
struct SystemParams {
  double g_tw = 50.0;
  double kappa_ex = 300.0;
  double kappa_i = 20.0;
  double h = 10.0;
  double gamma = 5.2;     // atomic population decay
  double delta_ac = 0.0;  // omega_A - omega_C
  double delta_ap = 0.0;  // omega_A - omega_p
  double drive_ep = 0.0;  // |E_p| as a rate amplitude
  double kx = 0.0;        // atomic azimuthal phase

  static constexpr auto fields = std::to_array<std::pair<const char*, double SystemParams::*>>({
      {"g_tw", &SystemParams::g_tw},
      {"kappa_ex", &SystemParams::kappa_ex},
      {"kappa_i", &SystemParams::kappa_i},
      {"h", &SystemParams::h},
      {"gamma", &SystemParams::gamma},
      {"delta_ac", &SystemParams::delta_ac},
      {"delta_ap", &SystemParams::delta_ap},
      {"drive_ep", &SystemParams::drive_ep},
      {"kx", &SystemParams::kx},
  });

  double kappa() const { return kappa_ex + kappa_i; }
  /// omega_C - omega_p
  double delta_cp() const { return delta_ap - delta_ac; }

  void validate() const {
    if (g_tw < 0 || kappa_ex < 0 || kappa_i < 0 || h < 0 || gamma < 0 || drive_ep < 0) {
      throw ConfigError("rates must be non-negative");
    }
    if (!(kappa() > 0)) throw ConfigError("kappa_ex + kappa_i must be positive");
  }

  friend bool operator==(const SystemParams& a, const SystemParams& b) { return fields_equal(a, b); }
};

inline SystemParams system_params_from(const ConfigMap& cfg, SystemParams base = {}) {
  load_fields(base, cfg);
  base.validate();
  return base;
}

}  // namespace router
