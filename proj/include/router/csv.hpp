#pragma once

// CSV tables with a leading metadata block:
//   # config: <key> = <value>     resolved run configuration
//   # <name>: <text>              other notes
//   col1,col2,...

#include <cmath>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "router/params.hpp"

namespace router {

inline std::string cell(double x) { return std::isnan(x) ? "nan" : format_value(x, 10); }
inline std::string cell(std::size_t x) { return std::to_string(x); }
inline std::string cell(int x) { return std::to_string(x); }
inline std::string cell(bool x) { return x ? "1" : "0"; }
inline std::string cell(std::string s) { return s; }
inline std::string cell(const char* s) { return s; }

struct CsvTable {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::pair<std::string, std::string>> notes;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  template <class... T>
  void add(T&&... values) {
    rows.push_back({cell(std::forward<T>(values))...});
  }
  void note(std::string key, std::string value) { notes.emplace_back(std::move(key), std::move(value)); }
};

inline void write_csv(const CsvTable& t, std::ostream& os) {
  for (const auto& [k, v] : t.config) os << "# config: " << k << " = " << v << '\n';
  for (const auto& [k, v] : t.notes) os << "# " << k << ": " << v << '\n';
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  };
  line(t.columns);
  for (const auto& r : t.rows) {
    if (r.size() != t.columns.size()) throw ConfigError("csv row width does not match the header");
    line(r);
  }
}

inline void write_csv(const CsvTable& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open " + path + " for writing", 0);
  write_csv(t, os);
  if (!os) throw ParseError("write failed for " + path, 0);
}

}  // namespace router
