#pragma once

// Time-tagged photodetection records and their text format.
//
// File layout:
//   # click record
//   # config: <name> = <value>        one line per metadata key
//   # transit: <t_center_us>,<t_start_us>,<t_end_us>,<g_peak>,<kx>
//   detector_id,timestamp_ns
//   <id>,<ns>
// Numbers in the header are written in shortest round-trip form, so reading a
// record back reproduces it exactly. The `# config:` block doubles as a
// simulation configuration.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "router/params.hpp"

namespace router {

/// Atom arrivals and the coupling envelope g(t) = g_peak exp(-4 ln2 (t - t_c)^2 / fwhm^2).
struct TransitModel {
  double arrival_rate = 1.0e4;  // transits per second
  double envelope_fwhm = 2.0;   // us
  double g_min = 35.0;          // MHz
  double g_max = 65.0;          // MHz

  static constexpr auto fields = std::to_array<std::pair<const char*, double TransitModel::*>>({
      {"arrival_rate", &TransitModel::arrival_rate},
      {"envelope_fwhm", &TransitModel::envelope_fwhm},
      {"g_min", &TransitModel::g_min},
      {"g_max", &TransitModel::g_max},
  });

  void validate() const {
    if (!(arrival_rate >= 0)) throw ConfigError("arrival_rate must be >= 0");
    if (!(envelope_fwhm > 0)) throw ConfigError("envelope_fwhm must be > 0");
    if (!(g_min >= 0) || !(g_min <= g_max)) throw ConfigError("need 0 <= g_min <= g_max");
  }

  double envelope(double dt_us) const {
    return std::exp(-4.0 * std::numbers::ln2 * dt_us * dt_us / (envelope_fwhm * envelope_fwhm));
  }

  /// Half-width of the interval where g exceeds 1e-3 g_peak.
  double half_span() const { return envelope_fwhm * std::sqrt(std::log(1e3) / (4.0 * std::numbers::ln2)); }

  friend bool operator==(const TransitModel& a, const TransitModel& b) { return fields_equal(a, b); }
};

/// Two detectors behind a beamsplitter on each output port.
struct DetectorModel {
  double efficiency = 0.1;            // per-photon detection probability
  double split_ratio = 0.5;           // fraction to the first detector of each pair
  double background_rate = 0.0;       // counts per second per detector
  double timestamp_resolution = 1.0;  // ns

  static constexpr auto fields = std::to_array<std::pair<const char*, double DetectorModel::*>>({
      {"efficiency", &DetectorModel::efficiency},
      {"split_ratio", &DetectorModel::split_ratio},
      {"background_rate", &DetectorModel::background_rate},
      {"timestamp_resolution", &DetectorModel::timestamp_resolution},
  });

  void validate() const {
    if (!(efficiency >= 0 && efficiency <= 1)) throw ConfigError("efficiency must lie in [0, 1]");
    if (!(split_ratio >= 0 && split_ratio <= 1)) throw ConfigError("split_ratio must lie in [0, 1]");
    if (!(background_rate >= 0)) throw ConfigError("background_rate must be >= 0");
    if (!(timestamp_resolution > 0)) throw ConfigError("timestamp_resolution must be > 0");
  }

  std::int64_t quantize(double t_us) const {
    const double ticks = std::floor(t_us * 1e3 / timestamp_resolution + 0.5);
    return std::int64_t(ticks * timestamp_resolution);
  }

  friend bool operator==(const DetectorModel& a, const DetectorModel& b) { return fields_equal(a, b); }
};

/// D1, D2 see the reflected port b_out; D3, D4 the transmitted port a_out.
enum Detector : int { kD1 = 1, kD2 = 2, kD3 = 3, kD4 = 4 };

inline bool is_reflected(int detector) { return detector == kD1 || detector == kD2; }
inline bool is_transmitted(int detector) { return detector == kD3 || detector == kD4; }

struct ClickEvent {
  int detector = kD1;
  std::int64_t timestamp_ns = 0;

  friend bool operator==(const ClickEvent&, const ClickEvent&) = default;
  friend auto operator<=>(const ClickEvent& a, const ClickEvent& b) {
    if (auto c = a.timestamp_ns <=> b.timestamp_ns; c != 0) return c;
    return a.detector <=> b.detector;
  }
};

/// Ground truth for one simulated transit (validation only).
struct TransitTruth {
  double t_center_us = 0;
  double t_start_us = 0;
  double t_end_us = 0;
  double g_peak = 0;
  double kx = 0;

  friend bool operator==(const TransitTruth&, const TransitTruth&) = default;
};

struct ClickRecord {
  SystemParams params;
  TransitModel transits;
  DetectorModel detectors;
  std::uint64_t seed = 0;
  double duration_s = 0;
  /// Additional resolved settings echoed with the record (e.g. nbar).
  ConfigMap extra;
  std::vector<ClickEvent> events;
  std::vector<TransitTruth> truth;

  double duration_us() const { return duration_s * 1e6; }

  /// Throws ValidationError on unsorted timestamps or unknown detectors.
  void validate() const {
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto& e = events[i];
      if (e.detector < kD1 || e.detector > kD4) {
        throw ValidationError("event " + std::to_string(i) + ": detector id " + std::to_string(e.detector) +
                              " outside 1..4");
      }
      if (i > 0 && e.timestamp_ns < events[i - 1].timestamp_ns) {
        throw ValidationError("event " + std::to_string(i) + ": timestamp " + std::to_string(e.timestamp_ns) +
                              " precedes " + std::to_string(events[i - 1].timestamp_ns));
      }
    }
    if (!(duration_s >= 0)) throw ValidationError("negative duration");
  }

  std::size_t count(int detector) const {
    return std::size_t(std::count_if(events.begin(), events.end(), [&](const ClickEvent& e) {
      return e.detector == detector;
    }));
  }

  friend bool operator==(const ClickRecord&, const ClickRecord&) = default;
};

inline std::uint64_t parse_seed(const std::string& value) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), x);
  if (ec != std::errc() || ptr != value.data() + value.size()) throw ConfigError("invalid seed '" + value + "'");
  return x;
}

/// The metadata block of a record as ordered key/value pairs.
inline std::vector<std::pair<std::string, std::string>> record_metadata(const ClickRecord& rec) {
  auto out = describe_fields(rec.params);
  for (auto& kv : describe_fields(rec.transits)) out.push_back(kv);
  for (auto& kv : describe_fields(rec.detectors)) out.push_back(kv);
  out.emplace_back("seed", std::to_string(rec.seed));
  out.emplace_back("duration", format_number(rec.duration_s));
  for (const auto& [k, v] : rec.extra) out.emplace_back(k, v);
  return out;
}

inline void write_record(const ClickRecord& rec, std::ostream& os) {
  rec.validate();
  os << "# click record\n";
  for (const auto& [k, v] : record_metadata(rec)) os << "# config: " << k << " = " << v << '\n';
  for (const auto& t : rec.truth) {
    os << "# transit: " << format_number(t.t_center_us) << ',' << format_number(t.t_start_us) << ','
       << format_number(t.t_end_us) << ',' << format_number(t.g_peak) << ',' << format_number(t.kx) << '\n';
  }
  os << "detector_id,timestamp_ns\n";
  std::string buf;
  for (const auto& e : rec.events) {
    buf.clear();
    buf += char('0' + e.detector);
    buf += ',';
    buf += std::to_string(e.timestamp_ns);
    buf += '\n';
    os << buf;
  }
}

inline void write_record(const ClickRecord& rec, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open " + path + " for writing", 0);
  write_record(rec, os);
  if (!os) throw ParseError("write failed for " + path, 0);
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(',', start);
    parts.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace detail

inline ClickRecord read_record(std::istream& in) {
  static constexpr std::string_view kConfig = "# config:";
  static constexpr std::string_view kTransit = "# transit:";
  ClickRecord rec;
  ConfigMap meta;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = trim(line);
    if (v.empty()) continue;
    if (!header) {
      if (v.starts_with(kConfig)) {
        v = trim(v.substr(kConfig.size()));
        const auto eq = v.find('=');
        if (eq == std::string_view::npos) throw ParseError("metadata line without '='", lineno);
        meta[std::string(trim(v.substr(0, eq)))] = std::string(trim(v.substr(eq + 1)));
      } else if (v.starts_with(kTransit)) {
        auto parts = detail::split_commas(trim(v.substr(kTransit.size())));
        if (parts.size() != 5) throw ParseError("transit line needs 5 fields", lineno);
        double x[5];
        for (int i = 0; i < 5; ++i) {
          try {
            x[i] = parse_double("transit", std::string(parts[std::size_t(i)]));
          } catch (const ConfigError& e) {
            throw ParseError(e.what(), lineno);
          }
        }
        rec.truth.push_back({x[0], x[1], x[2], x[3], x[4]});
      } else if (v.front() == '#') {
        continue;
      } else if (v == "detector_id,timestamp_ns") {
        header = true;
      } else {
        throw ParseError("expected column header 'detector_id,timestamp_ns'", lineno);
      }
      continue;
    }
    const auto comma = v.find(',');
    if (comma == std::string_view::npos) throw ParseError("expected '<detector>,<timestamp>'", lineno);
    ClickEvent e;
    auto d = trim(v.substr(0, comma));
    auto t = trim(v.substr(comma + 1));
    auto r1 = std::from_chars(d.data(), d.data() + d.size(), e.detector);
    auto r2 = std::from_chars(t.data(), t.data() + t.size(), e.timestamp_ns);
    if (r1.ec != std::errc() || r1.ptr != d.data() + d.size() || r2.ec != std::errc() ||
        r2.ptr != t.data() + t.size()) {
      throw ParseError("malformed event '" + std::string(v) + "'", lineno);
    }
    if (e.detector < kD1 || e.detector > kD4) {
      throw ValidationError("detector id " + std::to_string(e.detector) + " outside 1..4 (line " +
                            std::to_string(lineno) + ")");
    }
    if (!rec.events.empty() && e.timestamp_ns < rec.events.back().timestamp_ns) {
      throw ValidationError("timestamps decrease at line " + std::to_string(lineno));
    }
    rec.events.push_back(e);
  }
  if (!header) throw ParseError("missing column header 'detector_id,timestamp_ns'", lineno);
  try {
    load_fields(rec.params, meta);
    load_fields(rec.transits, meta);
    load_fields(rec.detectors, meta);
    for (const auto& key : {"seed", "duration"})
      if (!meta.count(key)) throw ParseError(std::string("record metadata lacks '") + key + "'", 0);
    rec.seed = parse_seed(meta.at("seed"));
    rec.duration_s = parse_double("duration", meta.at("duration"));
  } catch (const ConfigError& e) {
    throw ParseError(std::string("bad record metadata: ") + e.what(), 0);
  }
  for (const auto& [k, v] : meta) {
    bool known = k == "seed" || k == "duration";
    for (const auto& f : SystemParams::fields) known = known || k == f.first;
    for (const auto& f : TransitModel::fields) known = known || k == f.first;
    for (const auto& f : DetectorModel::fields) known = known || k == f.first;
    if (!known) rec.extra[k] = v;
  }
  return rec;
}

inline ClickRecord read_record(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open record " + path, 0);
  return read_record(in);
}

}  // namespace router
