#pragma once

// Click-record analysis: transit selection, windowed signal averages, photon
// correlations and the false-detection ratio.
//
// Timestamps are integer ns; user-facing durations are us.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "router/model.hpp"
#include "router/parallel.hpp"
#include "router/record.hpp"

namespace router {

/// Windows extend this far either side of each transit origin (us).
inline constexpr double kWindowHalfUs = 6.0;

struct TransitEvent {
  double t0_ns = 0;         // temporal mean of the reflected clicks in the source span
  std::int64_t span_start_ns = 0;  // qualifying Delta t_atom interval [start, end)
  std::int64_t span_end_ns = 0;
  std::size_t S = 0;        // reflected clicks in the source span

  double window_start_ns() const { return t0_ns - kWindowHalfUs * 1e3; }
  double window_end_ns() const { return t0_ns + kWindowHalfUs * 1e3; }
};

struct DetectionSettings {
  std::size_t c_th = 5;
  double dt_atom_us = 4.0;
  double step_us = 0.1;  // sliding step of the count window

  void validate() const {
    if (c_th < 1) throw ConfigError("C_th must be >= 1");
    if (!(dt_atom_us > 0)) throw ConfigError("dt_atom must be > 0");
    if (!(step_us > 0)) throw ConfigError("window step must be > 0");
  }
};

namespace detail {

inline std::vector<std::int64_t> timestamps(const ClickRecord& rec, bool (*pick)(int)) {
  std::vector<std::int64_t> t;
  for (const auto& e : rec.events)
    if (pick(e.detector)) t.push_back(e.timestamp_ns);
  return t;
}

inline std::int64_t to_ns(double us) { return std::llround(us * 1e3); }

/// Index range of sorted `t` inside [lo, hi).
inline std::pair<std::size_t, std::size_t> range(const std::vector<std::int64_t>& t, double lo, double hi) {
  auto a = std::lower_bound(t.begin(), t.end(), lo, [](std::int64_t x, double v) { return double(x) < v; });
  auto b = std::lower_bound(a, t.end(), hi, [](std::int64_t x, double v) { return double(x) < v; });
  return {std::size_t(a - t.begin()), std::size_t(b - t.begin())};
}

}  // namespace detail

/// Slides a Delta t_atom window over D1+D2 clicks in fixed steps and keeps the
/// starts where the count reaches C_th. Overlapping qualifying windows form one
/// event; its source span is the window with the largest count (earliest on
/// ties). The step grid is anchored on the first reflected click, so a global
/// time shift of the record shifts the events and nothing else.
inline std::vector<TransitEvent> detect_transits(const ClickRecord& rec, const DetectionSettings& s) {
  s.validate();
  const auto r = detail::timestamps(rec, is_reflected);
  std::vector<TransitEvent> out;
  if (r.empty()) return out;
  const std::int64_t step = std::max<std::int64_t>(1, detail::to_ns(s.step_us));
  const std::int64_t dt = std::max<std::int64_t>(1, detail::to_ns(s.dt_atom_us));
  const std::int64_t anchor = r.front() - ((dt - 1) / step) * step;

  std::optional<TransitEvent> current;
  std::int64_t current_end = 0;  // end of the last qualifying window in the group
  auto close = [&] {
    if (current) out.push_back(*current);
    current.reset();
  };

  std::size_t lo = 0, hi = 0;
  std::int64_t j = 0;
  while (true) {
    const std::int64_t start = anchor + j * step;
    while (lo < r.size() && r[lo] < start) ++lo;
    if (lo == r.size()) break;
    if (hi < lo) hi = lo;
    while (hi < r.size() && r[hi] < start + dt) ++hi;
    const std::size_t count = hi - lo;
    if (count == 0) {
      // Jump to the first window that contains r[lo].
      const std::int64_t need = r[lo] - dt + 1 - anchor;
      j = std::max(j + 1, need <= 0 ? 0 : (need + step - 1) / step);
      continue;
    }
    if (count >= s.c_th) {
      if (current && start >= current_end) close();
      if (!current || count > current->S) {
        TransitEvent ev;
        ev.span_start_ns = start;
        ev.span_end_ns = start + dt;
        ev.S = count;
        double sum = 0;
        for (std::size_t i = lo; i < hi; ++i) sum += double(r[i] - r[lo]);
        ev.t0_ns = double(r[lo]) + sum / double(count);
        current = ev;
      }
      current_end = start + dt;
    } else if (current && start >= current_end) {
      close();
    }
    ++j;
  }
  close();
  return out;
}

/// Empty-cavity transmitted click rate (D3 + D4, per us) used to normalize the
/// averaged signals, with a note on where it came from.
struct Normalization {
  double transmitted_rate = 0;
  std::string source;
};

inline Normalization supplied_normalization(double transmitted_rate_per_us) {
  return {transmitted_rate_per_us, "supplied"};
}

/// Mean D3+D4 rate of an atom-free record.
inline Normalization normalization_from_record(const ClickRecord& no_atoms) {
  if (!(no_atoms.duration_us() > 0)) throw StatisticsError("normalization record has zero duration");
  const double n = double(no_atoms.count(kD3) + no_atoms.count(kD4));
  return {n / no_atoms.duration_us(), "no-atom record"};
}

namespace detail {

/// Union of the event windows as disjoint [start, end) intervals in ns.
inline std::vector<std::pair<double, double>> window_union(const std::vector<TransitEvent>& events,
                                                           double half_us = kWindowHalfUs) {
  std::vector<std::pair<double, double>> w;
  for (const auto& e : events) w.emplace_back(e.t0_ns - half_us * 1e3, e.t0_ns + half_us * 1e3);
  std::sort(w.begin(), w.end());
  std::vector<std::pair<double, double>> out;
  for (const auto& iv : w) {
    if (!out.empty() && iv.first <= out.back().second) {
      out.back().second = std::max(out.back().second, iv.second);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

}  // namespace detail

/// Mean D3+D4 rate of the record outside every transit window.
inline Normalization normalization_outside_windows(const ClickRecord& rec, const std::vector<TransitEvent>& events) {
  const auto t = detail::timestamps(rec, is_transmitted);
  double covered = 0;
  std::size_t inside = 0;
  const double total = rec.duration_us() * 1e3;
  for (const auto& [a, b] : detail::window_union(events)) {
    const double lo = std::max(a, 0.0), hi = std::min(b, total);
    if (hi > lo) covered += hi - lo;
    auto [i, k] = detail::range(t, a, b);
    inside += k - i;
  }
  const double free_ns = total - covered;
  if (!(free_ns > 0)) throw StatisticsError("no atom-free stretch left for normalization");
  return {double(t.size() - inside) / (free_ns * 1e-3), "record outside transit windows"};
}

/// Transit-averaged transmitted and reflected signals in units of the
/// empty-cavity transmitted flux.
struct AveragedSignals {
  std::vector<double> t_us;  // bin centres relative to t0
  std::vector<double> T, R, T_stderr, R_stderr;
  std::vector<std::size_t> counts_T, counts_R;
  std::size_t n_events = 0;
  double bin_us = 0;
  Normalization normalization;
};

inline AveragedSignals averaged_signals(const ClickRecord& rec, const std::vector<TransitEvent>& events, double bin_us,
                                        const Normalization& norm) {
  if (events.empty()) throw StatisticsError("no transit events to average");
  if (!(norm.transmitted_rate > 0)) throw StatisticsError("zero empty-cavity normalization");
  if (!(bin_us > 0)) throw ConfigError("bin width must be > 0");
  const double nb_real = 2 * kWindowHalfUs / bin_us;
  const auto nb = std::size_t(std::llround(nb_real));
  if (nb == 0 || std::abs(nb_real - double(nb)) > 1e-9 * nb_real) {
    throw ConfigError("bin width must divide the 12 us window");
  }
  AveragedSignals out;
  out.n_events = events.size();
  out.bin_us = bin_us;
  out.normalization = norm;
  out.counts_T.assign(nb, 0);
  out.counts_R.assign(nb, 0);
  const auto tt = detail::timestamps(rec, is_transmitted);
  const auto tr = detail::timestamps(rec, is_reflected);
  const double bin_ns = bin_us * 1e3;
  auto accumulate = [&](const std::vector<std::int64_t>& t, std::vector<std::size_t>& counts) {
    for (const auto& e : events) {
      auto [i, k] = detail::range(t, e.window_start_ns(), e.window_end_ns());
      for (; i < k; ++i) {
        const auto b = std::size_t(std::floor((double(t[i]) - e.window_start_ns()) / bin_ns));
        counts[std::min(b, nb - 1)] += 1;
      }
    }
  };
  accumulate(tt, out.counts_T);
  accumulate(tr, out.counts_R);
  const double scale = 1.0 / (double(events.size()) * bin_us * norm.transmitted_rate);
  for (std::size_t b = 0; b < nb; ++b) {
    out.t_us.push_back(-kWindowHalfUs + (double(b) + 0.5) * bin_us);
    out.T.push_back(double(out.counts_T[b]) * scale);
    out.R.push_back(double(out.counts_R[b]) * scale);
    out.T_stderr.push_back(std::sqrt(double(out.counts_T[b])) * scale);
    out.R_stderr.push_back(std::sqrt(double(out.counts_R[b])) * scale);
  }
  return out;
}

/// Signals averaged over |t| < width/2 around the transit origins.
struct CenterSignals {
  double T = 0, R = 0, T_stderr = 0, R_stderr = 0;
  std::size_t counts_T = 0, counts_R = 0;
  std::size_t n_events = 0;
};

inline std::pair<std::size_t, std::size_t> center_counts(const ClickRecord& rec, const std::vector<TransitEvent>& events,
                                                         double width_us) {
  const auto tt = detail::timestamps(rec, is_transmitted);
  const auto tr = detail::timestamps(rec, is_reflected);
  const double half = 0.5 * width_us * 1e3;
  std::size_t nt = 0, nr = 0;
  for (const auto& e : events) {
    auto [a, b] = detail::range(tt, e.t0_ns - half, e.t0_ns + half);
    auto [c, d] = detail::range(tr, e.t0_ns - half, e.t0_ns + half);
    nt += b - a;
    nr += d - c;
  }
  return {nt, nr};
}

inline CenterSignals center_signals(const ClickRecord& rec, const std::vector<TransitEvent>& events, double width_us,
                                    const Normalization& norm) {
  if (events.empty()) throw StatisticsError("no transit events to average");
  if (!(norm.transmitted_rate > 0)) throw StatisticsError("zero empty-cavity normalization");
  if (!(width_us > 0) || width_us > 2 * kWindowHalfUs) throw ConfigError("centre width must lie in (0, 12] us");
  auto [nt, nr] = center_counts(rec, events, width_us);
  const double scale = 1.0 / (double(events.size()) * width_us * norm.transmitted_rate);
  return {double(nt) * scale, double(nr) * scale, std::sqrt(double(nt)) * scale, std::sqrt(double(nr)) * scale,
          nt, nr, events.size()};
}

/// Delay binning for the coincidence histogram.
struct TauBinning {
  double bin_us = 0.005;
  double max_tau_us = 0.1;
  /// Windows are cut into pieces of about this length; accidentals are the sum
  /// over pieces of N1 N2 bin / length.
  double segment_us = 0.5;
  /// Only clicks within this distance of a transit origin are correlated (us).
  double window_half_us = 1.5;

  void validate() const {
    if (!(bin_us > 0) || !(max_tau_us >= 0) || !(segment_us > 0)) throw ConfigError("invalid tau binning");
    if (!(window_half_us > 0) || window_half_us > kWindowHalfUs) throw ConfigError("correlation window must lie in (0, 6] us");
    if (max_tau_us / bin_us > 1e6) throw ConfigError("too many tau bins");
  }
};

struct CorrelationResult {
  Output which = Output::Reflected;
  std::vector<double> tau_us;  // bin centres
  std::vector<double> g2, stderr_;
  std::vector<std::size_t> n_pairs;
  std::vector<double> accidentals;  // expected uncorrelated pairs per bin
  std::size_t n_windows = 0, n_segments = 0;
  TauBinning binning;

  std::size_t zero_bin() const { return tau_us.size() / 2; }
  double g2_zero() const { return g2[zero_bin()]; }
  double g2_zero_stderr() const { return stderr_[zero_bin()]; }
};

/// Cross-detector coincidences (D1 x D2 for the reflected port, D3 x D4 for the
/// transmitted one) between clicks that share a selected window. Delays are
/// whole ns; bin k holds the integer delays in [(k - 1/2) bin, (k + 1/2) bin)
/// and its accidental expectation uses that count of delays. Throws
/// StatisticsError when no bin collects 10 pairs.
inline CorrelationResult estimate_g2(const ClickRecord& rec, const std::vector<TransitEvent>& events, Output which,
                                     const TauBinning& tb = {}, int threads = 1) {
  tb.validate();
  if (events.empty()) throw StatisticsError("no transit events for correlation");
  const int da = which == Output::Reflected ? kD1 : kD3;
  const int db = which == Output::Reflected ? kD2 : kD4;
  std::vector<std::int64_t> ta, tbv;
  for (const auto& e : rec.events) {
    if (e.detector == da) ta.push_back(e.timestamp_ns);
    if (e.detector == db) tbv.push_back(e.timestamp_ns);
  }
  const auto K = std::size_t(std::floor(tb.max_tau_us / tb.bin_us + 0.5));
  const std::size_t nbins = 2 * K + 1;
  const double bin_ns = tb.bin_us * 1e3;
  const double reach = (double(K) + 0.5) * bin_ns;
  const auto windows = detail::window_union(events, tb.window_half_us);

  struct Partial {
    std::vector<std::size_t> pairs;
    double accidentals = 0;
    std::size_t segments = 0;
  };
  auto parts = parallel_map(windows.size(), threads, [&](std::size_t w) {
    Partial p;
    p.pairs.assign(nbins, 0);
    const auto [start, end] = windows[w];
    const double len = end - start;
    const auto nseg = std::max<std::size_t>(1, std::size_t(std::llround(len / (tb.segment_us * 1e3))));
    const double seg = len / double(nseg);
    p.segments = nseg;
    for (std::size_t s = 0; s < nseg; ++s) {
      const double s0 = start + double(s) * seg, s1 = s + 1 == nseg ? end : s0 + seg;
      auto [a0, a1] = detail::range(ta, s0, s1);
      auto [b0, b1] = detail::range(tbv, s0, s1);
      p.accidentals += double(a1 - a0) * double(b1 - b0) / (s1 - s0);
      for (std::size_t i = a0; i < a1; ++i) {
        const double t = double(ta[i]);
        auto [c0, c1] = detail::range(tbv, std::max(start, t - reach), std::min(end, t + reach));
        for (std::size_t k = c0; k < c1; ++k) {
          const double tau = double(tbv[k]) - t;
          const auto bin = std::int64_t(std::floor(tau / bin_ns + 0.5));
          if (std::abs(bin) <= std::int64_t(K)) p.pairs[std::size_t(bin + std::int64_t(K))] += 1;
        }
      }
    }
    return p;
  });

  CorrelationResult out;
  out.which = which;
  out.binning = tb;
  out.n_windows = windows.size();
  out.n_pairs.assign(nbins, 0);
  double rate_product = 0;  // sum over segments of N1 N2 / length, per ns of delay
  for (const auto& p : parts) {
    for (std::size_t b = 0; b < nbins; ++b) out.n_pairs[b] += p.pairs[b];
    rate_product += p.accidentals;
    out.n_segments += p.segments;
  }
  if (*std::max_element(out.n_pairs.begin(), out.n_pairs.end()) < 10 || !(rate_product > 0)) {
    throw StatisticsError("fewer than 10 coincidences in every delay bin");
  }
  for (std::size_t b = 0; b < nbins; ++b) {
    const double k = double(b) - double(K);
    const double delays = std::ceil((k + 0.5) * bin_ns) - std::ceil((k - 0.5) * bin_ns);
    const double acc = rate_product * delays;
    out.tau_us.push_back(k * tb.bin_us);
    out.accidentals.push_back(acc);
    out.g2.push_back(acc > 0 ? double(out.n_pairs[b]) / acc : 0.0);
    out.stderr_.push_back(acc > 0 ? std::sqrt(double(std::max<std::size_t>(out.n_pairs[b], 1))) / acc : 0.0);
  }
  return out;
}

/// Weighted fit of g2(|tau|) = c + A exp(-|tau| / tau_c), with +tau and -tau
/// bins pooled. tau_c is scanned on a log grid; c and A are linear.
struct RelaxationFit {
  double tau_c_us = 0;
  double amplitude = 0;
  double plateau = 0;
  double chi2 = 0;
};

inline RelaxationFit fit_relaxation(const CorrelationResult& g) {
  const std::size_t K = g.zero_bin();
  std::vector<double> tau, y, w;
  for (std::size_t k = 0; k <= K; ++k) {
    const std::size_t n = k == 0 ? g.n_pairs[K] : g.n_pairs[K + k] + g.n_pairs[K - k];
    const double acc = k == 0 ? g.accidentals[K] : g.accidentals[K + k] + g.accidentals[K - k];
    if (!(acc > 0)) continue;
    tau.push_back(double(k) * g.binning.bin_us);
    y.push_back(double(n) / acc);
    w.push_back(acc * acc / double(std::max<std::size_t>(n, 1)));
  }
  if (tau.size() < 3) throw StatisticsError("too few delay bins for a relaxation fit");
  RelaxationFit best;
  best.chi2 = std::numeric_limits<double>::infinity();
  const double lo = std::log(0.1 * g.binning.bin_us), hi = std::log(std::max(tau.back(), g.binning.bin_us));
  constexpr int kGrid = 400;
  for (int i = 0; i <= kGrid; ++i) {
    const double tc = std::exp(lo + (hi - lo) * i / kGrid);
    double s00 = 0, s01 = 0, s11 = 0, r0 = 0, r1 = 0;
    for (std::size_t k = 0; k < tau.size(); ++k) {
      const double e = std::exp(-tau[k] / tc);
      s00 += w[k];
      s01 += w[k] * e;
      s11 += w[k] * e * e;
      r0 += w[k] * y[k];
      r1 += w[k] * e * y[k];
    }
    const double det = s00 * s11 - s01 * s01;
    if (!(std::abs(det) > 1e-300)) continue;
    const double c = (r0 * s11 - r1 * s01) / det;
    const double A = (s00 * r1 - s01 * r0) / det;
    double chi2 = 0;
    for (std::size_t k = 0; k < tau.size(); ++k) {
      const double d = y[k] - c - A * std::exp(-tau[k] / tc);
      chi2 += w[k] * d * d;
    }
    if (chi2 < best.chi2) best = {tc, A, c, chi2};
  }
  return best;
}

/// F = R0_no(0) / R0(0). Both centre signals are expressed per event of the
/// atom record, with the no-atom record rescaled to the same duration, so F is
/// the share of the reflected transit signal that false triggers produce.
struct FalseDetection {
  double F = 0;
  double F_stderr = 0;
  std::size_t events_atoms = 0, events_no_atoms = 0;
  std::size_t center_counts_atoms = 0, center_counts_no_atoms = 0;
};

inline FalseDetection false_detection_ratio(const ClickRecord& atoms, const ClickRecord& no_atoms,
                                            const DetectionSettings& s, double center_us = 1.0) {
  if (!(atoms.duration_us() > 0) || !(no_atoms.duration_us() > 0)) throw StatisticsError("record has zero duration");
  const auto ev = detect_transits(atoms, s);
  const auto ev_no = detect_transits(no_atoms, s);
  FalseDetection out;
  out.events_atoms = ev.size();
  out.events_no_atoms = ev_no.size();
  out.center_counts_atoms = center_counts(atoms, ev, center_us).second;
  out.center_counts_no_atoms = center_counts(no_atoms, ev_no, center_us).second;
  if (out.center_counts_atoms == 0) throw StatisticsError("no reflected signal in the atom record");
  const double ca = double(out.center_counts_atoms);
  const double cn = double(out.center_counts_no_atoms) * atoms.duration_us() / no_atoms.duration_us();
  out.F = cn / ca;
  const double rel = std::sqrt(1.0 / ca + 1.0 / double(std::max<std::size_t>(out.center_counts_no_atoms, 1)));
  out.F_stderr = std::max(out.F, double(atoms.duration_us() / no_atoms.duration_us()) / ca) * rel;
  return out;
}

/// Per-detector background rate (per second) equal to `fraction` of the mean
/// reflected signal per detector within |t| < centre/2 of the selected transits.
inline double background_rate_for_fraction(const ClickRecord& rec, const std::vector<TransitEvent>& events,
                                           double fraction, double center_us = 1.0) {
  if (events.empty()) throw StatisticsError("no transit events to calibrate background");
  const auto nr = center_counts(rec, events, center_us).second;
  const double per_detector_us = double(nr) / (2.0 * double(events.size()) * center_us);
  return fraction * per_detector_us * 1e6;
}

/// Shared settings of the record pipeline.
struct AnalysisSettings {
  DetectionSettings detection;
  double signal_bin_us = 0.5;
  double center_us = 1.0;
  TauBinning tau;
  int threads = 1;
};

/// Truth-matching: an event is true when t0 falls inside a simulated transit span.
struct DetectionScore {
  double recall = std::numeric_limits<double>::quiet_NaN();
  double false_positive_fraction = std::numeric_limits<double>::quiet_NaN();
};

inline DetectionScore score_detection(const ClickRecord& rec, const std::vector<TransitEvent>& events) {
  DetectionScore out;
  if (rec.truth.empty()) return out;
  std::vector<bool> hit(rec.truth.size(), false);
  std::size_t false_pos = 0;
  for (const auto& e : events) {
    const double t = e.t0_ns * 1e-3;
    auto it = std::upper_bound(rec.truth.begin(), rec.truth.end(), t,
                               [](double v, const TransitTruth& tr) { return v < tr.t_start_us; });
    if (it != rec.truth.begin() && t < std::prev(it)->t_end_us) {
      hit[std::size_t(std::prev(it) - rec.truth.begin())] = true;
    } else {
      ++false_pos;
    }
  }
  out.recall = double(std::count(hit.begin(), hit.end(), true)) / double(rec.truth.size());
  if (!events.empty()) out.false_positive_fraction = double(false_pos) / double(events.size());
  return out;
}

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// One row of the threshold scan.
struct ThresholdRow {
  std::size_t c_th = 0;
  std::size_t n_events = 0, n_events_no_atoms = 0;
  double F = kNaN, F_stderr = kNaN;
  double T0 = kNaN, T0_stderr = kNaN, R0 = kNaN, R0_stderr = kNaN;
  double g2R0 = kNaN, g2R0_stderr = kNaN, g2T0 = kNaN, g2T0_stderr = kNaN;
  DetectionScore score;
};

inline ThresholdRow analyze_threshold(const ClickRecord& atoms, const ClickRecord& no_atoms, std::size_t c_th,
                                      const AnalysisSettings& s, const Normalization& norm) {
  ThresholdRow row;
  row.c_th = c_th;
  auto det = s.detection;
  det.c_th = c_th;
  const auto ev = detect_transits(atoms, det);
  row.n_events = ev.size();
  row.score = score_detection(atoms, ev);
  try {
    auto fd = false_detection_ratio(atoms, no_atoms, det, s.center_us);
    row.F = fd.F;
    row.F_stderr = fd.F_stderr;
    row.n_events_no_atoms = fd.events_no_atoms;
  } catch (const StatisticsError&) {
  }
  if (ev.empty()) return row;
  const auto c = center_signals(atoms, ev, s.center_us, norm);
  row.T0 = c.T;
  row.T0_stderr = c.T_stderr;
  row.R0 = c.R;
  row.R0_stderr = c.R_stderr;
  try {
    auto g = estimate_g2(atoms, ev, Output::Reflected, s.tau, s.threads);
    row.g2R0 = g.g2_zero();
    row.g2R0_stderr = g.g2_zero_stderr();
  } catch (const StatisticsError&) {
  }
  try {
    auto g = estimate_g2(atoms, ev, Output::Transmitted, s.tau, s.threads);
    row.g2T0 = g.g2_zero();
    row.g2T0_stderr = g.g2_zero_stderr();
  } catch (const StatisticsError&) {
  }
  return row;
}

/// Threshold scan over paired atom / no-atom records. The transmitted
/// normalization comes from the no-atom record.
inline std::vector<ThresholdRow> threshold_sweep(const ClickRecord& atoms, const ClickRecord& no_atoms,
                                                 const std::vector<std::size_t>& thresholds,
                                                 const AnalysisSettings& s = {}) {
  const auto norm = normalization_from_record(no_atoms);
  std::vector<ThresholdRow> rows;
  for (auto c : thresholds) rows.push_back(analyze_threshold(atoms, no_atoms, c, s, norm));
  return rows;
}

struct SaturationInput {
  double nbar = 0;
  ClickRecord atoms;
  ClickRecord no_atoms;
};

struct SaturationAnalysisRow {
  double nbar = 0;
  std::size_t c_th = 0;  // 0 when no threshold met F < F_max
  bool flagged = false;
  ThresholdRow result;
};

/// For each drive, the smallest C_th in [c_min, c_max] with F < F_max and the
/// transit-averaged T0 and g2_R(0) at that threshold.
inline std::vector<SaturationAnalysisRow> saturation_analysis(const std::vector<SaturationInput>& inputs, double F_max,
                                                              const AnalysisSettings& s = {}, std::size_t c_min = 1,
                                                              std::size_t c_max = 20) {
  if (inputs.empty()) throw ConfigError("saturation analysis needs at least one record");
  if (!(F_max > 0)) throw ConfigError("F_max must be > 0");
  if (c_min < 1 || c_max < c_min) throw ConfigError("invalid threshold range");
  std::vector<SaturationAnalysisRow> rows;
  for (const auto& in : inputs) {
    SaturationAnalysisRow row;
    row.nbar = in.nbar;
    const auto norm = normalization_from_record(in.no_atoms);
    for (std::size_t c = c_min; c <= c_max; ++c) {
      auto det = s.detection;
      det.c_th = c;
      double F = kNaN;
      try {
        F = false_detection_ratio(in.atoms, in.no_atoms, det, s.center_us).F;
      } catch (const StatisticsError&) {
        break;  // no signal left at this or any larger threshold
      }
      if (F < F_max) {
        row.c_th = c;
        break;
      }
    }
    row.flagged = row.c_th == 0;
    row.result = analyze_threshold(in.atoms, in.no_atoms, row.flagged ? c_max : row.c_th, s, norm);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace router
