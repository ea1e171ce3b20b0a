#pragma once

// Synthetic photodetection records from quantum trajectories.
//
// The cavity is described in the basis displaced by its empty-cavity coherent
// amplitudes. Jump operators are offset so that
//   J_T = <a_in> + sqrt(2 kex) a   (transmitted port, detectors D3/D4)
//   J_R = sqrt(2 kex) b            (reflected port, detectors D1/D2)
// and the unmonitored loss channels carry no coherent part. With no atom
// coupled the displaced state stays in vacuum, the monitored channels fire as
// Poisson processes with rates |<a_out>|^2 and |<b_out>|^2, and nothing else
// happens; only transit intervals need the wavefunction.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "router/model.hpp"
#include "router/parallel.hpp"
#include "router/record.hpp"
#include "router/trajectory.hpp"

namespace router {

inline constexpr std::size_t kChannelTransmitted = 0;
inline constexpr std::size_t kChannelReflected = 1;

struct TrajectorySettings {
  /// g(t) is held constant over segments of this length (us).
  double segment_us = 0.05;
  /// Jump-time resolution of the bisection (us).
  double time_tol_us = 1e-6;
  /// Fock truncation in the displaced basis; 0 picks the smallest one whose
  /// top-level steady-state population at the largest coupling is below tol.
  int n_max = 0;
  double top_population_tol = 1e-6;
};

/// Random stream for (seed, stream, index); independent of scheduling.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream), std::uint32_t(index),
                    std::uint32_t(index >> 32)};
  return std::mt19937_64(seq);
}

class TransitSimulator {
 public:
  TransitSimulator(const SystemParams& p, double g_reference, const TrajectorySettings& settings = {})
      : p_(p), settings_(settings), space_(1, 1) {
    p_.validate();
    if (!(settings.segment_us > 0) || !(settings.time_tol_us > 0)) throw ConfigError("invalid trajectory settings");
    disp_ = empty_cavity_amplitudes(p_);
    int n = settings.n_max;
    if (n == 0) {
      SystemParams q = p_;
      q.g_tw = g_reference;
      q.kx = 0;
      for (n = 2;; ++n) {
        TruncationPolicy pol;
        pol.n_max_a = pol.n_max_b = n;
        auto st = solve_steady_state(q, true, pol);
        if (std::max(st.top_population(Mode::A), st.top_population(Mode::B)) < settings.top_population_tol) break;
        if (n >= 10) throw ResourceError("trajectory truncation above 10 photons in the displaced basis");
      }
    }
    space_ = make_space(n, n);
    ops_ = std::make_unique<ModelOperators>(model_operators(space_, disp_));
    const double s_ex = std::sqrt(2.0 * angular(p_.kappa_ex));
    const double s_i = std::sqrt(2.0 * angular(p_.kappa_i));
    alpha_in_ = input_amplitude(p_);
    offsets_ = {alpha_in_, 0.0, -s_i * disp_.a, -s_i * disp_.b, 0.0};
    t_offset_ = alpha_in_ + s_ex * disp_.a;
    r_offset_ = s_ex * disp_.b;
    auto u = unravel(liouvillian(0.0, 0.0), offsets_);
    h_eff0_ = effective_hamiltonian(u);
    for (const auto& j : u.jumps) jumps_.push_back(j.dense());
  }

  const HilbertSpace& space() const { return space_; }
  const Displacement& displacement() const { return disp_; }
  const SystemParams& params() const { return p_; }
  std::span<const complex> offsets() const { return offsets_; }

  /// <a_out> and <b_out> of the empty cavity, sqrt(photons/us).
  complex transmitted_offset() const { return t_offset_; }
  complex reflected_offset() const { return r_offset_; }

  /// Master-equation generator at coupling g (MHz), in the displaced basis.
  Liouvillian liouvillian(double g_mhz, double kx) const {
    SystemParams q = p_;
    q.g_tw = g_mhz;
    q.kx = kx;
    return build_liouvillian(q, space_, true, disp_);
  }

  OutputOperators outputs() const { return output_flux_operators(p_, space_, disp_); }

  StateVector initial_state() const { return basis_vector(space_, {0, 0, 0}); }

  /// Coupling operator per unit angular g at phase kx.
  DenseMatrix coupling(double kx) const { return atom_coupling(*ops_, kx).dense(); }

  std::span<const DenseMatrix> jumps() const { return jumps_; }

  /// Evolves psi for `duration` us with coupling g_of(t) (MHz, t from the start),
  /// held at its segment-midpoint value. on_jump(t, channel) gets every jump.
  template <class GOf, class OnJump>
  void run(GOf&& g_of, double kx, double duration, StateVector& psi, double& threshold, std::mt19937_64& rng,
           OnJump&& on_jump) const {
    const DenseMatrix x = coupling(kx);
    double t = 0.0;
    while (t < duration) {
      const double seg = std::min(settings_.segment_us, duration - t);
      const double g = g_of(t + 0.5 * seg);
      NoJumpPropagator prop(h_eff0_ + angular(g) * x);
      propagate_segment(prop, std::span<const DenseMatrix>(jumps_), psi, threshold, seg, settings_.time_tol_us, rng,
                        [&](double tj, std::size_t ch) { on_jump(t + tj, ch); });
      t += seg;
    }
  }

  double segment() const { return settings_.segment_us; }

 private:
  SystemParams p_;
  TrajectorySettings settings_;
  HilbertSpace space_;
  Displacement disp_;
  std::unique_ptr<ModelOperators> ops_;
  complex alpha_in_{0}, t_offset_{0}, r_offset_{0};
  std::vector<complex> offsets_;
  DenseMatrix h_eff0_;
  std::vector<DenseMatrix> jumps_;
};

/// Detector for a photon on a monitored channel, or 0 when it is not detected.
inline int route_photon(std::size_t channel, const DetectorModel& dm, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u >= dm.efficiency) return 0;
  const bool first = u < dm.efficiency * dm.split_ratio;
  if (channel == kChannelTransmitted) return first ? kD3 : kD4;
  return first ? kD1 : kD2;
}

namespace detail {

/// Poisson events at `rate` (per us) on [t0, t1) us, appended as detector clicks.
inline void poisson_clicks(double rate, double t0, double t1, int detector, const DetectorModel& dm,
                           std::mt19937_64& rng, std::vector<ClickEvent>& out) {
  if (!(rate > 0) || !(t1 > t0)) return;
  const double mean = rate * (t1 - t0);
  const auto n = std::poisson_distribution<std::int64_t>(mean)(rng);
  std::uniform_real_distribution<double> u(t0, t1);
  for (std::int64_t i = 0; i < n; ++i) out.push_back({detector, dm.quantize(u(rng))});
}

}  // namespace detail

/// Detected click rates (per us) of the empty cavity at each detector, D1..D4.
inline std::array<double, 4> empty_cavity_click_rates(const TransitSimulator& sim, const DetectorModel& dm) {
  const double rr = std::norm(sim.reflected_offset()) * dm.efficiency;
  const double rt = std::norm(sim.transmitted_offset()) * dm.efficiency;
  return {rr * dm.split_ratio, rr * (1 - dm.split_ratio), rt * dm.split_ratio, rt * (1 - dm.split_ratio)};
}

struct SimulationSettings {
  TrajectorySettings trajectory;
  int threads = 1;
};

/// Draws non-overlapping transits on [0, duration). An arrival whose span would
/// overlap the previous transit is discarded (one atom at a time).
inline std::vector<TransitTruth> draw_transits(const TransitModel& tm, double duration_us, std::uint64_t seed) {
  std::vector<TransitTruth> out;
  if (tm.arrival_rate <= 0) return out;
  auto rng = make_rng(seed, 0, 0);
  std::exponential_distribution<double> gap(tm.arrival_rate * 1e-6);
  std::uniform_real_distribution<double> g(tm.g_min, tm.g_max);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  const double hs = tm.half_span();
  double last_end = -1e300;
  for (double t = gap(rng); t < duration_us; t += gap(rng)) {
    const double gp = g(rng);
    const double kx = phase(rng);
    if (t - hs < last_end) continue;
    TransitTruth tr{t, std::max(0.0, t - hs), std::min(duration_us, t + hs), gp, kx};
    last_end = t + hs;
    out.push_back(tr);
  }
  return out;
}

inline ClickRecord simulate_record(const SystemParams& p, const TransitModel& tm, const DetectorModel& dm,
                                   double duration_s, std::uint64_t seed, const SimulationSettings& settings = {}) {
  p.validate();
  tm.validate();
  dm.validate();
  if (!(duration_s > 0)) throw ConfigError("duration must be > 0");
  ClickRecord rec;
  rec.params = p;
  rec.transits = tm;
  rec.detectors = dm;
  rec.seed = seed;
  rec.duration_s = duration_s;
  const double total_us = rec.duration_us();
  rec.truth = draw_transits(tm, total_us, seed);

  const TransitSimulator sim(p, tm.g_max, settings.trajectory);
  const auto rates = empty_cavity_click_rates(sim, dm);

  // Atom transits.
  auto per_transit = parallel_map(rec.truth.size(), settings.threads, [&](std::size_t i) {
    const TransitTruth& tr = rec.truth[i];
    auto rng = make_rng(seed, 1, i);
    std::vector<ClickEvent> ev;
    StateVector psi = sim.initial_state();
    double threshold = uniform_open(rng);
    auto g_of = [&](double t) { return tr.g_peak * tm.envelope(tr.t_start_us + t - tr.t_center_us); };
    sim.run(g_of, tr.kx, tr.t_end_us - tr.t_start_us, psi, threshold, rng, [&](double t, std::size_t ch) {
      if (ch != kChannelTransmitted && ch != kChannelReflected) return;
      if (int d = route_photon(ch, dm, rng)) ev.push_back({d, dm.quantize(tr.t_start_us + t)});
    });
    return ev;
  });

  // Empty-cavity stretches between transits.
  std::vector<std::pair<double, double>> gaps;
  double cursor = 0.0;
  for (const auto& tr : rec.truth) {
    gaps.emplace_back(cursor, tr.t_start_us);
    cursor = tr.t_end_us;
  }
  gaps.emplace_back(cursor, total_us);
  auto per_gap = parallel_map(gaps.size(), settings.threads, [&](std::size_t j) {
    auto rng = make_rng(seed, 2, j);
    std::vector<ClickEvent> ev;
    for (int d = kD1; d <= kD4; ++d)
      detail::poisson_clicks(rates[std::size_t(d - 1)], gaps[j].first, gaps[j].second, d, dm, rng, ev);
    return ev;
  });

  for (auto& v : per_transit) rec.events.insert(rec.events.end(), v.begin(), v.end());
  for (auto& v : per_gap) rec.events.insert(rec.events.end(), v.begin(), v.end());
  for (int d = kD1; d <= kD4; ++d) {
    auto rng = make_rng(seed, 3, std::uint64_t(d));
    detail::poisson_clicks(dm.background_rate * 1e-6, 0.0, total_us, d, dm, rng, rec.events);
  }
  std::sort(rec.events.begin(), rec.events.end());
  return rec;
}

/// Adds independent Poisson background at `rate_per_s` on every detector.
/// `salt` selects the random stream so several layers can be stacked.
inline ClickRecord add_background(ClickRecord rec, double rate_per_s, std::uint64_t salt = 0) {
  if (!(rate_per_s >= 0)) throw ConfigError("background rate must be >= 0");
  const double total_us = rec.duration_us();
  std::vector<ClickEvent> extra;
  for (int d = kD1; d <= kD4; ++d) {
    auto rng = make_rng(rec.seed, 4 + salt, std::uint64_t(d));
    detail::poisson_clicks(rate_per_s * 1e-6, 0.0, total_us, d, rec.detectors, rng, extra);
  }
  std::sort(extra.begin(), extra.end());
  std::vector<ClickEvent> merged;
  merged.reserve(rec.events.size() + extra.size());
  std::merge(rec.events.begin(), rec.events.end(), extra.begin(), extra.end(), std::back_inserter(merged));
  rec.events = std::move(merged);
  rec.detectors.background_rate += rate_per_s;
  return rec;
}

/// Model prediction for the equal-time cross-detector g2 of clicks within
/// +-half_window_us of transit centres: coincidence and singles rates of the
/// adiabatically followed steady state, pooled over g_peak (midpoint samples of
/// [g_min, g_max]), kx (uniform) and time within the window, with uncorrelated
/// background at `background_per_us` on every detector.
struct WindowPrediction {
  double g2R0 = 0;
  double g2T0 = 0;
};

inline WindowPrediction pooled_window_g2(const SystemParams& p, const TransitModel& tm, const DetectorModel& dm,
                                         double half_window_us, double background_per_us = 0.0,
                                         std::size_t g_samples = 7, std::size_t kx_samples = 4,
                                         std::size_t t_samples = 16, const TrajectorySettings& settings = {}) {
  tm.validate();
  dm.validate();
  if (g_samples == 0 || kx_samples == 0 || t_samples == 0) throw ConfigError("sample counts must be positive");
  TransitSimulator sim(p, tm.g_max, settings);
  const auto out = sim.outputs();
  const std::array<OperatorMatrix, 2> ops{out.transmitted, out.reflected};
  std::array<OperatorMatrix, 2> n_ops, c_ops;
  for (std::size_t o = 0; o < 2; ++o) {
    n_ops[o] = ops[o].adjoint() * ops[o];
    c_ops[o] = ops[o].adjoint() * ops[o].adjoint() * ops[o] * ops[o];
  }
  const double eta = dm.efficiency, s = dm.split_ratio, b = background_per_us;
  std::array<double, 2> coinc{}, singles{};
  for (std::size_t i = 0; i < g_samples; ++i) {
    const double gp = tm.g_min + (tm.g_max - tm.g_min) * (double(i) + 0.5) / double(g_samples);
    for (std::size_t k = 0; k < kx_samples; ++k) {
      const double kx = kTwoPi * double(k) / double(kx_samples);
      for (std::size_t j = 0; j < t_samples; ++j) {
        const double t = -half_window_us + 2 * half_window_us * (double(j) + 0.5) / double(t_samples);
        const auto rho = steady_state(sim.liouvillian(gp * tm.envelope(t), kx));
        for (std::size_t o = 0; o < 2; ++o) {
          const double I = eta * rho.expectation(n_ops[o]).real();
          const double G = eta * eta * rho.expectation(c_ops[o]).real();
          const double ra = s * I + b, rb = (1 - s) * I + b;
          coinc[o] += s * (1 - s) * G + b * I + b * b;
          singles[o] += ra * rb;
        }
      }
    }
  }
  return {coinc[1] / singles[1], coinc[0] / singles[0]};
}

/// Time-binned output photon rates (per us) around a single transit centred at t = 0.
struct TransitRates {
  std::vector<double> bin_start_us;
  double bin_us = 0;
  std::vector<double> reflected;
  std::vector<double> transmitted;
  std::vector<double> reflected_stderr;  // empty for the master-equation curve
  std::size_t trajectories = 0;
};

namespace detail {

inline std::vector<double> transit_bins(const TransitModel& tm, double bin_us, double& start) {
  const double hs = tm.half_span();
  const auto nbins = std::size_t(std::ceil(2 * hs / bin_us - 1e-9));
  start = -0.5 * double(nbins) * bin_us;
  std::vector<double> b(nbins);
  for (std::size_t i = 0; i < nbins; ++i) b[i] = start + double(i) * bin_us;
  return b;
}

}  // namespace detail

/// Mean photon rates over an ensemble of single-transit trajectories with
/// fixed g_peak and kx (unit detection efficiency).
inline TransitRates simulate_transit_ensemble(const SystemParams& p, const TransitModel& tm, double g_peak, double kx,
                                              std::size_t n_traj, double bin_us, std::uint64_t seed,
                                              const SimulationSettings& settings = {}) {
  const TransitSimulator sim(p, g_peak, settings.trajectory);
  TransitRates out;
  out.bin_us = bin_us;
  double start = 0;
  out.bin_start_us = detail::transit_bins(tm, bin_us, start);
  const std::size_t nb = out.bin_start_us.size();
  const double span = double(nb) * bin_us;
  struct Counts {
    std::vector<double> r, t;
  };
  auto counts = parallel_map(n_traj, settings.threads, [&](std::size_t i) {
    auto rng = make_rng(seed, 5, i);
    Counts c{std::vector<double>(nb, 0.0), std::vector<double>(nb, 0.0)};
    StateVector psi = sim.initial_state();
    double threshold = uniform_open(rng);
    auto g_of = [&](double t) { return g_peak * tm.envelope(start + t); };
    sim.run(g_of, kx, span, psi, threshold, rng, [&](double t, std::size_t ch) {
      const auto b = std::min(nb - 1, std::size_t(t / bin_us));
      if (ch == kChannelReflected) c.r[b] += 1;
      if (ch == kChannelTransmitted) c.t[b] += 1;
    });
    return c;
  });
  out.trajectories = n_traj;
  out.reflected.assign(nb, 0.0);
  out.transmitted.assign(nb, 0.0);
  std::vector<double> sq(nb, 0.0);
  for (const auto& c : counts) {
    for (std::size_t b = 0; b < nb; ++b) {
      out.reflected[b] += c.r[b];
      out.transmitted[b] += c.t[b];
      sq[b] += c.r[b] * c.r[b];
    }
  }
  const double n = double(n_traj);
  out.reflected_stderr.resize(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const double mean = out.reflected[b] / n;
    const double var = n > 1 ? (sq[b] / n - mean * mean) * n / (n - 1) : 0.0;
    out.reflected_stderr[b] = std::sqrt(std::max(var, 0.0) / n) / bin_us;
    out.reflected[b] = mean / bin_us;
    out.transmitted[b] /= n * bin_us;
  }
  return out;
}

/// The same bin-averaged rates from the master equation with the identical
/// piecewise-constant g(t).
inline TransitRates master_equation_transit(const SystemParams& p, const TransitModel& tm, double g_peak, double kx,
                                            double bin_us, const TrajectorySettings& settings = {}) {
  const TransitSimulator sim(p, g_peak, settings);
  TransitRates out;
  out.bin_us = bin_us;
  double start = 0;
  out.bin_start_us = detail::transit_bins(tm, bin_us, start);
  const std::size_t nb = out.bin_start_us.size();
  const double span = double(nb) * bin_us;
  const auto outputs = sim.outputs();
  const OperatorMatrix nr = outputs.reflected.adjoint() * outputs.reflected;
  const OperatorMatrix nt = outputs.transmitted.adjoint() * outputs.transmitted;
  out.reflected.assign(nb, 0.0);
  out.transmitted.assign(nb, 0.0);

  // Simpson's rule on each segment, accumulated into the bin holding its midpoint.
  DenseMatrix rho = DensityMatrix::pure(sim.space(), sim.initial_state()).matrix();
  auto rates = [&](const DenseMatrix& m) {
    return std::pair{(nr.matrix() * m).trace().real(), (nt.matrix() * m).trace().real()};
  };
  const double seg_len = sim.segment();
  for (double t = 0.0; t < span - 1e-12;) {
    const double seg = std::min(seg_len, span - t);
    const double g = g_peak * tm.envelope(start + t + 0.5 * seg);
    LindbladGenerator f(sim.liouvillian(g, kx));
    std::array<double, 2> ts{0.5 * seg, seg};
    auto states = evolve_grid(f, rho, ts);
    auto [r0, t0] = rates(rho);
    auto [r1, t1] = rates(states[0]);
    auto [r2, t2] = rates(states[1]);
    const auto b = std::min(nb - 1, std::size_t((t + 0.5 * seg) / bin_us));
    out.reflected[b] += seg / 6.0 * (r0 + 4 * r1 + r2);
    out.transmitted[b] += seg / 6.0 * (t0 + 4 * t1 + t2);
    rho = states[1];
    t += seg;
  }
  for (std::size_t b = 0; b < nb; ++b) {
    out.reflected[b] /= bin_us;
    out.transmitted[b] /= bin_us;
  }
  return out;
}

}  // namespace router
