#pragma once

// Atom + two counter-propagating whispering-gallery modes + tapered fiber.
//
// Rotating frame at the probe frequency:
//   H = -d_cp (a^+a + b^+b) - d_ap s+s- + h (a^+b + b^+a)
//       + g [(e^{-ikx} a + e^{ikx} b) s+ + h.c.] + i E (a^+ - a)
// with d_cp = omega_C - omega_p, d_ap = omega_A - omega_p. Collapse operators
// sqrt(2 kex) a, sqrt(2 kex) b, sqrt(2 ki) a, sqrt(2 ki) b, sqrt(gamma) s-, so
// each mode's field decays at kappa = kex + ki and gamma is the population decay.
// Input-output: a_out = a_in + sqrt(2 kex) a, b_out = sqrt(2 kex) b, with the
// coherent input <a_in> = -E / sqrt(2 kex) in this frame.
//
// Public parameters are in MHz (value/2pi); internal rates are rad/us, so times
// are in microseconds and fluxes in photons per microsecond.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "router/lindblad.hpp"
#include "router/parallel.hpp"
#include "router/params.hpp"

namespace router {

enum class Output { Transmitted, Reflected };

inline const char* to_string(Output o) { return o == Output::Transmitted ? "T" : "R"; }

// Collapse operator order in build_liouvillian.
inline constexpr std::size_t kCollapseTaperA = 0;
inline constexpr std::size_t kCollapseTaperB = 1;
inline constexpr std::size_t kCollapseLossA = 2;
inline constexpr std::size_t kCollapseLossB = 3;
inline constexpr std::size_t kCollapseAtom = 4;

inline double cooperativity(const SystemParams& p) {
  const double k = p.kappa();
  if (!(p.gamma > 0) || !(k > 0)) throw ConfigError("cooperativity requires gamma > 0 and kappa > 0");
  return 2.0 * p.g_tw * p.g_tw * k / (p.gamma * (k * k + p.h * p.h));
}

/// Gamma = gamma (1 + 2C), MHz.
inline double enhanced_decay(const SystemParams& p) { return p.gamma * (1.0 + 2.0 * cooperativity(p)); }

/// Coherent shift of the mode operators, a -> a + alpha. The model written in
/// the shifted basis is the same physics with a smaller photon truncation.
struct Displacement {
  complex a{0.0};
  complex b{0.0};
};

struct ModelOperators {
  OperatorMatrix a, b, sm;
};

inline ModelOperators model_operators(const HilbertSpace& space, const Displacement& d = {}) {
  const auto id = OperatorMatrix::identity(space);
  return {mode_annihilation(space, Mode::A) + d.a * id, mode_annihilation(space, Mode::B) + d.b * id,
          atom_lowering(space)};
}

/// (e^{-ikx} a + e^{ikx} b) s+ + h.c., the atom coupling per unit (angular) g.
inline OperatorMatrix atom_coupling(const ModelOperators& ops, double kx) {
  const complex phase = std::polar(1.0, -kx);
  OperatorMatrix x = (phase * ops.a + std::conj(phase) * ops.b) * ops.sm.adjoint();
  return x + x.adjoint();
}

inline Liouvillian build_liouvillian(const SystemParams& p, const HilbertSpace& space, bool atom_present,
                                     const Displacement& disp = {}) {
  p.validate();
  const auto ops = model_operators(space, disp);
  const auto ad = ops.a.adjoint();
  const auto bd = ops.b.adjoint();
  const auto sp = ops.sm.adjoint();
  const double d_cp = angular(p.delta_cp());
  const double d_ap = angular(p.delta_ap);
  const double h = angular(p.h);
  const double e = angular(p.drive_ep);

  OperatorMatrix H = -d_cp * (ad * ops.a + bd * ops.b) - d_ap * (sp * ops.sm) + h * (ad * ops.b + bd * ops.a) +
                     complex(0, e) * (ad - ops.a);
  if (atom_present && p.g_tw != 0.0) H += angular(p.g_tw) * atom_coupling(ops, p.kx);

  const double s_ex = std::sqrt(2.0 * angular(p.kappa_ex));
  const double s_i = std::sqrt(2.0 * angular(p.kappa_i));
  std::vector<OperatorMatrix> collapse{s_ex * ops.a, s_ex * ops.b, s_i * ops.a, s_i * ops.b,
                                       std::sqrt(angular(p.gamma)) * ops.sm};
  return {std::move(H), std::move(collapse)};
}

/// <a_in> in the rotating frame, sqrt(photons/us).
inline complex input_amplitude(const SystemParams& p) {
  if (!(p.kappa_ex > 0)) throw ConfigError("input-output requires kappa_ex > 0");
  return -angular(p.drive_ep) / std::sqrt(2.0 * angular(p.kappa_ex));
}

/// |<a_in>|^2, photons/us.
inline double input_flux(const SystemParams& p) { return std::norm(input_amplitude(p)); }

struct OutputOperators {
  OperatorMatrix transmitted;  // a_out
  OperatorMatrix reflected;    // b_out
  complex input_amplitude;

  const OperatorMatrix& get(Output o) const { return o == Output::Transmitted ? transmitted : reflected; }
};

inline OutputOperators output_flux_operators(const SystemParams& p, const HilbertSpace& space,
                                             const Displacement& disp = {}) {
  const auto ops = model_operators(space, disp);
  const double s = std::sqrt(2.0 * angular(p.kappa_ex));
  const complex alpha = input_amplitude(p);
  return {alpha * OperatorMatrix::identity(space) + s * ops.a, s * ops.b, alpha};
}

/// Energy budget at a steady state, photons/us.
struct FluxBalance {
  double input = 0, transmitted = 0, reflected = 0, intrinsic = 0, atomic = 0;

  double outgoing() const { return transmitted + reflected + intrinsic + atomic; }
  double relative_mismatch() const { return std::abs(input - outgoing()) / std::max(input, 1e-300); }
};

inline FluxBalance flux_balance(const SystemParams& p, const DensityMatrix& rho, const Displacement& disp = {}) {
  const auto& space = rho.space();
  const auto ops = model_operators(space, disp);
  const auto out = output_flux_operators(p, space, disp);
  FluxBalance fb;
  fb.input = std::norm(out.input_amplitude);
  fb.transmitted = rho.expectation(out.transmitted.adjoint() * out.transmitted).real();
  fb.reflected = rho.expectation(out.reflected.adjoint() * out.reflected).real();
  fb.intrinsic = 2.0 * angular(p.kappa_i) *
                 rho.expectation(ops.a.adjoint() * ops.a + ops.b.adjoint() * ops.b).real();
  fb.atomic = angular(p.gamma) * rho.expectation(ops.sm.adjoint() * ops.sm).real();
  return fb;
}

/// Weak-drive steady state with the atom treated as a linear dipole.
struct LinearResponse {
  double T0 = 0, R0 = 0;        // |a_out|^2 and |b_out|^2 over the input flux
  complex a{0}, b{0}, sigma{0};  // amplitudes at the configured drive
  complex t{0}, r{0};            // output amplitude ratios
};

inline LinearResponse linear_response(const SystemParams& p, bool atom_present) {
  p.validate();
  const double k = angular(p.kappa());
  const double kex = angular(p.kappa_ex);
  const double h = angular(p.h);
  const double d_cp = angular(p.delta_cp());
  const double g = atom_present ? angular(p.g_tw) : 0.0;
  const complex iu(0, 1);
  const complex ga = g * std::polar(1.0, p.kx);   // a couples to sigma via e^{+ikx}
  const complex gb = g * std::polar(1.0, -p.kx);
  Eigen::Vector3cd x;
  if (atom_present) {
    Eigen::Matrix3cd m;
    m << k - iu * d_cp, iu * h, iu * ga,
         iu * h, k - iu * d_cp, iu * gb,
         iu * gb, iu * ga, angular(p.gamma) / 2.0 - iu * angular(p.delta_ap);
    Eigen::FullPivLU<Eigen::Matrix3cd> lu(m);
    if (!lu.isInvertible()) throw SolverError("linear response: singular steady-state system");
    x = lu.solve(Eigen::Vector3cd(1.0, 0.0, 0.0));
  } else {
    Eigen::Matrix2cd m;
    m << k - iu * d_cp, iu * h, iu * h, k - iu * d_cp;
    Eigen::FullPivLU<Eigen::Matrix2cd> lu(m);
    if (!lu.isInvertible()) throw SolverError("linear response: singular steady-state system");
    Eigen::Vector2cd y = lu.solve(Eigen::Vector2cd(1.0, 0.0));
    x << y(0), y(1), 0.0;
  }
  LinearResponse out;
  out.t = 1.0 - 2.0 * kex * x(0);
  out.r = -2.0 * kex * x(1);
  out.T0 = std::norm(out.t);
  out.R0 = std::norm(out.r);
  const double e = angular(p.drive_ep);
  out.a = e * x(0);
  out.b = e * x(1);
  out.sigma = e * x(2);
  return out;
}

/// Empty-cavity coherent amplitudes at the configured drive and detuning.
inline Displacement empty_cavity_amplitudes(const SystemParams& p) {
  auto lr = linear_response(p, false);
  return {lr.a, lr.b};
}

struct OvercoupledLimit {
  double T0, R0, g2T0, g2R0;
};

inline OvercoupledLimit analytic_overcoupled(double C) {
  if (C < 0) throw ConfigError("cooperativity must be non-negative");
  const double x = 2.0 * C + 1.0;
  const double y = 4.0 * C * C - 1.0;
  return {1.0 / (x * x), (2.0 * C / x) * (2.0 * C / x), y * y, 0.0};
}

/// E_p (MHz) giving <a^+a> = nbar in the resonant empty cavity, including mode mixing h.
inline double calibrate_drive(const SystemParams& p, double nbar) {
  if (nbar < 0) throw ConfigError("nbar must be non-negative");
  const double k = p.kappa();
  if (!(k > 0)) throw ConfigError("kappa must be positive");
  return std::sqrt(nbar) * (k * k + p.h * p.h) / k;
}

inline SystemParams with_nbar(SystemParams p, double nbar) {
  p.drive_ep = calibrate_drive(p, nbar);
  return p;
}

/// Mean resonant empty-cavity photon number of mode a at the configured drive.
inline double empty_cavity_nbar(const SystemParams& p) {
  SystemParams q = p;
  q.delta_ac = 0;
  q.delta_ap = 0;
  return std::norm(linear_response(q, false).a);
}

struct TruncationPolicy {
  /// Largest tolerated population in the highest retained Fock level.
  double top_population_tol = 1e-8;
  Index dimension_cap = kDefaultDimensionCap;
  int max_doublings = 4;
  /// Fixed truncations; 0 selects them automatically.
  int n_max_a = 0;
  int n_max_b = 0;
  /// Work in the basis displaced by the empty-cavity coherent amplitudes, so the
  /// Fock truncation only has to hold the atom-induced field.
  bool displaced = true;
};

/// max(4, ceil(10 n) + 4) for a mode with mean occupation n.
inline int initial_truncation(double occupation) {
  return std::max(4, int(std::ceil(10.0 * occupation)) + 4);
}

/// A solved steady state together with everything needed to evaluate observables.
struct ModelState {
  SystemParams params;
  bool atom_present = true;
  HilbertSpace space;
  Displacement displacement;
  Liouvillian L;
  DensityMatrix rho;
  OutputOperators outputs;
  /// Set when the highest-level populations stayed above tolerance.
  bool truncation_flag = false;
  std::vector<std::string> warnings;

  double flux(Output o) const {
    const auto& op = outputs.get(o);
    return rho.expectation(op.adjoint() * op).real();
  }
  /// <O^+ O^+ O O>, the equal-time coincidence rate.
  double coincidence(Output o) const {
    const auto& op = outputs.get(o);
    const auto od = op.adjoint();
    return rho.expectation(od * od * op * op).real();
  }
  double g2_zero(Output o) const { return router::g2_zero(rho, outputs.get(o)); }
  /// <a^+a> or <b^+b> of the physical (undisplaced) mode.
  double occupation(Mode m) const {
    const auto ops = model_operators(space, displacement);
    const auto& x = m == Mode::A ? ops.a : ops.b;
    return rho.expectation(x.adjoint() * x).real();
  }
  double excited_population() const {
    const auto sm = atom_lowering(space);
    return rho.expectation(sm.adjoint() * sm).real();
  }
  /// Population of the highest retained level in the working basis.
  double top_population(Mode m) const { return top_level_population(rho, m); }
  FluxBalance balance() const { return flux_balance(params, rho, displacement); }
};

/// Steady state with automatic Fock truncation. Each mode starts at
/// initial_truncation of its estimated occupation in the working basis and is
/// doubled until its highest-level population is below tolerance.
inline ModelState solve_steady_state(const SystemParams& p, bool atom_present, const TruncationPolicy& policy = {}) {
  p.validate();
  const Displacement disp = policy.displaced ? empty_cavity_amplitudes(p) : Displacement{};
  int na = policy.n_max_a, nb = policy.n_max_b;
  if (na == 0 || nb == 0) {
    // Linear-response field relative to the working basis origin.
    double occ_a = 0.0, occ_b = 0.0;
    try {
      auto lr = linear_response(p, atom_present);
      occ_a = std::norm(lr.a - disp.a);
      occ_b = std::norm(lr.b - disp.b);
    } catch (const SolverError&) {
      occ_a = occ_b = empty_cavity_nbar(p);
    }
    if (na == 0) na = initial_truncation(occ_a);
    if (nb == 0) nb = initial_truncation(occ_b);
  }
  const bool adaptive = policy.n_max_a == 0 || policy.n_max_b == 0;
  for (int round = 0;; ++round) {
    HilbertSpace space = make_space(na, nb, policy.dimension_cap);
    Liouvillian L = build_liouvillian(p, space, atom_present, disp);
    DensityMatrix rho = steady_state(L);
    ModelState st{p, atom_present, space, disp, L, rho, output_flux_operators(p, space, disp), false, {}};
    const bool bad_a = st.top_population(Mode::A) >= policy.top_population_tol;
    const bool bad_b = st.top_population(Mode::B) >= policy.top_population_tol;
    if (!bad_a && !bad_b) return st;
    const int next_a = (bad_a && policy.n_max_a == 0) ? 2 * na : na;
    const int next_b = (bad_b && policy.n_max_b == 0) ? 2 * nb : nb;
    const bool can_grow = adaptive && round < policy.max_doublings && (next_a != na || next_b != nb) &&
                          HilbertSpace(next_a, next_b).total_dim() <= policy.dimension_cap;
    if (!can_grow) {
      st.truncation_flag = true;
      st.warnings.push_back("highest Fock level population above " + format_number(policy.top_population_tol) +
                            " at truncation (" + std::to_string(na) + ", " + std::to_string(nb) + ")");
      return st;
    }
    na = next_a;
    nb = next_b;
  }
}

/// Detuning used for the far-off-resonance normalization, in units of kappa.
inline constexpr double kNormalizationDetuningKappas = 50.0;

inline SystemParams at_probe_detuning(SystemParams p, double delta_mhz) {
  // delta = omega_C - omega_p; the atom-cavity detuning delta_ac is held fixed.
  p.delta_ap = delta_mhz + p.delta_ac;
  return p;
}

struct SpectraResult {
  std::vector<double> detunings;  // MHz
  std::vector<double> T;
  std::vector<double> R;
  double normalization = 0;             // transmitted flux at the normalization detuning, photons/us
  double normalization_detuning = 0;    // MHz
  std::vector<std::string> warnings;
  /// Per point: empty, or the solver message when that point failed (T, R are NaN).
  std::vector<std::string> errors;
};

/// Far-detuned transmitted flux I_T(Delta = 50 kappa).
inline double spectra_normalization(const SystemParams& p, bool atom_present, const TruncationPolicy& policy = {}) {
  const double det = kNormalizationDetuningKappas * p.kappa();
  return solve_steady_state(at_probe_detuning(p, det), atom_present, policy).flux(Output::Transmitted);
}

inline constexpr double kWeakDriveNbar = 0.05;

inline SpectraResult spectra(const SystemParams& p, std::span<const double> grid, bool atom_present,
                             const TruncationPolicy& policy = {}, int threads = 1) {
  SpectraResult out;
  out.detunings.assign(grid.begin(), grid.end());
  out.normalization_detuning = kNormalizationDetuningKappas * p.kappa();
  out.normalization = spectra_normalization(p, atom_present, policy);
  if (!(out.normalization > 0)) throw SolverError("spectra: zero far-detuned transmitted flux (no drive?)");
  if (empty_cavity_nbar(p) > kWeakDriveNbar) {
    out.warnings.push_back("empty-cavity photon number " + format_number(empty_cavity_nbar(p)) +
                           " exceeds the weak-drive limit " + format_number(kWeakDriveNbar));
  }
  struct Point {
    double t, r;
    std::string error;
  };
  auto points = parallel_map(grid.size(), threads, [&](std::size_t i) {
    try {
      auto st = solve_steady_state(at_probe_detuning(p, grid[i]), atom_present, policy);
      return Point{st.flux(Output::Transmitted), st.flux(Output::Reflected), {}};
    } catch (const SolverError& e) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      return Point{nan, nan, e.what()};
    }
  });
  for (auto& pt : points) {
    out.T.push_back(pt.t / out.normalization);
    out.R.push_back(pt.r / out.normalization);
    out.errors.push_back(std::move(pt.error));
  }
  return out;
}

struct ModelCorrelation {
  Output which = Output::Reflected;
  std::vector<double> tau_us;
  std::vector<double> g2;
  double flux = 0;      // photons/us
  double Gamma = 0;     // MHz, enhanced decay for reference
};

inline ModelCorrelation g2_curves(const SystemParams& p, std::span<const double> tau_us, Output which,
                                  const TruncationPolicy& policy = {}) {
  auto st = solve_steady_state(p, true, policy);
  ModelCorrelation out;
  out.which = which;
  out.tau_us.assign(tau_us.begin(), tau_us.end());
  out.flux = st.flux(which);
  out.g2 = regression_g2(st.L, st.rho, st.outputs.get(which), tau_us);
  out.Gamma = p.gamma > 0 ? enhanced_decay(p) : 0.0;
  return out;
}

/// Two-level atom obtained by eliminating both cavity modes.
struct EffectiveModel {
  double Gamma = 0;          // MHz, polarization decays at Gamma/2
  double cooperativity = 0;
  complex effective_drive{0};  // MHz; H_eff = -delta_eff s+s- + (drive s+ + h.c.)
  double effective_detuning = 0;  // MHz
  // Output amplitudes as c0 + c1 s-, in sqrt(photons/us).
  complex c0_T{0}, c1_T{0}, c0_R{0}, c1_R{0};
  std::vector<std::string> warnings;
};

inline EffectiveModel effective_model(const SystemParams& p) {
  p.validate();
  EffectiveModel out;
  out.cooperativity = cooperativity(p);
  if (p.kappa() < 3.0 * std::max(p.g_tw, p.gamma)) {
    out.warnings.push_back("kappa is not large compared with g_tw and gamma; adiabatic elimination is approximate");
  }
  const complex iu(0, 1);
  const double k = angular(p.kappa());
  const double h = angular(p.h);
  const double d_cp = angular(p.delta_cp());
  const double g = angular(p.g_tw);
  const complex ga = g * std::polar(1.0, p.kx);  // coefficient of -i sigma in da/dt
  const complex gb = g * std::polar(1.0, -p.kx);
  Eigen::Matrix2cd m;
  m << k - iu * d_cp, iu * h, iu * h, k - iu * d_cp;
  Eigen::FullPivLU<Eigen::Matrix2cd> lu(m);
  if (!lu.isInvertible()) throw SolverError("effective model: singular elimination system");
  const Eigen::Vector2cd drive_part = lu.solve(Eigen::Vector2cd(angular(p.drive_ep), 0.0));
  const Eigen::Vector2cd atom_part = lu.solve(Eigen::Vector2cd(-iu * ga, -iu * gb));
  // d sigma/dt = (i d_ap - gamma/2 - K) sigma + i s_z Omega
  const complex K = iu * (std::conj(ga) * atom_part(0) + std::conj(gb) * atom_part(1));
  const complex omega = std::conj(ga) * drive_part(0) + std::conj(gb) * drive_part(1);
  out.Gamma = (angular(p.gamma) + 2.0 * K.real()) / kTwoPi;
  out.effective_detuning = (angular(p.delta_ap) - K.imag()) / kTwoPi;
  out.effective_drive = omega / kTwoPi;
  const double s = std::sqrt(2.0 * angular(p.kappa_ex));
  const complex alpha = input_amplitude(p);
  out.c0_T = alpha + s * drive_part(0);
  out.c1_T = s * atom_part(0);
  out.c0_R = s * drive_part(1);
  out.c1_R = s * atom_part(1);
  return out;
}

struct SaturationOptions {
  double g_min = 35.0;
  double g_max = 65.0;
  int g_samples = 7;
  int kx_samples = 4;
  /// Uncorrelated background added to each output, as a fraction of its signal.
  double background_fraction = 0.0;
  TruncationPolicy truncation;
  int threads = 1;
};

struct SaturationRow {
  double nbar = 0;
  double drive_ep = 0;       // MHz
  double T0 = 0;             // transmitted flux / resonant empty-cavity transmitted flux
  double g2R0 = 0;           // flux-weighted over samples
  double xi = 0;             // reflected flux / input flux
  double T0_background = 0;  // with background_fraction applied
  double g2R0_background = 0;
  double kx_spread = 0;      // max over g of (max_kx T0 - min_kx T0)
  bool truncation_flag = false;
};

/// Model-side saturation sweep averaged uniformly over g_tw (midpoint rule on
/// [g_min, g_max]) and kx (equally spaced on [0, 2pi)). g2 is pooled: averaged
/// numerators divided by the squared averaged flux.
inline std::vector<SaturationRow> saturation_curve(const SystemParams& p, std::span<const double> nbars,
                                                   const SaturationOptions& opts = {}) {
  if (nbars.empty()) throw ConfigError("saturation curve needs at least one nbar");
  if (opts.g_min > opts.g_max) throw ConfigError("g_min must not exceed g_max");
  if (opts.g_samples < 1 || opts.kx_samples < 1) throw ConfigError("sample counts must be >= 1");
  const std::size_t ng = std::size_t(opts.g_samples), nk = std::size_t(opts.kx_samples);
  const std::size_t per = ng * nk;

  struct Sample {
    double t, r, coinc;
    bool flag;
  };
  auto samples = parallel_map(nbars.size() * per, opts.threads, [&](std::size_t idx) {
    const std::size_t n = idx / per, rem = idx % per;
    const std::size_t gi = rem / nk, ki = rem % nk;
    SystemParams q = with_nbar(p, nbars[n]);
    q.g_tw = opts.g_min + (double(gi) + 0.5) * (opts.g_max - opts.g_min) / double(ng);
    q.kx = kTwoPi * double(ki) / double(nk);
    auto st = solve_steady_state(q, true, opts.truncation);
    return Sample{st.flux(Output::Transmitted), st.flux(Output::Reflected), st.coincidence(Output::Reflected),
                  st.truncation_flag};
  });

  std::vector<SaturationRow> rows;
  for (std::size_t n = 0; n < nbars.size(); ++n) {
    SystemParams q = with_nbar(p, nbars[n]);
    SaturationRow row;
    row.nbar = nbars[n];
    row.drive_ep = q.drive_ep;
    const double in = input_flux(q);
    const double t_empty = linear_response(q, false).T0 * in;
    double sum_t = 0, sum_r = 0, sum_c = 0;
    for (std::size_t gi = 0; gi < ng; ++gi) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t ki = 0; ki < nk; ++ki) {
        const Sample& s = samples[n * per + gi * nk + ki];
        sum_t += s.t;
        sum_r += s.r;
        sum_c += s.coinc;
        row.truncation_flag = row.truncation_flag || s.flag;
        lo = std::min(lo, s.t / t_empty);
        hi = std::max(hi, s.t / t_empty);
      }
      row.kx_spread = std::max(row.kx_spread, hi - lo);
    }
    const double mean_t = sum_t / double(per), mean_r = sum_r / double(per), mean_c = sum_c / double(per);
    row.T0 = mean_t / t_empty;
    row.xi = in > 0 ? mean_r / in : 0.0;
    row.g2R0 = mean_r > 0 ? mean_c / (mean_r * mean_r) : 0.0;
    const double f = opts.background_fraction;
    // Background is a fraction f of the empty-cavity transmitted signal on the
    // transmitted side (it also enters the normalization run) and of the
    // reflected signal on the reflected side.
    row.T0_background = (mean_t + f * t_empty) / ((1.0 + f) * t_empty);
    row.g2R0_background = (row.g2R0 + 2.0 * f + f * f) / ((1.0 + f) * (1.0 + f));
    rows.push_back(row);
  }
  return rows;
}

/// xi: reflected flux over input flux on resonance with the atom present,
/// averaged as in saturation_curve.
inline double routing_efficiency(const SystemParams& p, double nbar, const SaturationOptions& opts = {}) {
  std::array<double, 1> n{nbar};
  return saturation_curve(p, n, opts).front().xi;
}

}  // namespace router
