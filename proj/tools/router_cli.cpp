// Command-line front end: model spectra and correlations, synthetic click
// records, record analysis and saturation sweeps.
//
// Every command resolves its settings as defaults < --config file < flags and
// echoes the full resolved set as `# config:` lines at the top of each output,
// so an output file can be passed back with --config to regenerate it.
// --threads and --out only affect scheduling and placement and are not echoed.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "router/router.hpp"

namespace fs = std::filesystem;
using namespace router;

namespace {

struct Key {
  std::string name;
  std::string value;  // default
  std::string help;
};
using Keys = std::vector<Key>;

const std::map<std::string, std::string>& key_help() {
  static const std::map<std::string, std::string> help{
      {"g_tw", "atom coupling to one travelling mode (MHz)"},
      {"kappa_ex", "taper coupling rate (MHz)"},
      {"kappa_i", "intrinsic loss rate (MHz)"},
      {"h", "mode-mixing rate (MHz)"},
      {"gamma", "atomic decay rate (MHz)"},
      {"delta_ac", "atom-cavity detuning (MHz)"},
      {"delta_ap", "atom-probe detuning (MHz)"},
      {"drive_ep", "drive amplitude (MHz), used when nbar = none"},
      {"kx", "atomic azimuthal phase (rad)"},
      {"nbar", "empty-cavity photon number setting the drive, or 'none'"},
      {"arrival_rate", "atom transits per second"},
      {"envelope_fwhm", "coupling envelope FWHM (us)"},
      {"g_min", "smallest peak coupling (MHz)"},
      {"g_max", "largest peak coupling (MHz)"},
      {"efficiency", "detection efficiency per photon"},
      {"split_ratio", "beamsplitter fraction to D1 / D3"},
      {"background_rate", "background counts per second per detector"},
      {"timestamp_resolution", "time-tag resolution (ns)"},
  };
  return help;
}

Keys physics_keys(const std::string& nbar) {
  Keys k;
  for (const auto& [name, value] : describe_fields(SystemParams{})) k.push_back({name, value, key_help().at(name)});
  k.push_back({"nbar", nbar, key_help().at("nbar")});
  return k;
}

template <class T>
Keys field_keys(const T& obj) {
  Keys k;
  for (const auto& [name, value] : describe_fields(obj)) k.push_back({name, value, key_help().at(name)});
  return k;
}

Keys operator+(Keys a, const Keys& b) {
  for (const auto& k : b)
    if (std::none_of(a.begin(), a.end(), [&](const Key& x) { return x.name == k.name; })) a.push_back(k);
  return a;
}

Keys grid_keys(const std::string& lo, const std::string& hi, const std::string& n) {
  return {{"delta_min", lo, "first probe detuning (MHz)"},
          {"delta_max", hi, "last probe detuning (MHz)"},
          {"delta_points", n, "number of detunings"}};
}

Keys record_keys() {
  return field_keys(TransitModel{}) + field_keys(DetectorModel{}) +
         Keys{{"duration", "0.01", "record length (s)"},
              {"seed", "1", "random seed"},
              {"segment_us", "0.05", "coupling hold time in trajectories (us)"},
              {"n_max", "0", "Fock cutoff in the displaced basis, 0 = automatic"}};
}

Keys analysis_keys() {
  return {{"c_th", "5", "transit threshold count"},
          {"dt_atom", "4", "count window (us)"},
          {"step", "0.1", "sliding step of the count window (us)"},
          {"signal_bin", "0.5", "bin of the averaged signals (us)"},
          {"center", "1", "width of the centre interval for T0(0), R0(0) and F (us)"},
          {"tau_bin", "0.005", "g2 delay bin (us)"},
          {"tau_max", "0.1", "largest g2 delay (us)"},
          {"segment", "0.5", "accidental-normalization segment (us)"},
          {"g2_window", "1.5", "correlate clicks within this distance of t0 (us)"},
          {"c_th_list", "3,4,5,6,7,8", "thresholds for the sweep table"},
          {"record_background", "0", "background injected into the records, fraction of the reflected transit signal"}};
}

class RunConfig {
 public:
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string& str(const std::string& name) const {
    for (const auto& [k, v] : entries)
      if (k == name) return v;
    throw ConfigError("missing setting '" + name + "'");
  }
  double num(const std::string& name) const { return parse_double(name, str(name)); }
  std::size_t count(const std::string& name) const {
    const double x = num(name);
    if (x < 0 || x != std::floor(x) || x > 1e12) throw ConfigError("'" + name + "' must be a non-negative integer");
    return std::size_t(x);
  }
  bool flag(const std::string& name) const {
    const auto& v = str(name);
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError("'" + name + "' must be 0 or 1");
  }
  std::vector<double> list(const std::string& name) const {
    std::vector<double> out;
    for (auto part : detail::split_commas(str(name))) out.push_back(parse_double(name, std::string(part)));
    if (out.empty()) throw ConfigError("'" + name + "' is empty");
    return out;
  }
  std::uint64_t seed() const { return parse_seed(str("seed")); }
  ConfigMap map() const { return {entries.begin(), entries.end()}; }
  bool has(const std::string& name) const {
    return std::any_of(entries.begin(), entries.end(), [&](const auto& kv) { return kv.first == name; });
  }

  SystemParams params() const {
    auto p = system_params_from(map());
    const auto& nb = str("nbar");
    if (nb != "none") {
      const double n = num("nbar");
      if (!(n >= 0)) throw ConfigError("nbar must be >= 0");
      p = with_nbar(p, n);
    }
    return p;
  }
};

RunConfig resolve(const Keys& keys, const ConfigMap& file, const ConfigMap& flags, const std::string& command) {
  for (const auto& [k, v] : file) {
    if (std::none_of(keys.begin(), keys.end(), [&](const Key& x) { return x.name == k; })) {
      throw ConfigError("unknown key '" + k + "' for command " + command);
    }
  }
  RunConfig rc;
  for (const auto& key : keys) {
    std::string v = key.value;
    if (auto it = file.find(key.name); it != file.end()) v = it->second;
    if (auto it = flags.find(key.name); it != flags.end()) v = it->second;
    rc.entries.emplace_back(key.name, v);
  }
  return rc;
}

/// A subcommand with one flag per configuration key plus the common flags.
struct Command {
  CLI::App* app = nullptr;
  std::string name;
  Keys keys;
  std::map<std::string, std::string> storage;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;
  std::string out = ".";
  int threads = 1;

  Command(CLI::App& parent, std::string n, std::string description, Keys k) : name(std::move(n)), keys(std::move(k)) {
    app = parent.add_subcommand(name, description);
    app->set_help_flag("--help", "print this help and exit");  // -h would clash with the key h
    app->add_option("--config", config_path, "configuration file (name = value lines, or an earlier output)");
    app->add_option("--out", out, "output directory");
    app->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    for (const auto& key : keys) {
      auto& slot = storage[key.name];
      options[key.name] = app->add_option("--" + key.name, slot, key.help + " [" + key.value + "]");
    }
  }

  RunConfig resolve_config(const ConfigMap& overrides = {}) const {
    ConfigMap flags;
    for (const auto& [k, opt] : options)
      if (opt->count() > 0) flags[k] = storage.at(k);
    ConfigMap file = config_path.empty() ? ConfigMap{} : read_key_values(config_path);
    for (const auto& [k, v] : overrides) file[k] = v;
    return resolve(keys, file, flags, name);
  }
};

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ParseError("cannot create output directory " + dir + ": " + ec.message(), 0);
  return p;
}

void announce(const fs::path& path) { std::cerr << "wrote " << path.string() << '\n'; }

std::vector<double> linear_grid(const RunConfig& rc) {
  const double lo = rc.num("delta_min"), hi = rc.num("delta_max");
  const std::size_t n = rc.count("delta_points");
  if (n == 0) throw ConfigError("delta_points must be >= 1");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = n == 1 ? lo : lo + (hi - lo) * double(i) / double(n - 1);
  return g;
}

// ---------------------------------------------------------------------------

Keys spectra_keys() {
  return physics_keys("1e-06") + grid_keys("-300", "300", "121") +
         Keys{{"atom", "both", "present, absent or both"}};
}

int run_spectra(const RunConfig& rc, const fs::path& dir, int threads) {
  const auto p = rc.params();
  const auto grid = linear_grid(rc);
  const auto& atom = rc.str("atom");
  if (atom != "present" && atom != "absent" && atom != "both") throw ConfigError("atom must be present, absent or both");
  std::vector<std::pair<std::string, SpectraResult>> runs;
  if (atom != "absent") runs.emplace_back("atom", spectra(p, grid, true, {}, threads));
  if (atom != "present") runs.emplace_back("empty", spectra(p, grid, false, {}, threads));

  CsvTable t;
  t.config = rc.entries;
  t.columns = {"delta_mhz"};
  for (const auto& [label, r] : runs) {
    t.columns.push_back("T_" + label);
    t.columns.push_back("R_" + label);
    t.note("normalization_" + label, format_value(r.normalization) + " photons/us at delta = " +
                                         format_value(r.normalization_detuning) + " MHz");
    for (const auto& w : r.warnings) t.note("warning", w);
  }
  t.columns.push_back("status");
  bool failed = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::vector<std::string> row{cell(grid[i])};
    std::string status = "ok";
    for (const auto& [label, r] : runs) {
      row.push_back(cell(r.T[i]));
      row.push_back(cell(r.R[i]));
      if (!r.errors[i].empty()) {
        status = "solver error (" + label + "): " + r.errors[i];
        failed = true;
      }
    }
    for (auto& c : status)
      if (c == ',') c = ';';
    row.push_back(status);
    t.rows.push_back(row);
  }
  write_csv(t, (dir / "spectra.csv").string());
  announce(dir / "spectra.csv");
  return failed ? int(ExitCode::kSolver) : 0;
}

// ---------------------------------------------------------------------------

Keys correlations_keys() {
  return physics_keys("1e-06") + grid_keys("-300", "300", "61") +
         Keys{{"tau_max", "0.05", "largest delay of the g2(tau) curves at delta = 0 (us)"},
              {"tau_points", "51", "delays of the g2(tau) curves, 0 to skip"}};
}

int run_correlations(const RunConfig& rc, const fs::path& dir, int threads) {
  const auto p = rc.params();
  const auto grid = linear_grid(rc);
  struct Point {
    double g2T, g2R, T, R;
    std::string error;
  };
  const double in = input_flux(p);
  auto points = parallel_map(grid.size(), threads, [&](std::size_t i) {
    try {
      auto st = solve_steady_state(at_probe_detuning(p, grid[i]), true);
      return Point{st.g2_zero(Output::Transmitted), st.g2_zero(Output::Reflected),
                   st.flux(Output::Transmitted) / in, st.flux(Output::Reflected) / in, "ok"};
    } catch (const SolverError& e) {
      return Point{kNaN, kNaN, kNaN, kNaN, std::string("solver error: ") + e.what()};
    }
  });
  CsvTable t;
  t.config = rc.entries;
  t.note("columns", "T and R are output fluxes over the input flux");
  t.columns = {"delta_mhz", "g2T0", "g2R0", "T", "R", "status"};
  bool failed = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto status = points[i].error;
    failed = failed || status != "ok";
    for (auto& c : status)
      if (c == ',') c = ';';
    t.add(grid[i], points[i].g2T, points[i].g2R, points[i].T, points[i].R, status);
  }
  write_csv(t, (dir / "correlations.csv").string());
  announce(dir / "correlations.csv");

  const std::size_t nt = rc.count("tau_points");
  if (nt > 0) {
    const double tmax = rc.num("tau_max");
    if (!(tmax > 0)) throw ConfigError("tau_max must be > 0");
    std::vector<double> tau(nt);
    for (std::size_t i = 0; i < nt; ++i) tau[i] = nt == 1 ? 0.0 : tmax * double(i) / double(nt - 1);
    const auto q = at_probe_detuning(p, 0.0);
    auto curves = parallel_map(2, threads, [&](std::size_t o) {
      return g2_curves(q, tau, o == 0 ? Output::Transmitted : Output::Reflected);
    });
    const double Gamma = angular(enhanced_decay(q));
    CsvTable c;
    c.config = rc.entries;
    c.note("delta", "0 MHz");
    c.note("Gamma", format_value(enhanced_decay(q)) + " MHz");
    c.note("g2R_adiabatic", "(1 - exp(-Gamma tau / 2))^2");
    c.columns = {"tau_us", "g2T", "g2R", "g2R_adiabatic"};
    for (std::size_t i = 0; i < nt; ++i) {
      const double a = 1 - std::exp(-0.5 * Gamma * tau[i]);
      c.add(tau[i], curves[0].g2[i], curves[1].g2[i], a * a);
    }
    write_csv(c, (dir / "correlations_tau.csv").string());
    announce(dir / "correlations_tau.csv");
  }
  return failed ? int(ExitCode::kSolver) : 0;
}

// ---------------------------------------------------------------------------

Keys simulate_keys() { return physics_keys("0.093") + record_keys() + Keys{{"atoms", "paired", "present, absent or paired"}}; }

/// Seed of the atom-free companion record.
std::uint64_t companion_seed(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

int run_simulate(const RunConfig& rc, const fs::path& dir, int threads) {
  const auto p = rc.params();
  TransitModel tm;
  DetectorModel dm;
  load_fields(tm, rc.map());
  load_fields(dm, rc.map());
  SimulationSettings s;
  s.threads = threads;
  s.trajectory.segment_us = rc.num("segment_us");
  s.trajectory.n_max = int(rc.count("n_max"));
  const double duration = rc.num("duration");
  const std::uint64_t seed = rc.seed();
  const auto& mode = rc.str("atoms");
  if (mode != "present" && mode != "absent" && mode != "paired") throw ConfigError("atoms must be present, absent or paired");

  ConfigMap extra;
  for (const auto& [k, v] : rc.entries) {
    bool known = k == "seed" || k == "duration";
    for (const auto& f : SystemParams::fields) known = known || k == f.first;
    for (const auto& f : TransitModel::fields) known = known || k == f.first;
    for (const auto& f : DetectorModel::fields) known = known || k == f.first;
    if (!known) extra[k] = v;
  }
  auto finish = [&](ClickRecord rec, const char* file, const std::string& role) {
    rec.seed = seed;
    rec.transits = tm;
    rec.extra = extra;
    rec.extra["atoms"] = role;
    write_record(rec, (dir / file).string());
    announce(dir / file);
  };
  if (mode != "absent") finish(simulate_record(p, tm, dm, duration, seed, s), "record.csv", mode);
  if (mode != "present") {
    TransitModel none = tm;
    none.arrival_rate = 0;
    finish(simulate_record(p, none, dm, duration, companion_seed(seed), s), "record_no_atoms.csv", "absent");
  }
  return 0;
}

// ---------------------------------------------------------------------------

Keys analyze_keys() {
  return Keys{{"record", "record.csv", "record with atoms"},
              {"no_atoms_record", "record_no_atoms.csv", "atom-free companion record, or 'none'"},
              {"normalization", "auto",
               "empty-cavity D3+D4 rate per us, or 'auto' (companion record, else outside transit windows)"}} +
         analysis_keys();
}

AnalysisSettings analysis_settings(const RunConfig& rc, int threads) {
  AnalysisSettings s;
  s.detection = {rc.count("c_th"), rc.num("dt_atom"), rc.num("step")};
  s.detection.validate();
  s.signal_bin_us = rc.num("signal_bin");
  s.center_us = rc.num("center");
  s.tau = {rc.num("tau_bin"), rc.num("tau_max"), rc.num("segment"), rc.num("g2_window")};
  s.tau.validate();
  s.threads = threads;
  return s;
}

std::vector<std::size_t> thresholds(const RunConfig& rc) {
  std::vector<std::size_t> out;
  for (double x : rc.list("c_th_list")) {
    if (x < 1 || x != std::floor(x)) throw ConfigError("c_th_list entries must be positive integers");
    out.push_back(std::size_t(x));
  }
  return out;
}

struct PipelineResult {
  bool insufficient = false;
};

/// Runs the record pipeline and writes the four analysis tables into `dir`.
PipelineResult run_pipeline(const RunConfig& rc, ClickRecord atoms, std::optional<ClickRecord> no_atoms,
                            const fs::path& dir, const std::string& prefix, int threads) {
  PipelineResult result;
  const auto s = analysis_settings(rc, threads);
  const double bg_fraction = rc.num("record_background");
  if (bg_fraction < 0) throw ConfigError("record_background must be >= 0");
  double bg_rate = 0;
  if (bg_fraction > 0) {
    const auto ev = detect_transits(atoms, s.detection);
    if (!ev.empty()) {
      bg_rate = background_rate_for_fraction(atoms, ev, bg_fraction, s.center_us);
      atoms = add_background(atoms, bg_rate, 0);
      if (no_atoms) no_atoms = add_background(*no_atoms, bg_rate, 1);
    }
  }
  const auto events = detect_transits(atoms, s.detection);

  std::vector<std::string> problems;
  std::optional<Normalization> norm;
  try {
    const auto& n = rc.str("normalization");
    if (n != "auto") {
      norm = supplied_normalization(parse_double("normalization", n));
    } else if (no_atoms) {
      norm = normalization_from_record(*no_atoms);
    } else {
      norm = normalization_outside_windows(atoms, events);
    }
  } catch (const StatisticsError& e) {
    problems.push_back(std::string("normalization: ") + e.what());
  }

  auto base = [&](CsvTable& t) {
    t.config = rc.entries;
    t.note("selection", "C_th " + std::to_string(s.detection.c_th) + " in " + format_number(s.detection.dt_atom_us) +
                                " us, sliding step " + format_number(s.detection.step_us) +
                                " us, overlapping spans merged, windows t0 +- 6 us");
    t.note("events", std::to_string(events.size()));
    if (norm) t.note("normalization", format_value(norm->transmitted_rate) + " clicks/us (" + norm->source + ")");
    if (bg_rate > 0) t.note("injected_background", format_value(bg_rate) + " counts/s per detector");
  };

  // Averaged signals.
  {
    CsvTable t;
    base(t);
    t.columns = {"t_us", "T", "T_stderr", "R", "R_stderr", "counts_T", "counts_R"};
    try {
      if (!norm) throw StatisticsError("no normalization");
      auto sig = averaged_signals(atoms, events, s.signal_bin_us, *norm);
      for (std::size_t b = 0; b < sig.t_us.size(); ++b)
        t.add(sig.t_us[b], sig.T[b], sig.T_stderr[b], sig.R[b], sig.R_stderr[b], sig.counts_T[b], sig.counts_R[b]);
    } catch (const StatisticsError& e) {
      t.note("status", e.what());
      problems.push_back(std::string("signals: ") + e.what());
    }
    write_csv(t, (dir / (prefix + "signals.csv")).string());
    announce(dir / (prefix + "signals.csv"));
  }

  // Correlations.
  std::optional<CorrelationResult> gr, gt;
  {
    CsvTable t;
    base(t);
    t.note("estimator", "D1xD2 / D3xD4 coincidences within +-" + format_number(s.tau.window_half_us) +
                            " us of t0, accidentals sum N1 N2 dtau / T over " + format_number(s.tau.segment_us) +
                            " us segments");
    t.columns = {"tau_us", "g2R", "g2R_stderr", "pairs_R", "g2T", "g2T_stderr", "pairs_T"};
    for (auto which : {Output::Reflected, Output::Transmitted}) {
      try {
        (which == Output::Reflected ? gr : gt) = estimate_g2(atoms, events, which, s.tau, threads);
      } catch (const StatisticsError& e) {
        t.note(std::string("status_") + to_string(which), e.what());
        problems.push_back(std::string("g2 ") + to_string(which) + ": " + e.what());
      }
    }
    const auto* ref = gr ? &*gr : gt ? &*gt : nullptr;
    if (ref) {
      for (std::size_t b = 0; b < ref->tau_us.size(); ++b) {
        t.add(ref->tau_us[b], gr ? gr->g2[b] : kNaN, gr ? gr->stderr_[b] : kNaN, gr ? gr->n_pairs[b] : 0,
              gt ? gt->g2[b] : kNaN, gt ? gt->stderr_[b] : kNaN, gt ? gt->n_pairs[b] : 0);
      }
    }
    write_csv(t, (dir / (prefix + "g2.csv")).string());
    announce(dir / (prefix + "g2.csv"));
  }

  // Threshold sweep.
  {
    CsvTable t;
    base(t);
    t.columns = {"c_th",      "events",     "events_no_atoms", "F",           "F_stderr",  "T0",     "T0_stderr",
                 "R0",        "R0_stderr",  "g2R0",            "g2R0_stderr", "g2T0",      "g2T0_stderr",
                 "recall",    "false_positive_fraction"};
    if (!no_atoms) t.note("F", "needs a companion record");
    if (norm) {
      for (auto c : thresholds(rc)) {
        auto row = analyze_threshold(atoms, no_atoms ? *no_atoms : ClickRecord{}, c, s, *norm);
        if (!no_atoms) row.F = row.F_stderr = kNaN;
        t.add(row.c_th, row.n_events, row.n_events_no_atoms, row.F, row.F_stderr, row.T0, row.T0_stderr, row.R0,
              row.R0_stderr, row.g2R0, row.g2R0_stderr, row.g2T0, row.g2T0_stderr, row.score.recall,
              row.score.false_positive_fraction);
      }
    }
    write_csv(t, (dir / (prefix + "threshold.csv")).string());
    announce(dir / (prefix + "threshold.csv"));
  }

  // Summary.
  {
    CsvTable t;
    base(t);
    t.columns = {"quantity", "value", "stderr"};
    t.add("events", double(events.size()), 0.0);
    const double Gamma = angular(enhanced_decay(atoms.params));
    if (norm && !events.empty()) {
      auto c = center_signals(atoms, events, s.center_us, *norm);
      t.add("T0_center", c.T, c.T_stderr);
      t.add("R0_center", c.R, c.R_stderr);
    }
    for (const auto* g : {gr ? &*gr : nullptr, gt ? &*gt : nullptr}) {
      if (!g) continue;
      const std::string w = to_string(g->which);
      t.add("g2" + w + "0", g->g2_zero(), g->g2_zero_stderr());
      auto fit = fit_relaxation(*g);
      t.add("tau_c_" + w + "_us", fit.tau_c_us, kNaN);
      t.add("Gamma_tau_c_" + w, fit.tau_c_us * Gamma, kNaN);
    }
    if (no_atoms) {
      try {
        auto fd = false_detection_ratio(atoms, *no_atoms, s.detection, s.center_us);
        t.add("F", fd.F, fd.F_stderr);
      } catch (const StatisticsError& e) {
        t.note("status_F", e.what());
      }
    }
    for (const auto& p : problems) t.note("status", p);
    write_csv(t, (dir / (prefix + "summary.csv")).string());
    announce(dir / (prefix + "summary.csv"));
  }
  result.insufficient = !problems.empty();
  for (const auto& p : problems) std::cerr << "insufficient statistics: " << p << '\n';
  return result;
}

int run_analyze(const RunConfig& rc, const fs::path& dir, int threads) {
  auto atoms = read_record(rc.str("record"));
  std::optional<ClickRecord> no_atoms;
  if (rc.str("no_atoms_record") != "none") no_atoms = read_record(rc.str("no_atoms_record"));
  auto r = run_pipeline(rc, std::move(atoms), std::move(no_atoms), dir, "analysis_", threads);
  return r.insufficient ? int(ExitCode::kStatistics) : 0;
}

// ---------------------------------------------------------------------------

Keys saturation_keys() {
  Keys k = physics_keys("none");
  k.erase(std::find_if(k.begin(), k.end(), [](const Key& x) { return x.name == "nbar"; }));
  return k +
         Keys{{"nbar_list", "0.01,0.02,0.03,0.05,0.093,0.2,0.3,0.5,0.7", "drive strengths"},
              {"g_samples", "7", "coupling samples on [g_min, g_max]"},
              {"kx_samples", "4", "phase samples on [0, 2pi)"},
              {"background_fraction", "0.04", "background as a fraction of each output signal (model)"},
              {"records", "0", "1 to also simulate and analyze a record pair per nbar"},
              {"F_max", "0.05", "false-detection bound for choosing C_th"}} +
         record_keys() + analysis_keys();
}

int run_saturation(const RunConfig& rc, const fs::path& dir, int threads) {
  auto p = system_params_from(rc.map());
  const auto nbars = rc.list("nbar_list");
  SaturationOptions opts;
  opts.g_min = rc.num("g_min");
  opts.g_max = rc.num("g_max");
  opts.g_samples = int(rc.count("g_samples"));
  opts.kx_samples = int(rc.count("kx_samples"));
  opts.background_fraction = rc.num("background_fraction");
  opts.threads = threads;
  auto rows = saturation_curve(p, nbars, opts);
  CsvTable t;
  t.config = rc.entries;
  t.note("averaging", "uniform over g_tw in [g_min, g_max] and kx; g2 pooled");
  t.columns = {"nbar", "drive_ep", "T0", "g2R0", "xi", "T0_background", "g2R0_background", "kx_spread",
               "truncation_flag"};
  for (const auto& r : rows)
    t.add(r.nbar, r.drive_ep, r.T0, r.g2R0, r.xi, r.T0_background, r.g2R0_background, r.kx_spread, r.truncation_flag);
  write_csv(t, (dir / "saturation_model.csv").string());
  announce(dir / "saturation_model.csv");

  if (!rc.flag("records")) return 0;
  TransitModel tm;
  DetectorModel dm;
  load_fields(tm, rc.map());
  load_fields(dm, rc.map());
  SimulationSettings s;
  s.threads = threads;
  s.trajectory.segment_us = rc.num("segment_us");
  s.trajectory.n_max = int(rc.count("n_max"));
  TransitModel none = tm;
  none.arrival_rate = 0;
  std::vector<SaturationInput> inputs;
  for (std::size_t i = 0; i < nbars.size(); ++i) {
    const auto q = with_nbar(p, nbars[i]);
    const std::uint64_t seed = rc.seed() + 2 * i;
    inputs.push_back({nbars[i], simulate_record(q, tm, dm, rc.num("duration"), seed, s),
                      simulate_record(q, none, dm, rc.num("duration"), companion_seed(seed), s)});
  }
  auto srows = saturation_analysis(inputs, rc.num("F_max"), analysis_settings(rc, threads));
  CsvTable r;
  r.config = rc.entries;
  r.note("records", "per nbar: seed + 2i with atoms, companion seed without");
  r.columns = {"nbar", "c_th", "flagged", "events", "F", "T0", "T0_stderr", "g2R0", "g2R0_stderr"};
  for (const auto& row : srows)
    r.add(row.nbar, row.c_th, row.flagged, row.result.n_events, row.result.F, row.result.T0, row.result.T0_stderr,
          row.result.g2R0, row.result.g2R0_stderr);
  write_csv(r, (dir / "saturation_records.csv").string());
  announce(dir / "saturation_records.csv");
  return 0;
}

// ---------------------------------------------------------------------------

Keys repro_keys() {
  Keys k = physics_keys("none");
  k.erase(std::find_if(k.begin(), k.end(), [](const Key& x) { return x.name == "nbar"; }));
  for (auto& x : k)
    if (x.name == "drive_ep") x.help += " (ignored: each recipe sets its own drive)";
  return k + grid_keys("-300", "300", "61") +
         Keys{{"tau_max", "0.05", "largest delay of the g2(tau) curves (us)"},
              {"tau_points", "51", "delays of the g2(tau) curves, 0 to skip"}} +
         record_keys() + analysis_keys() + saturation_keys();
}

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

/// Settings of `target` taken from the repro configuration where shared.
RunConfig sub_config(const RunConfig& repro, const Keys& target, const std::string& name, ConfigMap fixed = {}) {
  ConfigMap shared;
  for (const auto& key : target)
    if (repro.has(key.name) && key.name != "drive_ep") shared[key.name] = repro.str(key.name);
  for (const auto& [k, v] : fixed) shared[k] = v;
  return resolve(target, shared, {}, name);
}

int run_repro(const RunConfig& rc, const fs::path& base, int threads) {
  fs::path dir = base / ("repro-" + utc_stamp());
  for (int i = 1; fs::exists(dir); ++i) dir = base / ("repro-" + utc_stamp() + "-" + std::to_string(i));
  prepare_out(dir.string());
  std::cerr << "repro into " << dir.string() << '\n';
  int code = 0;
  auto merge = [&](int c) { code = code ? code : c; };
  merge(run_spectra(sub_config(rc, spectra_keys(), "spectra"), dir, threads));
  merge(run_correlations(sub_config(rc, correlations_keys(), "correlations"), dir, threads));
  merge(run_simulate(sub_config(rc, simulate_keys(), "simulate"), dir, threads));
  const auto an = sub_config(rc, analyze_keys(), "analyze",
                             {{"record", (dir / "record.csv").string()},
                              {"no_atoms_record", (dir / "record_no_atoms.csv").string()}});
  merge(run_analyze(an, dir, threads));
  merge(run_saturation(sub_config(rc, saturation_keys(), "saturation"), dir, threads));
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-atom cavity photon router: model, synthetic records and click analysis"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print this help and exit");
  std::vector<std::unique_ptr<Command>> commands;
  auto add = [&](std::string name, std::string desc, Keys keys) -> Command& {
    commands.push_back(std::make_unique<Command>(app, std::move(name), std::move(desc), std::move(keys)));
    return *commands.back();
  };
  add("spectra", "transmission and reflection spectra versus probe detuning", spectra_keys());
  add("correlations", "g2(0) versus detuning and g2(tau) on resonance", correlations_keys());
  add("simulate", "synthetic click records (with an atom-free companion)", simulate_keys());
  add("analyze", "transit selection, averaged signals, g2 and false detections", analyze_keys());
  add("saturation", "transmission and g2 versus drive strength", saturation_keys());
  add("repro", "all recipes into a timestamped directory under --out", repro_keys());

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : int(ExitCode::kConfig);
  }

  try {
    for (auto& cmd : commands) {
      if (!cmd->app->parsed()) continue;
      const auto rc = cmd->resolve_config();
      const auto dir = prepare_out(cmd->out);
      const int threads = cmd->threads;
      if (cmd->name == "spectra") return run_spectra(rc, dir, threads);
      if (cmd->name == "correlations") return run_correlations(rc, dir, threads);
      if (cmd->name == "simulate") return run_simulate(rc, dir, threads);
      if (cmd->name == "analyze") return run_analyze(rc, dir, threads);
      if (cmd->name == "saturation") return run_saturation(rc, dir, threads);
      if (cmd->name == "repro") return run_repro(rc, dir, threads);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return int(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return int(ExitCode::kUnknown);
  }
  return int(ExitCode::kUnknown);
}
