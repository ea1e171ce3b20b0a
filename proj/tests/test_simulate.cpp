#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "router/simulate.hpp"

using namespace router;

namespace {

// Kolmogorov distribution tail Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_tail(double lambda) {
  double s = 0;
  for (int k = 1; k <= 100; ++k) s += (k % 2 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(s, 0.0, 1.0);
}

SystemParams drive(double nbar) { return with_nbar(SystemParams{}, nbar); }

}  // namespace

TEST(Unravel, PreservesGenerator) {
  auto p = drive(0.05);
  auto space = make_space(2, 2);
  auto L = build_liouvillian(p, space, true, empty_cavity_amplitudes(p));
  std::vector<complex> offsets{{0.3, -1.2}, {2.0, 0.5}, {-0.7, 0.0}, {0.0, 0.9}, {1.1, 1.1}};
  auto u = unravel(L, offsets);
  SparseMatrix diff = superoperator(as_liouvillian(u)) - superoperator(L);
  EXPECT_LT(one_norm(diff), 1e-9 * one_norm(superoperator(L)));
  EXPECT_LT(u.hamiltonian.hermiticity_error(), 1e-9);
}

TEST(NoJumpPropagator, MatchesMatrixExponential) {
  auto p = drive(0.1);
  TransitSimulator sim(p, 50);
  auto L = sim.liouvillian(50, 0.3);
  auto u = unravel(L, sim.offsets());
  NoJumpPropagator prop(effective_hamiltonian(u));
  EXPECT_TRUE(prop.uses_eigenbasis());
  StateVector psi = sim.initial_state();
  for (double t : {0.0, 0.003, 0.05}) {
    StateVector ref = (complex(0, -1) * effective_hamiltonian(u) * t).exp() * psi;
    EXPECT_LT((prop.at(prop.prepare(psi), t) - ref).norm(), 1e-10);
  }
}

TEST(Simulate, DeterministicAndThreadIndependent) {
  auto p = drive(0.093);
  TransitModel tm;
  tm.arrival_rate = 2e4;
  DetectorModel dm;
  dm.background_rate = 1e4;
  SimulationSettings one, three;
  three.threads = 3;
  auto a = simulate_record(p, tm, dm, 1e-3, 99, one);
  auto b = simulate_record(p, tm, dm, 1e-3, 99, three);
  auto c = simulate_record(p, tm, dm, 1e-3, 100, one);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.events, c.events);
  EXPECT_FALSE(a.truth.empty());
  EXPECT_NO_THROW(a.validate());
  for (const auto& tr : a.truth) {
    EXPECT_GE(tr.g_peak, tm.g_min);
    EXPECT_LE(tr.g_peak, tm.g_max);
  }
  for (std::size_t i = 1; i < a.truth.size(); ++i) EXPECT_GE(a.truth[i].t_start_us, a.truth[i - 1].t_end_us);
}

TEST(Simulate, RejectsBadInput) {
  auto p = drive(0.093);
  EXPECT_THROW(simulate_record(p, {}, {}, 0.0, 1), ConfigError);
  DetectorModel dm;
  dm.efficiency = 2;
  EXPECT_THROW(simulate_record(p, {}, dm, 1e-3, 1), ConfigError);
}

TEST(Simulate, EmptyCavityRatesAndSplitting) {
  auto p = drive(0.093);
  TransitModel tm;
  tm.arrival_rate = 0;
  DetectorModel dm;
  dm.split_ratio = 0.3;
  const double duration = 2e-3;
  auto rec = simulate_record(p, tm, dm, duration, 5);
  EXPECT_TRUE(rec.truth.empty());
  auto empty = solve_steady_state(p, false);
  const double expected = dm.efficiency * empty.flux(Output::Transmitted) * duration * 1e6;
  const double n34 = double(rec.count(kD3) + rec.count(kD4));
  EXPECT_NEAR(n34, expected, 3 * std::sqrt(expected));
  const double n3 = double(rec.count(kD3));
  const double sigma = std::sqrt(n34 * 0.3 * 0.7);
  EXPECT_NEAR(n3, 0.3 * n34, 3 * sigma);
}

TEST(Simulate, EmptyCavityIntervalsAreExponential) {
  auto p = drive(0.093);
  TransitModel tm;
  tm.arrival_rate = 0;
  DetectorModel dm;
  dm.efficiency = 0.01;
  auto rec = simulate_record(p, tm, dm, 0.27, 8);
  TransitSimulator sim(p, tm.g_max);
  const double rate = empty_cavity_click_rates(sim, dm)[2] * 1e-3;  // per ns
  std::vector<double> gaps;
  std::int64_t last = -1;
  for (const auto& e : rec.events) {
    if (e.detector != kD3) continue;
    if (last >= 0) gaps.push_back(double(e.timestamp_ns - last));
    last = e.timestamp_ns;
  }
  ASSERT_GT(gaps.size(), 100000u);
  std::sort(gaps.begin(), gaps.end());
  // Integer-valued gaps: compare the empirical CDF with the exponential CDF at
  // the rounding midpoints.
  const double n = double(gaps.size());
  double dmax = 0;
  for (std::size_t i = 0; i < gaps.size();) {
    std::size_t j = i;
    while (j < gaps.size() && gaps[j] == gaps[i]) ++j;
    const double below = 1 - std::exp(-rate * std::max(gaps[i] - 0.5, 0.0));
    const double upto = 1 - std::exp(-rate * (gaps[i] + 0.5));
    dmax = std::max({dmax, std::abs(double(i) / n - below), std::abs(double(j) / n - upto)});
    i = j;
  }
  const double p_value = kolmogorov_tail(std::sqrt(n) * dmax);
  EXPECT_GT(p_value, 0.01) << "D = " << dmax;
}

TEST(Simulate, BackgroundLayer) {
  auto p = drive(0.093);
  TransitModel tm;
  tm.arrival_rate = 0;
  auto rec = simulate_record(p, tm, {}, 1e-3, 3);
  auto bg = add_background(rec, 2e5, 0);
  EXPECT_NO_THROW(bg.validate());
  EXPECT_EQ(bg.detectors.background_rate, 2e5);
  const double added = double(bg.events.size() - rec.events.size());
  EXPECT_NEAR(added, 4 * 2e5 * 1e-3, 3 * std::sqrt(800.0));
  EXPECT_EQ(add_background(rec, 2e5, 0), bg);
  EXPECT_NE(add_background(rec, 2e5, 1).events, bg.events);
}

// Static atom: per-channel jump counts follow the steady-state flux budget and
// the ensemble-averaged excited population matches the master equation.
TEST(Trajectories, StaticAtomMatchesSteadyState) {
  auto p = drive(0.05);
  p.kx = 0.6;
  TransitSimulator sim(p, p.g_tw);
  auto L = sim.liouvillian(p.g_tw, p.kx);
  auto rho = steady_state(L);
  auto u = unravel(L, sim.offsets());
  std::array<double, 5> expected{};
  for (std::size_t k = 0; k < 5; ++k)
    expected[k] = rho.expectation(u.jumps[k].adjoint() * u.jumps[k]).real();
  const double pe = rho.expectation(atom_lowering(sim.space()).adjoint() * atom_lowering(sim.space())).real();

  const std::size_t n_traj = 1000;
  const double burn = 0.1, window = 0.5;
  std::vector<std::array<double, 5>> counts(n_traj);
  std::vector<double> pop(n_traj);
  const auto sm = atom_lowering(sim.space());
  const DenseMatrix proj = (sm.adjoint() * sm).dense();
  for (std::size_t i = 0; i < n_traj; ++i) {
    auto rng = make_rng(77, 0, i);
    StateVector psi = sim.initial_state();
    double threshold = uniform_open(rng);
    auto g = [&](double) { return p.g_tw; };
    sim.run(g, p.kx, burn, psi, threshold, rng, [](double, std::size_t) {});
    counts[i].fill(0);
    sim.run(g, p.kx, window, psi, threshold, rng, [&](double, std::size_t ch) { counts[i][ch] += 1; });
    pop[i] = (psi.adjoint() * proj * psi)(0, 0).real();
  }
  for (std::size_t k = 0; k < 5; ++k) {
    double mean = 0, sq = 0;
    for (auto& c : counts) {
      mean += c[k] / window;
      sq += (c[k] / window) * (c[k] / window);
    }
    mean /= double(n_traj);
    const double se = std::sqrt((sq / double(n_traj) - mean * mean) / double(n_traj - 1));
    EXPECT_NEAR(mean, expected[k], 3 * se + 1e-12) << "channel " << k;
  }
  const double mean_pop = std::accumulate(pop.begin(), pop.end(), 0.0) / double(n_traj);
  double var = 0;
  for (double x : pop) var += (x - mean_pop) * (x - mean_pop);
  const double se_pop = std::sqrt(var / double(n_traj - 1) / double(n_traj));
  EXPECT_NEAR(mean_pop, pe, 3 * se_pop);
  // Monitored channels carry the output fluxes.
  auto state = solve_steady_state(p, true);
  EXPECT_NEAR(expected[kChannelTransmitted], state.flux(Output::Transmitted), 1e-4 * state.flux(Output::Transmitted));
  EXPECT_NEAR(expected[kChannelReflected], state.flux(Output::Reflected), 1e-4 * state.flux(Output::Reflected));
}
