#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "router/lindblad.hpp"

using namespace router;

namespace {

// Both modes and the atom damped; mode a optionally driven.
Liouvillian damped_system(const HilbertSpace& s, double kappa, double gamma, double drive) {
  auto a = mode_annihilation(s, Mode::A);
  auto b = mode_annihilation(s, Mode::B);
  auto sm = atom_lowering(s);
  OperatorMatrix H = complex(0, drive) * (a.adjoint() - a);
  return {H, {std::sqrt(2 * kappa) * a, std::sqrt(2 * kappa) * b, std::sqrt(gamma) * sm}};
}

Liouvillian random_system(const HilbertSpace& s, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  auto a = mode_annihilation(s, Mode::A);
  auto b = mode_annihilation(s, Mode::B);
  auto sm = atom_lowering(s);
  auto c = [&] { return complex(nd(rng), nd(rng)); };
  OperatorMatrix x = c() * a.adjoint() * b + c() * a * sm.adjoint() + c() * a.adjoint();
  OperatorMatrix H = x + x.adjoint() + nd(rng) * (a.adjoint() * a);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  return {H, {std::sqrt(u(rng)) * a, std::sqrt(u(rng)) * b, std::sqrt(u(rng)) * sm}};
}

}  // namespace

TEST(SteadyState, DampedSystemRelaxesToVacuum) {
  auto s = make_space(3, 3);
  auto rho = steady_state(damped_system(s, 1.0, 0.5, 0.0));
  EXPECT_NEAR(rho.matrix()(0, 0).real(), 1.0, 1e-10);
  EXPECT_NEAR(rho.expectation(number_operator(s, Mode::A)).real(), 0.0, 1e-10);
}

TEST(SteadyState, DrivenCavityIsCoherent) {
  const double kappa = 2.0, e = 0.6;
  auto s = make_space(8, 2);
  auto L = damped_system(s, kappa, 1.0, e);
  auto rho = steady_state(L);
  auto a = mode_annihilation(s, Mode::A);
  EXPECT_NEAR(rho.expectation(number_operator(s, Mode::A)).real(), e * e / (kappa * kappa), 1e-9);
  EXPECT_NEAR(std::abs(rho.expectation(a) - complex(e / kappa, 0)), 0.0, 1e-9);
  EXPECT_NEAR(g2_zero(rho, a), 1.0, 1e-6);
  EXPECT_LT(steady_state_residual(L, rho), 1e-12);
}

TEST(SteadyState, RequiresDissipation) {
  auto s = make_space(2, 2);
  Liouvillian L{number_operator(s, Mode::A), {}};
  EXPECT_THROW(steady_state(L), ConfigError);
}

TEST(SteadyState, UndampedModeIsSingular) {
  auto s = make_space(2, 2);
  auto a = mode_annihilation(s, Mode::A);
  Liouvillian L{OperatorMatrix::zero(s), {a}};
  EXPECT_THROW(steady_state(L), SolverError);
}

TEST(SteadyState, RandomSystemsGiveValidStates) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    auto s = make_space(3, 2);
    auto L = random_system(s, rng);
    auto rho = steady_state(L);
    EXPECT_NEAR(rho.trace(), 1.0, 1e-10);
    EXPECT_LT(rho.hermiticity_error(), 1e-12);
    EXPECT_GT(rho.min_eigenvalue(), -1e-8);
    EXPECT_LT(steady_state_residual(L, rho), 1e-10);
  }
}

TEST(Superoperator, MatchesGenerator) {
  std::mt19937_64 rng(11);
  auto s = make_space(2, 2);
  auto L = random_system(s, rng);
  LindbladGenerator f(L);
  DenseMatrix x = DenseMatrix::Random(s.total_dim(), s.total_dim());
  Eigen::VectorXcd lhs = superoperator(L) * vectorize(x);
  Eigen::VectorXcd rhs = vectorize(f(x));
  EXPECT_LT((lhs - rhs).norm(), 1e-12 * rhs.norm());
}

TEST(Superoperator, TraceFree) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    auto s = make_space(3, 2);
    LindbladGenerator f(random_system(s, rng));
    DenseMatrix x = DenseMatrix::Random(s.total_dim(), s.total_dim());
    x = x * x.adjoint();
    x /= x.trace();
    EXPECT_LT(std::abs(f(x).trace()), 1e-12 * x.norm());
  }
}

TEST(Evolve, CavityDecay) {
  const double kappa = 1.5;
  auto s = make_space(2, 1);
  auto L = damped_system(s, kappa, 1.0, 0.0);
  auto rho0 = DensityMatrix::pure(s, basis_vector(s, {1, 0, 0}));
  for (double t : {0.1, 0.5, 1.0}) {
    auto rho = evolve(L, rho0, t);
    EXPECT_NEAR(rho.expectation(number_operator(s, Mode::A)).real(), std::exp(-2 * kappa * t), 1e-8);
  }
  EXPECT_EQ(evolve(L, rho0, 0.0).matrix(), rho0.matrix());
}

TEST(Evolve, PreservesTraceAndApproachesSteadyState) {
  std::mt19937_64 rng(3);
  auto s = make_space(3, 2);
  auto L = random_system(s, rng);
  auto rho0 = DensityMatrix::pure(s, basis_vector(s, {0, 0, 0}));
  LindbladGenerator f(L);
  std::vector<double> ts{0.5, 2.0, 40.0};
  auto states = evolve_grid(f, rho0.matrix(), ts);
  for (auto& x : states) EXPECT_NEAR(x.trace().real(), 1.0, 1e-8);
  EXPECT_LT(trace_distance(states.back(), steady_state(L).matrix()), 1e-6);
}

TEST(Evolve, Semigroup) {
  std::mt19937_64 rng(9);
  auto s = make_space(3, 2);
  auto L = random_system(s, rng);
  DenseMatrix rho0 = DensityMatrix::pure(s, basis_vector(s, {1, 0, 1})).matrix();
  const DenseMatrix direct = evolve(L, rho0, 0.7);
  const DenseMatrix stepped = evolve(L, evolve(L, rho0, 0.3), 0.4);
  EXPECT_LT((direct - stepped).norm(), 1e-7);
}

// Resonance fluorescence of a driven two-level atom, H = Omega (s+ + s-).
TEST(Regression, ResonanceFluorescence) {
  const double gamma = 1.0, omega = 1.0;
  auto s = make_space(1, 1);
  auto sm = atom_lowering(s);
  auto a = mode_annihilation(s, Mode::A);
  auto b = mode_annihilation(s, Mode::B);
  Liouvillian L{omega * (sm + sm.adjoint()), {std::sqrt(gamma) * sm, a, b}};
  auto rho = steady_state(L);
  const double rabi = 2 * omega;
  const double mu = std::sqrt(rabi * rabi - gamma * gamma / 16);
  std::vector<double> taus{0.0, 0.3, 1.0, 2.5, 4.0, 8.0};
  auto g2 = regression_g2(L, rho, sm, taus);
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const double t = taus[i];
    const double expected =
        1 - std::exp(-0.75 * gamma * t) * (std::cos(mu * t) + 0.75 * gamma / mu * std::sin(mu * t));
    EXPECT_NEAR(g2[i], expected, 1e-7) << "tau = " << t;
  }
  EXPECT_NEAR(g2_zero(rho, sm), 0.0, 1e-12);
}

TEST(Regression, UnsortedTausKeepOrder) {
  const double gamma = 1.0;
  auto s = make_space(1, 1);
  auto sm = atom_lowering(s);
  Liouvillian L{0.05 * (sm + sm.adjoint()),
                {std::sqrt(gamma) * sm, mode_annihilation(s, Mode::A), mode_annihilation(s, Mode::B)}};
  auto rho = steady_state(L);
  std::vector<double> sorted{0.5, 1.0, 3.0}, shuffled{3.0, 0.5, 1.0};
  auto g_sorted = regression_g2(L, rho, sm, sorted);
  auto g_shuffled = regression_g2(L, rho, sm, shuffled);
  EXPECT_DOUBLE_EQ(g_shuffled[0], g_sorted[2]);
  EXPECT_DOUBLE_EQ(g_shuffled[1], g_sorted[0]);
  // Weak drive: g2 ~ (1 - e^{-gamma tau/2})^2.
  for (std::size_t i = 0; i < sorted.size(); ++i)
    EXPECT_NEAR(g_sorted[i], std::pow(1 - std::exp(-gamma * sorted[i] / 2), 2), 0.02);
}

TEST(Regression, DegenerateFluxRejected) {
  auto s = make_space(1, 1);
  auto L = damped_system(s, 1.0, 1.0, 0.0);
  auto rho = steady_state(L);
  std::vector<double> taus{0.0, 1.0};
  EXPECT_THROW(regression_g2(L, rho, mode_annihilation(s, Mode::A), taus), SolverError);
}

TEST(Regression, RelaxesToOneAtLongDelay) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 3; ++trial) {
    auto s = make_space(3, 2);
    auto L = random_system(s, rng);
    auto rho = steady_state(L);
    std::vector<double> taus{60.0};
    for (auto m : {Mode::A, Mode::B}) EXPECT_NEAR(regression_g2(L, rho, mode_annihilation(s, m), taus)[0], 1.0, 1e-3);
  }
}
