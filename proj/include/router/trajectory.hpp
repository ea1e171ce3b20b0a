#pragma once

// Monte-Carlo wavefunction (quantum jump) machinery, independent of the
// physical model: unravelling a Liouvillian into jump channels with constant
// offsets, exact no-jump propagation for a piecewise-constant effective
// Hamiltonian, and waiting-time jump sampling.

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "router/lindblad.hpp"

namespace router {

struct Unravelling {
  OperatorMatrix hamiltonian;
  std::vector<OperatorMatrix> jumps;
};

/// Jump operators J_k = C_k + offset_k, with the Hamiltonian corrected so that
/// -i[H', rho] + sum D[J_k] rho equals the original generator:
/// H' = H - sum_k (i/2)(conj(offset_k) C_k - offset_k C_k^dagger).
inline Unravelling unravel(const Liouvillian& L, std::span<const complex> offsets) {
  if (offsets.size() != L.collapse_ops.size()) throw std::invalid_argument("unravel: one offset per collapse operator");
  Unravelling u{L.hamiltonian, {}};
  const auto id = OperatorMatrix::identity(L.space());
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    const OperatorMatrix& c = L.collapse_ops[k];
    const complex beta = offsets[k];
    u.jumps.push_back(c + beta * id);
    if (beta != 0.0) u.hamiltonian -= complex(0, 0.5) * (std::conj(beta) * c - beta * c.adjoint());
  }
  return u;
}

inline Liouvillian as_liouvillian(const Unravelling& u) { return {u.hamiltonian, u.jumps}; }

/// H - (i/2) sum J^dagger J as a dense matrix.
inline DenseMatrix effective_hamiltonian(const Unravelling& u) {
  DenseMatrix h = u.hamiltonian.dense();
  for (const auto& j : u.jumps) h -= complex(0, 0.5) * DenseMatrix(j.matrix().adjoint() * j.matrix());
  return h;
}

/// psi(t) = exp(-i H_eff t) psi for a constant non-Hermitian H_eff. Uses an
/// eigendecomposition so the state can be evaluated at arbitrary t cheaply;
/// falls back to the matrix exponential when the eigenbasis is ill-conditioned.
class NoJumpPropagator {
 public:
  static constexpr double kMinRcond = 1e-10;

  explicit NoJumpPropagator(const DenseMatrix& h_eff) : gen_(complex(0, -1) * h_eff) {
    Eigen::ComplexEigenSolver<DenseMatrix> es(gen_);
    if (es.info() == Eigen::Success) {
      vecs_ = es.eigenvectors();
      rates_ = es.eigenvalues();
      lu_.compute(vecs_);
      diagonal_ = lu_.rcond() > kMinRcond;
    }
  }

  bool uses_eigenbasis() const { return diagonal_; }

  /// Representation of psi used by `at` and `norm2`.
  Eigen::VectorXcd prepare(const StateVector& psi) const { return diagonal_ ? Eigen::VectorXcd(lu_.solve(psi)) : psi; }

  StateVector at(const Eigen::VectorXcd& prepared, double t) const {
    if (diagonal_) return vecs_ * (prepared.array() * (rates_.array() * t).exp()).matrix();
    DenseMatrix u = (gen_ * t).exp();
    return u * prepared;
  }

  double norm2(const Eigen::VectorXcd& prepared, double t) const { return at(prepared, t).squaredNorm(); }

 private:
  DenseMatrix gen_;
  DenseMatrix vecs_;
  Eigen::VectorXcd rates_;
  Eigen::PartialPivLU<DenseMatrix> lu_;
  bool diagonal_ = false;
};

inline double uniform_open(std::mt19937_64& rng) {
  // (0, 1]
  return 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Waiting-time jump sampling over one interval with constant H_eff.
///
/// `psi` is normalized on entry and exit. `threshold` is the norm^2 level at
/// which the next jump fires, relative to the current normalized state; it is
/// carried across intervals. `on_jump(t, channel)` receives the jump time
/// measured from the start of the interval.
template <class OnJump>
void propagate_segment(const NoJumpPropagator& prop, std::span<const DenseMatrix> jumps, StateVector& psi,
                       double& threshold, double duration, double time_tol, std::mt19937_64& rng,
                       OnJump&& on_jump) {
  double t = 0.0;
  Eigen::VectorXcd prepared = prop.prepare(psi);
  std::vector<double> weights(jumps.size());
  while (true) {
    const double remaining = duration - t;
    const double end_norm = prop.norm2(prepared, remaining);
    if (end_norm > threshold) {
      psi = prop.at(prepared, remaining) / std::sqrt(end_norm);
      threshold /= end_norm;
      return;
    }
    // norm^2 decreases monotonically; bisect for the crossing.
    double lo = 0.0, hi = remaining;
    while (hi - lo > time_tol) {
      double mid = 0.5 * (lo + hi);
      if (prop.norm2(prepared, mid) > threshold) lo = mid;
      else hi = mid;
    }
    StateVector at_jump = prop.at(prepared, hi);
    double total = 0.0;
    for (std::size_t k = 0; k < jumps.size(); ++k) {
      weights[k] = (jumps[k] * at_jump).squaredNorm();
      total += weights[k];
    }
    if (!(total > 0.0)) throw SolverError("quantum jump with zero total jump weight");
    double pick = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t channel = 0;
    while (channel + 1 < jumps.size() && pick >= weights[channel]) pick -= weights[channel++];
    StateVector next = jumps[channel] * at_jump;
    psi = next / next.norm();
    t += hi;
    on_jump(t, channel);
    threshold = uniform_open(rng);
    prepared = prop.prepare(psi);
  }
}

}  // namespace router
