#pragma once

// Lindblad generators on a HilbertSpace: superoperator assembly, steady state,
// time propagation and two-time correlations via the quantum regression theorem.
//
// Vectorization is column stacking: vec(rho)[i + j*d] = rho(i, j), so that
// vec(A X B) = (B^T kron A) vec(X).

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <optional>
#include <vector>

#include <Eigen/SparseLU>
#include <unsupported/Eigen/KroneckerProduct>

#include "router/hilbert_space.hpp"

namespace router {

struct Liouvillian {
  OperatorMatrix hamiltonian;
  /// Each operator is pre-scaled by sqrt(rate).
  std::vector<OperatorMatrix> collapse_ops;

  const HilbertSpace& space() const { return hamiltonian.space(); }
  Index dim() const { return hamiltonian.dim(); }
};

/// Column-stacked superoperator matrix of dimension d^2.
inline SparseMatrix superoperator(const Liouvillian& L) {
  const Index d = L.dim();
  SparseMatrix id(d, d);
  id.setIdentity();
  const SparseMatrix& H = L.hamiltonian.matrix();
  const SparseMatrix Ht = H.transpose();
  SparseMatrix out = complex(0, -1) * SparseMatrix(Eigen::kroneckerProduct(id, H)) +
                     complex(0, 1) * SparseMatrix(Eigen::kroneckerProduct(Ht, id));
  for (const auto& c : L.collapse_ops) {
    const SparseMatrix& C = c.matrix();
    SparseMatrix cdc = C.adjoint() * C;
    SparseMatrix cdc_t = cdc.transpose();
    SparseMatrix cc = C.conjugate();
    out += SparseMatrix(Eigen::kroneckerProduct(cc, C));
    out -= 0.5 * SparseMatrix(Eigen::kroneckerProduct(id, cdc));
    out -= 0.5 * SparseMatrix(Eigen::kroneckerProduct(cdc_t, id));
  }
  out.makeCompressed();
  return out;
}

/// Max absolute column sum of a sparse matrix.
inline double one_norm(const SparseMatrix& m) {
  double best = 0.0;
  for (Index k = 0; k < m.outerSize(); ++k) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) s += std::abs(it.value());
    best = std::max(best, s);
  }
  return best;
}

inline Eigen::VectorXcd vectorize(const DenseMatrix& m) {
  return Eigen::Map<const Eigen::VectorXcd>(m.data(), m.size());
}

inline DenseMatrix unvectorize(const Eigen::VectorXcd& v, Index d) {
  return Eigen::Map<const DenseMatrix>(v.data(), d, d);
}

namespace detail {

/// lambda with a = lambda b entrywise, if the two matrices are proportional.
inline std::optional<complex> proportionality(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.nonZeros() != b.nonZeros() || b.nonZeros() == 0) return std::nullopt;
  std::optional<complex> ratio;
  for (Index c = 0; c < a.outerSize(); ++c) {
    SparseMatrix::InnerIterator ia(a, c), ib(b, c);
    for (; ia && ib; ++ia, ++ib) {
      if (ia.row() != ib.row() || ib.value() == 0.0) return std::nullopt;
      const complex r = ia.value() / ib.value();
      if (!ratio) ratio = r;
      else if (std::abs(r - *ratio) > 1e-14 * std::abs(*ratio)) return std::nullopt;
    }
    if (ia || ib) return std::nullopt;
  }
  return ratio;
}

}  // namespace detail

/// Applies L to matrices directly (no d^2 superoperator), for propagation.
class LindbladGenerator {
 public:
  using RowSparse = Eigen::SparseMatrix<complex, Eigen::RowMajor>;

  explicit LindbladGenerator(const Liouvillian& L) {
    SparseMatrix nh = L.hamiltonian.matrix();
    // Proportional collapse operators share one dissipator: D[x b] = |x|^2 D[b].
    std::vector<SparseMatrix> distinct;
    std::vector<double> weight;
    for (const auto& op : L.collapse_ops) {
      const SparseMatrix& c = op.matrix();
      nh -= complex(0, 0.5) * SparseMatrix(c.adjoint() * c);
      if (c.nonZeros() == 0) continue;
      bool merged = false;
      for (std::size_t k = 0; k < distinct.size() && !merged; ++k) {
        if (auto r = detail::proportionality(c, distinct[k])) {
          weight[k] += std::norm(*r);
          merged = true;
        }
      }
      if (!merged) {
        distinct.push_back(c);
        weight.push_back(1.0);
      }
    }
    double jump_scale = 0.0;
    for (std::size_t k = 0; k < distinct.size(); ++k) {
      SparseMatrix j = std::sqrt(weight[k]) * distinct[k];
      jump_scale += one_norm(j) * one_norm(j);
      jumps_.emplace_back(j);
    }
    // -i (H_nh rho - rho H_nh^dagger)
    SparseMatrix m = complex(0, -1) * nh;
    scale_ = 2.0 * one_norm(m) + jump_scale;
    minus_i_nh_ = m;
    minus_i_nh_.makeCompressed();
  }

  DenseMatrix operator()(const DenseMatrix& rho) const {
    // Right products written as adjoints of left products (sparse * dense is the
    // fast path): rho A^+ = (A rho^+)^+ and J rho J^+ = (J (J rho)^+)^+.
    DenseMatrix right = minus_i_nh_ * rho.adjoint();
    DenseMatrix tmp(rho.rows(), rho.cols());
    for (const auto& j : jumps_) {
      tmp.noalias() = j * rho;
      right.noalias() += j * tmp.adjoint();
    }
    DenseMatrix out = minus_i_nh_ * rho;
    out += right.adjoint();
    return out;
  }

  /// Upper bound on ||L||_1, used for step-size guesses.
  double scale() const { return scale_; }

 private:
  RowSparse minus_i_nh_;
  std::vector<RowSparse> jumps_;
  double scale_ = 0.0;
};

struct SteadyStateOptions {
  /// Accept when ||L vec(rho)||_2 <= residual_tol * ||L||_1.
  double residual_tol = 1e-10;
};

namespace detail {

// Real coordinates of a Hermitian d x d matrix: rho_ii, then Re/Im of rho_ij for i < j,
// enumerated column by column. L maps Hermitian matrices to Hermitian matrices, so
// the steady-state problem can be posed as a real system of size d^2.
struct HermitianCoordinates {
  Index d;

  Index diag(Index i) const { return i * i + 2 * i; }  // position of rho_ii
  Index re(Index i, Index j) const { return j * j + 2 * i; }  // i < j
  Index im(Index i, Index j) const { return j * j + 2 * i + 1; }

  Eigen::SparseMatrix<double> restrict_generator(const SparseMatrix& S) const {
    using Trip = Eigen::Triplet<complex>;
    std::vector<Trip> t;
    t.reserve(std::size_t(2 * d * d));
    const complex iu(0, 1);
    for (Index j = 0; j < d; ++j) {
      t.emplace_back(j + j * d, diag(j), 1.0);
      for (Index i = 0; i < j; ++i) {
        t.emplace_back(i + j * d, re(i, j), 1.0);
        t.emplace_back(j + i * d, re(i, j), 1.0);
        t.emplace_back(i + j * d, im(i, j), iu);
        t.emplace_back(j + i * d, im(i, j), -iu);
      }
    }
    SparseMatrix T(d * d, d * d);
    T.setFromTriplets(t.begin(), t.end());
    SparseMatrix ST = S * T;
    std::vector<Eigen::Triplet<double>> r;
    r.reserve(std::size_t(ST.nonZeros()));
    for (Index c = 0; c < ST.outerSize(); ++c) {
      for (SparseMatrix::InnerIterator it(ST, c); it; ++it) {
        const Index i = it.row() % d, j = it.row() / d;
        if (i == j) {
          r.emplace_back(diag(i), c, it.value().real());
        } else if (i < j) {
          r.emplace_back(re(i, j), c, it.value().real());
          r.emplace_back(im(i, j), c, it.value().imag());
        }
      }
    }
    Eigen::SparseMatrix<double> R(d * d, d * d);
    R.setFromTriplets(r.begin(), r.end());
    return R;
  }

  DenseMatrix assemble(const Eigen::VectorXd& x) const {
    DenseMatrix m(d, d);
    for (Index j = 0; j < d; ++j) {
      m(j, j) = x(diag(j));
      for (Index i = 0; i < j; ++i) {
        m(i, j) = complex(x(re(i, j)), x(im(i, j)));
        m(j, i) = std::conj(m(i, j));
      }
    }
    return m;
  }
};

}  // namespace detail

/// Direct sparse solve of L vec(rho) = 0 with the trace condition replacing the
/// equation for rho_00. Solved in real Hermitian coordinates.
inline DensityMatrix steady_state(const Liouvillian& L, const SteadyStateOptions& opts = {}) {
  if (L.collapse_ops.empty()) throw ConfigError("steady state requires at least one collapse operator");
  const Index d = L.dim();
  const Index n = d * d;
  SparseMatrix S = superoperator(L);
  const double norm = one_norm(S);
  const detail::HermitianCoordinates coords{d};

  Eigen::SparseMatrix<double> A = coords.restrict_generator(S);
  A.prune([&](Index row, Index, const double&) { return row != coords.diag(0); });
  {
    std::vector<Eigen::Triplet<double>> trace_row;
    trace_row.reserve(std::size_t(d));
    for (Index i = 0; i < d; ++i) trace_row.emplace_back(coords.diag(0), coords.diag(i), norm);
    Eigen::SparseMatrix<double> T(n, n);
    T.setFromTriplets(trace_row.begin(), trace_row.end());
    A += T;
  }
  A.makeCompressed();

  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success) {
    throw SolverError("steady-state factorization failed: " + lu.lastErrorMessage() +
                          " (matrix is singular; no unique steady state)",
                      0.0);
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(coords.diag(0)) = norm;
  Eigen::VectorXd x = lu.solve(rhs);
  // One round of iterative refinement.
  Eigen::VectorXd r = rhs - A * x;
  x += lu.solve(r);
  if (!x.allFinite()) throw SolverError("steady-state solve produced non-finite values");

  DensityMatrix rho = DensityMatrix::normalized(L.space(), coords.assemble(x));
  double residual = (S * vectorize(rho.matrix())).norm();
  if (residual > opts.residual_tol * norm) {
    // Condition lower bound ||A||_1 ||x||_1 / ||b||_1.
    double cond = norm * x.cwiseAbs().sum() / norm;
    throw SolverError("steady-state residual " + std::to_string(residual / norm) +
                          " (relative) exceeds tolerance; condition estimate " + std::to_string(cond),
                      residual / norm);
  }
  return rho;
}

/// Relative residual ||L(rho)|| / ||L||_1.
inline double steady_state_residual(const Liouvillian& L, const DensityMatrix& rho) {
  SparseMatrix S = superoperator(L);
  return (S * vectorize(rho.matrix())).norm() / one_norm(S);
}

/// Population of the highest retained Fock level of a mode.
inline double top_level_population(const DensityMatrix& rho, Mode which) {
  return rho.expectation(top_level_projector(rho.space(), which)).real();
}

struct EvolveOptions {
  double rtol = 1e-9;
  /// Absolute tolerance relative to the largest entry of the initial matrix.
  double atol = 1e-12;
  /// Smallest permitted step, relative to the generator time scale 1/||L||_1.
  double min_step = 1e-10;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695, e4 = b4 - 393.0 / 640,
                          e5 = b5 + 92097.0 / 339200, e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;
};

}  // namespace detail

/// Integrates d/dt X = L(X) and records X at each time in `times` (sorted, >= 0).
/// X need not be a normalized state, which is what the regression theorem requires.
inline std::vector<DenseMatrix> evolve_grid(const LindbladGenerator& f, const DenseMatrix& x0,
                                            std::span<const double> times, const EvolveOptions& opts = {}) {
  using DP = detail::DormandPrince;
  std::vector<DenseMatrix> out;
  out.reserve(times.size());
  const double scale = std::max(f.scale(), 1e-300);
  const double atol = opts.atol * std::max(x0.cwiseAbs().maxCoeff(), 1e-300);
  const double min_step = opts.min_step / scale;

  DenseMatrix y = x0;
  double t = 0.0;
  double h_next = 0.1 / scale;
  DenseMatrix k1 = f(y);
  for (double target : times) {
    if (target < t) throw std::invalid_argument("evolve: times must be sorted and non-negative");
    while (t < target) {
      const double h = std::min(h_next, target - t);
      const bool last = t + h >= target;
      DenseMatrix k2 = f(y + h * DP::a21 * k1);
      DenseMatrix k3 = f(y + h * (DP::a31 * k1 + DP::a32 * k2));
      DenseMatrix k4 = f(y + h * (DP::a41 * k1 + DP::a42 * k2 + DP::a43 * k3));
      DenseMatrix k5 = f(y + h * (DP::a51 * k1 + DP::a52 * k2 + DP::a53 * k3 + DP::a54 * k4));
      DenseMatrix k6 = f(y + h * (DP::a61 * k1 + DP::a62 * k2 + DP::a63 * k3 + DP::a64 * k4 + DP::a65 * k5));
      DenseMatrix y_new = y + h * (DP::b1 * k1 + DP::b3 * k3 + DP::b4 * k4 + DP::b5 * k5 + DP::b6 * k6);
      DenseMatrix k7 = f(y_new);
      DenseMatrix err = h * (DP::e1 * k1 + DP::e3 * k3 + DP::e4 * k4 + DP::e5 * k5 + DP::e6 * k6 + DP::e7 * k7);
      double err_norm = 0.0;
      for (Index i = 0; i < err.size(); ++i) {
        double sc = atol + opts.rtol * std::max(std::abs(y.data()[i]), std::abs(y_new.data()[i]));
        err_norm = std::max(err_norm, std::abs(err.data()[i]) / sc);
      }
      if (!std::isfinite(err_norm)) throw SolverError("evolve: non-finite state during integration");
      const double factor = err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
      if (err_norm <= 1.0) {
        t = last ? target : t + h;
        y = std::move(y_new);
        k1 = std::move(k7);
        // A step clipped to hit a grid point does not shrink the proposal.
        h_next = last ? std::max(h_next, h * factor) : h * factor;
      } else {
        h_next = h * factor;
        if (h_next < min_step) throw ResourceError("evolve: step size underflow at t = " + std::to_string(t));
      }
    }
    out.push_back(y);
  }
  return out;
}

inline DenseMatrix evolve(const Liouvillian& L, const DenseMatrix& x0, double t, const EvolveOptions& opts = {}) {
  if (t < 0) throw std::invalid_argument("evolve: duration must be non-negative");
  if (t == 0) return x0;
  LindbladGenerator f(L);
  std::array<double, 1> ts{t};
  return evolve_grid(f, x0, ts, opts).front();
}

inline DensityMatrix evolve(const Liouvillian& L, const DensityMatrix& rho0, double t, const EvolveOptions& opts = {}) {
  if (t == 0) return rho0;
  return DensityMatrix::normalized(rho0.space(), evolve(L, rho0.matrix(), t, opts));
}

inline constexpr double kDegenerateFlux = 1e-14;

/// g2(tau) = Tr[O^dag O e^{L tau}(O rho O^dag)] / <O^dag O>^2 for each tau >= 0.
inline std::vector<double> regression_g2(const Liouvillian& L, const DensityMatrix& rho_ss, const OperatorMatrix& O,
                                         std::span<const double> taus, const EvolveOptions& opts = {}) {
  const OperatorMatrix n_op = O.adjoint() * O;
  const double flux = rho_ss.expectation(n_op).real();
  if (!(flux > kDegenerateFlux)) {
    throw SolverError("regression_g2: degenerate flux <O^dag O> = " + std::to_string(flux), flux);
  }
  std::vector<double> sorted(taus.begin(), taus.end());
  std::vector<std::size_t> order(taus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return taus[x] < taus[y]; });
  for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = taus[order[i]];
  if (!sorted.empty() && sorted.front() < 0) throw std::invalid_argument("regression_g2: tau must be >= 0");

  const SparseMatrix& Om = O.matrix();
  DenseMatrix conditioned = Om * rho_ss.matrix();
  conditioned = (conditioned * SparseMatrix(Om.adjoint())).eval();

  LindbladGenerator f(L);
  auto states = evolve_grid(f, conditioned, sorted, opts);
  std::vector<double> g2(taus.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    DenseMatrix prod = n_op.matrix() * states[i];
    g2[order[i]] = prod.trace().real() / (flux * flux);
  }
  return g2;
}

/// Equal-time g2(0) = <O^dag O^dag O O> / <O^dag O>^2 without propagation.
inline double g2_zero(const DensityMatrix& rho_ss, const OperatorMatrix& O) {
  const OperatorMatrix od = O.adjoint();
  const double flux = rho_ss.expectation(od * O).real();
  if (!(flux > kDegenerateFlux)) throw SolverError("g2: degenerate flux", flux);
  return rho_ss.expectation(od * od * O * O).real() / (flux * flux);
}

}  // namespace router
