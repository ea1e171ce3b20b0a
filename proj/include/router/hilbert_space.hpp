#pragma once

// Truncated Hilbert space of two cavity modes (a, b) and a two-level atom,
// with sparse operators and density matrices acting on it.
//
// Basis ordering is fixed: the mode-a photon number varies slowest, the atom
// fastest, i.e. index = (n_a * (n_max_b + 1) + n_b) * 2 + atom, with atom
// 0 = |g>, 1 = |e>.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "router/errors.hpp"

namespace router {

using complex = std::complex<double>;
using Index = Eigen::Index;
using SparseMatrix = Eigen::SparseMatrix<complex>;
using DenseMatrix = Eigen::MatrixXcd;
using StateVector = Eigen::VectorXcd;

inline constexpr Index kDefaultDimensionCap = 20000;

enum class Mode { A, B };

struct BasisState {
  int n_a = 0;
  int n_b = 0;
  int atom = 0;  // 0 ground, 1 excited
};

class HilbertSpace {
 public:
  static constexpr int kAtomDim = 2;

  HilbertSpace() = default;
  HilbertSpace(int n_max_a, int n_max_b) : n_max_a_(n_max_a), n_max_b_(n_max_b) {}

  int n_max_a() const { return n_max_a_; }
  int n_max_b() const { return n_max_b_; }
  int n_max(Mode m) const { return m == Mode::A ? n_max_a_ : n_max_b_; }
  Index total_dim() const { return Index(n_max_a_ + 1) * (n_max_b_ + 1) * kAtomDim; }

  Index index(int n_a, int n_b, int atom) const {
    return (Index(n_a) * (n_max_b_ + 1) + n_b) * kAtomDim + atom;
  }
  Index index(const BasisState& s) const { return index(s.n_a, s.n_b, s.atom); }

  BasisState state(Index i) const {
    BasisState s;
    s.atom = int(i % kAtomDim);
    i /= kAtomDim;
    s.n_b = int(i % (n_max_b_ + 1));
    s.n_a = int(i / (n_max_b_ + 1));
    return s;
  }

  friend bool operator==(const HilbertSpace&, const HilbertSpace&) = default;

 private:
  int n_max_a_ = 1;
  int n_max_b_ = 1;
};

inline HilbertSpace make_space(int n_max_a, int n_max_b, Index dimension_cap = kDefaultDimensionCap) {
  if (n_max_a < 1 || n_max_b < 1) {
    throw ConfigError("photon-number truncation must be >= 1 (got " + std::to_string(n_max_a) + ", " +
                      std::to_string(n_max_b) + ")");
  }
  HilbertSpace space(n_max_a, n_max_b);
  if (space.total_dim() > dimension_cap) {
    throw ResourceError("Hilbert space dimension " + std::to_string(space.total_dim()) + " exceeds cap " +
                        std::to_string(dimension_cap));
  }
  return space;
}

/// Sparse operator bound to the space it acts on.
class OperatorMatrix {
 public:
  OperatorMatrix() = default;
  OperatorMatrix(HilbertSpace space, SparseMatrix m) : space_(space), m_(std::move(m)) {
    if (m_.rows() != space_.total_dim() || m_.cols() != space_.total_dim()) {
      throw std::invalid_argument("operator dimension does not match its Hilbert space");
    }
    m_.makeCompressed();
  }

  static OperatorMatrix identity(const HilbertSpace& space) {
    SparseMatrix id(space.total_dim(), space.total_dim());
    id.setIdentity();
    return {space, std::move(id)};
  }
  static OperatorMatrix zero(const HilbertSpace& space) {
    return {space, SparseMatrix(space.total_dim(), space.total_dim())};
  }

  const HilbertSpace& space() const { return space_; }
  const SparseMatrix& matrix() const { return m_; }
  Index dim() const { return m_.rows(); }

  OperatorMatrix adjoint() const { return {space_, SparseMatrix(m_.adjoint())}; }
  DenseMatrix dense() const { return DenseMatrix(m_); }
  complex element(Index row, Index col) const { return m_.coeff(row, col); }

  /// Largest |A - A^dagger| entry.
  double hermiticity_error() const {
    SparseMatrix d = m_ - SparseMatrix(m_.adjoint());
    double worst = 0.0;
    for (Index k = 0; k < d.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(d, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
    return worst;
  }

  OperatorMatrix& operator+=(const OperatorMatrix& o) {
    check_same(o);
    m_ += o.m_;
    return *this;
  }
  OperatorMatrix& operator-=(const OperatorMatrix& o) {
    check_same(o);
    m_ -= o.m_;
    return *this;
  }
  OperatorMatrix& operator*=(complex s) {
    m_ *= s;
    return *this;
  }

  friend OperatorMatrix operator+(OperatorMatrix l, const OperatorMatrix& r) { return l += r; }
  friend OperatorMatrix operator-(OperatorMatrix l, const OperatorMatrix& r) { return l -= r; }
  friend OperatorMatrix operator-(OperatorMatrix l) { return l *= -1.0; }
  friend OperatorMatrix operator*(complex s, OperatorMatrix o) { return o *= s; }
  friend OperatorMatrix operator*(OperatorMatrix o, complex s) { return o *= s; }
  friend OperatorMatrix operator*(double s, OperatorMatrix o) { return o *= s; }
  friend OperatorMatrix operator*(const OperatorMatrix& l, const OperatorMatrix& r) {
    l.check_same(r);
    return {l.space_, SparseMatrix(l.m_ * r.m_)};
  }
  friend StateVector operator*(const OperatorMatrix& l, const StateVector& v) { return l.m_ * v; }

  /// Debug dump: one "row col re im" line per stored entry.
  void dump(std::ostream& os) const {
    os.precision(17);
    for (Index k = 0; k < m_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(m_, k); it; ++it)
        os << it.row() << ' ' << it.col() << ' ' << it.value().real() << ' ' << it.value().imag() << '\n';
  }

 private:
  void check_same(const OperatorMatrix& o) const {
    if (!(space_ == o.space_)) throw std::invalid_argument("operators act on different Hilbert spaces");
  }

  HilbertSpace space_;
  SparseMatrix m_;
};

namespace detail {

template <class EntryFn>
OperatorMatrix build_operator(const HilbertSpace& space, EntryFn&& fn) {
  std::vector<Eigen::Triplet<complex>> entries;
  for (Index col = 0; col < space.total_dim(); ++col) {
    BasisState in = space.state(col);
    fn(in, [&](const BasisState& out, complex value) {
      entries.emplace_back(space.index(out), col, value);
    });
  }
  SparseMatrix m(space.total_dim(), space.total_dim());
  m.setFromTriplets(entries.begin(), entries.end());
  return {space, std::move(m)};
}

}  // namespace detail

/// Annihilation operator of mode a or b embedded on the full space: <n-1|a|n> = sqrt(n).
inline OperatorMatrix mode_annihilation(const HilbertSpace& space, Mode which) {
  return detail::build_operator(space, [which](BasisState s, auto&& emit) {
    int& n = which == Mode::A ? s.n_a : s.n_b;
    if (n == 0) return;
    double amp = std::sqrt(double(n));
    --n;
    emit(s, amp);
  });
}

/// sigma_minus = |g><e| on the atom factor.
inline OperatorMatrix atom_lowering(const HilbertSpace& space) {
  return detail::build_operator(space, [](BasisState s, auto&& emit) {
    if (s.atom != 1) return;
    s.atom = 0;
    emit(s, 1.0);
  });
}

inline OperatorMatrix number_operator(const HilbertSpace& space, Mode which) {
  auto a = mode_annihilation(space, which);
  return a.adjoint() * a;
}

/// Projector onto the highest retained Fock level of one mode.
inline OperatorMatrix top_level_projector(const HilbertSpace& space, Mode which) {
  return detail::build_operator(space, [&](BasisState s, auto&& emit) {
    if ((which == Mode::A ? s.n_a : s.n_b) == space.n_max(which)) emit(s, 1.0);
  });
}

inline StateVector basis_vector(const HilbertSpace& space, const BasisState& s) {
  StateVector v = StateVector::Zero(space.total_dim());
  v(space.index(s)) = 1.0;
  return v;
}

/// Density matrix with its invariants enforced at construction.
class DensityMatrix {
 public:
  static constexpr double kHermiticityTol = 1e-12;
  static constexpr double kTraceTol = 1e-10;
  static constexpr double kNegativityTol = 1e-8;

  DensityMatrix() = default;

  /// Symmetrizes and normalizes `rho`, then validates positivity.
  static DensityMatrix normalized(const HilbertSpace& space, const DenseMatrix& rho) {
    DenseMatrix h = 0.5 * (rho + rho.adjoint());
    complex tr = h.trace();
    if (std::abs(tr) == 0.0 || !std::isfinite(tr.real())) throw SolverError("density matrix has zero or non-finite trace");
    h /= tr.real();
    DensityMatrix out(space, std::move(h));
    out.validate();
    return out;
  }

  static DensityMatrix pure(const HilbertSpace& space, const StateVector& psi) {
    return normalized(space, psi * psi.adjoint());
  }

  const HilbertSpace& space() const { return space_; }
  const DenseMatrix& matrix() const { return rho_; }
  Index dim() const { return rho_.rows(); }

  double trace() const { return rho_.trace().real(); }
  double hermiticity_error() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(rho_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  complex expectation(const OperatorMatrix& op) const {
    // Tr[op rho]
    DenseMatrix prod = op.matrix() * rho_;
    return prod.trace();
  }

  void validate() const {
    if (hermiticity_error() > kHermiticityTol) throw SolverError("density matrix is not Hermitian", hermiticity_error());
    if (std::abs(trace() - 1.0) > kTraceTol) throw SolverError("density matrix trace differs from 1", trace());
    double lmin = min_eigenvalue();
    if (lmin < -kNegativityTol) throw SolverError("density matrix has a negative eigenvalue", lmin);
  }

 private:
  DensityMatrix(HilbertSpace space, DenseMatrix rho) : space_(space), rho_(std::move(rho)) {}

  HilbertSpace space_;
  DenseMatrix rho_;
};

/// Trace distance 0.5 * ||rho - sigma||_1.
inline double trace_distance(const DenseMatrix& rho, const DenseMatrix& sigma) {
  DenseMatrix d = rho - sigma;
  DenseMatrix h = 0.5 * (d + d.adjoint());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(h, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

}  // namespace router
