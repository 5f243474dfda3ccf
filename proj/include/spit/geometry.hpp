#pragma once

// Lattice, shift-set, slack and gauge primitives.
//
// Positions are stored as an n x N matrix whose columns are sphere centers in
// Cartesian coordinates. The lattice basis B is n x n with generators as
// columns, so a lattice shift is t = B z for an integer vector z. Spheres have
// unit radius; the slack of a pair is |x_i - x_j - B z|^2 - 4.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "spit/error.hpp"

namespace spit {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using IntVector = Eigen::VectorXi;

/// Bounds on the spectrum of B^T B.
struct CellBounds {
  double sigma_lo = 1e-4;
  double sigma_hi = 1e8;
};

template <typename Scalar>
class LatticeBasis {
 public:
  explicit LatticeBasis(Matrix<Scalar> b, CellBounds bounds = {})
      : b_(std::move(b)), bounds_(bounds) {
    if (b_.rows() != b_.cols() || b_.rows() == 0) {
      throw SingularBasis("lattice basis must be a non-empty square matrix");
    }
    Scalar scale(1);
    for (Eigen::Index k = 0; k < b_.cols(); ++k) scale *= b_.col(k).norm();
    const Scalar det = b_.partialPivLu().determinant();
    if (!(std::abs(det) > Scalar(1e-12) * scale)) throw SingularBasis();
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> gram(b_.transpose() * b_,
                                                       Eigen::EigenvaluesOnly);
    const Scalar lo = gram.eigenvalues().minCoeff();
    const Scalar hi = gram.eigenvalues().maxCoeff();
    if (lo < Scalar(bounds_.sigma_lo) || hi > Scalar(bounds_.sigma_hi)) {
      throw DegenerateCell("cell nondegeneracy violated: spectrum of B^T B outside bounds");
    }
  }

  const Matrix<Scalar>& matrix() const noexcept { return b_; }
  Eigen::Index dim() const noexcept { return b_.rows(); }
  const CellBounds& bounds() const noexcept { return bounds_; }

  Vector<Scalar> shift(const IntVector& z) const { return b_ * z.cast<Scalar>(); }

 private:
  Matrix<Scalar> b_;
  CellBounds bounds_;
};

/// Subtracts the mean point from every column. Inputs that are already centered
/// to rounding level are returned untouched, which makes the map idempotent.
template <typename Derived>
Matrix<typename Derived::Scalar> gauge_project(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out = x;
  if (out.cols() == 0) return out;
  const Vector<Scalar> mean = out.rowwise().mean();
  const Scalar scale = std::max(Scalar(1), out.cwiseAbs().maxCoeff());
  if (mean.cwiseAbs().maxCoeff() <= Scalar(64) * std::numeric_limits<Scalar>::epsilon() * scale) {
    return out;
  }
  out.colwise() -= mean;
  return out;
}

/// Sphere centers plus lattice basis, kept gauge-centered.
template <typename Scalar>
class PackingState {
 public:
  PackingState(Matrix<Scalar> x, LatticeBasis<Scalar> basis)
      : x_(gauge_project(x)), basis_(std::move(basis)) {
    if (x_.rows() != basis_.dim()) throw Error("position dimension does not match basis");
  }

  const Matrix<Scalar>& positions() const noexcept { return x_; }
  void set_positions(const Matrix<Scalar>& x) {
    if (x.rows() != x_.rows() || x.cols() != x_.cols()) throw Error("position shape mismatch");
    x_ = gauge_project(x);
  }

  const LatticeBasis<Scalar>& basis() const noexcept { return basis_; }
  void set_basis(LatticeBasis<Scalar> basis) {
    if (basis.dim() != basis_.dim()) throw Error("basis dimension mismatch");
    basis_ = std::move(basis);
  }

  Eigen::Index dim() const noexcept { return x_.rows(); }
  Eigen::Index size() const noexcept { return x_.cols(); }

 private:
  Matrix<Scalar> x_;
  LatticeBasis<Scalar> basis_;
};

struct ShiftIndexSet {
  std::vector<IntVector> zs;
  double cutoff = 0.0;
};

inline bool lexicographically_positive(const IntVector& z) {
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    if (z[k] != 0) return z[k] > 0;
  }
  return false;
}

inline bool lexicographically_less(const IntVector& a, const IntVector& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

/// A periodic pair (i, j, z); (i, j, z) and (j, i, -z) denote the same contact.
struct ContactIndex {
  int i = 0;
  int j = 0;
  IntVector z;

  bool is_self() const { return i == j; }

  bool is_canonical() const {
    return i < j || (i == j && lexicographically_positive(z));
  }

  ContactIndex reversed() const { return {j, i, -z}; }

  ContactIndex canonical() const { return is_canonical() ? *this : reversed(); }

  friend bool operator==(const ContactIndex& a, const ContactIndex& b) {
    return a.i == b.i && a.j == b.j && a.z == b.z;
  }
  friend bool operator<(const ContactIndex& a, const ContactIndex& b) {
    if (a.i != b.i) return a.i < b.i;
    if (a.j != b.j) return a.j < b.j;
    return lexicographically_less(a.z, b.z);
  }
};

/// Diameter of the fundamental parallelepiped: max |B c| over c in {-1,0,1}^n.
template <typename Scalar>
Scalar cell_diameter(const LatticeBasis<Scalar>& basis) {
  const auto n = basis.dim();
  IntVector c = IntVector::Constant(n, -1);
  Scalar best(0);
  while (true) {
    best = std::max(best, basis.shift(c).norm());
    Eigen::Index k = 0;
    while (k < n && c[k] == 1) c[k++] = -1;
    if (k == n) break;
    ++c[k];
  }
  return best;
}

/// All z with |B z| <= R + D, D the cell diameter, in lexicographic order.
/// Symmetric and always contains 0.
template <typename Scalar>
ShiftIndexSet build_shift_set(const LatticeBasis<Scalar>& basis, double cutoff) {
  if (!(cutoff >= 0.0)) throw Error("shift-set cutoff must be non-negative");
  const auto n = basis.dim();
  const Scalar reach = Scalar(cutoff) + cell_diameter(basis);
  const Matrix<Scalar> inv = basis.matrix().inverse();
  IntVector hi(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    hi[k] = static_cast<int>(std::floor(reach * inv.row(k).norm() + Scalar(1e-9)));
  }
  const Scalar limit = reach * (Scalar(1) + Scalar(1e-12));
  ShiftIndexSet out;
  out.cutoff = cutoff;
  IntVector z = -hi;
  while (true) {
    if (basis.shift(z).norm() <= limit) out.zs.push_back(z);
    Eigen::Index k = n - 1;
    while (k >= 0 && z[k] == hi[k]) {
      z[k] = -hi[k];
      --k;
    }
    if (k < 0) break;
    ++z[k];
  }
  return out;
}

/// r = x_i - x_j - B z.
template <typename Scalar>
Vector<Scalar> contact_vector(const PackingState<Scalar>& state, const ContactIndex& c) {
  const auto& x = state.positions();
  return x.col(c.i) - x.col(c.j) - state.basis().shift(c.z);
}

template <typename Scalar>
Scalar pair_slack(const PackingState<Scalar>& state, const ContactIndex& c) {
  return contact_vector(state, c).squaredNorm() - Scalar(4);
}

template <typename Scalar>
struct SlackGradients {
  Matrix<Scalar> grad_x;
  Matrix<Scalar> grad_B;
};

/// d s / d x has +2r at column i and -2r at column j; d s / d B = -2 r z^T.
template <typename Scalar>
SlackGradients<Scalar> slack_gradients(const PackingState<Scalar>& state, const ContactIndex& c) {
  const Vector<Scalar> r = contact_vector(state, c);
  SlackGradients<Scalar> g{Matrix<Scalar>::Zero(state.dim(), state.size()),
                           Matrix<Scalar>::Zero(state.dim(), state.dim())};
  g.grad_x.col(c.i) += Scalar(2) * r;
  g.grad_x.col(c.j) -= Scalar(2) * r;
  g.grad_B = Scalar(-2) * r * c.z.cast<Scalar>().transpose();
  return g;
}

template <typename Scalar>
Scalar cell_volume(const LatticeBasis<Scalar>& basis) {
  return std::abs(basis.matrix().partialPivLu().determinant());
}

/// Gradient of |det B|: |det B| B^{-T}.
template <typename Scalar>
Matrix<Scalar> volume_gradient(const LatticeBasis<Scalar>& basis) {
  const auto lu = basis.matrix().partialPivLu();
  return std::abs(lu.determinant()) * lu.inverse().transpose();
}

/// Directional derivative of the volume gradient along H.
template <typename Scalar>
Matrix<Scalar> volume_hvp(const LatticeBasis<Scalar>& basis, const Matrix<Scalar>& h) {
  const auto lu = basis.matrix().partialPivLu();
  const Matrix<Scalar> inv = lu.inverse();
  const Matrix<Scalar> inv_t = inv.transpose();
  const Scalar vol = std::abs(lu.determinant());
  return vol * ((inv * h).trace() * inv_t - inv_t * h.transpose() * inv_t);
}

/// Canonical contacts with |r| <= cutoff, in canonical order. Positions are
/// reduced to the fundamental cell only to choose shifts; the stored z refers
/// to the unreduced Cartesian positions.
template <typename Scalar>
std::vector<ContactIndex> find_contacts(const PackingState<Scalar>& state,
                                        const ShiftIndexSet& shifts) {
  const auto& x = state.positions();
  const auto& b = state.basis().matrix();
  const Matrix<Scalar> frac = b.partialPivLu().solve(x);
  Eigen::MatrixXi cell(frac.rows(), frac.cols());
  for (Eigen::Index c = 0; c < frac.cols(); ++c) {
    for (Eigen::Index r = 0; r < frac.rows(); ++r) {
      cell(r, c) = static_cast<int>(std::floor(frac(r, c)));
    }
  }
  const Scalar cutoff2 = Scalar(shifts.cutoff) * Scalar(shifts.cutoff);
  std::vector<ContactIndex> out;
  const int count = static_cast<int>(state.size());
  for (int i = 0; i < count; ++i) {
    for (int j = i; j < count; ++j) {
      const IntVector base = cell.col(i) - cell.col(j);
      for (const IntVector& dz : shifts.zs) {
        ContactIndex c{i, j, base + dz};
        if (!c.is_canonical()) continue;
        if (contact_vector(state, c).squaredNorm() <= cutoff2) out.push_back(std::move(c));
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

template <typename Scalar>
Scalar min_slack(const PackingState<Scalar>& state, std::span<const ContactIndex> contacts) {
  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (const auto& c : contacts) best = std::min(best, pair_slack(state, c));
  return best;
}

template <typename Scalar>
Scalar min_slack(const PackingState<Scalar>& state, const ShiftIndexSet& shifts) {
  const auto contacts = find_contacts(state, shifts);
  return min_slack(state, std::span<const ContactIndex>(contacts));
}

/// Frobenius inner product.
template <typename A, typename B>
auto inner(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return a.cwiseProduct(b).sum();
}

}  // namespace spit
