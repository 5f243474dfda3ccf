#pragma once

// Periodic infinitesimal rigidity, stress energy, prestress certification,
// multiplier recovery and KKT residuals.
//
// A motion is a pair (u, A): vertex velocities u (n x N) and a cell velocity
// A (n x n). Flattened motion vectors stack vec(u) over vec(A), column-major.
//
// Each active contact constrains r^T (u_i - u_j - A w) = 0. The shift
// convention takes w = t = B z; the literal convention takes w = r. Only the
// shift convention annihilates every trivial motion u_i = c + W x_i, A = W
// with W skew: there u_i - u_j - W t = W r and r^T W r = 0.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "spit/barrier.hpp"
#include "spit/geometry.hpp"

namespace spit {

enum class MotionConvention { kShift, kLiteral };

template <typename Scalar>
struct MotionVector {
  Matrix<Scalar> u;
  Matrix<Scalar> A;

  Vector<Scalar> flatten() const {
    Vector<Scalar> out(u.size() + A.size());
    out << Eigen::Map<const Vector<Scalar>>(u.data(), u.size()), Eigen::Map<const Vector<Scalar>>(A.data(), A.size());
    return out;
  }

  static MotionVector unflatten(const Vector<Scalar>& v, Eigen::Index n, Eigen::Index count) {
    return {Eigen::Map<const Matrix<Scalar>>(v.data(), n, count),
            Eigen::Map<const Matrix<Scalar>>(v.data() + n * count, n, n)};
  }
};

template <typename Scalar>
std::vector<ContactIndex> active_set(const PackingState<Scalar>& state, std::span<const ContactIndex> contacts,
                                     Scalar tol_active) {
  std::vector<ContactIndex> out;
  for (const auto& c : contacts) {
    if (std::abs(pair_slack(state, c)) <= tol_active) out.push_back(c);
  }
  return out;
}

template <typename Scalar>
std::vector<ContactIndex> active_set(const PackingState<Scalar>& state, const ShiftIndexSet& shifts,
                                     Scalar tol_active) {
  const auto contacts = find_contacts(state, shifts);
  return active_set(state, std::span<const ContactIndex>(contacts), tol_active);
}

namespace detail {

/// Row functional m -> a^T (u_i - u_j - A w) for a given left vector a.
template <typename Scalar>
Vector<Scalar> motion_row(const PackingState<Scalar>& state, const ContactIndex& c, const Vector<Scalar>& left,
                          MotionConvention conv) {
  const auto n = state.dim();
  const auto count = state.size();
  const Vector<Scalar> w =
      conv == MotionConvention::kShift ? state.basis().shift(c.z) : contact_vector(state, c);
  Vector<Scalar> row = Vector<Scalar>::Zero(n * count + n * n);
  row.segment(n * c.i, n) += left;
  row.segment(n * c.j, n) -= left;
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index a = 0; a < n; ++a) row[n * count + a + b * n] = -left[a] * w[b];
  }
  return row;
}

}  // namespace detail

/// Dense operator with one row r^T (u_i - u_j - A w) per active contact.
template <typename Scalar>
Matrix<Scalar> motion_operator(const PackingState<Scalar>& state, std::span<const ContactIndex> active,
                               MotionConvention conv = MotionConvention::kShift) {
  const auto cols = state.dim() * state.size() + state.dim() * state.dim();
  Matrix<Scalar> m(static_cast<Eigen::Index>(active.size()), cols);
  for (std::size_t k = 0; k < active.size(); ++k) {
    m.row(static_cast<Eigen::Index>(k)) =
        detail::motion_row(state, active[k], contact_vector(state, active[k]), conv).transpose();
  }
  return m;
}

/// Translations (u_i = e_k, A = 0) followed by rotations (u_i = W x_i, A = W)
/// for each skew generator W = e_a e_b^T - e_b e_a^T, a < b.
template <typename Scalar>
Matrix<Scalar> trivial_basis(const PackingState<Scalar>& state) {
  const auto n = state.dim();
  const auto count = state.size();
  const auto dim = n + n * (n - 1) / 2;
  Matrix<Scalar> basis = Matrix<Scalar>::Zero(n * count + n * n, dim);
  Eigen::Index col = 0;
  for (Eigen::Index k = 0; k < n; ++k, ++col) {
    for (Eigen::Index i = 0; i < count; ++i) basis(n * i + k, col) = Scalar(1);
  }
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b, ++col) {
      Matrix<Scalar> w = Matrix<Scalar>::Zero(n, n);
      w(a, b) = Scalar(1);
      w(b, a) = Scalar(-1);
      MotionVector<Scalar> m{w * state.positions(), w};
      basis.col(col) = m.flatten();
    }
  }
  return basis;
}

template <typename Scalar>
struct RigidityResult {
  bool rigid = false;
  int nontrivial_dim = 0;
  int nontrivial_dim_loose = 0;  // same computation at a 1e-6 relative threshold
  int nullity = 0;
  Matrix<Scalar> motion_basis;  // orthonormal columns spanning nontrivial motions
};

inline constexpr double kRankThreshold = 1e-8;
inline constexpr double kLooseRankThreshold = 1e-6;

namespace detail {

template <typename Scalar>
int numerical_rank(const Vector<Scalar>& singular, Scalar threshold) {
  int rank = 0;
  for (Eigen::Index k = 0; k < singular.size(); ++k) {
    if (singular[k] > threshold) ++rank;
  }
  return rank;
}

template <typename Scalar>
Matrix<Scalar> null_space(const Matrix<Scalar>& m, Scalar rel, int& nullity) {
  const auto cols = m.cols();
  if (m.rows() == 0) {
    nullity = static_cast<int>(cols);
    return Matrix<Scalar>::Identity(cols, cols);
  }
  Eigen::JacobiSVD<Matrix<Scalar>> svd(m, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const Scalar top = sv.size() ? sv[0] : Scalar(0);
  const int rank = top > Scalar(0) ? numerical_rank<Scalar>(sv, rel * top) : 0;
  nullity = static_cast<int>(cols) - rank;
  return svd.matrixV().rightCols(nullity);
}

/// Orthonormal basis of the part of span(null) orthogonal to span(trivial).
template <typename Scalar>
Matrix<Scalar> quotient_trivial(const Matrix<Scalar>& null, const Matrix<Scalar>& trivial, Scalar threshold) {
  if (null.cols() == 0) return Matrix<Scalar>(null.rows(), 0);
  Eigen::HouseholderQR<Matrix<Scalar>> qr(trivial);
  const Matrix<Scalar> q = qr.householderQ() * Matrix<Scalar>::Identity(trivial.rows(), trivial.cols());
  const Matrix<Scalar> rest = null - q * (q.transpose() * null);
  Eigen::JacobiSVD<Matrix<Scalar>> svd(rest, Eigen::ComputeThinU);
  const int rank = numerical_rank<Scalar>(svd.singularValues(), threshold);
  return svd.matrixU().leftCols(rank);
}

}  // namespace detail

/// Nullspace of the motion operator modulo trivial motions. Rank decisions use
/// singular values above 1e-8 times the largest one.
template <typename Scalar>
RigidityResult<Scalar> is_periodically_rigid(const PackingState<Scalar>& state, std::span<const ContactIndex> active,
                                             MotionConvention conv = MotionConvention::kShift) {
  const Matrix<Scalar> op = motion_operator(state, active, conv);
  const Matrix<Scalar> trivial = trivial_basis(state);
  RigidityResult<Scalar> out;
  const Matrix<Scalar> null = detail::null_space(op, Scalar(kRankThreshold), out.nullity);
  out.motion_basis = detail::quotient_trivial(null, trivial, Scalar(kRankThreshold));
  out.nontrivial_dim = static_cast<int>(out.motion_basis.cols());
  int loose_nullity = 0;
  const Matrix<Scalar> loose = detail::null_space(op, Scalar(kLooseRankThreshold), loose_nullity);
  out.nontrivial_dim_loose =
      static_cast<int>(detail::quotient_trivial(loose, trivial, Scalar(kLooseRankThreshold)).cols());
  out.rigid = out.nontrivial_dim == 0;
  return out;
}

/// Q(u, A) = sum_c w_c (n_c^T (u_i - u_j - A w))^2 with n_c = r / |r|.
template <typename Scalar>
Scalar stress_energy(const PackingState<Scalar>& state, std::span<const ContactIndex> active,
                     std::span<const Scalar> omega, const MotionVector<Scalar>& m,
                     MotionConvention conv = MotionConvention::kShift) {
  if (omega.size() != active.size()) throw Error("stress must have one weight per active contact");
  const Vector<Scalar> flat = m.flatten();
  Scalar q(0);
  for (std::size_t k = 0; k < active.size(); ++k) {
    const Vector<Scalar> r = contact_vector(state, active[k]);
    const Scalar proj = detail::motion_row(state, active[k], Vector<Scalar>(r.normalized()), conv).dot(flat);
    q += omega[k] * proj * proj;
  }
  return q;
}

template <typename Scalar>
struct PrestressResult {
  bool stable = false;
  Scalar min_eig = 0;  // +infinity when there are no nontrivial motions
};

/// Positive definiteness of Q restricted to the nontrivial motion space.
template <typename Scalar>
PrestressResult<Scalar> prestress_stable(const PackingState<Scalar>& state, std::span<const ContactIndex> active,
                                         std::span<const Scalar> omega,
                                         MotionConvention conv = MotionConvention::kShift) {
  if (omega.size() != active.size()) throw Error("stress must have one weight per active contact");
  const auto rig = is_periodically_rigid(state, active, conv);
  if (rig.nontrivial_dim == 0) return {true, std::numeric_limits<Scalar>::infinity()};
  const auto dim = rig.motion_basis.cols();
  Matrix<Scalar> q = Matrix<Scalar>::Zero(dim, dim);
  for (std::size_t k = 0; k < active.size(); ++k) {
    const Vector<Scalar> r = contact_vector(state, active[k]);
    const Vector<Scalar> row =
        rig.motion_basis.transpose() * detail::motion_row(state, active[k], Vector<Scalar>(r.normalized()), conv);
    q.noalias() += omega[k] * row * row.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(q, Eigen::EigenvaluesOnly);
  const Scalar lo = es.eigenvalues()[0];
  return {lo > Scalar(1e-10), lo};
}

template <typename Scalar>
struct Multipliers {
  std::vector<Scalar> raw;      // -phi'(s)
  std::vector<Scalar> clamped;  // max(raw, 0)
};

/// mu_c = -phi'(s_c) = nu / s_c - nu (s_c - delta) / delta.
template <typename Scalar>
Multipliers<Scalar> recover_multipliers(const PackingState<Scalar>& state, std::span<const ContactIndex> contacts,
                                        const BarrierParams<Scalar>& p) {
  Multipliers<Scalar> out;
  for (const auto& c : contacts) {
    const Scalar mu = -phi(pair_slack(state, c), p).d1;
    out.raw.push_back(mu);
    out.clamped.push_back(std::max(mu, Scalar(0)));
  }
  return out;
}

template <typename Scalar>
struct KktResidual {
  Scalar res_B = 0;
  Scalar res_x = 0;
  Scalar comp = 0;
  Scalar force_scale = 0;  // largest |mu_c grad_x s_c|
};

/// res_B = |grad V - sum mu grad_B s|_F, res_x = |sum mu grad_x s| after
/// gauge projection, comp = sum mu max(s, 0).
template <typename Scalar>
KktResidual<Scalar> kkt_residual(const PackingState<Scalar>& state, std::span<const ContactIndex> contacts,
                                 std::span<const Scalar> mu) {
  if (mu.size() != contacts.size()) throw Error("one multiplier per contact required");
  Matrix<Scalar> gx = Matrix<Scalar>::Zero(state.dim(), state.size());
  Matrix<Scalar> gb = volume_gradient(state.basis());
  KktResidual<Scalar> out;
  for (std::size_t k = 0; k < contacts.size(); ++k) {
    const auto g = slack_gradients(state, contacts[k]);
    gx += mu[k] * g.grad_x;
    gb -= mu[k] * g.grad_B;
    out.comp += mu[k] * std::max(pair_slack(state, contacts[k]), Scalar(0));
    out.force_scale = std::max(out.force_scale, std::abs(mu[k]) * g.grad_x.norm());
  }
  out.res_B = gb.norm();
  out.res_x = gauge_project(gx).norm();
  return out;
}

/// Smallest singular value of the active constraint Jacobian [grad_x s, grad_B s];
/// zero when there are more active constraints than variables.
template <typename Scalar>
Scalar licq_sigma_min(const PackingState<Scalar>& state, std::span<const ContactIndex> active) {
  const auto n = state.dim();
  const auto nx = n * state.size();
  if (active.empty()) return std::numeric_limits<Scalar>::infinity();
  Matrix<Scalar> jac(static_cast<Eigen::Index>(active.size()), nx + n * n);
  for (std::size_t k = 0; k < active.size(); ++k) {
    const auto g = slack_gradients(state, active[k]);
    jac.row(static_cast<Eigen::Index>(k)) << Eigen::Map<const Vector<Scalar>>(g.grad_x.data(), nx).transpose(),
        Eigen::Map<const Vector<Scalar>>(g.grad_B.data(), n * n).transpose();
  }
  if (jac.rows() > jac.cols()) return Scalar(0);
  Eigen::JacobiSVD<Matrix<Scalar>> svd(jac);
  return svd.singularValues().minCoeff();
}

}  // namespace spit
