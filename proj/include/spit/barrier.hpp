#pragma once

// Interior barrier U = sum_c phi(s_c) with
//   phi(s) = -nu log s + nu / (2 delta) (s - delta)^2,
// its gradients, Hessian-vector products, and curvature estimates.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "spit/error.hpp"
#include "spit/geometry.hpp"
#include "spit/power_iteration.hpp"

namespace spit {

template <typename Scalar>
struct BarrierParams {
  Scalar nu = Scalar(1e-2);
  Scalar delta = Scalar(1e-3);

  void validate() const {
    if (!(nu > Scalar(0))) throw Error("barrier strength nu must be positive");
    if (!(delta > Scalar(0) && delta < Scalar(1))) throw Error("safety margin delta must lie in (0, 1)");
  }
};

template <typename Scalar>
struct PhiValue {
  Scalar value;
  Scalar d1;
  Scalar d2;
};

template <typename Scalar>
PhiValue<Scalar> phi(Scalar s, const BarrierParams<Scalar>& p) {
  if (!(s > Scalar(0))) throw InfeasibleSlack();
  const Scalar excess = s - p.delta;
  return {-p.nu * std::log(s) + p.nu / (Scalar(2) * p.delta) * excess * excess,
          -p.nu / s + p.nu / p.delta * excess,
          p.nu / (s * s) + p.nu / p.delta};
}

/// Slack at which phi' vanishes: positive root of s^2 - delta s - delta = 0.
template <typename Scalar>
Scalar phi_stationary_slack(const BarrierParams<Scalar>& p) {
  return (p.delta + std::sqrt(p.delta * p.delta + Scalar(4) * p.delta)) / Scalar(2);
}

template <typename Scalar>
struct BarrierEval {
  Scalar value = 0;
  Matrix<Scalar> grad_x;
  Matrix<Scalar> grad_B;
  std::vector<Scalar> slacks;  // aligned with the contact list
};

template <typename Scalar>
BarrierEval<Scalar> barrier_energy(const PackingState<Scalar>& state,
                                   std::span<const ContactIndex> contacts,
                                   const BarrierParams<Scalar>& p) {
  const auto n = state.dim();
  BarrierEval<Scalar> out;
  out.grad_x = Matrix<Scalar>::Zero(n, state.size());
  out.grad_B = Matrix<Scalar>::Zero(n, n);
  out.slacks.reserve(contacts.size());
  for (const auto& c : contacts) {
    const Vector<Scalar> r = contact_vector(state, c);
    const Scalar s = r.squaredNorm() - Scalar(4);
    out.slacks.push_back(s);
    const auto f = phi(s, p);
    out.value += f.value;
    const Vector<Scalar> g = Scalar(2) * f.d1 * r;
    out.grad_x.col(c.i) += g;
    out.grad_x.col(c.j) -= g;
    out.grad_B.noalias() -= g * c.z.cast<Scalar>().transpose();
  }
  return out;
}

template <typename Scalar>
Scalar barrier_value(const PackingState<Scalar>& state, std::span<const ContactIndex> contacts,
                     const BarrierParams<Scalar>& p) {
  Scalar value(0);
  for (const auto& c : contacts) value += phi(pair_slack(state, c), p).value;
  return value;
}

/// Joint Hessian-vector product of U in (x, B) along (dir_x, dir_B).
/// With rdot = p_i - p_j - H z the per-contact contribution is
///   w = 4 phi'' <r, rdot> r + 2 phi' rdot,
/// added to block i, subtracted from block j, and entering the B block as -w z^T.
template <typename Scalar>
std::pair<Matrix<Scalar>, Matrix<Scalar>> hvp_joint(const PackingState<Scalar>& state,
                                                    std::span<const ContactIndex> contacts,
                                                    const BarrierParams<Scalar>& p,
                                                    const Matrix<Scalar>& dir_x,
                                                    const Matrix<Scalar>& dir_B) {
  const auto n = state.dim();
  Matrix<Scalar> out_x = Matrix<Scalar>::Zero(n, state.size());
  Matrix<Scalar> out_B = Matrix<Scalar>::Zero(n, n);
  for (const auto& c : contacts) {
    const Vector<Scalar> r = contact_vector(state, c);
    const auto f = phi(r.squaredNorm() - Scalar(4), p);
    const Vector<Scalar> zs = c.z.cast<Scalar>();
    const Vector<Scalar> rdot = dir_x.col(c.i) - dir_x.col(c.j) - dir_B * zs;
    const Vector<Scalar> w = Scalar(4) * f.d2 * r.dot(rdot) * r + Scalar(2) * f.d1 * rdot;
    out_x.col(c.i) += w;
    out_x.col(c.j) -= w;
    out_B.noalias() -= w * zs.transpose();
  }
  return {std::move(out_x), std::move(out_B)};
}

/// Hessian-vector product in x with B held fixed.
template <typename Scalar>
Matrix<Scalar> hvp_x(const PackingState<Scalar>& state, std::span<const ContactIndex> contacts,
                     const BarrierParams<Scalar>& p, const Matrix<Scalar>& dir) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(state.dim(), state.size());
  for (const auto& c : contacts) {
    if (c.is_self()) continue;
    const Vector<Scalar> r = contact_vector(state, c);
    const auto f = phi(r.squaredNorm() - Scalar(4), p);
    const Vector<Scalar> dp = dir.col(c.i) - dir.col(c.j);
    const Vector<Scalar> w = Scalar(4) * f.d2 * r.dot(dp) * r + Scalar(2) * f.d1 * dp;
    out.col(c.i) += w;
    out.col(c.j) -= w;
  }
  return out;
}

/// Closed-form gradient Lipschitz constant in x on the slab s in [delta, S]:
/// each pair block 4 phi'' r r^T + 2 phi' (Laplacian block) has norm at most
/// 2 (4 R^2 phi''_max + 2 |phi'|_max), and blocks add over the pair contacts.
/// S is the largest slack among the given contacts.
template <typename Scalar>
Scalar lipschitz_bound(const PackingState<Scalar>& state, std::span<const ContactIndex> contacts,
                       const BarrierParams<Scalar>& p, Scalar cutoff) {
  Scalar slack_cap = p.delta;
  std::size_t pairs = 0;
  for (const auto& c : contacts) {
    slack_cap = std::max(slack_cap, pair_slack(state, c));
    if (!c.is_self()) ++pairs;
  }
  const Scalar d1_max = p.nu * (Scalar(1) / p.delta + slack_cap / p.delta);
  const Scalar d2_max = p.nu * (Scalar(1) / (p.delta * p.delta) + Scalar(1) / p.delta);
  return Scalar(pairs) * Scalar(2) * (Scalar(4) * cutoff * cutoff * d2_max + Scalar(2) * d1_max);
}

template <typename Scalar>
struct CurvatureEstimate {
  Scalar value = 0;
  int iterations = 0;
  bool converged = false;
};

struct PowerOptions {
  double tol = 1e-6;
  int max_iters = 500;
};

namespace detail {

template <typename Scalar>
auto gauge_projector(Eigen::Index rows, Eigen::Index cols) {
  return [rows, cols](const Vector<Scalar>& v) -> Vector<Scalar> {
    Matrix<Scalar> m = Eigen::Map<const Matrix<Scalar>>(v.data(), rows, cols);
    m.colwise() -= m.rowwise().mean().eval();
    return Eigen::Map<const Vector<Scalar>>(m.data(), m.size());
  };
}

template <typename Scalar>
auto x_hessian_operator(const PackingState<Scalar>& state, std::span<const ContactIndex> contacts,
                        const BarrierParams<Scalar>& p) {
  return [&state, contacts, &p](const Vector<Scalar>& v) -> Vector<Scalar> {
    const Matrix<Scalar> dir = Eigen::Map<const Matrix<Scalar>>(v.data(), state.dim(), state.size());
    const Matrix<Scalar> h = hvp_x(state, contacts, p, dir);
    return Eigen::Map<const Vector<Scalar>>(h.data(), h.size());
  };
}

}  // namespace detail

/// Largest-magnitude eigenvalue of the x-Hessian on the gauge subspace,
/// floored at 1e-12.
template <typename Scalar>
CurvatureEstimate<Scalar> estimate_L(const PackingState<Scalar>& state,
                                     std::span<const ContactIndex> contacts,
                                     const BarrierParams<Scalar>& p, PowerOptions opts = {}) {
  const auto size = state.dim() * state.size();
  auto res = power_iteration<Scalar>(detail::x_hessian_operator(state, contacts, p),
                                     detail::gauge_projector<Scalar>(state.dim(), state.size()),
                                     seeded_start<Scalar>(size), Scalar(opts.tol), opts.max_iters,
                                     PowerEstimate::kNorm);
  return {std::max(res.value, Scalar(1e-12)), res.iterations, res.converged};
}

/// Smallest eigenvalue of the x-Hessian on the gauge subspace via power
/// iteration on (L_hat I - H), clipped below at 0.
template <typename Scalar>
CurvatureEstimate<Scalar> estimate_m(const PackingState<Scalar>& state,
                                     std::span<const ContactIndex> contacts,
                                     const BarrierParams<Scalar>& p, Scalar l_hat,
                                     PowerOptions opts = {}) {
  const auto size = state.dim() * state.size();
  auto hess = detail::x_hessian_operator(state, contacts, p);
  auto shifted = [&](const Vector<Scalar>& v) -> Vector<Scalar> { return l_hat * v - hess(v); };
  auto res = power_iteration<Scalar>(shifted, detail::gauge_projector<Scalar>(state.dim(), state.size()),
                                     seeded_start<Scalar>(size, 0x6d5eedULL), Scalar(opts.tol),
                                     opts.max_iters, PowerEstimate::kRayleigh);
  return {std::max(l_hat - res.value, Scalar(0)), res.iterations, res.converged};
}

template <typename Scalar>
CurvatureEstimate<Scalar> estimate_m(const PackingState<Scalar>& state,
                                     std::span<const ContactIndex> contacts,
                                     const BarrierParams<Scalar>& p, PowerOptions opts = {}) {
  return estimate_m(state, contacts, p, estimate_L(state, contacts, p, opts).value, opts);
}

}  // namespace spit
