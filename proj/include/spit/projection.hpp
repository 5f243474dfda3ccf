#pragma once

// Strict-feasibility safeguards: a one-pass Gauss-Seidel repair along contact
// normals, and energy-nonexpansive projections that minimize a quadratic
// majorizer of the Lyapunov energy over the linearized constraints
// s + <grad s, step> >= delta, either in x alone or jointly in (x, B).

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

#include "spit/barrier.hpp"
#include "spit/dynamics.hpp"
#include "spit/error.hpp"
#include "spit/geometry.hpp"
#include "spit/qp.hpp"

namespace spit {

/// s0 + <a_x, y - x> + <a_B, H> >= rhs.
template <typename Scalar>
struct LinearizedConstraint {
  ContactIndex contact;
  Scalar s0;
  Matrix<Scalar> a_x;
  Matrix<Scalar> a_B;
  Scalar rhs;
};

template <typename Scalar>
std::vector<LinearizedConstraint<Scalar>> linearize_constraints(const PackingState<Scalar>& state,
                                                                std::span<const ContactIndex> contacts,
                                                                Scalar delta) {
  std::vector<LinearizedConstraint<Scalar>> out;
  out.reserve(contacts.size());
  for (const auto& c : contacts) {
    auto g = slack_gradients(state, c);
    out.push_back({c, pair_slack(state, c), std::move(g.grad_x), std::move(g.grad_B), delta});
  }
  return out;
}

template <typename Scalar>
struct GsResult {
  PackingState<Scalar> state;
  bool changed = false;
};

/// Single sweep in canonical order; each pair with s < delta is pushed apart
/// symmetrically along its normal to distance sqrt(4 + delta). Self-image
/// contacts depend on B only and are left alone.
template <typename Scalar>
GsResult<Scalar> gs_project_once(const PackingState<Scalar>& state, std::span<const ContactIndex> contacts,
                                 Scalar delta) {
  Matrix<Scalar> x = state.positions();
  const Scalar target = std::sqrt(Scalar(4) + delta);
  bool changed = false;
  for (const auto& c : contacts) {
    if (c.is_self()) continue;
    Vector<Scalar> r = x.col(c.i) - x.col(c.j) - state.basis().shift(c.z);
    const Scalar len = r.norm();
    if (len * len - Scalar(4) >= delta) continue;
    Vector<Scalar> normal = Vector<Scalar>::Unit(r.size(), 0);
    if (len > Scalar(0)) normal = r / len;
    const Scalar half = (target - len) / Scalar(2);
    x.col(c.i) += half * normal;
    x.col(c.j) -= half * normal;
    changed = true;
  }
  GsResult<Scalar> out{state, changed};
  if (changed) out.state.set_positions(x);
  return out;
}

template <typename Scalar>
struct ProjectionOutcome {
  DynamicsState<Scalar> state;
  Scalar energy_before = 0;  // objective before (E, plus w V in volume-descent mode)
  Scalar energy_after = 0;
  int qp_iterations = 0;
  int majorizer_doublings = 0;
  bool nonexpansive = true;
  bool guard_applied = false;
};

namespace detail {

template <typename Scalar>
Vector<Scalar> flat(const Matrix<Scalar>& m) {
  return Eigen::Map<const Vector<Scalar>>(m.data(), m.size());
}

template <typename Scalar>
Matrix<Scalar> unflat(const Eigen::Ref<const Vector<Scalar>>& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix<Scalar>>(v.data(), rows, cols);
}

template <typename Scalar>
Scalar energy_tolerance(Scalar reference) {
  return Scalar(1e-13) * std::max(Scalar(1), std::abs(reference));
}

template <typename Scalar>
DynamicsState<Scalar> solve_x_majorizer(const DynamicsState<Scalar>& ds, std::span<const ContactIndex> contacts,
                                        const BarrierParams<Scalar>& p, Scalar curvature, int& iterations) {
  const auto& x = ds.packing.positions();
  const Matrix<Scalar> gbar = composite_gradient(ds, contacts, p);
  std::vector<const ContactIndex*> rows;
  for (const auto& c : contacts) {
    if (!c.is_self()) rows.push_back(&c);
  }
  QuadraticProgram<Scalar> qp;
  qp.weights = Vector<Scalar>::Constant(x.size(), curvature + ds.gamma);
  qp.linear = flat(gbar);
  qp.constraints = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(rows.size()), x.size());
  qp.lower.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto g = slack_gradients(ds.packing, *rows[k]);
    qp.constraints.row(static_cast<Eigen::Index>(k)) = flat(g.grad_x).transpose();
    qp.lower[static_cast<Eigen::Index>(k)] = p.delta - pair_slack(ds.packing, *rows[k]);
  }
  const auto sol = solve_qp(qp);
  iterations += sol.iterations;
  DynamicsState<Scalar> out = ds;
  out.packing.set_positions(x + unflat<Scalar>(sol.solution, x.rows(), x.cols()));
  return out;
}

template <typename Scalar>
Scalar energy_or_inf(const DynamicsState<Scalar>& ds, std::span<const ContactIndex> contacts,
                     const BarrierParams<Scalar>& p) {
  try {
    return lyapunov_energy(ds, contacts, p);
  } catch (const InfeasibleSlack&) {
    return std::numeric_limits<Scalar>::infinity();
  }
}

inline constexpr int kMaxMajorizerDoublings = 30;

}  // namespace detail

/// Minimizes M(y) = U + <grad_x U, y - x> + L/2 |y - x|^2 + gamma/2 |y - x_prev|^2
/// over the linearized feasible set; v is kept. If the result raises E (the
/// local curvature exceeded L_hat) the constant is doubled and the QP re-solved.
template <typename Scalar>
ProjectionOutcome<Scalar> e_project_x(const DynamicsState<Scalar>& ds, std::span<const ContactIndex> contacts,
                                      const BarrierParams<Scalar>& p, Scalar l_hat) {
  ProjectionOutcome<Scalar> out{ds};
  out.energy_before = lyapunov_energy(ds, contacts, p);
  Scalar curvature = l_hat;
  for (int attempt = 0; attempt <= detail::kMaxMajorizerDoublings; ++attempt) {
    out.state = detail::solve_x_majorizer(ds, contacts, p, curvature, out.qp_iterations);
    out.energy_after = detail::energy_or_inf(out.state, contacts, p);
    if (out.energy_after <= out.energy_before + detail::energy_tolerance(out.energy_before)) break;
    out.majorizer_doublings = attempt + 1;
    curvature *= Scalar(2);
  }
  if (min_slack(out.state.packing, contacts) < p.delta) {
    out.guard_applied = true;
    auto gs = gs_project_once(out.state.packing, contacts, p.delta);
    DynamicsState<Scalar> repaired = out.state;
    repaired.packing = gs.state;
    out.state = detail::solve_x_majorizer(repaired, contacts, p, curvature, out.qp_iterations);
    out.energy_after = detail::energy_or_inf(out.state, contacts, p);
  }
  out.nonexpansive = out.energy_after <= out.energy_before + detail::energy_tolerance(out.energy_before);
  return out;
}

template <typename Scalar>
struct JointConstants {
  Scalar l_x = 0;
  Scalar l_B = 0;
};

/// Block-diagonal majorant of the joint Hessian from three power iterations:
/// L_x = |H_xx| + |H_xB|, L_B = |H_BB| + |H_xB|.
template <typename Scalar>
JointConstants<Scalar> estimate_joint_constants(const PackingState<Scalar>& state,
                                                std::span<const ContactIndex> contacts,
                                                const BarrierParams<Scalar>& p, PowerOptions opts = {}) {
  const auto n = state.dim();
  const auto count = state.size();
  const Matrix<Scalar> zero_x = Matrix<Scalar>::Zero(n, count);
  const Matrix<Scalar> zero_b = Matrix<Scalar>::Zero(n, n);
  auto project_x = ::spit::detail::gauge_projector<Scalar>(n, count);
  auto identity = [](const Vector<Scalar>& v) { return v; };

  auto xx = [&](const Vector<Scalar>& v) -> Vector<Scalar> {
    return detail::flat(hvp_joint(state, contacts, p, detail::unflat<Scalar>(v, n, count), zero_b).first);
  };
  auto bb = [&](const Vector<Scalar>& v) -> Vector<Scalar> {
    return detail::flat(hvp_joint(state, contacts, p, zero_x, detail::unflat<Scalar>(v, n, n)).second);
  };
  auto bxxb = [&](const Vector<Scalar>& v) -> Vector<Scalar> {
    const Vector<Scalar> px = project_x(
        detail::flat(hvp_joint(state, contacts, p, zero_x, detail::unflat<Scalar>(v, n, n)).first));
    return detail::flat(hvp_joint(state, contacts, p, detail::unflat<Scalar>(px, n, count), zero_b).second);
  };
  const Scalar tol(opts.tol);
  const Scalar hxx = power_iteration<Scalar>(xx, project_x, seeded_start<Scalar>(n * count), tol,
                                             opts.max_iters, PowerEstimate::kNorm).value;
  const Scalar hbb = power_iteration<Scalar>(bb, identity, seeded_start<Scalar>(n * n), tol,
                                             opts.max_iters, PowerEstimate::kNorm).value;
  const Scalar hxb2 = power_iteration<Scalar>(bxxb, identity, seeded_start<Scalar>(n * n, 7), tol,
                                              opts.max_iters, PowerEstimate::kRayleigh).value;
  const Scalar hxb = std::sqrt(std::max(hxb2, Scalar(0)));
  return {std::max(hxx + hxb, Scalar(1e-12)), std::max(hbb + hxb, Scalar(1e-12))};
}

/// Joint (x, B) projection minimizing the majorizer with separate constants
/// L_x and L_B, optionally adding volume_weight <grad V, H> to the linear term.
/// With volume_weight > 0 the tracked objective is E + volume_weight V.
template <typename Scalar>
ProjectionOutcome<Scalar> e_project_joint(const DynamicsState<Scalar>& ds, std::span<const ContactIndex> contacts,
                                          const BarrierParams<Scalar>& p, Scalar l_x, Scalar l_b,
                                          Scalar volume_weight = Scalar(0)) {
  const auto n = ds.packing.dim();
  const auto count = ds.packing.size();
  const auto nx = n * count;
  const auto& x = ds.packing.positions();
  const auto& basis = ds.packing.basis();

  auto objective = [&](const DynamicsState<Scalar>& s) {
    Scalar value = detail::energy_or_inf(s, contacts, p);
    if (volume_weight != Scalar(0)) value += volume_weight * cell_volume(s.packing.basis());
    return value;
  };

  const auto eval = barrier_energy(ds.packing, contacts, p);
  const Matrix<Scalar> gbar = eval.grad_x + ds.gamma * (x - ds.x_prev);
  Matrix<Scalar> gB = eval.grad_B;
  if (volume_weight != Scalar(0)) gB += volume_weight * volume_gradient(basis);

  QuadraticProgram<Scalar> qp;
  qp.linear.resize(nx + n * n);
  qp.linear << detail::flat(gbar), detail::flat(gB);
  qp.constraints.resize(static_cast<Eigen::Index>(contacts.size()), nx + n * n);
  qp.lower.resize(static_cast<Eigen::Index>(contacts.size()));
  for (std::size_t k = 0; k < contacts.size(); ++k) {
    const auto g = slack_gradients(ds.packing, contacts[k]);
    qp.constraints.row(static_cast<Eigen::Index>(k)) << detail::flat(g.grad_x).transpose(),
        detail::flat(g.grad_B).transpose();
    qp.lower[static_cast<Eigen::Index>(k)] = p.delta - eval.slacks[k];
  }

  ProjectionOutcome<Scalar> out{ds};
  out.energy_before = objective(ds);
  Scalar cx = l_x;
  Scalar cb = l_b;
  for (int attempt = 0; attempt <= detail::kMaxMajorizerDoublings; ++attempt) {
    qp.weights.resize(nx + n * n);
    qp.weights << Vector<Scalar>::Constant(nx, cx + ds.gamma), Vector<Scalar>::Constant(n * n, cb);
    const auto sol = solve_qp(qp);
    out.qp_iterations += sol.iterations;

    Matrix<Scalar> h = detail::unflat<Scalar>(sol.solution.tail(n * n), n, n);
    DynamicsState<Scalar> candidate = ds;
    bool basis_updated = false;
    for (int halving = 0; halving <= 10 && !basis_updated; ++halving) {
      try {
        candidate.packing.set_basis(LatticeBasis<Scalar>(basis.matrix() + h, basis.bounds()));
        basis_updated = true;
      } catch (const Error&) {
        h *= Scalar(0.5);
      }
    }
    candidate.packing.set_positions(x + detail::unflat<Scalar>(sol.solution.head(nx), n, count));
    out.state = candidate;
    out.energy_after = objective(candidate);
    if (out.energy_after <= out.energy_before + detail::energy_tolerance(out.energy_before)) break;
    out.majorizer_doublings = attempt + 1;
    cx *= Scalar(2);
    cb *= Scalar(2);
  }
  if (min_slack(out.state.packing, contacts) < p.delta) {
    out.guard_applied = true;
    auto gs = gs_project_once(out.state.packing, contacts, p.delta);
    DynamicsState<Scalar> repaired = out.state;
    repaired.packing = gs.state;
    int iters = 0;
    out.state = detail::solve_x_majorizer(repaired, contacts, p, cx, iters);
    out.qp_iterations += iters;
    out.energy_after = objective(out.state);
  }
  out.nonexpansive = out.energy_after <= out.energy_before + detail::energy_tolerance(out.energy_before);
  return out;
}

}  // namespace spit
