#pragma once

// The full trajectory loop: curvature refresh, damped step with backtracking,
// feasibility projection, periodic joint (x, B) projection and spectral nudges.
//
// The contact list is rebuilt from the current state at the start of every
// step and frozen for that step, so every energy comparison inside a step sees
// one barrier. When dt or L_hat change, the pre-step energy is re-evaluated
// with the new gamma before it is compared against anything.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string_view>
#include <type_traits>
#include <vector>

#include "spit/barrier.hpp"
#include "spit/dynamics.hpp"
#include "spit/error.hpp"
#include "spit/geometry.hpp"
#include "spit/projection.hpp"
#include "spit/spectral.hpp"

namespace spit {

enum class ProjectionKind { kNone, kGaussSeidel, kQpX, kQpJoint };

inline std::string_view to_string(ProjectionKind kind) {
  switch (kind) {
    case ProjectionKind::kGaussSeidel: return "gs";
    case ProjectionKind::kQpX: return "qp_x";
    case ProjectionKind::kQpJoint: return "qp_joint";
    default: return "none";
  }
}

template <typename Scalar>
struct TrajectoryConfig {
  BarrierParams<Scalar> params;
  double cutoff = 2.5;  // interaction radius R
  double eta_dt = 1.0;
  double c = 1.9;
  double eps_active = 0.05;
  double eps_near = 0.1;
  double kappa = 0.3;
  int window = 20;
  int cadence = 10;
  int joint_period = 10;  // 0 disables the joint projection
  double volume_weight = 0.0;
  int max_steps = 1000;
  double grad_tol = 1e-8;
  int hvp_refresh = 50;
  bool project = true;
  bool nudges = true;
  int max_backtracks = 40;
  PowerOptions power;
};

template <typename Scalar>
struct ProjectionEvent {
  ProjectionKind kind = ProjectionKind::kNone;
  Scalar before = 0;
  Scalar after = 0;
  bool accepted = false;
};

template <typename Scalar>
struct TrajectoryRow {
  std::size_t step = 0;
  Scalar energy = 0;
  Scalar barrier = 0;
  Scalar kinetic = 0;
  Scalar min_slack = 0;
  Scalar lambda2 = 0;
  Scalar dt = 0;
  int backtracked = 0;
  bool nudged = false;
  ProjectionKind projection = ProjectionKind::kNone;

  // Diagnostics not written to the CSV.
  Scalar energy_before = 0;     // pre-step energy under the step's gamma and contact list
  Scalar energy_tentative = 0;  // after the damped step, before any projection
  Scalar gamma = 0;
  bool refreshed = false;
  bool contacts_changed = false;
  std::vector<ProjectionEvent<Scalar>> projections;
};

enum class Termination { kMaxSteps, kConverged };

template <typename Scalar>
struct TrajectoryRecord {
  std::vector<TrajectoryRow<Scalar>> rows;
  DynamicsState<Scalar> final_state;
  Termination termination = Termination::kMaxSteps;
  std::size_t accepted = 0;
  std::size_t backtracks = 0;
  std::size_t nudges = 0;
  std::size_t projections = 0;
  Scalar l_hat = 0;
  Scalar m_hat = 0;
  Scalar initial_energy = 0;
};

template <typename Scalar>
using TrajectoryObserver = std::function<void(const TrajectoryRow<Scalar>&, const DynamicsState<Scalar>&)>;

namespace detail {

template <typename Scalar>
Scalar energy_slack(Scalar reference) {
  return Scalar(1e-12) * std::max(Scalar(1), std::abs(reference));
}

template <typename Scalar>
Scalar stationarity_norm(const PackingState<Scalar>& state, std::span<const ContactIndex> contacts,
                         const BarrierParams<Scalar>& p, bool include_cell, Scalar volume_weight) {
  const auto eval = barrier_energy(state, contacts, p);
  Scalar g = gauge_project(eval.grad_x).squaredNorm();
  if (include_cell) {
    Matrix<Scalar> gb = eval.grad_B;
    if (volume_weight != Scalar(0)) gb += volume_weight * volume_gradient(state.basis());
    g += gb.squaredNorm();
  }
  return std::sqrt(g);
}

template <typename Scalar>
Scalar active_lambda2(const PackingState<Scalar>& state, std::span<const ContactIndex> contacts, Scalar eps) {
  if (state.size() < 2) return Scalar(0);
  return fiedler(build_contact_graph(state, contacts, eps)).lambda2;
}

}  // namespace detail

template <typename Scalar>
TrajectoryRecord<Scalar> run_trajectory(DynamicsState<Scalar> ds, const TrajectoryConfig<Scalar>& cfg,
                                        const std::type_identity_t<TrajectoryObserver<Scalar>>& observer = {}) {
  const auto& p = cfg.params;
  p.validate();
  ShiftIndexSet shifts = build_shift_set(ds.packing.basis(), cfg.cutoff);
  std::vector<ContactIndex> contacts = find_contacts(ds.packing, shifts);
  const bool joint = cfg.joint_period > 0;

  TrajectoryRecord<Scalar> rec{{}, ds};
  JointConstants<Scalar> joint_constants;
  auto refresh = [&] {
    rec.l_hat = estimate_L(ds.packing, std::span<const ContactIndex>(contacts), p, cfg.power).value;
    rec.m_hat = estimate_m(ds.packing, std::span<const ContactIndex>(contacts), p, rec.l_hat, cfg.power).value;
    const auto steps = select_steps(rec.l_hat, rec.m_hat, Scalar(cfg.eta_dt), Scalar(cfg.c));
    ds.set_steps(steps.dt, steps.eta, rec.l_hat);
    if (joint) joint_constants = estimate_joint_constants(ds.packing, std::span<const ContactIndex>(contacts), p, cfg.power);
  };
  refresh();
  rec.initial_energy = lyapunov_energy(ds, std::span<const ContactIndex>(contacts), p);

  const std::size_t cadence = nudge_cadence(static_cast<std::size_t>(cfg.cadence), cfg.eta_dt);
  NudgeHistory<Scalar> history;
  history.window = static_cast<std::size_t>(cfg.window);
  const Scalar volume_weight(cfg.volume_weight);

  auto converged = [&](const DynamicsState<Scalar>& s, std::span<const ContactIndex> list) {
    return detail::stationarity_norm(s.packing, list, p, joint, volume_weight) <= Scalar(cfg.grad_tol) &&
           s.v.norm() <= Scalar(cfg.grad_tol);
  };

  if (converged(ds, contacts)) {
    rec.termination = Termination::kConverged;
    rec.final_state = ds;
    return rec;
  }

  for (int k = 1; k <= cfg.max_steps; ++k) {
    const auto step = static_cast<std::size_t>(k);
    TrajectoryRow<Scalar> row;
    row.step = step;

    auto fresh = find_contacts(ds.packing, shifts);
    row.contacts_changed = fresh != contacts;
    contacts = std::move(fresh);
    const std::span<const ContactIndex> list(contacts);

    if (cfg.hvp_refresh > 0 && k > 1 && (k - 1) % cfg.hvp_refresh == 0) {
      refresh();
      row.refreshed = true;
    }

    // Damped step with backtracking on energy increase or an infeasible midpoint.
    DynamicsState<Scalar> next = ds;
    Scalar e_before = lyapunov_energy(ds, list, p);
    while (true) {
      bool ok = false;
      try {
        next = spit_step(ds, list, p);
        row.energy_tentative = detail::energy_or_inf(next, list, p);
        ok = row.energy_tentative <= e_before + detail::energy_slack(e_before);
        if (ok && cfg.project && min_slack(next.packing, list) < p.delta) {
          auto gs = gs_project_once(next.packing, list, p.delta);
          DynamicsState<Scalar> repaired = next;
          repaired.packing = gs.state;
          const Scalar e_gs = detail::energy_or_inf(repaired, list, p);
          if (min_slack(repaired.packing, list) >= p.delta && e_gs <= e_before + detail::energy_slack(e_before)) {
            row.projections.push_back({ProjectionKind::kGaussSeidel, row.energy_tentative, e_gs, true});
            row.projection = ProjectionKind::kGaussSeidel;
            next = repaired;
          } else {
            auto proj = e_project_x(next, list, p, ds.lipschitz);
            const bool feasible = min_slack(proj.state.packing, list) >= p.delta * Scalar(1 - 1e-6);
            const bool accepted = feasible && proj.energy_after <= e_before + detail::energy_slack(e_before);
            row.projections.push_back({ProjectionKind::kQpX, proj.energy_before, proj.energy_after, accepted});
            ok = accepted;
            if (accepted) {
              row.projection = ProjectionKind::kQpX;
              next = proj.state;
            }
          }
        }
      } catch (const MidpointInfeasible&) {
        ok = false;
      } catch (const LinearizedInfeasible&) {
        ok = false;
      }
      if (ok) break;
      if (++row.backtracked > cfg.max_backtracks) throw StepUnderflow("backtracking limit reached");
      ds = backtrack(ds);
      e_before = lyapunov_energy(ds, list, p);
      row.projections.clear();
      row.projection = ProjectionKind::kNone;
    }
    row.energy_before = e_before;
    ds = next;
    rec.backtracks += static_cast<std::size_t>(row.backtracked);

    // Joint (x, B) projection.
    if (joint && k % cfg.joint_period == 0) {
      auto proj = e_project_joint(ds, list, p, joint_constants.l_x, joint_constants.l_B, volume_weight);
      const bool feasible = min_slack(proj.state.packing, list) >= p.delta * Scalar(1 - 1e-6);
      const bool accepted = feasible && proj.nonexpansive;
      row.projections.push_back({ProjectionKind::kQpJoint, proj.energy_before, proj.energy_after, accepted});
      if (accepted) {
        ds = proj.state;
        row.projection = ProjectionKind::kQpJoint;
        shifts = build_shift_set(ds.packing.basis(), cfg.cutoff);
      }
    }
    if (row.projection != ProjectionKind::kNone) ++rec.projections;

    // Spectral nudge.
    row.lambda2 = detail::active_lambda2(ds.packing, list, Scalar(cfg.eps_active));
    if (cfg.nudges && ds.packing.size() >= 2 && !history.values.empty() && step % cadence == 0 &&
        nudge_trigger(history, row.lambda2, Scalar(cfg.kappa), rec.m_hat, rec.l_hat, step, cadence)) {
      const auto active = build_contact_graph(ds.packing, list, Scalar(cfg.eps_active));
      const auto near = build_contact_graph(ds.packing, list, Scalar(cfg.eps_near));
      const Matrix<Scalar> dx = lift_mode(ds.packing, active, fiedler(active).vector);
      const auto nudge = nudge_alpha(ds, dx, near, rec.l_hat, composite_gradient(ds, list, p));
      if (nudge.alpha > Scalar(0)) {
        DynamicsState<Scalar> moved = ds;
        moved.packing.set_positions(ds.packing.positions() + nudge.alpha * nudge.direction);
        const Scalar e_now = lyapunov_energy(ds, list, p);
        const Scalar e_moved = detail::energy_or_inf(moved, list, p);
        if (min_slack(moved.packing, list) >= p.delta && e_moved <= e_now + detail::energy_slack(e_now)) {
          ds = moved;
          row.nudged = true;
          history.last_nudge = step;
          ++rec.nudges;
          row.lambda2 = detail::active_lambda2(ds.packing, list, Scalar(cfg.eps_active));
        }
      }
    }
    history.push(row.lambda2);

    ds.step_index = step;
    const auto parts = energy_parts(ds, list, p);
    row.energy = parts.total();
    row.barrier = parts.barrier;
    row.kinetic = parts.kinetic;
    row.min_slack = min_slack(ds.packing, shifts);
    row.dt = ds.dt;
    row.gamma = ds.gamma;
    ++rec.accepted;
    if (observer) observer(row, ds);
    rec.rows.push_back(std::move(row));

    if (converged(ds, list)) {
      rec.termination = Termination::kConverged;
      break;
    }
  }
  rec.final_state = ds;
  return rec;
}

}  // namespace spit
