#pragma once

// Damped velocity-Verlet dynamics on the interior barrier, its Lyapunov
// energy, and the explicit step-size rules.

#include <Eigen/Dense>

#include <cmath>
#include <span>

#include "spit/barrier.hpp"
#include "spit/error.hpp"
#include "spit/geometry.hpp"

namespace spit {

template <typename Scalar>
struct DynamicsState {
  PackingState<Scalar> packing;
  Matrix<Scalar> v;
  Matrix<Scalar> x_prev;
  Scalar dt = 0;
  Scalar eta = 0;
  Scalar gamma = 0;
  Scalar lipschitz = 0;  // L_hat the current gamma was computed from
  std::size_t step_index = 0;

  /// Sets (dt, eta, L_hat) and recomputes gamma = 1/dt^2 - L_hat/2.
  void set_steps(Scalar new_dt, Scalar new_eta, Scalar l_hat) {
    if (!(new_dt > Scalar(0)) || !(new_eta > Scalar(0))) throw Error("dt and eta must be positive");
    dt = new_dt;
    eta = new_eta;
    lipschitz = l_hat;
    gamma = Scalar(1) / (dt * dt) - l_hat / Scalar(2);
  }
};

/// Rest state: v = 0 and x_prev = x, so the memory term starts at zero.
template <typename Scalar>
DynamicsState<Scalar> make_dynamics_state(PackingState<Scalar> packing, Scalar dt, Scalar eta,
                                          Scalar l_hat) {
  DynamicsState<Scalar> ds{std::move(packing), {}, {}};
  ds.v = Matrix<Scalar>::Zero(ds.packing.dim(), ds.packing.size());
  ds.x_prev = ds.packing.positions();
  ds.set_steps(dt, eta, l_hat);
  return ds;
}

template <typename Scalar>
struct EnergyParts {
  Scalar barrier = 0;
  Scalar kinetic = 0;
  Scalar memory = 0;
  Scalar total() const { return barrier + kinetic + memory; }
};

template <typename Scalar>
EnergyParts<Scalar> energy_parts(const DynamicsState<Scalar>& ds, std::span<const ContactIndex> contacts,
                                 const BarrierParams<Scalar>& p) {
  EnergyParts<Scalar> e;
  e.barrier = barrier_value(ds.packing, contacts, p);
  e.kinetic = Scalar(0.5) * ds.v.squaredNorm();
  e.memory = ds.gamma / Scalar(2) * (ds.packing.positions() - ds.x_prev).squaredNorm();
  return e;
}

/// E = U + |v|^2 / 2 + gamma/2 |x - x_prev|^2.
template <typename Scalar>
Scalar lyapunov_energy(const DynamicsState<Scalar>& ds, std::span<const ContactIndex> contacts,
                       const BarrierParams<Scalar>& p) {
  return energy_parts(ds, contacts, p).total();
}

/// One step of the damped velocity-Verlet update (before any projection):
///   v_half = v - (eta dt / 2) v - (dt / 2) grad U(x)
///   x_half = x + dt v_half
///   v_new  = (1 - eta dt / 2) v_half - (dt / 2) grad U(x_half)
///   x_new  = x_half
/// Throws MidpointInfeasible if the barrier is undefined at x_half.
template <typename Scalar>
DynamicsState<Scalar> spit_step(const DynamicsState<Scalar>& ds, std::span<const ContactIndex> contacts,
                                const BarrierParams<Scalar>& p) {
  const Scalar damp = ds.eta * ds.dt / Scalar(2);
  if (!(damp > Scalar(0) && damp < Scalar(1))) throw Error("eta * dt must lie in (0, 2)");
  const Matrix<Scalar> g0 = barrier_energy(ds.packing, contacts, p).grad_x;
  const Matrix<Scalar> v_half = (Scalar(1) - damp) * ds.v - ds.dt / Scalar(2) * g0;
  const Matrix<Scalar> x_half = ds.packing.positions() + ds.dt * v_half;

  DynamicsState<Scalar> out = ds;
  out.packing.set_positions(x_half);
  Matrix<Scalar> g1;
  try {
    g1 = barrier_energy(out.packing, contacts, p).grad_x;
  } catch (const InfeasibleSlack&) {
    throw MidpointInfeasible();
  }
  out.v = gauge_project((Scalar(1) - damp) * v_half - ds.dt / Scalar(2) * g1);
  out.x_prev = ds.packing.positions();
  out.step_index = ds.step_index + 1;
  return out;
}

template <typename Scalar>
struct StepSizes {
  Scalar dt;
  Scalar eta;
};

/// dt = min(1/sqrt(2 L), c/sqrt(L + m)), eta = target_eta_dt / dt.
template <typename Scalar>
StepSizes<Scalar> select_steps(Scalar l_hat, Scalar m_hat, Scalar target_eta_dt, Scalar c) {
  if (!(l_hat > Scalar(0))) throw Error("L_hat must be positive");
  if (!(m_hat >= Scalar(0))) throw Error("m_hat must be non-negative");
  if (!(target_eta_dt > Scalar(0) && target_eta_dt < Scalar(2))) throw Error("eta * dt must lie in (0, 2)");
  if (!(c > Scalar(0) && c < Scalar(2))) throw Error("step constant c must lie in (0, 2)");
  const Scalar dt = std::min(Scalar(1) / std::sqrt(Scalar(2) * l_hat), c / std::sqrt(l_hat + m_hat));
  return {dt, target_eta_dt / dt};
}

inline constexpr double kMinTimeStep = 1e-12;

/// Halves dt on the pre-step state, keeping eta * dt fixed and recomputing gamma.
template <typename Scalar>
DynamicsState<Scalar> backtrack(const DynamicsState<Scalar>& ds) {
  const Scalar dt = ds.dt / Scalar(2);
  if (dt < Scalar(kMinTimeStep)) throw StepUnderflow("time step fell below 1e-12 while backtracking");
  DynamicsState<Scalar> out = ds;
  out.set_steps(dt, ds.eta * Scalar(2), ds.lipschitz);
  return out;
}

/// Composite gradient grad_x U + gamma (x - x_prev).
template <typename Scalar>
Matrix<Scalar> composite_gradient(const DynamicsState<Scalar>& ds, std::span<const ContactIndex> contacts,
                                  const BarrierParams<Scalar>& p) {
  return barrier_energy(ds.packing, contacts, p).grad_x +
         ds.gamma * (ds.packing.positions() - ds.x_prev);
}

/// Coefficients of the exact two-term recursion e_{k+1} = alpha e_k - beta e_{k-1}
/// that the update produces on a scalar quadratic U = lambda e^2 / 2, obtained
/// by eliminating v.
template <typename Scalar>
std::pair<Scalar, Scalar> scalar_mode_recursion(Scalar lambda, Scalar dt, Scalar eta) {
  const Scalar keep = Scalar(1) - eta * dt / Scalar(2);
  return {Scalar(1) + keep * keep - lambda * dt * dt / Scalar(2) * (Scalar(1) + keep), keep * keep};
}

/// First-order recursion alpha = 2 - eta dt/2 - lambda dt^2/2, beta = 1 - eta dt/2
/// used in the local linear convergence argument.
template <typename Scalar>
std::pair<Scalar, Scalar> linearized_mode_recursion(Scalar lambda, Scalar dt, Scalar eta) {
  return {Scalar(2) - eta * dt / Scalar(2) - lambda * dt * dt / Scalar(2), Scalar(1) - eta * dt / Scalar(2)};
}

/// Largest root modulus of z^2 - alpha z + beta.
template <typename Scalar>
Scalar companion_spectral_radius(Scalar alpha, Scalar beta) {
  const Scalar disc = alpha * alpha - Scalar(4) * beta;
  if (disc >= Scalar(0)) {
    const Scalar root = std::sqrt(disc);
    return std::max(std::abs((alpha + root) / Scalar(2)), std::abs((alpha - root) / Scalar(2)));
  }
  return std::sqrt(beta);
}

/// Jury stability test for z^2 - alpha z + beta: both roots inside the unit disc.
template <typename Scalar>
bool jury_stable(Scalar alpha, Scalar beta) {
  return std::abs(beta) < Scalar(1) && Scalar(1) - alpha + beta > Scalar(0) &&
         Scalar(1) + alpha + beta > Scalar(0);
}

}  // namespace spit
