#pragma once

// Contact graphs, Fiedler pairs, Cheeger and Poincare checks, mode lifting
// and the energy-safe spectral nudge.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <span>
#include <vector>

#include "spit/dynamics.hpp"
#include "spit/error.hpp"
#include "spit/geometry.hpp"
#include "spit/power_iteration.hpp"

namespace spit {

/// Canonical edge (i, j, z). The normal is r / |r| with r = x_i - x_j - B z;
/// the reversed edge (j, i, -z) carries the flipped normal.
template <typename Scalar>
struct GraphEdge {
  int i = 0;
  int j = 0;
  IntVector z;
  Vector<Scalar> normal;
  Scalar gap = 0;  // |r| - 2

  bool is_loop() const { return i == j; }
  GraphEdge reversed() const { return {j, i, -z, -normal, gap}; }
};

/// Self-image edges are stored but carry no Laplacian weight and do not count
/// toward vertex degree. Parallel edges (same i, j with different z) count with
/// multiplicity.
template <typename Scalar>
struct ContactGraph {
  int vertex_count = 0;
  std::vector<GraphEdge<Scalar>> edges;
  std::vector<int> degree;

  int max_degree() const { return degree.empty() ? 0 : *std::max_element(degree.begin(), degree.end()); }
};

template <typename Scalar>
ContactGraph<Scalar> build_contact_graph(const PackingState<Scalar>& state, std::span<const ContactIndex> contacts,
                                         Scalar eps) {
  ContactGraph<Scalar> g;
  g.vertex_count = static_cast<int>(state.size());
  g.degree.assign(static_cast<std::size_t>(g.vertex_count), 0);
  for (const auto& c : contacts) {
    const Vector<Scalar> r = contact_vector(state, c);
    const Scalar len = r.norm();
    if (len > Scalar(2) + eps || !(len > Scalar(0))) continue;
    g.edges.push_back({c.i, c.j, c.z, r / len, len - Scalar(2)});
    if (c.i != c.j) {
      ++g.degree[static_cast<std::size_t>(c.i)];
      ++g.degree[static_cast<std::size_t>(c.j)];
    }
  }
  return g;
}

template <typename Scalar>
ContactGraph<Scalar> build_contact_graph(const PackingState<Scalar>& state, const ShiftIndexSet& shifts,
                                         Scalar eps) {
  const auto contacts = find_contacts(state, shifts);
  return build_contact_graph(state, std::span<const ContactIndex>(contacts), eps);
}

/// Combinatorial Laplacian D - A.
template <typename Scalar>
Matrix<Scalar> graph_laplacian(const ContactGraph<Scalar>& g) {
  Matrix<Scalar> lap = Matrix<Scalar>::Zero(g.vertex_count, g.vertex_count);
  for (const auto& e : g.edges) {
    if (e.is_loop()) continue;
    lap(e.i, e.i) += Scalar(1);
    lap(e.j, e.j) += Scalar(1);
    lap(e.i, e.j) -= Scalar(1);
    lap(e.j, e.i) -= Scalar(1);
  }
  return lap;
}

template <typename Scalar>
struct FiedlerPair {
  Scalar lambda2 = 0;
  Vector<Scalar> vector;
};

inline constexpr int kDenseEigenLimit = 64;

namespace detail {

template <typename Scalar>
void orient(Vector<Scalar>& v) {
  Eigen::Index k = 0;
  v.cwiseAbs().maxCoeff(&k);
  if (v[k] < Scalar(0)) v = -v;
}

}  // namespace detail

/// Fiedler pair by dense eigensolve for small graphs; deflated, shifted power
/// iteration otherwise.
template <typename Scalar>
FiedlerPair<Scalar> fiedler(const ContactGraph<Scalar>& g, bool force_iterative = false) {
  if (g.vertex_count < 2) throw Error("Fiedler value needs at least two vertices");
  const Matrix<Scalar> lap = graph_laplacian(g);
  FiedlerPair<Scalar> out;
  if (g.vertex_count <= kDenseEigenLimit && !force_iterative) {
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(lap);
    out.lambda2 = std::max(es.eigenvalues()[1], Scalar(0));
    out.vector = es.eigenvectors().col(1);
  } else {
    const Scalar shift = Scalar(2 * g.max_degree() + 1);
    auto apply = [&](const Vector<Scalar>& v) -> Vector<Scalar> { return shift * v - lap * v; };
    auto deflate = [](const Vector<Scalar>& v) -> Vector<Scalar> {
      return (v.array() - v.mean()).matrix();
    };
    auto res = power_iteration<Scalar>(apply, deflate, seeded_start<Scalar>(g.vertex_count), Scalar(1e-14),
                                       200000, PowerEstimate::kRayleigh);
    out.lambda2 = std::max(shift - res.value, Scalar(0));
    out.vector = deflate(res.vector).normalized();
  }
  detail::orient(out.vector);
  return out;
}

template <typename Scalar>
struct CheegerResult {
  Scalar h = 0;
  Scalar lower = 0;
  Scalar upper = 0;
  Scalar lambda2 = 0;
  bool ok = false;
};

inline constexpr int kExactCheegerLimit = 20;

/// Exact Cheeger constant by subset enumeration and the sandwich
/// h^2 / (2 max_degree) <= lambda2 <= 2 h.
template <typename Scalar>
CheegerResult<Scalar> cheeger_check(const ContactGraph<Scalar>& g) {
  if (g.vertex_count > kExactCheegerLimit) throw Error("exact Cheeger limited to small graphs");
  if (g.vertex_count < 2) throw Error("Cheeger constant needs at least two vertices");
  const int count = g.vertex_count;
  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (std::uint32_t mask = 1; mask < (std::uint32_t{1} << count); ++mask) {
    const int size = std::popcount(mask);
    if (2 * size > count) continue;
    int boundary = 0;
    for (const auto& e : g.edges) {
      if (e.is_loop()) continue;
      const bool in_i = (mask >> e.i) & 1U;
      const bool in_j = (mask >> e.j) & 1U;
      if (in_i != in_j) ++boundary;
    }
    best = std::min(best, Scalar(boundary) / Scalar(size));
  }
  CheegerResult<Scalar> out;
  out.h = best;
  const int dmax = g.max_degree();
  out.lower = dmax > 0 ? best * best / Scalar(2 * dmax) : Scalar(0);
  out.upper = Scalar(2) * best;
  out.lambda2 = fiedler(g).lambda2;
  out.ok = out.lower <= out.lambda2 + Scalar(1e-9) && out.lambda2 <= out.upper + Scalar(1e-9);
  return out;
}

/// sum u_i^2 <= (1 / lambda2) sum_{edges} (u_i - u_j)^2 for mean-zero u.
template <typename Scalar>
bool poincare_check(const ContactGraph<Scalar>& g, const Vector<Scalar>& u, Scalar lambda2) {
  if (!(lambda2 > Scalar(0))) throw Error("Poincare inequality needs a connected graph");
  Scalar dirichlet(0);
  for (const auto& e : g.edges) {
    if (e.is_loop()) continue;
    const Scalar d = u[e.i] - u[e.j];
    dirichlet += d * d;
  }
  const Scalar rhs = dirichlet / lambda2;
  return u.squaredNorm() <= rhs + Scalar(1e-9) * std::max(Scalar(1), rhs);
}

template <typename Scalar>
bool poincare_check(const ContactGraph<Scalar>& g, const Vector<Scalar>& u) {
  return poincare_check(g, u, fiedler(g).lambda2);
}

/// dx_i = (1 / deg i) sum_{j ~ i} (v_i - v_j) n_ij with n_ij pointing from
/// sphere i toward the image of j, then gauge-projected.
template <typename Scalar>
Matrix<Scalar> lift_mode(const PackingState<Scalar>& state, const ContactGraph<Scalar>& g,
                         const Vector<Scalar>& mode) {
  Matrix<Scalar> dx = Matrix<Scalar>::Zero(state.dim(), state.size());
  for (const auto& e : g.edges) {
    if (e.is_loop()) continue;
    // The stored normal points from the image of j toward i.
    const Vector<Scalar> term = (mode[e.i] - mode[e.j]) * -e.normal;
    dx.col(e.i) += term;
    dx.col(e.j) += term;
  }
  for (int k = 0; k < g.vertex_count; ++k) {
    const int deg = g.degree[static_cast<std::size_t>(k)];
    if (deg > 0) dx.col(k) /= Scalar(deg);
  }
  return gauge_project(dx);
}

template <typename Scalar>
struct NudgeStep {
  Scalar alpha = 0;
  Scalar alpha_max = 0;
  Matrix<Scalar> direction;  // dx after the descent flip
  bool flipped = false;
};

/// Step length along dx: alpha_max keeps every near pair from closing past
/// contact to first order; the second bound is where the quadratic model
/// <gbar, a dx> + (L_hat + gamma)/2 a^2 |dx|^2 returns to zero.
template <typename Scalar>
NudgeStep<Scalar> nudge_alpha(const DynamicsState<Scalar>& ds, const Matrix<Scalar>& dx,
                              const ContactGraph<Scalar>& near, Scalar l_hat, const Matrix<Scalar>& gbar) {
  NudgeStep<Scalar> out;
  out.direction = dx;
  const Scalar dx2 = dx.squaredNorm();
  if (!(dx2 > Scalar(0))) return out;
  Scalar slope = inner(gbar, dx);
  if (slope > Scalar(0)) {
    out.direction = -dx;
    out.flipped = true;
    slope = -slope;
  }
  out.alpha_max = std::numeric_limits<Scalar>::infinity();
  for (const auto& e : near.edges) {
    const Scalar closing = std::abs((out.direction.col(e.i) - out.direction.col(e.j)).dot(e.normal));
    out.alpha_max = std::min(out.alpha_max, e.gap / (closing + Scalar(1e-12)));
  }
  const Scalar alpha_e = Scalar(2) * (-slope) / ((l_hat + ds.gamma) * dx2);
  out.alpha = std::max(Scalar(0), std::min(out.alpha_max, alpha_e));
  return out;
}

template <typename Scalar>
Scalar median(std::vector<Scalar> values) {
  if (values.empty()) throw Error("median of an empty window");
  std::sort(values.begin(), values.end());
  const auto mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : (values[mid - 1] + values[mid]) / Scalar(2);
}

template <typename Scalar>
struct NudgeHistory {
  std::size_t window = 20;
  std::deque<Scalar> values;
  std::size_t last_nudge = 0;

  void push(Scalar lambda2) {
    values.push_back(lambda2);
    while (values.size() > window) values.pop_front();
  }
};

/// Threshold tau = kappa * median(window + current) * min(1, m_hat / L_hat).
template <typename Scalar>
Scalar nudge_threshold(const NudgeHistory<Scalar>& history, Scalar lambda2_now, Scalar kappa, Scalar m_hat,
                       Scalar l_hat) {
  if (history.values.empty()) throw Error("nudge history is empty");
  std::vector<Scalar> window(history.values.begin(), history.values.end());
  window.push_back(lambda2_now);
  return kappa * median(std::move(window)) * std::min(Scalar(1), m_hat / l_hat);
}

template <typename Scalar>
bool nudge_trigger(const NudgeHistory<Scalar>& history, Scalar lambda2_now, Scalar kappa, Scalar m_hat,
                   Scalar l_hat, std::size_t step, std::size_t cadence) {
  const Scalar tau = nudge_threshold(history, lambda2_now, kappa, m_hat, l_hat);
  return lambda2_now < tau && step >= history.last_nudge + cadence;
}

/// Default cadence max(K, ceil(4 / (eta dt))).
inline std::size_t nudge_cadence(std::size_t k, double eta_dt) {
  return std::max<std::size_t>(k, static_cast<std::size_t>(std::ceil(4.0 / eta_dt)));
}

}  // namespace spit
