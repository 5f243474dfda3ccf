#pragma once

// Small dense strictly convex QP with diagonal quadratic term:
//
//   minimize  1/2 sum_k w_k d_k^2 + c^T d   subject to  A d >= b.
//
// Solved by the dual active-set method of Goldfarb and Idnani: start from the
// unconstrained minimizer and add violated constraints one at a time, dropping
// active constraints whose multiplier would turn negative. Active constraints
// stay linearly independent, so no feasible starting point is needed.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "spit/error.hpp"
#include "spit/geometry.hpp"

namespace spit {

template <typename Scalar>
struct QuadraticProgram {
  Vector<Scalar> weights;  // strictly positive diagonal of the quadratic form
  Vector<Scalar> linear;
  Matrix<Scalar> constraints;  // one row per constraint
  Vector<Scalar> lower;
};

template <typename Scalar>
struct QpSolution {
  Vector<Scalar> solution;
  Vector<Scalar> multipliers;  // one per constraint, zero when inactive
  std::vector<int> active;     // sorted constraint indices
  int iterations = 0;
};

template <typename Scalar>
Scalar qp_objective(const QuadraticProgram<Scalar>& qp, const Vector<Scalar>& d) {
  return Scalar(0.5) * (qp.weights.array() * d.array().square()).sum() + qp.linear.dot(d);
}

/// Stationarity, feasibility and complementarity residuals of a candidate pair.
template <typename Scalar>
struct QpResiduals {
  Scalar stationarity;
  Scalar infeasibility;
  Scalar complementarity;
  Scalar min_multiplier;
};

template <typename Scalar>
QpResiduals<Scalar> qp_residuals(const QuadraticProgram<Scalar>& qp, const QpSolution<Scalar>& sol) {
  const Vector<Scalar> slack = qp.constraints * sol.solution - qp.lower;
  QpResiduals<Scalar> r;
  r.stationarity = (qp.weights.cwiseProduct(sol.solution) + qp.linear -
                    qp.constraints.transpose() * sol.multipliers)
                       .norm();
  r.infeasibility = slack.size() ? std::max(Scalar(0), -slack.minCoeff()) : Scalar(0);
  r.complementarity = std::abs(sol.multipliers.dot(slack));
  r.min_multiplier = sol.multipliers.size() ? sol.multipliers.minCoeff() : Scalar(0);
  return r;
}

template <typename Scalar>
QpSolution<Scalar> solve_qp(const QuadraticProgram<Scalar>& qp, Scalar tol = Scalar(1e-12)) {
  const auto nv = qp.weights.size();
  const auto m = qp.constraints.rows();
  if (qp.linear.size() != nv || (m > 0 && qp.constraints.cols() != nv) || qp.lower.size() != m) {
    throw Error("quadratic program shape mismatch");
  }
  if (nv > 0 && !(qp.weights.minCoeff() > Scalar(0))) {
    throw Error("quadratic program is not strictly convex");
  }
  const Vector<Scalar> winv = qp.weights.cwiseInverse();

  QpSolution<Scalar> out;
  Vector<Scalar> d = -qp.linear.cwiseProduct(winv);
  std::vector<int> active;
  std::vector<Scalar> u;
  std::vector<char> is_active(static_cast<std::size_t>(m), 0);

  const Scalar feas_tol = tol * std::max(Scalar(1), qp.lower.size() ? qp.lower.cwiseAbs().maxCoeff() : Scalar(1));
  const int max_iters = static_cast<int>(10 * (m + nv) + 100);
  int iters = 0;

  while (true) {
    // Most violated inactive constraint; ties go to the lowest index.
    int p = -1;
    Scalar worst = -feas_tol;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (is_active[static_cast<std::size_t>(k)]) continue;
      const Scalar v = qp.constraints.row(k).dot(d) - qp.lower[k];
      if (v < worst) {
        worst = v;
        p = static_cast<int>(k);
      }
    }
    if (p < 0) break;

    Scalar u_p(0);
    const Vector<Scalar> np = qp.constraints.row(p).transpose();
    while (true) {
      if (++iters > max_iters) throw Error("quadratic program iteration limit reached");
      const auto q = static_cast<Eigen::Index>(active.size());
      Vector<Scalar> r(q);
      Vector<Scalar> z = winv.cwiseProduct(np);
      if (q > 0) {
        Matrix<Scalar> nmat(nv, q);
        for (Eigen::Index a = 0; a < q; ++a) nmat.col(a) = qp.constraints.row(active[static_cast<std::size_t>(a)]).transpose();
        const Matrix<Scalar> wn = winv.asDiagonal() * nmat;
        const Matrix<Scalar> gram = nmat.transpose() * wn;
        r = gram.ldlt().solve(wn.transpose() * np);
        z -= wn * r;
      }

      Scalar t1 = std::numeric_limits<Scalar>::infinity();
      int drop = -1;
      for (Eigen::Index a = 0; a < q; ++a) {
        if (r[a] > Scalar(0)) {
          const Scalar ratio = u[static_cast<std::size_t>(a)] / r[a];
          if (ratio < t1) {
            t1 = ratio;
            drop = static_cast<int>(a);
          }
        }
      }
      const Scalar curvature = z.dot(np);
      const bool full_step_possible =
          z.norm() > Scalar(1e-12) * winv.cwiseProduct(np).norm() && curvature > Scalar(0);
      const Scalar viol = np.dot(d) - qp.lower[p];
      const Scalar t2 = full_step_possible ? -viol / curvature : std::numeric_limits<Scalar>::infinity();

      if (!std::isfinite(t1) && !std::isfinite(t2)) throw LinearizedInfeasible();

      const Scalar t = std::min(t1, t2);
      if (std::isfinite(t2)) d += t * z;
      for (Eigen::Index a = 0; a < q; ++a) u[static_cast<std::size_t>(a)] -= t * r[a];
      u_p += t;

      if (t2 <= t1) {
        active.push_back(p);
        u.push_back(u_p);
        is_active[static_cast<std::size_t>(p)] = 1;
        break;
      }
      is_active[static_cast<std::size_t>(active[static_cast<std::size_t>(drop)])] = 0;
      active.erase(active.begin() + drop);
      u.erase(u.begin() + drop);
    }
  }

  out.solution = d;
  out.multipliers = Vector<Scalar>::Zero(m);
  for (std::size_t a = 0; a < active.size(); ++a) {
    out.multipliers[active[a]] = std::max(u[a], Scalar(0));
  }
  out.active = active;
  std::sort(out.active.begin(), out.active.end());
  out.iterations = iters;
  return out;
}

}  // namespace spit
