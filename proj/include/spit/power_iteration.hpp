#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

#include "spit/geometry.hpp"

namespace spit {

enum class PowerEstimate {
  kNorm,      // |A v| for unit v; converges to the spectral radius from below
  kRayleigh,  // <v, A v>; converges to the dominant eigenvalue of a PSD operator
};

template <typename Scalar>
struct PowerResult {
  Scalar value = 0;
  Vector<Scalar> vector;
  int iterations = 0;
  bool converged = false;
};

/// Deterministic unit start vector, seeded so step-size selection is reproducible.
template <typename Scalar>
Vector<Scalar> seeded_start(Eigen::Index size, std::uint64_t seed = 0x5eed5eedULL) {
  std::mt19937_64 gen(seed);
  Vector<Scalar> v(size);
  for (Eigen::Index k = 0; k < size; ++k) {
    v[k] = Scalar(static_cast<double>(gen() >> 11) * 0x1.0p-53) - Scalar(0.5);
  }
  return v;
}

/// Power iteration for a symmetric operator `apply`, with every iterate passed
/// through `project` (e.g. removal of gauge directions). Stops when the
/// relative change of the tracked estimate drops to `tol`.
template <typename Scalar, typename Apply, typename Project>
PowerResult<Scalar> power_iteration(Apply&& apply, Project&& project, Vector<Scalar> start,
                                    Scalar tol, int max_iters, PowerEstimate mode) {
  PowerResult<Scalar> out;
  Vector<Scalar> v = project(start);
  Scalar nrm = v.norm();
  if (!(nrm > Scalar(0))) {
    out.vector = v;
    out.converged = true;
    return out;
  }
  v /= nrm;
  Scalar previous = std::numeric_limits<Scalar>::quiet_NaN();
  for (int it = 1; it <= max_iters; ++it) {
    Vector<Scalar> w = project(apply(v));
    const Scalar wn = w.norm();
    const Scalar estimate = mode == PowerEstimate::kNorm ? wn : v.dot(w);
    out.value = estimate;
    out.iterations = it;
    out.vector = v;
    if (!(wn > Scalar(0))) {
      out.converged = true;
      return out;
    }
    if (std::isfinite(previous) &&
        std::abs(estimate - previous) <= tol * std::max(std::abs(estimate), Scalar(1e-300))) {
      out.converged = true;
      return out;
    }
    previous = estimate;
    v = w / wn;
  }
  return out;
}

}  // namespace spit
