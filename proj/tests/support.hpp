#pragma once

// Shared fixtures and finite-difference oracles for the test binaries.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "spit/spit.hpp"
#include "spit/harness/testbed.hpp"

namespace spit::testing {

using Mat = Matrix<double>;
using Vec = Vector<double>;

inline Mat random_matrix(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = scale * (2.0 * harness::uniform01(gen) - 1.0);
  return m;
}

/// Jittered two-dimensional hexagonal packing, feasible for delta = 1e-3 with
/// the default inflation and jitter.
inline PackingState<double> jittered_hex(int count, std::uint64_t seed, double inflate = 0.05, double jitter = 0.02) {
  auto base = harness::lattice_packing(2, count, 1.0 + inflate);
  std::mt19937_64 gen(seed);
  base.set_positions(base.positions() + random_matrix(gen, 2, count, jitter));
  return base;
}

inline PackingState<double> make_state(const Mat& x, const Mat& b) { return {x, LatticeBasis<double>(b)}; }

inline std::vector<ContactIndex> contacts_of(const PackingState<double>& s, double cutoff = 2.5) {
  return find_contacts(s, build_shift_set(s.basis(), cutoff));
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

inline double rel_err(const Mat& a, const Mat& b) {
  return (a - b).norm() / std::max({1e-300, a.norm(), b.norm()});
}

/// Central difference gradient of f at m with step h.
inline Mat fd_gradient(const std::function<double(const Mat&)>& f, const Mat& m, double h) {
  Mat g(m.rows(), m.cols());
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    Mat plus = m;
    Mat minus = m;
    plus.data()[k] += h;
    minus.data()[k] -= h;
    g.data()[k] = (f(plus) - f(minus)) / (2.0 * h);
  }
  return g;
}

/// Central difference of a matrix-valued map along a direction.
inline Mat fd_directional(const std::function<Mat(double)>& f, double h) { return (f(h) - f(-h)) / (2.0 * h); }

/// Dense x-Hessian of U assembled column by column from hvp_x.
inline Mat dense_x_hessian(const PackingState<double>& s, std::span<const ContactIndex> contacts,
                           const BarrierParams<double>& p) {
  const auto size = s.dim() * s.size();
  Mat h(size, size);
  for (Eigen::Index k = 0; k < size; ++k) {
    Mat e = Mat::Zero(s.dim(), s.size());
    e.data()[k] = 1.0;
    const Mat col = hvp_x(s, contacts, p, e);
    h.col(k) = Eigen::Map<const Vec>(col.data(), size);
  }
  return h;
}

/// Hessian restricted to the gauge subspace (orthonormal complement of
/// uniform translations), returned as a dense matrix on that subspace.
inline Mat gauge_restricted(const Mat& h, Eigen::Index n, Eigen::Index count) {
  Mat t = Mat::Zero(n * count, n);
  for (Eigen::Index i = 0; i < count; ++i) t.block(n * i, 0, n, n).setIdentity();
  Eigen::HouseholderQR<Mat> qr(t);
  const Mat q = qr.householderQ();
  const Mat basis = q.rightCols(n * count - n);
  return basis.transpose() * h * basis;
}

}  // namespace spit::testing
