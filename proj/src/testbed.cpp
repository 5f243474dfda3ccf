#include "spit/harness/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "spit/barrier.hpp"
#include "spit/error.hpp"
#include "spit/projection.hpp"

namespace spit::harness {

std::vector<int> grid_shape(int count, int dims) {
  std::vector<int> factors;
  int rest = count;
  for (int f = 2; f * f <= rest; ++f) {
    while (rest % f == 0) {
      factors.push_back(f);
      rest /= f;
    }
  }
  if (rest > 1) factors.push_back(rest);
  std::sort(factors.rbegin(), factors.rend());
  std::vector<int> shape(static_cast<std::size_t>(dims), 1);
  for (int f : factors) *std::min_element(shape.begin(), shape.end()) *= f;
  std::sort(shape.rbegin(), shape.rend());
  return shape;
}

PackingState<double> lattice_packing(int n, int count, double scale) {
  const auto shape = grid_shape(count, n);
  Matrix<double> cell = Matrix<double>::Identity(n, n) * 2.0;
  if (n == 2) {
    cell << 2.0, 1.0,
            0.0, std::sqrt(3.0);
  }
  cell *= scale;

  Matrix<double> x(n, count);
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  for (int k = 0; k < count; ++k) {
    Vector<double> frac(n);
    for (int d = 0; d < n; ++d) frac[d] = idx[static_cast<std::size_t>(d)];
    x.col(k) = cell * frac;
    for (int d = 0; d < n; ++d) {
      if (++idx[static_cast<std::size_t>(d)] < shape[static_cast<std::size_t>(d)]) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  Matrix<double> basis = cell;
  for (int d = 0; d < n; ++d) basis.col(d) *= shape[static_cast<std::size_t>(d)];
  return {x, LatticeBasis<double>(basis)};
}

DynamicsState<double> make_testbed(const RunConfig& cfg) {
  cfg.validate();
  PackingState<double> packing = lattice_packing(cfg.n, cfg.N, 1.0 + cfg.inflate);
  if (cfg.jitter > 0.0) {
    std::mt19937_64 gen(cfg.seed);
    Matrix<double> x = packing.positions();
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      for (Eigen::Index d = 0; d < x.rows(); ++d) x(d, k) += cfg.jitter * (2.0 * uniform01(gen) - 1.0);
    }
    packing.set_positions(x);
  }

  BarrierParams<double> p{cfg.nu, cfg.delta};
  const auto shifts = build_shift_set(packing.basis(), cfg.R);
  for (int round = 0; round < 100; ++round) {
    const auto contacts = find_contacts(packing, shifts);
    const std::span<const ContactIndex> list(contacts);
    if (min_slack(packing, list) >= cfg.delta) {
      return make_dynamics_state(packing, 1.0, cfg.eta_dt, 0.0);
    }
    packing = gs_project_once(packing, list, cfg.delta).state;
    if (min_slack(packing, list) >= cfg.delta) continue;
    if (!(min_slack(packing, list) > 0.0)) continue;
    const double l_hat = estimate_L(packing, list, p).value;
    const auto steps = select_steps(l_hat, 0.0, cfg.eta_dt, cfg.c);
    auto ds = make_dynamics_state(packing, steps.dt, steps.eta, l_hat);
    packing = e_project_x(ds, list, p, l_hat).state.packing;
  }
  throw Error("testbed did not reach feasibility in 100 projection rounds");
}

}  // namespace spit::harness
