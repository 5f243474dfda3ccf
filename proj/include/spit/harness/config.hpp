#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spit/rigidity.hpp"
#include "spit/trajectory.hpp"

namespace spit::harness {

struct RunConfig {
  int n = 2;
  int N = 32;
  std::uint64_t seed = 7;

  double nu = 1e-2;
  double delta = 1e-3;
  double eta_dt = 1.0;
  double c = 1.9;
  double R = 2.5;
  double eps_active = 0.05;
  double eps_near = 0.1;
  double kappa = 0.3;
  int W = 20;
  int K = 10;
  int joint_period = 10;
  double volume_weight = 0.0;
  int max_steps = 1000;
  double grad_tol = 1e-8;
  int hvp_refresh = 50;
  bool project = true;
  bool nudges = true;

  double inflate = 0.02;
  double jitter = 0.01;

  double tol_active = 0.05;
  MotionConvention motion_convention = MotionConvention::kShift;
  std::vector<double> nu_schedule{1e-1, 1e-2, 1e-3, 1e-4};
  double certify_delta = 1e-5;
  int certify_max_steps = 20000;
  double certify_grad_tol = 1e-9;

  std::string out_dir = ".";
  bool unsafe = false;

  /// Hard errors for values no computation can use; soft range errors for
  /// values outside the recommended windows unless `unsafe` is set.
  void validate() const;

  TrajectoryConfig<double> trajectory() const;
};

/// "stub32" and "stub64": two-dimensional hexagonal testbeds with the default
/// parameters and N = 32 or 64. Throws on unknown names.
RunConfig preset(const std::string& name);

MotionConvention parse_convention(const std::string& name);
std::string to_string(MotionConvention conv);

}  // namespace spit::harness
