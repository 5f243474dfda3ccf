#include "spit/harness/config.hpp"

#include <cmath>
#include <string>

#include "spit/error.hpp"

namespace spit::harness {

namespace {

void soft_range(bool ok, bool unsafe, const std::string& what) {
  if (!ok && !unsafe) throw Error(what + " (pass --unsafe to override)");
}

}  // namespace

void RunConfig::validate() const {
  if (n < 1) throw Error("dimension n must be at least 1");
  if (N < 1) throw Error("sphere count N must be at least 1");
  if (!(nu > 0.0)) throw Error("nu must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw Error("delta must lie in (0, 1)");
  if (!(certify_delta > 0.0 && certify_delta < 1.0)) throw Error("certify_delta must lie in (0, 1)");
  if (!(eta_dt > 0.0 && eta_dt < 2.0)) throw Error("eta_dt must lie in (0, 2)");
  if (!(c > 0.0 && c < 2.0)) throw Error("c must lie in (0, 2)");
  if (!(R > 0.0)) throw Error("R must be positive");
  if (!(eps_active > 0.0) || !(eps_near > 0.0)) throw Error("contact thresholds must be positive");
  if (W < 1 || K < 1) throw Error("W and K must be positive");
  if (joint_period < 0 || hvp_refresh < 0 || max_steps < 0) throw Error("periods and step counts must be non-negative");
  if (!(volume_weight >= 0.0)) throw Error("volume weight must be non-negative");
  if (!(inflate >= 0.0) || !(jitter >= 0.0)) throw Error("inflate and jitter must be non-negative");
  for (double v : nu_schedule) {
    if (!(v > 0.0)) throw Error("continuation schedule entries must be positive");
  }

  soft_range(eta_dt > 0.5 && eta_dt < 1.5, unsafe, "eta_dt outside (0.5, 1.5)");
  soft_range(kappa >= 0.2 && kappa <= 0.4, unsafe, "kappa outside [0.2, 0.4]");
  soft_range(W >= 10 && W <= 50, unsafe, "W outside [10, 50]");
}

TrajectoryConfig<double> RunConfig::trajectory() const {
  TrajectoryConfig<double> t;
  t.params.nu = nu;
  t.params.delta = delta;
  t.cutoff = R;
  t.eta_dt = eta_dt;
  t.c = c;
  t.eps_active = eps_active;
  t.eps_near = eps_near;
  t.kappa = kappa;
  t.window = W;
  t.cadence = K;
  t.joint_period = joint_period;
  t.volume_weight = volume_weight;
  t.max_steps = max_steps;
  t.grad_tol = grad_tol;
  t.hvp_refresh = hvp_refresh;
  t.project = project;
  t.nudges = nudges;
  return t;
}

RunConfig preset(const std::string& name) {
  RunConfig cfg;
  if (name == "stub32") {
    cfg.N = 32;
  } else if (name == "stub64") {
    cfg.N = 64;
  } else {
    throw Error("unknown preset: " + name);
  }
  return cfg;
}

MotionConvention parse_convention(const std::string& name) {
  if (name == "shift") return MotionConvention::kShift;
  if (name == "literal") return MotionConvention::kLiteral;
  throw Error("unknown motion convention: " + name);
}

std::string to_string(MotionConvention conv) {
  return conv == MotionConvention::kShift ? "shift" : "literal";
}

}  // namespace spit::harness
