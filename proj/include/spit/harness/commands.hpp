#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "json.hpp"

#include "spit/dynamics.hpp"
#include "spit/harness/config.hpp"
#include "spit/trajectory.hpp"

namespace spit::harness {

/// Reads SPIT_LOG_LEVEL (error, info or debug; default info) and routes log
/// output to standard error.
void init_logging();

/// Active set, rigidity verdict, prestress eigenvalue, multipliers and KKT
/// residuals of a state under the given barrier.
nlohmann::json certification_report(const PackingState<double>& state, const RunConfig& cfg,
                                    const BarrierParams<double>& p, MotionConvention conv);

struct ContinuationStep {
  double nu = 0;
  bool converged = false;
  std::size_t steps = 0;
  double res_x = 0;
  double res_B = 0;
  double comp = 0;
  double force_scale = 0;
  double min_mu = 0;  // smallest clamped multiplier
  double volume = 0;
  double min_slack = 0;
};

struct ContinuationResult {
  std::vector<ContinuationStep> steps;
  DynamicsState<double> final_state;
  nlohmann::json report;
};

/// Re-minimizes V + U_nu along the schedule, each stage a trajectory with the
/// joint projection every step and volume descent switched on.
ContinuationResult run_continuation(const DynamicsState<double>& initial, const RunConfig& cfg);

struct RunResult {
  TrajectoryRecord<double> record;
  nlohmann::json summary;
};

/// Runs a trajectory from `initial`, streaming rows to <out>/trajectory.csv and
/// writing <out>/summary.json and <out>/final_state.json.
RunResult run_and_write(const DynamicsState<double>& initial, const RunConfig& cfg);

/// Subcommand bodies; each returns a process exit code.
int cmd_run(const RunConfig& cfg, const std::optional<std::filesystem::path>& state_path);
int cmd_certify(const RunConfig& cfg, const std::filesystem::path& state_path, std::ostream& out);
int cmd_spectra(const RunConfig& cfg, const std::filesystem::path& state_path, bool exact_cheeger, std::ostream& out);
int cmd_testbed(const RunConfig& cfg);

}  // namespace spit::harness
