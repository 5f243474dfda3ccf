#include <cstring>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "spit/error.hpp"
#include "spit/harness/commands.hpp"
#include "spit/harness/config.hpp"

namespace {

/// The preset supplies defaults that every other flag or config key overrides,
/// so it is resolved before the parser binds options to the config fields.
std::optional<std::string> find_preset(int argc, char** argv) {
  for (int k = 1; k < argc; ++k) {
    if (std::strcmp(argv[k], "--preset") == 0 && k + 1 < argc) return argv[k + 1];
    if (std::strncmp(argv[k], "--preset=", 9) == 0) return argv[k] + 9;
  }
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace spit::harness;
  init_logging();

  RunConfig cfg;
  std::string preset_name = "stub32";
  try {
    if (auto name = find_preset(argc, argv)) {
      preset_name = *name;
      cfg = preset(preset_name);
    }
  } catch (const spit::Error& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }

  CLI::App app{"Spectral-projected interior trajectories for periodic sphere packings"};
  app.set_config("--config", "", "Flat key = value configuration file");
  app.fallthrough();
  app.require_subcommand(1);

  std::string convention = to_string(cfg.motion_convention);
  app.add_option("--preset", preset_name, "Parameter preset")->check(CLI::IsMember({"stub32", "stub64"}));
  app.add_option("--seed", cfg.seed, "Testbed jitter seed");
  app.add_option("--steps,--max_steps", cfg.max_steps, "Maximum number of steps");
  app.add_option("--out", cfg.out_dir, "Output directory");
  app.add_flag("--unsafe", cfg.unsafe, "Accept parameters outside the recommended ranges");
  app.add_option("--shrink,--volume_weight", cfg.volume_weight, "Volume-descent weight in the joint projection");
  app.add_option("--motion-convention,--motion_convention", convention, "Cell term of motion rows")
      ->check(CLI::IsMember({"shift", "literal"}));

  app.add_option("--n", cfg.n, "Dimension");
  app.add_option("--N", cfg.N, "Number of spheres");
  app.add_option("--nu", cfg.nu, "Barrier strength");
  app.add_option("--delta", cfg.delta, "Slack safety margin");
  app.add_option("--eta_dt", cfg.eta_dt, "Target damping times time step");
  app.add_option("--c", cfg.c, "Step-size constant");
  app.add_option("--R", cfg.R, "Interaction radius");
  app.add_option("--eps_active", cfg.eps_active, "Gap threshold of the active contact graph");
  app.add_option("--eps_near", cfg.eps_near, "Gap threshold of the nudge neighbor set");
  app.add_option("--kappa", cfg.kappa, "Nudge threshold factor");
  app.add_option("--W", cfg.W, "Nudge median window");
  app.add_option("--K", cfg.K, "Nudge cadence");
  app.add_option("--joint_period", cfg.joint_period, "Steps between joint projections (0 disables)");
  app.add_option("--grad_tol", cfg.grad_tol, "Stationarity tolerance");
  app.add_option("--hvp_refresh", cfg.hvp_refresh, "Steps between curvature refreshes");
  app.add_option("--project", cfg.project, "Enable feasibility projection");
  app.add_option("--nudges", cfg.nudges, "Enable spectral nudges");
  app.add_option("--inflate", cfg.inflate, "Testbed lattice inflation");
  app.add_option("--jitter", cfg.jitter, "Testbed jitter amplitude");
  app.add_option("--tol_active", cfg.tol_active, "Slack threshold of the rigidity active set");
  app.add_option("--nu_schedule", cfg.nu_schedule, "Continuation schedule");
  app.add_option("--certify_delta", cfg.certify_delta, "Safety margin used during continuation");
  app.add_option("--certify_max_steps", cfg.certify_max_steps, "Step limit per continuation stage");
  app.add_option("--certify_grad_tol", cfg.certify_grad_tol, "Stationarity tolerance per continuation stage");

  std::string state_path;
  bool exact_cheeger = false;

  auto* run = app.add_subcommand("run", "Run a trajectory and write CSV and summary");
  run->add_option("--state,state", state_path, "Initial state file (default: generated testbed)");
  auto* certify = app.add_subcommand("certify", "Continuation in nu with KKT and rigidity report");
  certify->add_option("--state,state", state_path, "State file")->required();
  auto* spectra = app.add_subcommand("spectra", "Fiedler pair and Cheeger check of the contact graph");
  spectra->add_option("--state,state", state_path, "State file")->required();
  spectra->add_flag("--exact-cheeger", exact_cheeger, "Require the exact Cheeger constant");
  auto* testbed = app.add_subcommand("testbed", "Write the jittered lattice testbed state");

  try {
    app.parse(argc, argv);
    cfg.motion_convention = parse_convention(convention);
    cfg.validate();
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const spit::Error& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }

  if (run->parsed()) {
    std::optional<std::filesystem::path> path;
    if (!state_path.empty()) path = state_path;
    return cmd_run(cfg, path);
  }
  if (certify->parsed()) return cmd_certify(cfg, state_path, std::cout);
  if (spectra->parsed()) return cmd_spectra(cfg, state_path, exact_cheeger, std::cout);
  if (testbed->parsed()) return cmd_testbed(cfg);
  return 1;
}
