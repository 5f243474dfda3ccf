#include "spit/harness/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "spit/barrier.hpp"
#include "spit/error.hpp"
#include "spit/harness/io.hpp"
#include "spit/harness/testbed.hpp"
#include "spit/rigidity.hpp"
#include "spit/spectral.hpp"

namespace spit::harness {

namespace {

nlohmann::json real_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

nlohmann::json contact_json(const ContactIndex& c) {
  return {{"i", c.i}, {"j", c.j}, {"z", std::vector<int>(c.z.data(), c.z.data() + c.z.size())}};
}

}  // namespace

void init_logging() {
  auto logger = spdlog::get("spit");
  if (!logger) logger = spdlog::stderr_color_mt("spit");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("SPIT_LOG_LEVEL");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
  }
}

nlohmann::json certification_report(const PackingState<double>& state, const RunConfig& cfg,
                                    const BarrierParams<double>& p, MotionConvention conv) {
  const auto shifts = build_shift_set(state.basis(), cfg.R);
  const auto contacts = find_contacts(state, shifts);
  const std::span<const ContactIndex> list(contacts);
  const auto active = active_set(state, list, cfg.tol_active);
  const std::span<const ContactIndex> act(active);

  const auto mu = recover_multipliers(state, list, p);
  const auto kkt = kkt_residual(state, list, std::span<const double>(mu.clamped));
  const auto mu_active = recover_multipliers(state, act, p);
  const auto rig = is_periodically_rigid(state, act, conv);
  const auto pre = prestress_stable(state, act, std::span<const double>(mu_active.clamped), conv);

  nlohmann::json active_json = nlohmann::json::array();
  for (std::size_t k = 0; k < active.size(); ++k) {
    auto c = contact_json(active[k]);
    c["slack"] = pair_slack(state, active[k]);
    c["mu"] = mu_active.raw[k];
    active_json.push_back(std::move(c));
  }
  return {{"motion_convention", to_string(conv)},
          {"active_set", active_json},
          {"rigid", rig.rigid},
          {"nontrivial_dim", rig.nontrivial_dim},
          {"nontrivial_dim_loose", rig.nontrivial_dim_loose},
          {"prestress_stable", pre.stable},
          {"prestress_min_eig", real_or_null(pre.min_eig)},
          {"licq_sigma_min", real_or_null(licq_sigma_min(state, act))},
          {"kkt", {{"res_x", kkt.res_x}, {"res_B", kkt.res_B}, {"comp", kkt.comp}, {"force_scale", kkt.force_scale}}},
          {"mu_raw", mu.raw},
          {"mu_clamped", mu.clamped}};
}

ContinuationResult run_continuation(const DynamicsState<double>& initial, const RunConfig& cfg) {
  ContinuationResult out{{}, initial, {}};
  DynamicsState<double> ds = initial;
  nlohmann::json stages = nlohmann::json::array();
  for (double nu : cfg.nu_schedule) {
    RunConfig stage = cfg;
    stage.nu = nu;
    stage.delta = cfg.certify_delta;
    stage.joint_period = 1;
    stage.volume_weight = cfg.volume_weight > 0.0 ? cfg.volume_weight : 1.0;
    stage.nudges = false;
    stage.max_steps = cfg.certify_max_steps;
    stage.grad_tol = cfg.certify_grad_tol;
    ds.v.setZero();
    ds.x_prev = ds.packing.positions();
    const auto rec = run_trajectory(ds, stage.trajectory());
    ds = rec.final_state;

    const BarrierParams<double> p{nu, cfg.certify_delta};
    const auto contacts = find_contacts(ds.packing, build_shift_set(ds.packing.basis(), cfg.R));
    const std::span<const ContactIndex> list(contacts);
    const auto mu = recover_multipliers(ds.packing, list, p);
    const auto kkt = kkt_residual(ds.packing, list, std::span<const double>(mu.clamped));

    ContinuationStep step;
    step.nu = nu;
    step.converged = rec.termination == Termination::kConverged;
    step.steps = rec.rows.size();
    step.res_x = kkt.res_x;
    step.res_B = kkt.res_B;
    step.comp = kkt.comp;
    step.force_scale = kkt.force_scale;
    step.min_mu = mu.clamped.empty() ? 0.0 : *std::min_element(mu.clamped.begin(), mu.clamped.end());
    step.volume = cell_volume(ds.packing.basis());
    step.min_slack = min_slack(ds.packing, list);
    out.steps.push_back(step);
    spdlog::info("nu {:g}: {} steps, converged {}, res_x {:.3e}, res_B {:.3e}, comp {:.6g}", nu, step.steps,
                 step.converged, step.res_x, step.res_B, step.comp);

    stages.push_back({{"nu", nu},
                      {"converged", step.converged},
                      {"steps", step.steps},
                      {"res_x", step.res_x},
                      {"res_B", step.res_B},
                      {"comp", step.comp},
                      {"force_scale", step.force_scale},
                      {"min_mu_clamped", step.min_mu},
                      {"volume", step.volume},
                      {"min_slack", step.min_slack}});
  }
  out.final_state = ds;

  const BarrierParams<double> last{cfg.nu_schedule.empty() ? cfg.nu : cfg.nu_schedule.back(), cfg.certify_delta};
  out.report = {{"delta", cfg.certify_delta},
                {"continuation", stages},
                {"shift", certification_report(ds.packing, cfg, last, MotionConvention::kShift)},
                {"literal", certification_report(ds.packing, cfg, last, MotionConvention::kLiteral)}};
  return out;
}

RunResult run_and_write(const DynamicsState<double>& initial, const RunConfig& cfg) {
  cfg.validate();
  const std::filesystem::path dir(cfg.out_dir);
  CsvWriter csv(dir / "trajectory.csv");
  auto observer = [&csv](const TrajectoryRow<double>& row, const DynamicsState<double>&) {
    csv.write(row);
    if (row.step % 100 == 0) {
      spdlog::debug("step {}: E {:.10g}, min slack {:.4g}, lambda2 {:.4g}", row.step, row.energy, row.min_slack,
                    row.lambda2);
    }
  };
  RunResult out{run_trajectory(initial, cfg.trajectory(), observer), {}};
  const auto& rec = out.record;
  const auto& ds = rec.final_state;

  const BarrierParams<double> p{cfg.nu, cfg.delta};
  const auto shifts = build_shift_set(ds.packing.basis(), cfg.R);
  const auto contacts = find_contacts(ds.packing, shifts);
  const std::span<const ContactIndex> list(contacts);
  const double lambda2 = ds.packing.size() >= 2
                             ? fiedler(build_contact_graph(ds.packing, list, cfg.eps_active)).lambda2
                             : 0.0;

  out.summary = {{"seed", cfg.seed},
                 {"N", cfg.N},
                 {"n", cfg.n},
                 {"termination", rec.termination == Termination::kConverged ? "converged" : "max_steps"},
                 {"initial_E", rec.initial_energy},
                 {"final_E", lyapunov_energy(ds, list, p)},
                 {"final_min_slack", min_slack(ds.packing, list)},
                 {"final_lambda2", lambda2},
                 {"final_volume", cell_volume(ds.packing.basis())},
                 {"L_hat", rec.l_hat},
                 {"m_hat", rec.m_hat},
                 {"counts",
                  {{"steps", rec.rows.size()},
                   {"accepted", rec.accepted},
                   {"backtracked", rec.backtracks},
                   {"nudged", rec.nudges},
                   {"projected", rec.projections}}},
                 {"certification", certification_report(ds.packing, cfg, p, cfg.motion_convention)}};
  write_json(dir / "summary.json", out.summary);
  write_state(dir / "final_state.json", ds);
  return out;
}

int cmd_run(const RunConfig& cfg, const std::optional<std::filesystem::path>& state_path) {
  return guarded([&] {
    const auto initial = state_path ? read_state(*state_path) : make_testbed(cfg);
    const auto result = run_and_write(initial, cfg);
    spdlog::info("run finished after {} steps: E {:.10g}, {} backtracks, {} nudges", result.record.rows.size(),
                 result.summary["final_E"].get<double>(), result.record.backtracks, result.record.nudges);
    return 0;
  });
}

int cmd_certify(const RunConfig& cfg, const std::filesystem::path& state_path, std::ostream& out) {
  return guarded([&] {
    cfg.validate();
    const auto initial = read_state(state_path);
    const auto result = run_continuation(initial, cfg);
    write_json(std::filesystem::path(cfg.out_dir) / "certificate.json", result.report);
    out << result.report.dump(2) << '\n';
    return 0;
  });
}

int cmd_spectra(const RunConfig& cfg, const std::filesystem::path& state_path, bool exact_cheeger, std::ostream& out) {
  return guarded([&] {
    const auto ds = read_state(state_path);
    const auto count = static_cast<int>(ds.packing.size());
    if (exact_cheeger && count > kExactCheegerLimit) throw Error("exact Cheeger limited to small graphs");
    const auto contacts = find_contacts(ds.packing, build_shift_set(ds.packing.basis(), cfg.R));
    const auto graph = build_contact_graph(ds.packing, std::span<const ContactIndex>(contacts), cfg.eps_active);
    const auto pair = fiedler(graph);
    out << "lambda2 " << format_real(pair.lambda2) << '\n';
    out << "fiedler";
    for (Eigen::Index k = 0; k < pair.vector.size(); ++k) out << ' ' << format_real(pair.vector[k]);
    out << '\n';
    if (count <= kExactCheegerLimit) {
      const auto ch = cheeger_check(graph);
      out << "cheeger " << format_real(ch.h) << " lower " << format_real(ch.lower) << " upper "
          << format_real(ch.upper) << ' ' << (ch.ok ? "ok" : "violated") << '\n';
    }
    return 0;
  });
}

int cmd_testbed(const RunConfig& cfg) {
  return guarded([&] {
    const auto ds = make_testbed(cfg);
    const auto path = std::filesystem::path(cfg.out_dir) / "state.json";
    write_state(path, ds);
    spdlog::info("wrote {}", path.string());
    return 0;
  });
}

}  // namespace spit::harness
