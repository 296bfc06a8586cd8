// qbcharge: regenerate charging-protocol data as CSV.
//
//   qbcharge sweep-tau [--config FILE] [--out DIR] [--steps N] [--quad-points N]
//                      [--space full|sector] [--workers N]
//   qbcharge trace     ...
//   qbcharge cost      ...
//   qbcharge selftest
//
// Exit codes: 0 success, 2 config error, 3 numerical-contract failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "qbcharge/qbcharge.hpp"
#include "qbcharge/selftest.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitContract = 3;

struct Overrides {
  std::string config;
  std::string out;
  std::optional<int> steps;
  std::optional<int> quad_points;
  std::string space;
  std::optional<int> workers;
};

void add_scenario_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Scenario config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "Output directory (overrides output_dir)");
  cmd->add_option("--steps", o.steps, "Propagation steps per tau");
  cmd->add_option("--quad-points", o.quad_points, "Quadrature points for the energy cost (odd)");
  cmd->add_option("--space", o.space, "Working space")->check(CLI::IsMember({"full", "sector"}));
  cmd->add_option("--workers", o.workers, "Worker threads (default: $QBCHARGE_WORKERS or all cores)");
}

int run_scenario_command(qbcharge::ScenarioKind kind, const Overrides& o) {
  using namespace qbcharge;
  ScenarioConfig cfg;
  try {
    cfg = o.config.empty() ? default_scenario(kind) : load_config(o.config);
    if (cfg.kind != kind) {
      throw ConfigError("config describes a '" + std::string(to_string(cfg.kind)) + "' scenario, not '" +
                        std::string(to_string(kind)) + "'");
    }
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (o.steps) cfg.numerics.steps_per_tau = *o.steps;
    if (o.quad_points) cfg.numerics.quad_points = *o.quad_points;
    if (!o.space.empty()) cfg.numerics.space = parse_space(o.space);
    if (o.workers) cfg.numerics.workers = *o.workers;
    validate(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  const RunOutput out = run_scenario(cfg);
  const WrittenFiles files = write_outputs(out, cfg);
  std::cout << "wrote " << files.csv.string() << "\n" << "wrote " << files.manifest.string() << "\n";
  if (out.contract_failure()) {
    std::cerr << "numerical-contract failure: " << out.failed << " failed, " << out.flagged
              << " unconverged run(s); see " << files.manifest.string() << "\n";
    return kExitContract;
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Charger-to-battery ergotropy transfer: adiabatic and counter-diabatic driving"};
  app.set_version_flag("--version", std::string(qbcharge::kVersion));
  app.require_subcommand(1);

  Overrides sweep_o, trace_o, cost_o;
  auto* sweep = app.add_subcommand("sweep-tau", "Final battery ergotropy versus Omega*tau");
  auto* trace = app.add_subcommand("trace", "Battery ergotropy versus Omega*t in the always-on regime");
  auto* cost = app.add_subcommand("cost", "Adiabatic and counter-diabatic energy cost versus Omega*tau");
  auto* self = app.add_subcommand("selftest", "Run the built-in oracle checks");
  add_scenario_options(sweep, sweep_o);
  add_scenario_options(trace, trace_o);
  add_scenario_options(cost, cost_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*sweep) return run_scenario_command(qbcharge::ScenarioKind::SweepTau, sweep_o);
    if (*trace) return run_scenario_command(qbcharge::ScenarioKind::Trace, trace_o);
    if (*cost) return run_scenario_command(qbcharge::ScenarioKind::Cost, cost_o);
    if (*self) return qbcharge::selftest::run(std::cout) ? 0 : kExitContract;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitContract;
  }
  return 0;
}
