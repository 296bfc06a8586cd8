#pragma once

// End-to-end experiments driven by a small sectioned key-value config:
// final-ergotropy sweeps over Omega*tau, always-on ergotropy traces, and
// energy-cost curves. Each run produces a CSV body and a JSON manifest with
// per-point convergence diagnostics.
//
// Config format (unknown sections/keys are rejected):
//
//   # comment
//   [scenario]
//   kind = sweep-tau            # sweep-tau | trace | cost
//   name = sweep_tau            # output base name
//   schedules = linear, sine, cube-root
//   drivers = adiabatic, tqd
//   omega_tau = 1, 2, 5         # explicit grid, or the three range keys:
//   omega_tau_min = 0.5
//   omega_tau_max = 20
//   omega_tau_points = 40
//   t_end_multiplier = 3        # trace window, in units of tau
//   output_dir = out
//
//   [model]
//   omega_drive = 1
//   omega_ref = 1
//   clamp_at_tau = false
//
//   [numerics]
//   steps_per_tau = 2000
//   quad_points = 1001
//   space = sector              # sector | full
//   derivative = finite-difference   # finite-difference | off-diagonal
//   fd_delta = 1e-6
//   gap_tol = 1e-8
//   workers = 0                 # 0: $QBCHARGE_WORKERS, else hardware threads
//   convergence_check = true
//   convergence_gate = 1e-6
//   trace_stride = 10

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qbcharge/battery_model.hpp"
#include "qbcharge/dynamics.hpp"
#include "qbcharge/errors.hpp"
#include "qbcharge/spectral_flow.hpp"
#include "qbcharge/thermo_metrics.hpp"
#include "qbcharge/version.hpp"

namespace qbcharge {

enum class ScenarioKind { SweepTau, Trace, Cost };

inline std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::SweepTau: return "sweep-tau";
    case ScenarioKind::Trace: return "trace";
    case ScenarioKind::Cost: return "cost";
  }
  return "?";
}

inline ScenarioKind parse_scenario_kind(std::string_view s) {
  if (s == "sweep-tau" || s == "sweep_tau") return ScenarioKind::SweepTau;
  if (s == "trace") return ScenarioKind::Trace;
  if (s == "cost") return ScenarioKind::Cost;
  throw ConfigError("unknown scenario kind '" + std::string(s) + "'");
}

inline std::string_view to_string(DerivativeMethod m) {
  return m == DerivativeMethod::FiniteDifference ? "finite-difference" : "off-diagonal";
}

inline DerivativeMethod parse_derivative_method(std::string_view s) {
  if (s == "finite-difference" || s == "fd") return DerivativeMethod::FiniteDifference;
  if (s == "off-diagonal" || s == "offdiagonal") return DerivativeMethod::OffDiagonal;
  throw ConfigError("unknown derivative method '" + std::string(s) + "'");
}

struct Numerics {
  int steps_per_tau = kDefaultStepsPerTau;
  int quad_points = 1001;
  Space space = Space::Sector3;
  DerivativeMethod derivative = DerivativeMethod::FiniteDifference;
  double fd_delta = 1e-6;
  double gap_tol = 1e-8;
  int workers = 0;
  bool convergence_check = true;
  double convergence_gate = 1e-6;
  int trace_stride = 10;

  FlowOptions flow() const {
    FlowOptions f;
    f.method = derivative;
    f.fd_delta_rel = fd_delta;
    f.gap_tol_rel = gap_tol;
    return f;
  }
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::SweepTau;
  std::string name;
  std::vector<std::string> schedules;
  std::vector<Driver> drivers;
  std::vector<double> omega_tau;
  double t_end_multiplier = 3.0;
  std::string output_dir = ".";
  double omega_drive = 1.0;
  std::optional<double> omega_ref;
  bool clamp_at_tau = false;
  Numerics numerics;

  DriveConfig drive(const std::string& schedule, double omega_tau_value) const {
    DriveParams p;
    p.omega_drive = omega_drive;
    p.omega_ref = omega_ref;
    p.space = numerics.space;
    p.clamp_at_tau = clamp_at_tau;
    return DriveConfig(Schedule::parse(schedule), omega_tau_value / omega_drive, p);
  }
};

/// Evenly spaced grid with `points` values over [lo, hi].
inline std::vector<double> linspace(double lo, double hi, int points) {
  std::vector<double> out;
  for (int i = 0; i < points; ++i)
    out.push_back(points == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (points - 1));
  return out;
}

/// Configuration reproducing the corresponding figure-style experiment.
inline ScenarioConfig default_scenario(ScenarioKind kind) {
  ScenarioConfig c;
  c.kind = kind;
  switch (kind) {
    case ScenarioKind::SweepTau:
      c.name = "sweep_tau";
      c.schedules = {"linear", "sine", "cube-root"};
      c.drivers = {Driver::Adiabatic, Driver::TQD};
      c.omega_tau = linspace(0.5, 20.0, 40);
      c.t_end_multiplier = 1.0;
      break;
    case ScenarioKind::Trace:
      c.name = "trace";
      c.schedules = {"linear", "sine", "cube-root"};
      c.drivers = {Driver::Adiabatic, Driver::TQD};
      c.omega_tau = {1.0, 10.0};
      c.t_end_multiplier = 3.0;
      break;
    case ScenarioKind::Cost:
      c.name = "cost";
      c.schedules = {"linear"};
      c.drivers = {Driver::Adiabatic, Driver::TQD};
      c.omega_tau = linspace(1.0, 20.0, 39);
      c.t_end_multiplier = 1.0;
      break;
  }
  return c;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  }
  if (pos != v.size() || !std::isfinite(d)) throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  return d;
}

inline int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_double(key, v);
  if (d != std::floor(d) || std::abs(d) > 1e9) throw ConfigError("key '" + key + "': expected an integer");
  return static_cast<int>(d);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false");
}

} // namespace detail

/// Rejects configurations the runners cannot execute.
inline void validate(const ScenarioConfig& c) {
  if (c.name.empty()) throw ConfigError("scenario name is empty");
  if (c.schedules.empty()) throw ConfigError("schedule list is empty");
  for (const auto& s : c.schedules) (void)Schedule::parse(s);
  if (c.drivers.empty()) throw ConfigError("driver list is empty");
  if (c.omega_tau.empty()) throw ConfigError("omega_tau grid is empty");
  if (c.kind != ScenarioKind::Trace && c.omega_tau.size() < 2)
    throw ConfigError("sweeps need at least 2 omega_tau points");
  for (double v : c.omega_tau)
    if (!(v > 0.0)) throw ConfigError("omega_tau values must be > 0");
  if (!(c.omega_drive > 0.0)) throw ConfigError("omega_drive must be > 0");
  if (c.omega_ref && !(*c.omega_ref > 0.0)) throw ConfigError("omega_ref must be > 0");
  if (!(c.t_end_multiplier >= 1.0)) throw ConfigError("t_end_multiplier must be >= 1");
  const auto& n = c.numerics;
  if (n.steps_per_tau < kMinSteps) throw ConfigError("steps_per_tau must be >= 100");
  if (n.quad_points < 3 || n.quad_points % 2 == 0) throw ConfigError("quad_points must be odd and >= 3");
  if (!(n.fd_delta > 0.0)) throw ConfigError("fd_delta must be > 0");
  if (!(n.gap_tol > 0.0)) throw ConfigError("gap_tol must be > 0");
  if (n.workers < 0) throw ConfigError("workers must be >= 0");
  if (n.trace_stride < 1) throw ConfigError("trace_stride must be >= 1");
  if (!(n.convergence_gate > 0.0)) throw ConfigError("convergence_gate must be > 0");
}

/// Parses a config; `origin` names the source in error messages.
inline ScenarioConfig parse_config(std::istream& in, const std::string& origin = "<config>") {
  ScenarioConfig c;
  std::optional<double> lo, hi;
  std::optional<int> points;
  bool explicit_grid = false;
  bool have_kind = false;
  std::map<std::string, std::string> raw;  // "section.key" -> value

  std::string section;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + msg);
  };
  std::vector<std::pair<std::string, int>> order;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    std::string s = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail("malformed section header");
      section = detail::trim(s.substr(1, s.size() - 2));
      if (section != "scenario" && section != "model" && section != "numerics")
        fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    if (section.empty()) fail("key outside of a section");
    const std::string key = section + "." + detail::trim(s.substr(0, eq));
    const std::string value = detail::trim(s.substr(eq + 1));
    if (raw.count(key)) fail("duplicate key '" + key + "'");
    raw[key] = value;
    order.emplace_back(key, lineno);
  }

  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"scenario.kind", [&](auto&, auto& v) { c.kind = parse_scenario_kind(v); have_kind = true; }},
      {"scenario.name", [&](auto&, auto& v) { c.name = v; }},
      {"scenario.schedules", [&](auto&, auto& v) { c.schedules = detail::split_list(v); }},
      {"scenario.drivers",
       [&](auto&, auto& v) {
         c.drivers.clear();
         for (const auto& d : detail::split_list(v)) c.drivers.push_back(parse_driver(d));
       }},
      {"scenario.omega_tau",
       [&](auto& k, auto& v) {
         explicit_grid = true;
         c.omega_tau.clear();
         for (const auto& x : detail::split_list(v)) c.omega_tau.push_back(detail::parse_double(k, x));
       }},
      {"scenario.omega_tau_min", [&](auto& k, auto& v) { lo = detail::parse_double(k, v); }},
      {"scenario.omega_tau_max", [&](auto& k, auto& v) { hi = detail::parse_double(k, v); }},
      {"scenario.omega_tau_points", [&](auto& k, auto& v) { points = detail::parse_int(k, v); }},
      {"scenario.t_end_multiplier", [&](auto& k, auto& v) { c.t_end_multiplier = detail::parse_double(k, v); }},
      {"scenario.output_dir", [&](auto&, auto& v) { c.output_dir = v; }},
      {"model.omega_drive", [&](auto& k, auto& v) { c.omega_drive = detail::parse_double(k, v); }},
      {"model.omega_ref", [&](auto& k, auto& v) { c.omega_ref = detail::parse_double(k, v); }},
      {"model.clamp_at_tau", [&](auto& k, auto& v) { c.clamp_at_tau = detail::parse_bool(k, v); }},
      {"numerics.steps_per_tau", [&](auto& k, auto& v) { c.numerics.steps_per_tau = detail::parse_int(k, v); }},
      {"numerics.quad_points", [&](auto& k, auto& v) { c.numerics.quad_points = detail::parse_int(k, v); }},
      {"numerics.space", [&](auto&, auto& v) { c.numerics.space = parse_space(v); }},
      {"numerics.derivative", [&](auto&, auto& v) { c.numerics.derivative = parse_derivative_method(v); }},
      {"numerics.fd_delta", [&](auto& k, auto& v) { c.numerics.fd_delta = detail::parse_double(k, v); }},
      {"numerics.gap_tol", [&](auto& k, auto& v) { c.numerics.gap_tol = detail::parse_double(k, v); }},
      {"numerics.workers", [&](auto& k, auto& v) { c.numerics.workers = detail::parse_int(k, v); }},
      {"numerics.convergence_check",
       [&](auto& k, auto& v) { c.numerics.convergence_check = detail::parse_bool(k, v); }},
      {"numerics.convergence_gate",
       [&](auto& k, auto& v) { c.numerics.convergence_gate = detail::parse_double(k, v); }},
      {"numerics.trace_stride", [&](auto& k, auto& v) { c.numerics.trace_stride = detail::parse_int(k, v); }},
  };

  // The kind selects the defaults, so apply it first.
  if (auto it = raw.find("scenario.kind"); it != raw.end()) {
    c = default_scenario(parse_scenario_kind(it->second));
    have_kind = true;
  }
  if (!have_kind) throw ConfigError(origin + ": missing 'kind' in [scenario]");
  for (const auto& [key, ln] : order) {
    lineno = ln;
    auto it = setters.find(key);
    if (it == setters.end()) fail("unknown key '" + key + "'");
    try {
      it->second(key, raw[key]);
    } catch (const ConfigError& e) {
      fail(e.what());
    }
  }
  if (lo || hi || points) {
    if (explicit_grid) throw ConfigError(origin + ": give either omega_tau or the omega_tau_min/max/points range");
    if (!lo || !hi || !points)
      throw ConfigError(origin + ": omega_tau_min, omega_tau_max and omega_tau_points go together");
    if (*points < 1 || *hi < *lo) throw ConfigError(origin + ": invalid omega_tau range");
    c.omega_tau = linspace(*lo, *hi, *points);
  }
  validate(c);
  return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_config(in, path.string());
}

inline nlohmann::json to_json(const ScenarioConfig& c) {
  nlohmann::json drivers = nlohmann::json::array();
  for (auto d : c.drivers) drivers.push_back(std::string(to_string(d)));
  return {
      {"kind", std::string(to_string(c.kind))},
      {"name", c.name},
      {"schedules", c.schedules},
      {"drivers", drivers},
      {"omega_tau", c.omega_tau},
      {"t_end_multiplier", c.t_end_multiplier},
      {"omega_drive", c.omega_drive},
      {"omega_ref", c.omega_ref.value_or(c.omega_drive)},
      {"clamp_at_tau", c.clamp_at_tau},
      {"numerics",
       {{"steps_per_tau", c.numerics.steps_per_tau},
        {"quad_points", c.numerics.quad_points},
        {"space", std::string(to_string(c.numerics.space))},
        {"derivative", std::string(to_string(c.numerics.derivative))},
        {"fd_delta", c.numerics.fd_delta},
        {"gap_tol", c.numerics.gap_tol},
        {"convergence_check", c.numerics.convergence_check},
        {"convergence_gate", c.numerics.convergence_gate},
        {"trace_stride", c.numerics.trace_stride}}},
  };
}

// ---------------------------------------------------------------------------
// Execution

/// Worker count: explicit request, else $QBCHARGE_WORKERS, else hardware threads.
inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("QBCHARGE_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t k = 0; k < std::min(w, n); ++k) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

struct RunDiagnostics {
  std::string schedule;
  std::string driver;
  double omega_tau = 0.0;
  bool ok = true;
  std::string error;
  std::optional<double> step_halving_delta;
  double max_norm_drift = 0.0;
  double min_gap = 0.0;
  double max_leakage = 0.0;
  bool flagged = false;
};

struct RunOutput {
  std::string csv;
  nlohmann::json manifest;
  int failed = 0;
  int flagged = 0;

  bool contract_failure() const { return failed > 0 || flagged > 0; }
};

namespace detail {

inline nlohmann::json to_json(const RunDiagnostics& d) {
  nlohmann::json j = {{"schedule", d.schedule},
                      {"driver", d.driver},
                      {"omega_tau", d.omega_tau},
                      {"status", d.ok ? "ok" : "failed"}};
  if (!d.ok) j["error"] = d.error;
  if (d.ok) {
    j["max_norm_drift"] = d.max_norm_drift;
    j["min_gap"] = d.min_gap;
    j["max_leakage"] = d.max_leakage;
    if (d.step_halving_delta) j["step_halving_delta"] = *d.step_halving_delta;
    j["flagged"] = d.flagged;
  }
  return j;
}

inline RunOutput finish(const ScenarioConfig& cfg, std::string csv, const std::vector<RunDiagnostics>& diags) {
  RunOutput out;
  out.csv = std::move(csv);
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& d : diags) {
    runs.push_back(to_json(d));
    out.failed += d.ok ? 0 : 1;
    out.flagged += d.flagged ? 1 : 0;
  }
  out.manifest = {{"tool", "qbcharge"},
                  {"version", kVersion},
                  {"scenario", std::string(to_string(cfg.kind))},
                  {"csv", cfg.name + ".csv"},
                  {"config", to_json(cfg)},
                  {"failed_runs", out.failed},
                  {"flagged_runs", out.flagged},
                  {"runs", runs}};
  return out;
}

inline PropagationOptions propagation_options(const ScenarioConfig& cfg) {
  PropagationOptions p;
  p.flow = cfg.numerics.flow();
  return p;
}

// Propagates and fills diagnostics, including the optional step-halving check.
inline Trajectory checked_propagation(const ScenarioConfig& cfg, const DriveConfig& drive, Driver driver,
                                      double t_end, RunDiagnostics& diag) {
  const auto popt = propagation_options(cfg);
  const int steps = default_steps(drive, t_end, cfg.numerics.steps_per_tau);
  Trajectory traj = propagate(drive, driver, t_end, steps, popt);
  diag.max_norm_drift = traj.max_norm_drift;
  diag.min_gap = traj.min_gap;
  diag.max_leakage = traj.max_leakage;
  if (cfg.numerics.convergence_check && driver != Driver::IdealAdiabatic) {
    const auto fine = propagate(drive, driver, t_end, 2 * steps, popt);
    const double delta = (traj.final_state() - fine.final_state()).norm();
    diag.step_halving_delta = delta;
    diag.flagged = delta > cfg.numerics.convergence_gate;
  }
  return traj;
}

struct Task {
  std::string schedule;
  Driver driver;
  double omega_tau;
};

inline std::vector<Task> tasks_of(const ScenarioConfig& cfg, bool with_drivers = true) {
  std::vector<Task> tasks;
  for (const auto& s : cfg.schedules) {
    if (with_drivers) {
      for (auto d : cfg.drivers)
        for (double w : cfg.omega_tau) tasks.push_back({s, d, w});
    } else {
      for (double w : cfg.omega_tau) tasks.push_back({s, Driver::Adiabatic, w});
    }
  }
  return tasks;
}

} // namespace detail

/// Final battery ergotropy at t = tau for every (schedule, driver, Omega*tau).
inline RunOutput run_sweep_tau(const ScenarioConfig& cfg) {
  validate(cfg);
  const auto tasks = detail::tasks_of(cfg);
  std::vector<RunDiagnostics> diags(tasks.size());
  std::vector<double> value(tasks.size(), 0.0);
  parallel_for(tasks.size(), resolve_workers(cfg.numerics.workers), [&](std::size_t i) {
    const auto& t = tasks[i];
    auto& d = diags[i];
    d.schedule = t.schedule;
    d.driver = std::string(to_string(t.driver));
    d.omega_tau = t.omega_tau;
    try {
      const DriveConfig drive = cfg.drive(t.schedule, t.omega_tau);
      const auto traj = detail::checked_propagation(cfg, drive, t.driver, drive.tau(), d);
      value[i] = traj.final_sample().ergotropy;
    } catch (const std::exception& e) {
      d.ok = false;
      d.error = e.what();
    }
  });
  std::string csv = "schedule,driver,omega_tau,ergotropy_over_Emax_qubit,valid\n";
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    csv += tasks[i].schedule + "," + std::string(to_string(tasks[i].driver)) + "," +
           format_number(tasks[i].omega_tau) + "," + (diags[i].ok ? format_number(value[i]) : "") + "," +
           (diags[i].ok ? "1" : "0") + "\n";
  }
  return detail::finish(cfg, std::move(csv), diags);
}

/// Ergotropy, target fidelity and eta_ls along [0, t_end_multiplier * tau].
inline RunOutput run_trace(const ScenarioConfig& cfg) {
  validate(cfg);
  const auto tasks = detail::tasks_of(cfg);
  std::vector<RunDiagnostics> diags(tasks.size());
  std::vector<std::string> blocks(tasks.size());
  parallel_for(tasks.size(), resolve_workers(cfg.numerics.workers), [&](std::size_t i) {
    const auto& t = tasks[i];
    auto& d = diags[i];
    d.schedule = t.schedule;
    d.driver = std::string(to_string(t.driver));
    d.omega_tau = t.omega_tau;
    try {
      const DriveConfig drive = cfg.drive(t.schedule, t.omega_tau);
      const double tau = drive.tau();
      const auto traj = detail::checked_propagation(cfg, drive, t.driver, cfg.t_end_multiplier * tau, d);
      const auto stab = local_stability(traj, tau);
      const std::size_t i_tau = traj.index_at(tau);
      const std::size_t first_eta = traj.size() - stab.eta.size();
      std::string rows;
      for (std::size_t k = 0; k < traj.size(); ++k) {
        const bool keep = k % static_cast<std::size_t>(cfg.numerics.trace_stride) == 0 || k == i_tau ||
                          k + 1 == traj.size();
        if (!keep) continue;
        const auto& s = traj.samples[k];
        const bool after = traj.grid[k] > tau && k >= first_eta;
        rows += t.schedule + "," + d.driver + "," + format_number(t.omega_tau) + "," +
                format_number(cfg.omega_drive * traj.grid[k]) + "," + format_number(s.ergotropy) + "," +
                format_number(s.fidelity_to_target) + "," +
                (after ? format_number(stab.eta[k - first_eta]) : std::string()) + "," +
                (k == i_tau ? "1" : "0") + "\n";
      }
      blocks[i] = std::move(rows);
    } catch (const std::exception& e) {
      d.ok = false;
      d.error = e.what();
    }
  });
  std::string csv =
      "schedule,driver,omega_tau,omega_t,ergotropy_over_Emax_qubit,fidelity_to_target,eta_ls,at_tau\n";
  for (const auto& b : blocks) csv += b;
  return detail::finish(cfg, std::move(csv), diags);
}

/// Sigma_ad, Sigma_tqd, their ratio and the adiabatic final ergotropy per Omega*tau.
inline RunOutput run_cost(const ScenarioConfig& cfg) {
  validate(cfg);
  const auto tasks = detail::tasks_of(cfg, false);
  std::vector<RunDiagnostics> diags(tasks.size());
  std::vector<CostReport> cost(tasks.size());
  std::vector<double> ergo(tasks.size(), 0.0);
  parallel_for(tasks.size(), resolve_workers(cfg.numerics.workers), [&](std::size_t i) {
    const auto& t = tasks[i];
    auto& d = diags[i];
    d.schedule = t.schedule;
    d.driver = "adiabatic+tqd";
    d.omega_tau = t.omega_tau;
    try {
      const DriveConfig drive = cfg.drive(t.schedule, t.omega_tau);
      CostOptions copt;
      copt.quadrature_points = cfg.numerics.quad_points;
      copt.flow = cfg.numerics.flow();
      cost[i] = energy_cost(drive, copt);
      const auto traj = detail::checked_propagation(cfg, drive, Driver::Adiabatic, drive.tau(), d);
      ergo[i] = traj.final_sample().ergotropy;
    } catch (const std::exception& e) {
      d.ok = false;
      d.error = e.what();
    }
  });
  std::string csv =
      "schedule,omega_tau,sigma_ad_over_hbar_omega,sigma_tqd_over_hbar_omega,sigma_rel,"
      "adiabatic_ergotropy_over_Emax_qubit,valid\n";
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const bool ok = diags[i].ok;
    auto num = [&](double v) { return ok ? format_number(v) : std::string(); };
    csv += tasks[i].schedule + "," + format_number(tasks[i].omega_tau) + "," + num(cost[i].sigma_ad) + "," +
           num(cost[i].sigma_tqd) + "," + num(cost[i].sigma_rel) + "," + num(ergo[i]) + "," + (ok ? "1" : "0") +
           "\n";
  }
  return detail::finish(cfg, std::move(csv), diags);
}

inline RunOutput run_scenario(const ScenarioConfig& cfg) {
  switch (cfg.kind) {
    case ScenarioKind::SweepTau: return run_sweep_tau(cfg);
    case ScenarioKind::Trace: return run_trace(cfg);
    case ScenarioKind::Cost: return run_cost(cfg);
  }
  throw ConfigError("unknown scenario kind");
}

/// Writes `content` to `path` through a temporary file and a rename.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

struct WrittenFiles {
  std::filesystem::path csv;
  std::filesystem::path manifest;
};

/// Writes <dir>/<name>.csv and <dir>/<name>.manifest.json.
inline WrittenFiles write_outputs(const RunOutput& out, const ScenarioConfig& cfg) {
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  WrittenFiles files{dir / (cfg.name + ".csv"), dir / (cfg.name + ".manifest.json")};
  write_atomically(files.csv, out.csv);
  write_atomically(files.manifest, out.manifest.dump(2) + "\n");
  return files;
}

} // namespace qbcharge
