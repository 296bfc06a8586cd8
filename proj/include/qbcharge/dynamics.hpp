#pragma once

// Exact unitary propagation of the charger-battery state under H_ad(t) or
// H_tqd(t), using the exponential midpoint rule
//
//   psi(t + dt) = exp(-i H(t + dt/2) dt) psi(t).
//
// Battery observables are sampled at every grid point.

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "qbcharge/battery_model.hpp"
#include "qbcharge/ergotropy.hpp"
#include "qbcharge/errors.hpp"
#include "qbcharge/operator_core.hpp"
#include "qbcharge/spectral_flow.hpp"

namespace qbcharge {

enum class Driver {
  Adiabatic,      // exact dynamics under H_ad(t)
  TQD,            // exact dynamics under H_ad(t) + H_cd(t)
  IdealAdiabatic  // the tracked instantaneous eigenstate itself
};

inline std::string_view to_string(Driver d) {
  switch (d) {
    case Driver::Adiabatic: return "adiabatic";
    case Driver::TQD: return "tqd";
    case Driver::IdealAdiabatic: return "ideal-adiabatic";
  }
  return "?";
}

inline Driver parse_driver(std::string_view s) {
  if (s == "adiabatic" || s == "ad") return Driver::Adiabatic;
  if (s == "tqd") return Driver::TQD;
  if (s == "ideal-adiabatic" || s == "ideal") return Driver::IdealAdiabatic;
  throw ConfigError("unknown driver '" + std::string(s) + "'");
}

inline constexpr int kDefaultStepsPerTau = 2000;
inline constexpr int kMinSteps = 100;

struct PropagationOptions {
  FlowOptions flow;
};

struct BatteryObservables {
  double ergotropy = 0.0;  // in multiples of E_max^qubit
  double fidelity_to_target = 0.0;
  double leakage = 0.0;    // weight outside the one-excitation sector
};

/// Battery reduced state and ergotropy of a (working-space) state vector.
inline BatteryObservables sample_battery(const StateVector& psi, const DriveConfig& cfg) {
  const StateVector full = to_full(psi, cfg.space());
  const OperatorMatrix rho_qb = partial_trace(projector(full), 2, {2, 2, 2});
  const auto ref = reference_hamiltonians(cfg);
  BatteryObservables o;
  o.ergotropy = ergotropy(rho_qb, ref.battery).ergotropy / energy_scales(cfg).e_max_qubit;
  o.fidelity_to_target = fidelity(target_state(cfg), psi);
  double inside = 0.0;
  for (auto b : kSectorBasis) inside += std::norm(full(b));
  o.leakage = std::max(0.0, full.squaredNorm() - inside);
  return o;
}

struct TrajectorySample {
  double ergotropy = 0.0;             // multiples of E_max^qubit
  double fidelity_to_target = 0.0;
  double fidelity_to_tracked = 0.0;   // |<n(t)|psi(t)>|^2
  double tracked_energy = 0.0;        // E_n(t) of the tracked level
  double energy = 0.0;                // <psi|H_ad(t)|psi>
};

struct Trajectory {
  std::vector<double> grid;
  std::vector<StateVector> states;
  std::vector<TrajectorySample> samples;
  double tau = 0.0;
  Space space = Space::Sector3;
  Driver driver = Driver::Adiabatic;
  Eigen::Index tracked_level = 0;
  double max_norm_drift = 0.0;
  double max_leakage = 0.0;
  double min_gap = 0.0;

  std::size_t size() const { return grid.size(); }
  const StateVector& final_state() const { return states.back(); }
  const TrajectorySample& final_sample() const { return samples.back(); }

  /// Index of the grid point closest to t.
  std::size_t index_at(double t) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (std::abs(grid[i] - t) < std::abs(grid[best] - t)) best = i;
    return best;
  }
};

/// Midpoint error grows like (Omega tau)^2 at fixed steps per tau, so the
/// resolution never drops below this many steps per unit of Omega tau.
inline constexpr int kStepsPerOmegaTau = 400;

/// Steps on [0, t_end]: max(steps_per_tau, kStepsPerOmegaTau * Omega tau) per
/// interval of length tau.
inline int default_steps(const DriveConfig& cfg, double t_end, int steps_per_tau = kDefaultStepsPerTau) {
  const double per_tau = std::max<double>(steps_per_tau, kStepsPerOmegaTau * cfg.omega_drive() * cfg.tau());
  return std::max(kMinSteps, static_cast<int>(std::lround(std::ceil(per_tau * t_end / cfg.tau() - 1e-9))));
}

/// One propagation step: exp(-i H(t_mid) weight) takes the state from t0 to t1.
struct TimeStep {
  double t0 = 0.0;
  double t1 = 0.0;
  double t_mid = 0.0;
  double weight = 0.0;
};

/// Graded map on [0, 1]: psi(u) = u^3 (3 - 2u), psi(1) = 1, psi'(1) = 1.
inline double graded_map(double u) { return u * u * u * (3.0 - 2.0 * u); }
inline double graded_map_slope(double u) { return u * u * (9.0 - 8.0 * u); }

/// Steps over [0, t_end]. Uniform, except that schedules with unbounded
/// f'(0) ~ t^(-2/3) use t = L psi(u) with uniform u on [0, L], L = min(t_end, tau).
/// In u the generator H(t(u)) t'(u) is smooth, so the midpoint rule keeps
/// its second order. tau is a grid node whenever t_end >= tau.
inline std::vector<TimeStep> time_steps(const DriveConfig& cfg, double t_end, int steps) {
  std::vector<TimeStep> out;
  out.reserve(static_cast<std::size_t>(steps));
  double start = 0.0;
  int left = steps;
  if (cfg.schedule().singular_at_zero()) {
    const double len = std::min(t_end, cfg.tau());
    const int n = len < t_end ? std::clamp(static_cast<int>(std::lround(steps * len / t_end)), 1, steps - 1) : steps;
    const double du = 1.0 / n;
    for (int k = 0; k < n; ++k) {
      const double um = (k + 0.5) * du;
      out.push_back({len * graded_map(k * du), k + 1 == n ? len : len * graded_map((k + 1) * du),
                     len * graded_map(um), len * graded_map_slope(um) * du});
    }
    start = len;
    left = steps - n;
  }
  const double dt = (t_end - start) / std::max(left, 1);
  for (int k = 0; k < left; ++k) {
    const double t0 = start + k * dt;
    const double t1 = k + 1 == left ? t_end : start + (k + 1) * dt;
    out.push_back({t0, t1, 0.5 * (t0 + t1), t1 - t0});
  }
  return out;
}

namespace detail {

inline OperatorMatrix driving_hamiltonian(double t, Driver driver, const HamiltonianPath& path,
                                          const FlowOptions& flow) {
  return driver == Driver::TQD ? build_h_tqd(t, path, flow) : path.h(t);
}

} // namespace detail

/// Propagates |phi(0)> from t=0 to t_end over `steps` exponential-midpoint steps.
inline Trajectory propagate(const DriveConfig& cfg, Driver driver, double t_end, int steps,
                            const PropagationOptions& opt = {}) {
  if (steps < kMinSteps) throw ContractViolation("propagate: need at least 100 steps");
  if (!(t_end > 0.0)) throw ContractViolation("propagate: t_end must be > 0");

  const HamiltonianPath path = drive_path(cfg);
  Trajectory traj;
  traj.tau = cfg.tau();
  traj.space = cfg.space();
  traj.driver = driver;
  traj.tracked_level = initial_level(cfg, opt.flow);
  traj.grid.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.samples.reserve(static_cast<std::size_t>(steps) + 1);

  LevelTracker tracker(path, 0.0, opt.flow);
  StateVector psi = initial_state(cfg);

  auto record = [&](double t) {
    const SpectralFrame& fr = tracker.frame();
    const StateVector tracked = fr.state(traj.tracked_level);
    if (driver == Driver::IdealAdiabatic) psi = tracked;
    const auto obs = sample_battery(psi, cfg);
    TrajectorySample s;
    s.ergotropy = obs.ergotropy;
    s.fidelity_to_target = obs.fidelity_to_target;
    s.fidelity_to_tracked = fidelity(tracked, psi);
    s.tracked_energy = fr.energies(traj.tracked_level);
    s.energy = psi.dot(path.h(t) * psi).real();
    traj.grid.push_back(t);
    traj.states.push_back(psi);
    traj.samples.push_back(s);
    traj.max_norm_drift = std::max(traj.max_norm_drift, std::abs(psi.norm() - 1.0));
    traj.max_leakage = std::max(traj.max_leakage, obs.leakage);
  };

  record(0.0);
  for (const TimeStep& st : time_steps(cfg, t_end, steps)) {
    if (driver != Driver::IdealAdiabatic) {
      const OperatorMatrix h = detail::driving_hamiltonian(st.t_mid, driver, path, opt.flow);
      psi = expm_hermitian(h, Complex(0.0, -st.weight)) * psi;
    }
    tracker.advance(st.t1);
    record(st.t1);
  }
  traj.min_gap = tracker.min_gap();
  return traj;
}

inline Trajectory propagate(const DriveConfig& cfg, Driver driver, double t_end,
                            const PropagationOptions& opt = {}) {
  return propagate(cfg, driver, t_end, default_steps(cfg, t_end), opt);
}

/// ||psi_N - psi_2N|| between final states at `steps` and `2*steps`. Both runs
/// start from the same vector, so no phase needs fixing.
inline double step_halving_delta(const DriveConfig& cfg, Driver driver, double t_end, int steps,
                                 const PropagationOptions& opt = {}) {
  const auto a = propagate(cfg, driver, t_end, steps, opt);
  const auto b = propagate(cfg, driver, t_end, 2 * steps, opt);
  return (a.final_state() - b.final_state()).norm();
}

} // namespace qbcharge
