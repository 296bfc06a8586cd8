#pragma once

// Battery figures of merit on top of the dynamics: the local stability
// coefficient after the programmed charging time, and the time-averaged
// Hilbert-Schmidt energy cost of the adiabatic and counter-diabatic drives,
//
//   Sigma_ad  = (1/tau) int_0^tau sqrt(sum_n E_n^2) dt
//   Sigma_tqd = (1/tau) int_0^tau sqrt(sum_n E_n^2 + mu_n) dt.

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "qbcharge/battery_model.hpp"
#include "qbcharge/dynamics.hpp"
#include "qbcharge/ergotropy.hpp"
#include "qbcharge/spectral_flow.hpp"

namespace qbcharge {

// ---------------------------------------------------------------------------
// Local stability

enum class StabilityNormalization {
  MaxCharge,  // E_max^qubit
  Asymptotic  // mean ergotropy over the last 10% of the post-charge window
};

struct StabilityReport {
  double tau_c = 0.0;
  double reference = 1.0;  // normalization, in multiples of E_max^qubit
  StabilityNormalization normalization = StabilityNormalization::MaxCharge;
  std::vector<double> offsets;  // Delta t = t - tau_c
  std::vector<double> eta;      // eta_ls(Delta t) in [0, 1]
  double eta_max = 0.0;
  double eta_mean = 0.0;
};

/// eta_ls(dt) = |E_ref - E(tau_c + dt)| / E_ref over every grid point t >= tau_c.
inline StabilityReport local_stability(const Trajectory& traj, double tau_c,
                                       StabilityNormalization norm = StabilityNormalization::MaxCharge) {
  const double slack = 1e-12 * std::max(1.0, std::abs(tau_c));
  std::vector<std::size_t> window;
  for (std::size_t i = 0; i < traj.size(); ++i)
    if (traj.grid[i] >= tau_c - slack) window.push_back(i);
  if (window.empty()) throw std::invalid_argument("local_stability: trajectory ends before tau_c");

  StabilityReport r;
  r.tau_c = tau_c;
  r.normalization = norm;
  if (norm == StabilityNormalization::Asymptotic) {
    const double t_last = traj.grid[window.back()];
    const double cut = t_last - 0.1 * (t_last - traj.grid[window.front()]);
    double sum = 0.0;
    int n = 0;
    for (auto i : window) {
      if (traj.grid[i] >= cut) {
        sum += traj.samples[i].ergotropy;
        ++n;
      }
    }
    r.reference = sum / n;
    if (!(r.reference > 1e-12))
      throw ContractViolation("local_stability: asymptotic ergotropy vanishes, eta_ls undefined");
  }
  for (auto i : window) {
    const double eta = std::abs(r.reference - traj.samples[i].ergotropy) / r.reference;
    r.offsets.push_back(traj.grid[i] - tau_c);
    r.eta.push_back(std::clamp(eta, 0.0, 1.0));
  }
  r.eta_max = *std::max_element(r.eta.begin(), r.eta.end());
  r.eta_mean = std::accumulate(r.eta.begin(), r.eta.end(), 0.0) / static_cast<double>(r.eta.size());
  return r;
}

// ---------------------------------------------------------------------------
// Energy cost

struct CostOptions {
  int quadrature_points = 1001;  // odd, composite Simpson
  FlowOptions flow;
  double extrapolation_step = 1e-5;  // fraction of the integration range
};

struct CostReport {
  double sigma_ad = 0.0;         // units of hbar Omega (Omega = omega_drive)
  double sigma_tqd = 0.0;
  double sigma_rel = 0.0;        // sigma_tqd / sigma_ad
  double sigma_ad_direct = 0.0;  // same integral from ||H_ad||_HS directly
  int quadrature_points = 0;
  int extrapolated_nodes = 0;    // nodes at degeneracies or singular derivatives
};

namespace detail {

struct CostIntegrand {
  double ad = 0.0;
  double ad_direct = 0.0;
  double tqd = 0.0;
};

inline CostIntegrand cost_integrand_at(double t, const HamiltonianPath& path, const FlowOptions& flow) {
  const SpectralFrame fr = frame_at(path, t, flow);
  const FlowDerivatives d = eigenstate_derivative(fr, path, flow);
  if (d.cluster_projected) throw DegeneracyError("energy cost: mu_n undefined inside a degenerate cluster");
  const double e2 = fr.energies.squaredNorm();
  return {std::sqrt(e2), hs_norm(path.h(t)), std::sqrt(e2 + d.mu.sum())};
}

inline double simpson(const std::vector<double>& y, double h) {
  const std::size_t n = y.size();
  double s = y.front() + y.back();
  for (std::size_t i = 1; i + 1 < n; ++i) s += (i % 2 ? 4.0 : 2.0) * y[i];
  return s * h / 3.0;
}

} // namespace detail

/// Sigma_ad, Sigma_tqd and their ratio over [0, tau], evaluated on the full
/// 8-dim space (mu_n from each excitation block).
///
/// Nodes where mu_n is undefined (exact level touching at t = tau, unbounded
/// dH/dt at t = 0) take the limit 2 F(x -/+ eta) - F(x -/+ 2 eta), with eta
/// grown by factors of 4 (up to h/4) while the probes stay degenerate. Schedules
/// singular at t = 0 are integrated in u with t = tau u^3, which removes the
/// t^(-2/3) endpoint behaviour of sqrt(mu).
inline CostReport energy_cost(const DriveConfig& cfg, const CostOptions& opt = {}) {
  if (opt.quadrature_points < 3 || opt.quadrature_points % 2 == 0)
    throw ContractViolation("energy_cost: quadrature_points must be odd and >= 3");
  const DriveConfig full = cfg.with_space(Space::Full8);
  const HamiltonianPath path = drive_path(full);
  const double tau = cfg.tau();
  const bool substitute = path.singular_at_zero;
  const double range = substitute ? 1.0 : tau;

  auto eval = [&](double x) {
    const double t = substitute ? tau * x * x * x : x;
    const double jac = substitute ? 3.0 * tau * x * x : 1.0;
    auto v = detail::cost_integrand_at(t, path, opt.flow);
    return detail::CostIntegrand{jac * v.ad, jac * v.ad_direct, jac * v.tqd};
  };

  const int n = opt.quadrature_points;
  const double h = range / (n - 1);
  const double eta = opt.extrapolation_step * range;
  std::vector<double> ad(static_cast<std::size_t>(n)), direct(static_cast<std::size_t>(n)),
      tqd(static_cast<std::size_t>(n));
  CostReport r;
  r.quadrature_points = n;
  for (int k = 0; k < n; ++k) {
    const double x = (k == n - 1) ? range : k * h;
    detail::CostIntegrand v;
    bool defined = true;
    try {
      v = eval(x);
    } catch (const DegeneracyError&) {
      defined = false;
    } catch (const SingularDerivativeError&) {
      defined = false;
    }
    if (!defined) {
      const double dir = x < 0.5 * range ? 1.0 : -1.0;
      // Gaps that close quadratically keep the first probes inside the
      // degeneracy threshold; widen the step until both are resolved.
      for (double step = eta;; step *= 4.0) {
        try {
          const auto a = eval(x + dir * step);
          const auto b = eval(x + 2.0 * dir * step);
          v = {2.0 * a.ad - b.ad, 2.0 * a.ad_direct - b.ad_direct, 2.0 * a.tqd - b.tqd};
          break;
        } catch (const DegeneracyError&) {
          if (4.0 * step > 0.25 * h) throw;
        }
      }
      ++r.extrapolated_nodes;
    }
    ad[static_cast<std::size_t>(k)] = v.ad;
    direct[static_cast<std::size_t>(k)] = v.ad_direct;
    tqd[static_cast<std::size_t>(k)] = v.tqd;
  }
  r.sigma_ad = detail::simpson(ad, h) / tau;
  r.sigma_ad_direct = detail::simpson(direct, h) / tau;
  r.sigma_tqd = detail::simpson(tqd, h) / tau;
  r.sigma_rel = r.sigma_tqd / r.sigma_ad;
  return r;
}

/// Sigma for a single driver (Adiabatic or TQD).
inline double energy_cost_of(const DriveConfig& cfg, Driver driver, const CostOptions& opt = {}) {
  const auto r = energy_cost(cfg, opt);
  return driver == Driver::TQD ? r.sigma_tqd : r.sigma_ad;
}

} // namespace qbcharge
