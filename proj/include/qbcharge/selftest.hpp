#pragma once

// Quick oracle checks across all modules, run by `qbcharge selftest`.

#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "qbcharge/qbcharge.hpp"

namespace qbcharge::selftest {

struct Check {
  std::string name;
  std::function<bool()> run;
};

inline std::vector<Check> checks() {
  using namespace pauli;
  return {
      {"hermitian_eig: diag(3,1,2) -> (1,2,3)",
       [] {
         OperatorMatrix a = OperatorMatrix::Zero(3, 3);
         a(0, 0) = 3.0;
         a(1, 1) = 1.0;
         a(2, 2) = 2.0;
         auto es = hermitian_eig(a);
         return std::abs(es.values(0) - 1) < 1e-14 && std::abs(es.values(1) - 2) < 1e-14 &&
                std::abs(es.values(2) - 3) < 1e-14;
       }},
      {"expm_hermitian: exp(-i pi/2 sigma_z) = diag(i, -i)",
       [] {
         auto u = expm_hermitian(z(), Complex(0, -std::numbers::pi / 2));
         return std::abs(u(0, 0) - kI) < 1e-12 && std::abs(u(1, 1) + kI) < 1e-12;
       }},
      {"kron: (XX + YY)|01> = 2|10>",
       [] {
         StateVector v = StateVector::Zero(4);
         v(1) = 1.0;
         StateVector w = (kron(x(), x()) + kron(y(), y())) * v;
         return std::abs(w(2) - 2.0) < 1e-14 && std::abs(w(1)) < 1e-14;
       }},
      {"partial_trace: singlet marginal = I/2",
       [] {
         DriveConfig cfg(Schedule::linear(), 1.0, {.space = Space::Full8});
         StateVector s = (basis_state(0, 1, 0) - basis_state(1, 0, 0)) / std::numbers::sqrt2;
         auto r = partial_trace(projector(s), 0, {2, 2, 2});
         return (r - 0.5 * OperatorMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12;
       }},
      {"hs_norm: ||H_fin|| = ||H_ini|| = 4",
       [] {
         auto h = static_hamiltonians_full(1.0);
         return std::abs(hs_norm(h.final) - 4) < 1e-12 && std::abs(hs_norm(h.initial) - 4) < 1e-12;
       }},
      {"battery-model: H_ini |phi(0)> = -2 |phi(0)>",
       [] {
         DriveConfig cfg(Schedule::linear(), 1.0, {.space = Space::Full8});
         auto psi = initial_state(cfg);
         return (cfg.statics().initial * psi + 2.0 * psi).norm() < 1e-12;
       }},
      {"battery-model: [H_ad(t), N] = 0",
       [] {
         DriveConfig cfg(Schedule::sine(), 3.0, {.space = Space::Full8});
         return commutator(build_h_ad(1.3, cfg), excitation_number()).norm() == 0.0;
       }},
      {"spectral-flow: two-level H_cd = (theta'/2) sigma_y",
       [] {
         const double tau = 2.0, theta_dot = std::numbers::pi / (2 * tau);
         OperatorMatrix zs = -z();  // diag(+1, -1)
         HamiltonianPath p;
         p.h = [=](double t) { return OperatorMatrix(std::cos(theta_dot * t) * zs + std::sin(theta_dot * t) * x()); };
         p.h_dot = [=](double t) {
           return OperatorMatrix(theta_dot * (-std::sin(theta_dot * t) * zs + std::cos(theta_dot * t) * x()));
         };
         p.time_scale = tau;
         auto hcd = build_h_cd(0.7, p);
         return (hcd - 0.5 * theta_dot * y()).cwiseAbs().maxCoeff() < 1e-6;
       }},
      {"spectral-flow: finite-difference vs off-diagonal derivatives",
       [] {
         DriveConfig cfg(Schedule::linear(), 5.0);
         auto path = drive_path(cfg);
         auto fr = frame_at(path, 2.5);
         FlowOptions od;
         od.method = DerivativeMethod::OffDiagonal;
         auto a = eigenstate_derivative(fr, path);
         auto b = eigenstate_derivative(fr, path, od);
         return (a.state_derivatives - b.state_derivatives).norm() <= 1e-5 * b.state_derivatives.norm();
       }},
      {"thermo-metrics: ergotropy of |11> w.r.t. H_0^cell = 4 omega",
       [] {
         DriveConfig cfg(Schedule::linear(), 1.0);
         StateVector full = StateVector::Zero(4);
         full(3) = 1.0;
         return std::abs(ergotropy(projector(full), reference_hamiltonians(cfg).cell).ergotropy - 4.0) < 1e-12;
       }},
      {"dynamics: TQD at Omega*tau = 1 reaches full charge",
       [] {
         DriveConfig cfg(Schedule::linear(), 1.0);
         auto traj = propagate(cfg, Driver::TQD, 1.0, 400);
         return traj.final_sample().ergotropy > 0.999;
       }},
      {"thermo-metrics: Sigma_tqd >= Sigma_ad",
       [] {
         DriveConfig cfg(Schedule::linear(), 2.0);
         CostOptions opt;
         opt.quadrature_points = 201;
         auto r = energy_cost(cfg, opt);
         return r.sigma_tqd >= r.sigma_ad && std::abs(r.sigma_ad - r.sigma_ad_direct) < 1e-8;
       }},
  };
}

/// Prints one PASS/FAIL line per check; returns true when all pass.
inline bool run(std::ostream& os) {
  bool all = true;
  for (const auto& c : checks()) {
    bool ok = false;
    try {
      ok = c.run();
    } catch (const std::exception& e) {
      os << "  (exception: " << e.what() << ")\n";
    }
    os << (ok ? "PASS  " : "FAIL  ") << c.name << "\n";
    all = all && ok;
  }
  return all;
}

} // namespace qbcharge::selftest
