#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "qbcharge/battery_model.hpp"
#include "test_support.hpp"

namespace {

using namespace qbcharge;
using qbtest::Rng;

double max_abs(const OperatorMatrix& a) { return a.cwiseAbs().maxCoeff(); }

DriveConfig full_cfg(Schedule s, double tau = 1.0) { return DriveConfig(std::move(s), tau, {.space = Space::Full8}); }

std::vector<Schedule> builtins() { return {Schedule::linear(), Schedule::sine(), Schedule::cube_root()}; }

TEST(Schedule, SpecValues) {
  const double tau = 3.0;
  const auto lin = Schedule::linear().eval(tau / 2, tau);
  EXPECT_DOUBLE_EQ(lin.f, 0.5);
  EXPECT_DOUBLE_EQ(lin.g, 0.5);
  const auto sine = Schedule::sine().eval(tau, tau);
  EXPECT_NEAR(sine.f, 1.0, 1e-15);
  EXPECT_NEAR(sine.g, 1.0, 1e-15);
  const auto cube = Schedule::cube_root().eval(tau / 8, tau);
  EXPECT_NEAR(cube.f, 0.5, 1e-15);
  EXPECT_NEAR(cube.g, 0.125, 1e-15);
}

TEST(Schedule, BoundaryContractForBuiltins) {
  for (const auto& s : builtins()) {
    for (double tau : {0.1, 1.0, 17.0}) {
      const auto a = s.eval(0.0, tau), b = s.eval(tau, tau);
      EXPECT_LE(std::abs(a.f), 1e-12) << s.name();
      EXPECT_LE(std::abs(a.g), 1e-12) << s.name();
      EXPECT_LE(std::abs(b.f - 1.0), 1e-12) << s.name();
      EXPECT_LE(std::abs(b.g - 1.0), 1e-12) << s.name();
    }
  }
}

TEST(Schedule, DerivativesMatchCentralDifferences) {
  Rng rng(21);
  for (const auto& s : builtins()) {
    for (int k = 0; k < 50; ++k) {
      const double tau = rng.uniform(0.5, 5.0);
      const double t = rng.uniform(0.05, 2.5) * tau;
      const double h = 1e-6 * tau;
      const auto p = s.eval(t + h, tau), m = s.eval(t - h, tau), v = s.eval(t, tau);
      EXPECT_NEAR(v.df, (p.f - m.f) / (2 * h), 1e-6 * std::max(1.0, std::abs(v.df))) << s.name() << " t=" << t;
      EXPECT_NEAR(v.dg, (p.g - m.g) / (2 * h), 1e-6 * std::max(1.0, std::abs(v.dg))) << s.name();
    }
  }
}

TEST(Schedule, CubeRootSentinelAndContinuation) {
  const auto v = Schedule::cube_root().eval(0.0, 2.0);
  EXPECT_TRUE(std::isinf(v.df));
  EXPECT_GT(v.df, 0.0);
  EXPECT_TRUE(Schedule::cube_root().singular_at_zero());
  EXPECT_FALSE(Schedule::linear().singular_at_zero());
  // Past tau the schedules keep going: no clamping.
  EXPECT_NEAR(Schedule::linear().eval(3.0, 1.0).f, 3.0, 1e-15);
  EXPECT_NEAR(Schedule::sine().eval(2.0, 1.0).f, 0.0, 1e-15);
  EXPECT_NEAR(Schedule::cube_root().eval(8.0, 1.0).f, 2.0, 1e-15);
}

TEST(Schedule, ParseNamesAndRejectUnknown) {
  EXPECT_EQ(Schedule::parse("linear").kind(), ScheduleKind::Linear);
  EXPECT_EQ(Schedule::parse("sine").kind(), ScheduleKind::Sine);
  EXPECT_EQ(Schedule::parse("cube-root").kind(), ScheduleKind::CubeRoot);
  EXPECT_EQ(Schedule::parse("cube_root").kind(), ScheduleKind::CubeRoot);
  EXPECT_THROW(Schedule::parse("quadratic"), ConfigError);
  EXPECT_THROW(Schedule::linear().eval(-1e-3, 1.0), ContractViolation);
}

TEST(DriveConfig, RejectsBadParameters) {
  EXPECT_THROW(DriveConfig(Schedule::linear(), 0.0), ContractViolation);
  EXPECT_THROW(DriveConfig(Schedule::linear(), -1.0), ContractViolation);
  EXPECT_THROW(DriveConfig(Schedule::linear(), 1.0, {.omega_drive = 0.0}), ContractViolation);
  EXPECT_THROW(DriveConfig(Schedule::linear(), 1.0, {.omega_ref = -2.0}), ContractViolation);
  EXPECT_THROW(DriveConfig(Schedule::linear(), std::nan("")), ContractViolation);
}

TEST(DriveConfig, CustomScheduleBoundaryIsChecked) {
  auto bad = Schedule::custom("stuck", [](double, double) { return ScheduleValues{0, 0, 0, 0}; });
  EXPECT_THROW(DriveConfig(bad, 1.0), ContractViolation);
  auto smooth = Schedule::custom("smoothstep", [](double t, double tau) {
    const double s = t / tau;
    const double f = s * s * (3 - 2 * s);
    const double df = 6 * s * (1 - s) / tau;
    return ScheduleValues{f, f, df, df};
  });
  DriveConfig cfg(smooth, 2.0);
  EXPECT_NEAR(cfg.schedule_at(1.0).f, 0.5, 1e-15);
}

TEST(DriveConfig, ClampHoldsFinalHamiltonian) {
  DriveConfig cfg(Schedule::sine(), 1.0, {.space = Space::Full8, .clamp_at_tau = true});
  EXPECT_LT(max_abs(build_h_ad(2.3, cfg) - cfg.statics().final), 1e-15);
  EXPECT_LT(max_abs(build_h_ad_dot(2.3, cfg)), 1e-15);
}

TEST(StaticHamiltonians, HermitianAndConserveExcitations) {
  const auto h = build_static_hamiltonians(full_cfg(Schedule::linear()));
  const OperatorMatrix n = excitation_number();
  for (const OperatorMatrix* m : {&h.initial, &h.intermediate, &h.final}) {
    EXPECT_EQ(m->rows(), 8);
    EXPECT_TRUE(is_hermitian(*m));
    EXPECT_EQ(max_abs(commutator(*m, n)), 0.0);
  }
}

TEST(StaticHamiltonians, SingletIsInitialGroundStateWithTargetEnergy) {
  DriveConfig cfg = full_cfg(Schedule::linear());
  const auto h = build_static_hamiltonians(cfg);
  const StateVector phi = initial_state(cfg);
  EXPECT_NEAR(phi.norm(), 1.0, 1e-15);
  EXPECT_LT((h.initial * phi + 2.0 * phi).norm(), 1e-12);
  EXPECT_NEAR(phi.dot(h.initial * phi).real(), -2.0, 1e-12);
  // Brute force: -2 is the lowest eigenvalue of H_ini in the one-excitation block.
  const OperatorMatrix block = sector_project(h.initial);
  EXPECT_NEAR(hermitian_eig(block).values(0), -2.0, 1e-12);
  // The target has the same energy under H_fin that the singlet has under
  // H_ini. The singlet itself sits at zero energy under H_fin.
  const StateVector target = target_state(cfg);
  EXPECT_LT((h.final * target + 2.0 * target).norm(), 1e-12);
  EXPECT_NEAR(target.dot(h.final * target).real(), phi.dot(h.initial * phi).real(), 1e-12);
  EXPECT_NEAR(phi.dot(h.final * phi).real(), 0.0, 1e-12);
  EXPECT_EQ(std::abs(target.dot(phi)), 0.0);
}

TEST(StaticHamiltonians, FinalIsDiagonalWithSpinProducts) {
  // H_fin|b> = (z1 z3 + z2 z3)|b> with z = -1 for |0>, +1 for |1>.
  const auto h = static_hamiltonians_full(1.5);
  for (int b = 0; b < 8; ++b) {
    const int z1 = (b >> 2) & 1 ? 1 : -1, z2 = (b >> 1) & 1 ? 1 : -1, z3 = b & 1 ? 1 : -1;
    EXPECT_NEAR(h.final(b, b).real(), 1.5 * (z1 * z3 + z2 * z3), 1e-14);
  }
  EXPECT_LT(max_abs(h.final - OperatorMatrix(h.final.diagonal().asDiagonal())), 1e-15);
}

TEST(StaticHamiltonians, SectorBlocksByHand) {
  const double om = 0.75;
  const auto h = static_hamiltonians_full(om);
  EXPECT_LT(max_abs(sector_project(h.initial) - qbtest::sector_h_ini(om)), 1e-14);
  EXPECT_LT(max_abs(sector_project(h.intermediate) - qbtest::sector_h_inter(om)), 1e-14);
  EXPECT_LT(max_abs(sector_project(h.final) - qbtest::sector_h_fin(om)), 1e-14);
  const OperatorMatrix fin = sector_project(h.final);
  EXPECT_NEAR(fin(0, 0).real(), 0.0, 1e-15);
  EXPECT_NEAR(fin(1, 1).real(), 0.0, 1e-15);
  EXPECT_NEAR(fin(2, 2).real(), -2.0 * om, 1e-15);
}

TEST(HamiltonianAd, EndpointsAndMidpoint) {
  for (const auto& s : builtins()) {
    DriveConfig cfg = full_cfg(s, 2.0);
    const auto& h = cfg.statics();
    EXPECT_LT(max_abs(build_h_ad(0.0, cfg) - h.initial), 1e-12) << s.name();
    EXPECT_LT(max_abs(build_h_ad(2.0, cfg) - h.final), 1e-12) << s.name();
  }
  DriveConfig lin = full_cfg(Schedule::linear(), 2.0);
  const auto& h = lin.statics();
  EXPECT_LT(max_abs(build_h_ad(1.0, lin) - (0.5 * h.initial + 0.25 * h.intermediate + 0.5 * h.final)), 1e-14);
}

TEST(HamiltonianAd, ConservesExcitationsForAllTimes) {
  Rng rng(22);
  const OperatorMatrix n = excitation_number();
  for (const auto& s : builtins()) {
    DriveConfig cfg = full_cfg(s, rng.uniform(0.5, 5.0));
    for (int k = 0; k < 20; ++k) {
      const OperatorMatrix h = build_h_ad(rng.uniform(0.0, 3.0) * cfg.tau(), cfg);
      EXPECT_EQ(max_abs(commutator(h, n)), 0.0);
      EXPECT_TRUE(is_hermitian(h));
    }
  }
}

TEST(HamiltonianAd, SectorSpectrumSitsInsideFullSpectrum) {
  Rng rng(23);
  for (const auto& s : builtins()) {
    DriveConfig full = full_cfg(s, 4.0);
    DriveConfig sector = full.with_space(Space::Sector3);
    for (int k = 0; k < 10; ++k) {
      const double t = rng.uniform(0.0, 12.0);
      const auto ef = hermitian_eig(build_h_ad(t, full)).values;
      const auto es = hermitian_eig(build_h_ad(t, sector)).values;
      for (Eigen::Index i = 0; i < 3; ++i) EXPECT_LT((ef.array() - es(i)).abs().minCoeff(), 1e-10);
      EXPECT_LT(max_abs(sector_project(build_h_ad(t, full)) - build_h_ad(t, sector)), 1e-14);
    }
  }
}

TEST(HamiltonianAdDot, LinearClosedForm) {
  DriveConfig cfg = full_cfg(Schedule::linear(), 2.0);
  const auto& h = cfg.statics();
  for (double t : {0.0, 0.5, 1.7, 3.0}) {
    const OperatorMatrix expect = (1.0 / 2.0) * (-h.initial + (1.0 - 2.0 * t / 2.0) * h.intermediate + h.final);
    EXPECT_LT(max_abs(build_h_ad_dot(t, cfg) - expect), 1e-14);
  }
}

TEST(HamiltonianAdDot, SineVanishesAtTau) {
  DriveConfig cfg = full_cfg(Schedule::sine(), 3.0);
  EXPECT_LT(max_abs(build_h_ad_dot(3.0, cfg)), 1e-15);
}

TEST(HamiltonianAdDot, MatchesCentralDifference) {
  Rng rng(24);
  for (const auto& s : builtins()) {
    for (int k = 0; k < 20; ++k) {
      DriveConfig cfg = full_cfg(s, rng.uniform(0.5, 4.0));
      const double tau = cfg.tau();
      const double t = rng.uniform(0.05, 2.0) * tau;
      const double d = 1e-5 * tau;
      const OperatorMatrix fd = (build_h_ad(t + d, cfg) - build_h_ad(t - d, cfg)) / (2 * d);
      EXPECT_LE((fd - build_h_ad_dot(t, cfg)).norm(), 1e-6) << s.name() << " t/tau=" << t / tau;
    }
  }
}

TEST(HamiltonianAdDot, CubeRootIsSingularAtZero) {
  DriveConfig cfg(Schedule::cube_root(), 1.0);
  EXPECT_THROW(build_h_ad_dot(0.0, cfg), SingularDerivativeError);
  EXPECT_NO_THROW(build_h_ad_dot(1e-9, cfg));
}

TEST(Sector, ProjectEmbedRoundTrip) {
  DriveConfig cfg = full_cfg(Schedule::linear());
  const StateVector phi = sector_project(initial_state(cfg));
  EXPECT_NEAR(phi(0).real(), -1.0 / std::numbers::sqrt2, 1e-15);
  EXPECT_NEAR(phi(1).real(), 1.0 / std::numbers::sqrt2, 1e-15);
  EXPECT_EQ(phi(2), Complex(0.0));
  Rng rng(25);
  for (int k = 0; k < 20; ++k) {
    const StateVector v = rng.state(3);
    EXPECT_LT((sector_project(sector_embed(v)) - v).norm(), 1e-15);
    const OperatorMatrix m = rng.hermitian(3);
    EXPECT_LT(max_abs(sector_project(sector_embed(m)) - m), 1e-15);
  }
}

TEST(Sector, LeakageIsRejected) {
  StateVector v = basis_state(1, 1, 0);
  EXPECT_THROW(sector_project(v), LeakageError);
  StateVector almost = basis_state(0, 0, 1);
  almost(6) = 1e-6;  // weight 1e-12: allowed
  EXPECT_NO_THROW(sector_project(almost));
  OperatorMatrix coupling = OperatorMatrix::Zero(8, 8);
  coupling(4, 6) = coupling(6, 4) = 1.0;
  EXPECT_THROW(sector_project(coupling), LeakageError);
  EXPECT_THROW(sector_project(StateVector(StateVector::Zero(3))), DimensionError);
  EXPECT_THROW(sector_embed(StateVector(StateVector::Zero(8))), DimensionError);
}

TEST(Sector, ExcitationBlocksPartitionTheSpace) {
  std::vector<int> seen(8, 0);
  const auto blocks = excitation_blocks();
  const OperatorMatrix n = excitation_number();
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (auto i : blocks[b]) {
      ++seen[static_cast<std::size_t>(i)];
      EXPECT_EQ(n(i, i).real(), static_cast<double>(b));
    }
  for (int c : seen) EXPECT_EQ(c, 1);
  EXPECT_EQ(blocks[1], (std::vector<Eigen::Index>{kSectorBasis.begin(), kSectorBasis.end()}));
}

TEST(ReferenceHamiltonians, ScalesAndShapes) {
  DriveConfig cfg(Schedule::linear(), 1.0, {.omega_drive = 2.0, .omega_ref = 0.5});
  const auto ref = reference_hamiltonians(cfg);
  EXPECT_EQ(ref.cell.rows(), 4);
  EXPECT_NEAR(ref.cell(0, 0).real(), -1.0, 1e-15);
  EXPECT_NEAR(ref.cell(3, 3).real(), 1.0, 1e-15);
  EXPECT_NEAR(ref.battery(0, 0).real(), -0.5, 1e-15);
  const auto e = energy_scales(cfg);
  EXPECT_DOUBLE_EQ(e.e_max_qubit, 1.0);
  EXPECT_DOUBLE_EQ(e.e_max_cell, 2.0 * e.e_max_qubit);
  DriveConfig same(Schedule::linear(), 1.0, {.omega_drive = 3.0});
  EXPECT_DOUBLE_EQ(same.omega_ref(), 3.0);
}

} // namespace
