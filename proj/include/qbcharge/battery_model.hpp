#pragma once

// Charger-battery model: two charger qubits (C1, C2) and one battery qubit
// (QB), ordered (C1, C2, QB) with basis index b = 4*n_C1 + 2*n_C2 + n_QB.
// sigma_z |n> = (-1)^(1-n) |n>, so |1> is the excited (+1) state.
// hbar = 1 throughout; energies are in units of the drive scale Omega.

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qbcharge/errors.hpp"
#include "qbcharge/operator_core.hpp"

namespace qbcharge {

namespace pauli {

inline OperatorMatrix identity() { return OperatorMatrix::Identity(2, 2); }

inline OperatorMatrix x() {
  OperatorMatrix m = OperatorMatrix::Zero(2, 2);
  m(0, 1) = 1.0;
  m(1, 0) = 1.0;
  return m;
}

inline OperatorMatrix y() {
  OperatorMatrix m = OperatorMatrix::Zero(2, 2);
  m(0, 1) = -kI;
  m(1, 0) = kI;
  return m;
}

// diag(-1, +1) in the (|0>, |1>) basis.
inline OperatorMatrix z() {
  OperatorMatrix m = OperatorMatrix::Zero(2, 2);
  m(0, 0) = -1.0;
  m(1, 1) = 1.0;
  return m;
}

inline OperatorMatrix kron3(const OperatorMatrix& a, const OperatorMatrix& b,
                            const OperatorMatrix& c) {
  return kron(kron(a, b), c);
}

} // namespace pauli

// ---------------------------------------------------------------------------
// Schedules

enum class ScheduleKind { Linear, Sine, CubeRoot, Custom };

struct ScheduleValues {
  double f;
  double g;
  double df;  // f'(t)
  double dg;  // g'(t)
};

/// Interpolation pair (f, g) with f(0)=g(0)=0 and f(tau)=g(tau)=1.
///
/// Values past tau are the analytic continuations. CubeRoot has
/// f(t) = (t/tau)^(1/3), g(t) = t/tau; its f'(0) is reported as +infinity.
class Schedule {
public:
  using Function = std::function<ScheduleValues(double t, double tau)>;

  static Schedule linear() { return Schedule(ScheduleKind::Linear, "linear", {}, false); }
  static Schedule sine() { return Schedule(ScheduleKind::Sine, "sine", {}, false); }
  static Schedule cube_root() { return Schedule(ScheduleKind::CubeRoot, "cube-root", {}, true); }

  /// `fn` returns f, g and their derivatives at (t, tau). Boundary values are
  /// checked when the schedule is attached to a DriveConfig.
  static Schedule custom(std::string name, Function fn, bool singular_at_zero = false) {
    if (!fn) throw ContractViolation("Schedule::custom: empty function");
    return Schedule(ScheduleKind::Custom, std::move(name), std::move(fn), singular_at_zero);
  }

  /// Accepts "linear", "sine", "cube-root" (also "cuberoot", "cube_root").
  static Schedule parse(std::string_view name) {
    if (name == "linear" || name == "lin") return linear();
    if (name == "sine" || name == "sin") return sine();
    if (name == "cube-root" || name == "cuberoot" || name == "cube_root") return cube_root();
    throw ConfigError("unknown schedule '" + std::string(name) + "'");
  }

  ScheduleKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  bool singular_at_zero() const { return singular_at_zero_; }

  ScheduleValues eval(double t, double tau) const {
    if (!(t >= 0.0)) throw ContractViolation("Schedule::eval: t must be >= 0");
    const double s = t / tau;
    switch (kind_) {
      case ScheduleKind::Linear:
        return {s, s, 1.0 / tau, 1.0 / tau};
      case ScheduleKind::Sine: {
        const double w = std::numbers::pi / (2.0 * tau);
        const double v = std::sin(w * t);
        const double d = w * std::cos(w * t);
        return {v, v, d, d};
      }
      case ScheduleKind::CubeRoot: {
        const double f = std::cbrt(s);
        const double df = t == 0.0 ? std::numeric_limits<double>::infinity()
                                   : f / (3.0 * t);
        return {f, s, df, 1.0 / tau};
      }
      case ScheduleKind::Custom:
        return fn_(t, tau);
    }
    return {};
  }

private:
  Schedule(ScheduleKind kind, std::string name, Function fn, bool singular)
      : kind_(kind), name_(std::move(name)), fn_(std::move(fn)), singular_at_zero_(singular) {}

  ScheduleKind kind_;
  std::string name_;
  Function fn_;
  bool singular_at_zero_;
};

// ---------------------------------------------------------------------------
// Hilbert-space bookkeeping

enum class Space { Full8, Sector3 };

inline std::string_view to_string(Space s) { return s == Space::Full8 ? "full" : "sector"; }

inline Space parse_space(std::string_view s) {
  if (s == "full" || s == "full8") return Space::Full8;
  if (s == "sector" || s == "sector3") return Space::Sector3;
  throw ConfigError("unknown space '" + std::string(s) + "' (expected full|sector)");
}

inline constexpr Eigen::Index kFullDim = 8;
inline constexpr Eigen::Index kSectorDim = 3;

/// Full-space indices of |100>, |010>, |001>, the sector basis order.
inline constexpr std::array<Eigen::Index, 3> kSectorBasis{4, 2, 1};

inline constexpr Eigen::Index dim_of(Space s) { return s == Space::Full8 ? kFullDim : kSectorDim; }

/// Full-space indices grouped by total excitation number N = 0..3.
inline std::vector<std::vector<Eigen::Index>> excitation_blocks() {
  return {{0}, {4, 2, 1}, {6, 5, 3}, {7}};
}

/// N = sum_q (1 + sigma_z^q) / 2 on the full space.
inline OperatorMatrix excitation_number() {
  OperatorMatrix n = OperatorMatrix::Zero(kFullDim, kFullDim);
  for (Eigen::Index b = 0; b < kFullDim; ++b)
    n(b, b) = static_cast<double>(((b >> 2) & 1) + ((b >> 1) & 1) + (b & 1));
  return n;
}

inline constexpr double kLeakageTol = 1e-10;

inline OperatorMatrix sector_project(const OperatorMatrix& full) {
  if (full.rows() != kFullDim || full.cols() != kFullDim)
    throw DimensionError("sector_project: expected an 8x8 operator");
  const double scale = matrix_scale(full);
  OperatorMatrix out(kSectorDim, kSectorDim);
  for (Eigen::Index i = 0; i < kFullDim; ++i) {
    for (Eigen::Index j = 0; j < kFullDim; ++j) {
      const auto in_sector = [](Eigen::Index b) {
        return b == kSectorBasis[0] || b == kSectorBasis[1] || b == kSectorBasis[2];
      };
      if (in_sector(i) != in_sector(j) && std::abs(full(i, j)) > kLeakageTol * scale)
        throw LeakageError("sector_project: operator couples the sector to its complement");
    }
  }
  for (Eigen::Index i = 0; i < kSectorDim; ++i)
    for (Eigen::Index j = 0; j < kSectorDim; ++j) out(i, j) = full(kSectorBasis[i], kSectorBasis[j]);
  return out;
}

inline StateVector sector_project(const StateVector& full) {
  if (full.size() != kFullDim) throw DimensionError("sector_project: expected an 8-component state");
  StateVector out(kSectorDim);
  double inside = 0.0;
  for (Eigen::Index i = 0; i < kSectorDim; ++i) {
    out(i) = full(kSectorBasis[i]);
    inside += std::norm(out(i));
  }
  const double outside = full.squaredNorm() - inside;
  if (outside > kLeakageTol)
    throw LeakageError("sector_project: state has weight " + std::to_string(outside) +
                       " outside the one-excitation sector");
  return out;
}

inline OperatorMatrix sector_embed(const OperatorMatrix& sector) {
  if (sector.rows() != kSectorDim || sector.cols() != kSectorDim)
    throw DimensionError("sector_embed: expected a 3x3 operator");
  OperatorMatrix out = OperatorMatrix::Zero(kFullDim, kFullDim);
  for (Eigen::Index i = 0; i < kSectorDim; ++i)
    for (Eigen::Index j = 0; j < kSectorDim; ++j) out(kSectorBasis[i], kSectorBasis[j]) = sector(i, j);
  return out;
}

inline StateVector sector_embed(const StateVector& sector) {
  if (sector.size() != kSectorDim) throw DimensionError("sector_embed: expected a 3-component state");
  StateVector out = StateVector::Zero(kFullDim);
  for (Eigen::Index i = 0; i < kSectorDim; ++i) out(kSectorBasis[i]) = sector(i);
  return out;
}

/// Lift a working-space state to the full 8-dim space.
inline StateVector to_full(const StateVector& v, Space space) {
  return space == Space::Full8 ? v : sector_embed(v);
}

inline OperatorMatrix to_working(const OperatorMatrix& full, Space space) {
  return space == Space::Full8 ? full : sector_project(full);
}

inline StateVector to_working(const StateVector& full, Space space) {
  return space == Space::Full8 ? full : sector_project(full);
}

// ---------------------------------------------------------------------------
// Static Hamiltonians

struct StaticHamiltonians {
  OperatorMatrix initial;       // Omega (X X + Y Y) on C1,C2
  OperatorMatrix intermediate;  // Omega (X X + Y Y) on C2,QB
  OperatorMatrix final;         // Omega (Z_C1 Z_QB + Z_C2 Z_QB)
};

inline StaticHamiltonians static_hamiltonians_full(double omega_drive) {
  using namespace pauli;
  const OperatorMatrix i2 = identity();
  return {
      omega_drive * (kron3(x(), x(), i2) + kron3(y(), y(), i2)),
      omega_drive * (kron3(i2, x(), x()) + kron3(i2, y(), y())),
      omega_drive * (kron3(z(), i2, z()) + kron3(i2, z(), z())),
  };
}

struct DriveParams {
  double omega_drive = 1.0;
  std::optional<double> omega_ref;  // defaults to omega_drive
  Space space = Space::Sector3;
  bool clamp_at_tau = false;        // hold f = g = 1 for t > tau
};

/// Immutable description of one charging protocol.
class DriveConfig {
public:
  inline static constexpr double kBoundaryTol = 1e-12;

  DriveConfig(Schedule schedule, double tau, DriveParams params = {})
      : schedule_(std::move(schedule)),
        tau_(tau),
        omega_drive_(params.omega_drive),
        omega_ref_(params.omega_ref.value_or(params.omega_drive)),
        space_(params.space),
        clamp_(params.clamp_at_tau) {
    if (!(omega_drive_ > 0.0) || !std::isfinite(omega_drive_))
      throw ContractViolation("DriveConfig: omega_drive must be > 0");
    if (!(omega_ref_ > 0.0) || !std::isfinite(omega_ref_))
      throw ContractViolation("DriveConfig: omega_ref must be > 0");
    if (!(tau_ > 0.0) || !std::isfinite(tau_)) throw ContractViolation("DriveConfig: tau must be > 0");
    const ScheduleValues v0 = schedule_.eval(0.0, tau_);
    const ScheduleValues v1 = schedule_.eval(tau_, tau_);
    if (std::abs(v0.f) > kBoundaryTol || std::abs(v0.g) > kBoundaryTol ||
        std::abs(v1.f - 1.0) > kBoundaryTol || std::abs(v1.g - 1.0) > kBoundaryTol) {
      throw ContractViolation("DriveConfig: schedule '" + schedule_.name() +
                              "' violates f(0)=g(0)=0, f(tau)=g(tau)=1");
    }
    auto full = static_hamiltonians_full(omega_drive_);
    if (space_ == Space::Sector3) {
      statics_ = std::make_shared<const StaticHamiltonians>(StaticHamiltonians{
          sector_project(full.initial), sector_project(full.intermediate), sector_project(full.final)});
    } else {
      statics_ = std::make_shared<const StaticHamiltonians>(std::move(full));
    }
  }

  const Schedule& schedule() const { return schedule_; }
  double tau() const { return tau_; }
  double omega_drive() const { return omega_drive_; }
  double omega_ref() const { return omega_ref_; }
  Space space() const { return space_; }
  bool clamp_at_tau() const { return clamp_; }
  Eigen::Index dim() const { return dim_of(space_); }

  /// Static Hamiltonians in the working space.
  const StaticHamiltonians& statics() const { return *statics_; }

  DriveParams params() const { return {omega_drive_, omega_ref_, space_, clamp_}; }

  DriveConfig with_space(Space s) const {
    auto p = params();
    p.space = s;
    return DriveConfig(schedule_, tau_, p);
  }

  DriveConfig with_tau(double tau) const { return DriveConfig(schedule_, tau, params()); }

  ScheduleValues schedule_at(double t) const {
    if (clamp_ && t > tau_) return {1.0, 1.0, 0.0, 0.0};
    return schedule_.eval(t, tau_);
  }

private:
  Schedule schedule_;
  double tau_;
  double omega_drive_;
  double omega_ref_;
  Space space_;
  bool clamp_;
  std::shared_ptr<const StaticHamiltonians> statics_;
};

/// (H_ini, H_inter, H_fin) as 8x8 matrices.
inline StaticHamiltonians build_static_hamiltonians(const DriveConfig& cfg) {
  return static_hamiltonians_full(cfg.omega_drive());
}

/// H_ad(t) = [1 - f] H_ini + f [1 - f] H_inter + g H_fin in the working space.
inline OperatorMatrix build_h_ad(double t, const DriveConfig& cfg) {
  const auto v = cfg.schedule_at(t);
  const auto& h = cfg.statics();
  return (1.0 - v.f) * h.initial + v.f * (1.0 - v.f) * h.intermediate + v.g * h.final;
}

/// dH_ad/dt = -f' H_ini + (f' - 2 f f') H_inter + g' H_fin.
inline OperatorMatrix build_h_ad_dot(double t, const DriveConfig& cfg) {
  const auto v = cfg.schedule_at(t);
  if (!std::isfinite(v.df) || !std::isfinite(v.dg)) {
    throw SingularDerivativeError("build_h_ad_dot: schedule '" + cfg.schedule().name() +
                                  "' has an unbounded derivative at t=" + std::to_string(t));
  }
  const auto& h = cfg.statics();
  return -v.df * h.initial + (v.df - 2.0 * v.f * v.df) * h.intermediate + v.dg * h.final;
}

/// Basis state with occupations (n_C1, n_C2, n_QB) in the full space.
inline StateVector basis_state(int c1, int c2, int qb) {
  StateVector v = StateVector::Zero(kFullDim);
  v(4 * c1 + 2 * c2 + qb) = 1.0;
  return v;
}

/// (|010> - |100>)/sqrt(2): charger singlet, battery empty.
inline StateVector initial_state(const DriveConfig& cfg) {
  StateVector v = (basis_state(0, 1, 0) - basis_state(1, 0, 0)) / std::numbers::sqrt2;
  return to_working(v, cfg.space());
}

/// |001>: charger empty, battery full.
inline StateVector target_state(const DriveConfig& cfg) {
  return to_working(basis_state(0, 0, 1), cfg.space());
}

struct ReferenceHamiltonians {
  OperatorMatrix cell;     // omega (Z (x) I + I (x) Z) on the charger pair
  OperatorMatrix battery;  // omega Z on the battery qubit
};

inline ReferenceHamiltonians reference_hamiltonians(const DriveConfig& cfg) {
  using namespace pauli;
  const double w = cfg.omega_ref();
  return {w * (kron(z(), identity()) + kron(identity(), z())), w * z()};
}

struct EnergyScales {
  double e_max_qubit;
  double e_max_cell;
};

inline EnergyScales energy_scales(const DriveConfig& cfg) {
  return {2.0 * cfg.omega_ref(), 4.0 * cfg.omega_ref()};
}

} // namespace qbcharge
