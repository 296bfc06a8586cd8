#pragma once

// Instantaneous eigensystem of a time-dependent Hamiltonian, tracked along a
// time grid with a smooth gauge, plus eigenstate velocities and the
// counter-diabatic Hamiltonian
//
//   H_cd(t) = i sum_n ( |n'><n| + <n'|n> |n><n| ).
//
// Everything works on a HamiltonianPath, a Hamiltonian family with optional
// conserved blocks. Eigensystems, level matching and H_cd are built block by
// block, so degeneracies between different excitation-number blocks never
// enter.
//
// The adiabatic phase never appears: the adiabatic reference state is the
// projector |n(t)><n(t)|, from which the phase cancels.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

#include "qbcharge/battery_model.hpp"
#include "qbcharge/errors.hpp"
#include "qbcharge/operator_core.hpp"

namespace qbcharge {

struct HamiltonianPath {
  std::function<OperatorMatrix(double)> h;
  std::function<OperatorMatrix(double)> h_dot;  // may throw SingularDerivativeError
  double time_scale = 1.0;                      // tau; sets the finite-difference step
  double energy_scale = 1.0;                    // sets the degeneracy threshold
  std::vector<std::vector<Eigen::Index>> blocks;  // conserved blocks; empty = one block
  bool singular_at_zero = false;                // h_dot unbounded as t -> 0

  Eigen::Index dim() const { return h(0.0).rows(); }

  std::vector<std::vector<Eigen::Index>> resolved_blocks() const {
    if (!blocks.empty()) return blocks;
    std::vector<Eigen::Index> all(static_cast<std::size_t>(dim()));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    return {all};
  }
};

/// Path of H_ad(t) in the configuration's working space. The full space is
/// split into excitation-number blocks; the sector is a single block.
inline HamiltonianPath drive_path(const DriveConfig& cfg) {
  HamiltonianPath p;
  p.h = [cfg](double t) { return build_h_ad(t, cfg); };
  p.h_dot = [cfg](double t) { return build_h_ad_dot(t, cfg); };
  p.time_scale = cfg.tau();
  p.energy_scale = cfg.omega_drive();
  if (cfg.space() == Space::Full8) {
    const auto full = excitation_blocks();
    p.blocks = full;
  }
  p.singular_at_zero = cfg.schedule().singular_at_zero();
  return p;
}

enum class DerivativeMethod { FiniteDifference, OffDiagonal };

struct FlowOptions {
  DerivativeMethod method = DerivativeMethod::FiniteDifference;
  double gap_tol_rel = 1e-8;     // degeneracy threshold, in units of energy_scale
  double fd_delta_rel = 1e-6;    // central-difference step, in units of time_scale
  double fd_delta_min_ratio = 1e-3;  // step never exceeds this fraction of t
};

struct SpectralFrame {
  double t = 0.0;
  RealVector energies;       // per level
  OperatorMatrix states;     // columns |n(t)> in the working space
  std::vector<int> block_of; // conserved block of each level
  double gap_min = std::numeric_limits<double>::infinity();  // smallest in-block gap
  bool near_degenerate = false;

  Eigen::Index levels() const { return energies.size(); }
  StateVector state(Eigen::Index n) const { return states.col(n); }
};

namespace detail {

// Levels of block `b` in `frame`, in frame order.
inline std::vector<Eigen::Index> levels_in_block(const SpectralFrame& frame, int b) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index n = 0; n < frame.levels(); ++n)
    if (frame.block_of[static_cast<std::size_t>(n)] == b) out.push_back(n);
  return out;
}

// Rotate columns so the largest-magnitude component is real and positive.
inline void fix_phase_by_max_component(OperatorMatrix& states) {
  for (Eigen::Index c = 0; c < states.cols(); ++c) {
    Eigen::Index imax = 0;
    states.col(c).cwiseAbs().maxCoeff(&imax);
    const Complex a = states(imax, c);
    if (std::abs(a) > 0.0) states.col(c) *= std::conj(a) / std::abs(a);
  }
}

// Clusters of consecutive (ascending) energies closer than `tol`.
inline std::vector<std::vector<Eigen::Index>> degenerate_clusters(const RealVector& e, double tol) {
  std::vector<std::vector<Eigen::Index>> out;
  std::vector<Eigen::Index> cur{0};
  for (Eigen::Index i = 1; i < e.size(); ++i) {
    if (e(i) - e(i - 1) < tol) {
      cur.push_back(i);
    } else {
      if (cur.size() > 1) out.push_back(cur);
      cur = {i};
    }
  }
  if (cur.size() > 1) out.push_back(cur);
  return out;
}

// Within each degenerate cluster of `vecs` (block-local, ascending), pick the
// basis closest to the previous frame's vectors (orthogonal Procrustes).
inline void align_degenerate_subspaces(OperatorMatrix& vecs, const RealVector& e, double tol,
                                       const OperatorMatrix& prev_vecs) {
  for (const auto& cluster : degenerate_clusters(e, tol)) {
    const auto k = static_cast<Eigen::Index>(cluster.size());
    OperatorMatrix q(vecs.rows(), k);
    for (Eigen::Index c = 0; c < k; ++c) q.col(c) = vecs.col(cluster[static_cast<std::size_t>(c)]);
    // Previous vectors with the largest weight inside the cluster subspace.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(prev_vecs.cols()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const OperatorMatrix w = q.adjoint() * prev_vecs;
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return w.col(a).squaredNorm() > w.col(b).squaredNorm();
    });
    OperatorMatrix m(k, k);
    for (Eigen::Index c = 0; c < k; ++c) m.col(c) = w.col(order[static_cast<std::size_t>(c)]);
    Eigen::JacobiSVD<OperatorMatrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const OperatorMatrix rotated = q * (svd.matrixU() * svd.matrixV().adjoint());
    for (Eigen::Index c = 0; c < k; ++c) vecs.col(cluster[static_cast<std::size_t>(c)]) = rotated.col(c);
  }
}

} // namespace detail

/// Eigensystem of path.h(t), ascending within each block, phases fixed by
/// making the largest component of each eigenvector real positive.
inline SpectralFrame frame_at(const HamiltonianPath& path, double t, const FlowOptions& opt = {}) {
  const OperatorMatrix h = path.h(t);
  require_hermitian(h, "frame_at");
  const auto blocks = path.resolved_blocks();
  const double gap_tol = opt.gap_tol_rel * path.energy_scale;

  SpectralFrame fr;
  fr.t = t;
  fr.energies.resize(h.rows());
  fr.states = OperatorMatrix::Zero(h.rows(), h.rows());
  fr.block_of.reserve(static_cast<std::size_t>(h.rows()));

  Eigen::Index level = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& idx = blocks[b];
    const auto n = static_cast<Eigen::Index>(idx.size());
    OperatorMatrix sub(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) sub(i, j) = h(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    const EigenSystem es = hermitian_eig(sub);
    for (Eigen::Index k = 0; k < n; ++k) {
      fr.energies(level) = es.values(k);
      for (Eigen::Index i = 0; i < n; ++i) fr.states(idx[static_cast<std::size_t>(i)], level) = es.vectors(i, k);
      fr.block_of.push_back(static_cast<int>(b));
      if (k > 0) fr.gap_min = std::min(fr.gap_min, es.values(k) - es.values(k - 1));
      ++level;
    }
  }
  if (level != h.rows()) throw DimensionError("frame_at: blocks do not partition the space");
  fr.near_degenerate = fr.gap_min < gap_tol;
  detail::fix_phase_by_max_component(fr.states);
  return fr;
}

/// Eigensystem at t matched level-by-level to `prev` by maximal overlap, with
/// each column's phase chosen so that <n_prev|n> is real and positive. Levels
/// keep the identity (and order) they had in `prev`.
inline SpectralFrame frame_at(const HamiltonianPath& path, double t, const SpectralFrame& prev,
                              const FlowOptions& opt = {}) {
  SpectralFrame raw = frame_at(path, t, opt);
  if (raw.levels() != prev.levels()) throw DimensionError("frame_at: previous frame has another dimension");
  const double gap_tol = opt.gap_tol_rel * path.energy_scale;

  SpectralFrame out = raw;
  const int nblocks = raw.block_of.empty() ? 0 : *std::max_element(raw.block_of.begin(), raw.block_of.end()) + 1;
  for (int b = 0; b < nblocks; ++b) {
    const auto lv_new = detail::levels_in_block(raw, b);
    const auto lv_old = detail::levels_in_block(prev, b);
    if (lv_new.size() != lv_old.size()) throw DimensionError("frame_at: block structure changed");
    const auto n = static_cast<Eigen::Index>(lv_new.size());

    OperatorMatrix cand(raw.states.rows(), n), old(raw.states.rows(), n);
    RealVector e(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      cand.col(k) = raw.states.col(lv_new[static_cast<std::size_t>(k)]);
      old.col(k) = prev.states.col(lv_old[static_cast<std::size_t>(k)]);
      e(k) = raw.energies(lv_new[static_cast<std::size_t>(k)]);
    }
    detail::align_degenerate_subspaces(cand, e, gap_tol, old);
    const bool degenerate_here = !detail::degenerate_clusters(e, gap_tol).empty() || prev.near_degenerate;

    // Greedy maximal-overlap assignment.
    const OperatorMatrix ov = old.adjoint() * cand;  // ov(i, j) = <old_i|cand_j>
    std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), -1);
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    for (Eigen::Index round = 0; round < n; ++round) {
      double best = -1.0;
      Eigen::Index bi = -1, bj = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (assign[static_cast<std::size_t>(i)] >= 0) continue;
        for (Eigen::Index j = 0; j < n; ++j) {
          if (used[static_cast<std::size_t>(j)]) continue;
          if (std::abs(ov(i, j)) > best) {
            best = std::abs(ov(i, j));
            bi = i;
            bj = j;
          }
        }
      }
      assign[static_cast<std::size_t>(bi)] = bj;
      used[static_cast<std::size_t>(bj)] = true;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index j = assign[static_cast<std::size_t>(i)];
      const double o = std::abs(ov(i, j));
      int strong = 0;
      for (Eigen::Index jj = 0; jj < n; ++jj)
        if (std::abs(ov(i, jj)) > 0.5) ++strong;
      if (!degenerate_here && (o <= 0.5 || strong > 1)) {
        std::ostringstream os;
        os << "frame_at: cannot match level " << lv_old[static_cast<std::size_t>(i)] << " between t=" << prev.t
           << " and t=" << t << " (overlap " << o << "); refine the grid";
        throw TrackingError(os.str());
      }
      const Eigen::Index slot = lv_old[static_cast<std::size_t>(i)];
      StateVector v = cand.col(j);
      const Complex phase = ov(i, j);
      if (std::abs(phase) > 0.0) v *= std::conj(phase) / std::abs(phase);
      out.states.col(slot) = v;
      out.energies(slot) = e(j);
      out.block_of[static_cast<std::size_t>(slot)] = b;
    }
  }
  return out;
}

struct FlowDerivatives {
  OperatorMatrix state_derivatives;  // columns |n'(t)>
  RealVector mu;                     // <n'|n'> - |<n|n'>|^2
  bool cluster_projected = false;    // near-degenerate clusters parallel-transported
};

namespace detail {

inline RealVector compute_mu(const SpectralFrame& fr, const OperatorMatrix& d) {
  RealVector mu(fr.levels());
  for (Eigen::Index n = 0; n < fr.levels(); ++n) {
    const Complex proj = fr.states.col(n).dot(d.col(n));
    mu(n) = d.col(n).squaredNorm() - std::norm(proj);
  }
  return mu;
}

// Cluster id of every level: levels of one block closer than gap_tol share one.
inline std::vector<int> cluster_ids(const SpectralFrame& fr, double gap_tol) {
  std::vector<int> id(static_cast<std::size_t>(fr.levels()), -1);
  int next = 0;
  for (Eigen::Index n = 0; n < fr.levels(); ++n) {
    const auto un = static_cast<std::size_t>(n);
    if (n > 0 && fr.block_of[un] == fr.block_of[un - 1] && fr.energies(n) - fr.energies(n - 1) < gap_tol) {
      id[un] = id[un - 1];
    } else {
      id[un] = next++;
    }
  }
  return id;
}

// |n'> = sum over m outside n's cluster of |m><m|H'|n> / (E_n - E_m). Skipping
// the diagonal gives the parallel-transport gauge; skipping whole clusters
// transports each near-degenerate subspace rigidly.
inline OperatorMatrix off_diagonal_derivatives(const SpectralFrame& frame, const HamiltonianPath& path,
                                               const std::vector<int>& cluster) {
  const Eigen::Index dim = frame.levels();
  const OperatorMatrix hd = path.h_dot(frame.t);
  const OperatorMatrix hd_eig = frame.states.adjoint() * hd * frame.states;  // <m|H'|n>
  OperatorMatrix out = OperatorMatrix::Zero(dim, dim);
  for (Eigen::Index n = 0; n < dim; ++n) {
    for (Eigen::Index m = 0; m < dim; ++m) {
      const auto um = static_cast<std::size_t>(m), un = static_cast<std::size_t>(n);
      if (cluster[um] == cluster[un] || frame.block_of[um] != frame.block_of[un]) continue;
      out.col(n) += frame.states.col(m) * (hd_eig(m, n) / (frame.energies(n) - frame.energies(m)));
    }
  }
  return out;
}

} // namespace detail

/// Finite-difference step used at time t: delta * tau, capped at a small
/// fraction of t so the stencil never reaches t <= 0.
inline double fd_step(const HamiltonianPath& path, double t, const FlowOptions& opt) {
  const double d = opt.fd_delta_rel * path.time_scale;
  return t > 0.0 ? std::min(d, opt.fd_delta_min_ratio * t) : d;
}

/// Eigenstate velocities |n'(t)> and mu_n(t) for every level of `frame`.
///
/// FiniteDifference differentiates gauge-aligned frames at t +/- delta (a
/// forward three-point stencil at t = 0). OffDiagonal uses
/// |n'> = sum_{m != n} |m><m|H'|n> / (E_n - E_m), the parallel-transport gauge,
/// and refuses near-degenerate frames.
///
/// A near-degenerate frame under FiniteDifference has no well-defined
/// per-level velocity inside the cluster; the cluster is transported as a
/// whole (no intra-cluster components), which keeps H_cd = i sum_k [P_k', P_k]
/// gauge invariant. The result is marked cluster_projected.
inline FlowDerivatives eigenstate_derivative(const SpectralFrame& frame, const HamiltonianPath& path,
                                             const FlowOptions& opt = {}) {
  FlowDerivatives out;
  const Eigen::Index dim = frame.levels();
  const double gap_tol = opt.gap_tol_rel * path.energy_scale;

  if (frame.near_degenerate) {
    if (opt.method == DerivativeMethod::OffDiagonal) {
      std::ostringstream os;
      os << "eigenstate_derivative: levels closer than gap_tol at t=" << frame.t << " (gap " << frame.gap_min
         << ")";
      throw DegeneracyError(os.str());
    }
    out.state_derivatives = detail::off_diagonal_derivatives(frame, path, detail::cluster_ids(frame, gap_tol));
    out.cluster_projected = true;
  } else if (opt.method == DerivativeMethod::FiniteDifference) {
    const double t = frame.t;
    if (t == 0.0 && path.singular_at_zero)
      throw SingularDerivativeError("eigenstate_derivative: derivative is unbounded at t=0");
    const double d = fd_step(path, t, opt);
    if (t - d >= 0.0) {
      const SpectralFrame plus = frame_at(path, t + d, frame, opt);
      const SpectralFrame minus = frame_at(path, t - d, frame, opt);
      out.state_derivatives = (plus.states - minus.states) / (2.0 * d);
    } else {
      const SpectralFrame p1 = frame_at(path, t + d, frame, opt);
      const SpectralFrame p2 = frame_at(path, t + 2.0 * d, p1, opt);
      out.state_derivatives = (-3.0 * frame.states + 4.0 * p1.states - p2.states) / (2.0 * d);
    }
  } else {
    std::vector<int> own(static_cast<std::size_t>(dim));
    std::iota(own.begin(), own.end(), 0);
    out.state_derivatives = detail::off_diagonal_derivatives(frame, path, own);
  }
  out.mu = detail::compute_mu(frame, out.state_derivatives);
  return out;
}

/// Relative anti-Hermitian residual tolerated in an assembled H_cd before it
/// is symmetrized. Finite-difference velocities carry ~1e-8 of it.
inline constexpr double kCounterDiabaticHermTol = 1e-6;

/// i sum_n (|n'><n| + <n'|n> |n><n|), returned as its Hermitian part after
/// checking the anti-Hermitian residual.
inline OperatorMatrix build_h_cd(const SpectralFrame& frame, const FlowDerivatives& d) {
  const Eigen::Index dim = frame.levels();
  OperatorMatrix hcd = OperatorMatrix::Zero(dim, dim);
  for (Eigen::Index n = 0; n < dim; ++n) {
    const StateVector ket = frame.states.col(n);
    const StateVector dket = d.state_derivatives.col(n);
    const Complex dn_n = dket.dot(ket);  // <n'|n>
    hcd += dket * ket.adjoint() + dn_n * (ket * ket.adjoint());
  }
  hcd *= kI;
  const double resid = (hcd - hcd.adjoint()).cwiseAbs().maxCoeff();
  if (resid > kCounterDiabaticHermTol * matrix_scale(hcd)) {
    std::ostringstream os;
    os << "build_h_cd: counter-diabatic term not Hermitian at t=" << frame.t << " (residual " << resid << ")";
    throw ContractViolation(os.str());
  }
  return 0.5 * (hcd + hcd.adjoint());
}

inline OperatorMatrix build_h_cd(double t, const HamiltonianPath& path, const FlowOptions& opt = {}) {
  const SpectralFrame fr = frame_at(path, t, opt);
  return build_h_cd(fr, eigenstate_derivative(fr, path, opt));
}

inline OperatorMatrix build_h_cd(double t, const DriveConfig& cfg, const FlowOptions& opt = {}) {
  return build_h_cd(t, drive_path(cfg), opt);
}

/// H_tqd(t) = H_ad(t) + H_cd(t).
inline OperatorMatrix build_h_tqd(double t, const HamiltonianPath& path, const FlowOptions& opt = {}) {
  return path.h(t) + build_h_cd(t, path, opt);
}

inline OperatorMatrix build_h_tqd(double t, const DriveConfig& cfg, const FlowOptions& opt = {}) {
  return build_h_tqd(t, drive_path(cfg), opt);
}

/// Level of the working space whose t=0 eigenvector has the largest overlap
/// with the initial state (the singlet-charger ground level).
inline Eigen::Index initial_level(const DriveConfig& cfg, const FlowOptions& opt = {}) {
  const SpectralFrame f0 = frame_at(drive_path(cfg), 0.0, opt);
  const StateVector psi = initial_state(cfg);
  Eigen::Index best = 0;
  (f0.states.adjoint() * psi).cwiseAbs().maxCoeff(&best);
  return best;
}

/// Walks frames along a grid, keeping gauge and level identity continuous.
class LevelTracker {
public:
  LevelTracker(HamiltonianPath path, double t0, FlowOptions opt = {})
      : path_(std::move(path)), opt_(opt), frame_(frame_at(path_, t0, opt_)) {
    min_gap_ = frame_.gap_min;
  }

  const SpectralFrame& advance(double t) {
    frame_ = frame_at(path_, t, frame_, opt_);
    min_gap_ = std::min(min_gap_, frame_.gap_min);
    return frame_;
  }

  const SpectralFrame& frame() const { return frame_; }
  const HamiltonianPath& path() const { return path_; }
  double min_gap() const { return min_gap_; }

private:
  HamiltonianPath path_;
  FlowOptions opt_;
  SpectralFrame frame_;
  double min_gap_;
};

/// Rank-1 projector onto `level` (labelled at t=0) followed continuously to
/// time t over a uniform grid of `steps_per_tau` points per tau.
inline OperatorMatrix adiabatic_reference(double t, const DriveConfig& cfg, Eigen::Index level,
                                          int steps_per_tau = 2000, const FlowOptions& opt = {}) {
  if (!(t >= 0.0)) throw ContractViolation("adiabatic_reference: t must be >= 0");
  if (level < 0 || level >= cfg.dim()) throw DimensionError("adiabatic_reference: level out of range");
  LevelTracker tracker(drive_path(cfg), 0.0, opt);
  const auto n = std::max<long>(1, std::lround(std::ceil(t / cfg.tau() * steps_per_tau)));
  for (long k = 1; k <= n; ++k) tracker.advance(t * static_cast<double>(k) / static_cast<double>(n));
  return projector(tracker.frame().state(level));
}

} // namespace qbcharge
