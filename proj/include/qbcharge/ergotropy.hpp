#pragma once

// Ergotropy and passive energy of a state with respect to a reference
// Hamiltonian H0:
//
//   U  = tr(rho H0)
//   U0 = sum_n r_n e_n   (r descending, e ascending)
//   E  = U - U0
//
// The double-sum form  E = sum_{i,n} r_n e_i (|<r_n|e_i>|^2 - delta_ni)
// is kept as an independent route for cross-checks.

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qbcharge/errors.hpp"
#include "qbcharge/operator_core.hpp"

namespace qbcharge {

inline constexpr double kDensityTol = 1e-10;

struct ErgotropyResult {
  double ergotropy = 0.0;
  double internal_energy = 0.0;
  double passive_energy = 0.0;
  OperatorMatrix extracting_unitary;  // V = sum_n |e_n><r_n|, rho -> passive state
};

/// Throws ContractViolation unless rho is Hermitian, unit-trace and PSD.
inline void require_density_matrix(const OperatorMatrix& rho, const char* what) {
  require_hermitian(rho, what);
  const double tr = rho.trace().real();
  if (std::abs(tr - 1.0) > kDensityTol) {
    std::ostringstream os;
    os << what << ": trace is " << tr << ", expected 1";
    throw ContractViolation(os.str());
  }
  const EigenSystem es = hermitian_eig(rho);
  if (es.values(0) < -kDensityTol) {
    std::ostringstream os;
    os << what << ": negative eigenvalue " << es.values(0);
    throw ContractViolation(os.str());
  }
}

namespace detail {

// Eigenvalues descending with matching vectors; ties keep ascending index.
inline EigenSystem descending(const EigenSystem& es) {
  const Eigen::Index n = es.values.size();
  EigenSystem out{RealVector(n), OperatorMatrix(es.vectors.rows(), n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i) = es.values(n - 1 - i);
    out.vectors.col(i) = es.vectors.col(n - 1 - i);
  }
  return out;
}

} // namespace detail

inline ErgotropyResult ergotropy(const OperatorMatrix& rho, const OperatorMatrix& h0) {
  require_density_matrix(rho, "ergotropy");
  require_hermitian(h0, "ergotropy (reference Hamiltonian)");
  if (rho.rows() != h0.rows()) throw DimensionError("ergotropy: state and Hamiltonian dimensions differ");

  const EigenSystem energy = hermitian_eig(h0);                     // ascending
  const EigenSystem pops = detail::descending(hermitian_eig(rho));  // descending

  ErgotropyResult r;
  r.internal_energy = (rho * h0).trace().real();
  r.passive_energy = pops.values.dot(energy.values);
  r.ergotropy = r.internal_energy - r.passive_energy;
  r.extracting_unitary = energy.vectors * pops.vectors.adjoint();
  return r;
}

/// Double-sum expression for the ergotropy; same value as ergotropy().ergotropy.
inline double ergotropy_double_sum(const OperatorMatrix& rho, const OperatorMatrix& h0) {
  require_density_matrix(rho, "ergotropy_double_sum");
  require_hermitian(h0, "ergotropy_double_sum (reference Hamiltonian)");
  const EigenSystem energy = hermitian_eig(h0);
  const EigenSystem pops = detail::descending(hermitian_eig(rho));
  const OperatorMatrix overlap = pops.vectors.adjoint() * energy.vectors;  // <r_n|e_i>
  double sum = 0.0;
  for (Eigen::Index n = 0; n < rho.rows(); ++n)
    for (Eigen::Index i = 0; i < rho.rows(); ++i)
      sum += pops.values(n) * energy.values(i) * (std::norm(overlap(n, i)) - (n == i ? 1.0 : 0.0));
  return sum;
}

} // namespace qbcharge
