#pragma once

// Dense complex linear algebra used by every other module: Hermitian
// eigendecomposition, exact exponentials of Hermitian matrices, Kronecker
// products, partial traces and the Hilbert-Schmidt norm.
//
// Matrices here are tiny (dimension 8 at most in the battery model), so
// everything is dense and computed exactly through eigendecompositions.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <vector>

#include "qbcharge/errors.hpp"

namespace qbcharge {

using Complex = std::complex<double>;
using OperatorMatrix = Eigen::MatrixXcd;
using StateVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};

/// Default relative tolerance for Hermiticity checks.
inline constexpr double kHermitianTol = 1e-12;

/// Largest entry modulus, floored at 1 so thresholds stay unit-free.
inline double matrix_scale(const OperatorMatrix& a) {
  double m = a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
  return std::max(1.0, m);
}

inline bool is_hermitian(const OperatorMatrix& a, double tol = kHermitianTol) {
  if (a.rows() != a.cols() || a.rows() == 0) return false;
  double dev = (a - a.adjoint()).cwiseAbs().maxCoeff();
  return dev <= tol * matrix_scale(a);
}

inline void require_hermitian(const OperatorMatrix& a, const char* what,
                              double tol = kHermitianTol) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    std::ostringstream os;
    os << what << ": expected a non-empty square matrix, got " << a.rows() << "x" << a.cols();
    throw DimensionError(os.str());
  }
  if (!is_hermitian(a, tol)) {
    std::ostringstream os;
    os << what << ": matrix is not Hermitian (max |A - A^dag| = "
       << (a - a.adjoint()).cwiseAbs().maxCoeff() << ")";
    throw ContractViolation(os.str());
  }
}

struct EigenSystem {
  RealVector values;       // ascending
  OperatorMatrix vectors;  // orthonormal columns, vectors.col(n) <-> values(n)
};

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
/// Degenerate eigenvectors come back in whatever basis the solver picks.
inline EigenSystem hermitian_eig(const OperatorMatrix& a, double tol = kHermitianTol) {
  require_hermitian(a, "hermitian_eig", tol);
  // Solve the exactly Hermitian part so round-off asymmetry never leaks in.
  const OperatorMatrix sym = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<OperatorMatrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw ContractViolation("hermitian_eig: eigensolver did not converge");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// exp(scale * A) for Hermitian A, via its eigendecomposition.
/// Purely imaginary `scale` yields a unitary.
inline OperatorMatrix expm_hermitian(const OperatorMatrix& a, Complex scale,
                                     double tol = kHermitianTol) {
  const EigenSystem es = hermitian_eig(a, tol);
  Eigen::VectorXcd phases(es.values.size());
  for (Eigen::Index i = 0; i < es.values.size(); ++i) phases(i) = std::exp(scale * es.values(i));
  return es.vectors * phases.asDiagonal() * es.vectors.adjoint();
}

/// Kronecker product: (A (x) B)[(i*dB + k), (j*dB + l)] = A[i,j] * B[k,l].
inline OperatorMatrix kron(const OperatorMatrix& a, const OperatorMatrix& b) {
  OperatorMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline StateVector kron(const StateVector& a, const StateVector& b) {
  StateVector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

/// Reduced operator on factor `keep` of a tensor product with factor
/// dimensions `dims` (first factor most significant in the row index).
inline OperatorMatrix partial_trace(const OperatorMatrix& rho, std::size_t keep,
                                    std::span<const Eigen::Index> dims) {
  if (keep >= dims.size()) throw DimensionError("partial_trace: kept factor index out of range");
  const Eigen::Index total =
      std::accumulate(dims.begin(), dims.end(), Eigen::Index{1}, std::multiplies<>());
  if (rho.rows() != rho.cols() || rho.rows() != total) {
    std::ostringstream os;
    os << "partial_trace: factor dimensions multiply to " << total << " but operator is "
       << rho.rows() << "x" << rho.cols();
    throw DimensionError(os.str());
  }
  const Eigen::Index dk = dims[keep];
  // Row index b = (outer * dk + k) * inner + r, with outer/inner the
  // combined dimensions of the factors before/after `keep`.
  Eigen::Index inner = 1;
  for (std::size_t f = keep + 1; f < dims.size(); ++f) inner *= dims[f];
  const Eigen::Index outer = total / (dk * inner);

  OperatorMatrix red = OperatorMatrix::Zero(dk, dk);
  for (Eigen::Index o = 0; o < outer; ++o)
    for (Eigen::Index r = 0; r < inner; ++r)
      for (Eigen::Index k = 0; k < dk; ++k)
        for (Eigen::Index l = 0; l < dk; ++l)
          red(k, l) += rho((o * dk + k) * inner + r, (o * dk + l) * inner + r);
  return red;
}

inline OperatorMatrix partial_trace(const OperatorMatrix& rho, std::size_t keep,
                                    std::initializer_list<Eigen::Index> dims) {
  return partial_trace(rho, keep, std::span<const Eigen::Index>(dims.begin(), dims.size()));
}

/// sqrt(tr(A A^dag)).
inline double hs_norm(const OperatorMatrix& a) { return a.norm(); }

inline OperatorMatrix projector(const StateVector& v) { return v * v.adjoint(); }

inline OperatorMatrix commutator(const OperatorMatrix& a, const OperatorMatrix& b) {
  return a * b - b * a;
}

/// |<a|b>|^2 for normalized vectors.
inline double fidelity(const StateVector& a, const StateVector& b) {
  return std::norm(a.dot(b));
}

} // namespace qbcharge
