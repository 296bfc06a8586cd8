#pragma once

// Random generators and independent reference computations shared by the
// test suites. Nothing here calls the library's numerical routines, so the
// library can be checked against it.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "qbcharge/operator_core.hpp"

namespace qbtest {

using qbcharge::Complex;
using qbcharge::OperatorMatrix;
using qbcharge::StateVector;

class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  Complex cnormal() { return {normal(), normal()}; }

  OperatorMatrix ginibre(Eigen::Index rows, Eigen::Index cols) {
    OperatorMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = cnormal();
    return m;
  }

  OperatorMatrix hermitian(Eigen::Index n, double scale = 1.0) {
    const OperatorMatrix g = ginibre(n, n);
    return scale * 0.5 * (g + g.adjoint());
  }

  // Haar-random unitary: QR of a Ginibre matrix with R's diagonal phases removed.
  OperatorMatrix unitary(Eigen::Index n) {
    Eigen::HouseholderQR<OperatorMatrix> qr(ginibre(n, n));
    OperatorMatrix q = qr.householderQ();
    const OperatorMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < n; ++j) {
      const Complex d = r(j, j);
      if (std::abs(d) > 0.0) q.col(j) *= d / std::abs(d);
    }
    return q;
  }

  StateVector state(Eigen::Index n) {
    StateVector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = cnormal();
    return v / v.norm();
  }

  // Density matrix of random rank (1..n); sometimes with repeated eigenvalues.
  OperatorMatrix density(Eigen::Index n) {
    const int rank = integer(1, static_cast<int>(n));
    OperatorMatrix rho;
    if (integer(0, 3) == 0) {
      // Degenerate spectrum: equal weights on a random rank-k subspace.
      const OperatorMatrix q = unitary(n);
      rho = OperatorMatrix::Zero(n, n);
      for (int k = 0; k < rank; ++k) rho += q.col(k) * q.col(k).adjoint();
    } else {
      const OperatorMatrix g = ginibre(n, rank);
      rho = g * g.adjoint();
    }
    rho /= rho.trace().real();
    return 0.5 * (rho + rho.adjoint());
  }

  std::mt19937_64& engine() { return eng_; }

private:
  std::mt19937_64 eng_;
};

// exp(scale * A) by a 20-term Taylor series after scaling by 2^-s, then
// squaring s times.
inline OperatorMatrix taylor_expm(const OperatorMatrix& a, Complex scale) {
  OperatorMatrix m = scale * a;
  const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
  int s = 0;
  while (norm / std::ldexp(1.0, s) > 0.5) ++s;
  m /= std::ldexp(1.0, s);
  const Eigen::Index n = a.rows();
  OperatorMatrix term = OperatorMatrix::Identity(n, n);
  OperatorMatrix sum = term;
  for (int k = 1; k <= 20; ++k) {
    term = term * m / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum;
}

// Roots of the characteristic polynomial of a 3x3 Hermitian matrix by the
// trigonometric form of the cubic, ascending.
inline std::vector<double> char_poly_roots3(const OperatorMatrix& a) {
  const double tr = a.trace().real();
  double minors = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) minors += (a(i, i) * a(j, j) - a(i, j) * a(j, i)).real();
  const Complex det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
                      a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
                      a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
  // lambda^3 - tr lambda^2 + minors lambda - det = 0; shift lambda = x + tr/3.
  const double shift = tr / 3.0;
  const double p = minors - tr * tr / 3.0;
  const double q = -2.0 * tr * tr * tr / 27.0 + tr * minors / 3.0 - det.real();
  std::vector<double> roots;
  if (std::abs(p) < 1e-300) {
    const double x = std::cbrt(-q);
    roots = {x + shift, x + shift, x + shift};
  } else {
    const double r = 2.0 * std::sqrt(-p / 3.0);
    const double arg = std::clamp(3.0 * q / (p * r), -1.0, 1.0);
    const double phi = std::acos(arg) / 3.0;
    for (int k = 0; k < 3; ++k) roots.push_back(r * std::cos(phi - 2.0 * std::numbers::pi * k / 3.0) + shift);
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

// Kronecker product straight from the index formula.
inline OperatorMatrix kron_by_index(const OperatorMatrix& a, const OperatorMatrix& b) {
  OperatorMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index k = 0; k < b.rows(); ++k)
        for (Eigen::Index l = 0; l < b.cols(); ++l) out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

// Three-qubit reduced state of qubit q (0 = most significant) by bit algebra.
inline OperatorMatrix reduce_qubit3(const OperatorMatrix& rho, int q) {
  OperatorMatrix out = OperatorMatrix::Zero(2, 2);
  const int shift = 2 - q;
  for (int b = 0; b < 8; ++b)
    for (int c = 0; c < 8; ++c) {
      if ((b & ~(1 << shift)) != (c & ~(1 << shift))) continue;
      out((b >> shift) & 1, (c >> shift) & 1) += rho(b, c);
    }
  return out;
}

// Qubit ergotropy for H0 = w diag(-1, +1): w (<sigma_z> + |r|), r the Bloch vector.
inline double qubit_ergotropy(const OperatorMatrix& rho, double w) {
  const double rz = (rho(1, 1) - rho(0, 0)).real();
  const double rx = 2.0 * rho(0, 1).real();
  const double ry = 2.0 * rho(0, 1).imag();
  return w * (rz + std::sqrt(rx * rx + ry * ry + rz * rz));
}

// One-excitation sector matrices, written out by hand: basis (|100>, |010>, |001>).
inline OperatorMatrix sector_h_ini(double om) {
  OperatorMatrix h = OperatorMatrix::Zero(3, 3);
  h(0, 1) = h(1, 0) = 2.0 * om;
  return h;
}
inline OperatorMatrix sector_h_inter(double om) {
  OperatorMatrix h = OperatorMatrix::Zero(3, 3);
  h(1, 2) = h(2, 1) = 2.0 * om;
  return h;
}
inline OperatorMatrix sector_h_fin(double om) {
  OperatorMatrix h = OperatorMatrix::Zero(3, 3);
  h(2, 2) = -2.0 * om;
  return h;
}

// Fixed-step classical RK4 on i psi' = H(t) psi in the 3-dim sector.
template <class H>
StateVector rk4_sector(H&& h, StateVector psi, double t_end, int steps) {
  const double dt = t_end / steps;
  const Complex mi(0.0, -1.0);
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    const StateVector k1 = mi * (h(t) * psi);
    const StateVector k2 = mi * (h(t + 0.5 * dt) * (psi + 0.5 * dt * k1));
    const StateVector k3 = mi * (h(t + 0.5 * dt) * (psi + 0.5 * dt * k2));
    const StateVector k4 = mi * (h(t + dt) * (psi + dt * k3));
    psi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return psi;
}

} // namespace qbtest
