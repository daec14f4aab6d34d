// state.hpp
// Density matrices, Bloch vectors, thermal deviation states and
// ensemble-average measurement.

#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spinlab/operator.hpp"

namespace spinlab {

enum class StateKind { pure, mixed, invalid };

struct StateClassification {
  StateKind kind = StateKind::invalid;
  double purity = 0.0;
  std::string reason;  // empty unless invalid

  bool valid() const { return kind != StateKind::invalid; }
};

/// Checks trace one, Hermiticity and positivity; classifies by Tr[rho^2].
/// Never throws on a square matrix: violations come back as `invalid`.
inline StateClassification validate_density(const Matrix& m) {
  StateClassification out;
  if (m.rows() != m.cols() || m.rows() == 0) {
    out.reason = "matrix is not square";
    return out;
  }
  if (max_abs(m - m.adjoint()) > tol::hermitian) {
    out.reason = "not Hermitian";
    return out;
  }
  const cplx tr = m.trace();
  if (std::abs(tr - 1.0) > tol::trace) {
    out.reason = "trace " + std::to_string(tr.real()) + " differs from 1";
    return out;
  }
  const Matrix hs = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(hs, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < tol::psd_floor) {
    out.reason = "negative eigenvalue " + std::to_string(es.eigenvalues().minCoeff());
    return out;
  }
  out.purity = (m * m).trace().real();
  out.kind = std::abs(out.purity - 1.0) <= tol::purity ? StateKind::pure : StateKind::mixed;
  return out;
}

/// Trace-one, Hermitian, positive semidefinite operator.
class DensityMatrix {
 public:
  /// Validates and wraps; throws ValidationError with the reason on failure.
  explicit DensityMatrix(Operator rho) : rho_(std::move(rho)) {
    const auto c = validate_density(rho_.matrix());
    if (!c.valid()) throw ValidationError("DensityMatrix: " + c.reason);
  }

  static DensityMatrix from_ket(const Vector& psi) {
    const double n = psi.norm();
    if (n == 0.0) throw ValidationError("DensityMatrix::from_ket: zero vector");
    const Vector v = psi / n;
    return DensityMatrix(Operator(v * v.adjoint()));
  }

  static DensityMatrix maximally_mixed(std::size_t dim) {
    return DensityMatrix(Operator(Matrix::Identity(static_cast<Eigen::Index>(dim),
                                                   static_cast<Eigen::Index>(dim)) /
                                  static_cast<double>(dim)));
  }

  const Operator& op() const { return rho_; }
  const Matrix& matrix() const { return rho_.matrix(); }
  std::size_t dim() const { return rho_.dim(); }
  double purity() const { return (rho_.matrix() * rho_.matrix()).trace().real(); }

 private:
  Operator rho_;
};

/// Traceless Hermitian part of a high-temperature thermal state, with the
/// spin polarization factored out (entries are in units of `polarization`).
class DeviationDensity {
 public:
  DeviationDensity(Operator delta, double polarization)
      : delta_(std::move(delta)), polarization_(polarization) {
    if (!delta_.is_hermitian()) throw ValidationError("DeviationDensity: not Hermitian");
    if (std::abs(delta_.trace()) > tol::traceless)
      throw ValidationError("DeviationDensity: not traceless");
  }

  const Operator& op() const { return delta_; }
  double polarization() const { return polarization_; }

 private:
  Operator delta_;
  double polarization_;
};

struct BlochVector {
  std::array<double, 3> r{0.0, 0.0, 0.0};

  double norm() const { return std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]); }
};

/// rho = (I + r·sigma) / 2.
inline DensityMatrix density_from_bloch(const BlochVector& b) {
  if (b.norm() > 1.0 + 1e-10) throw ValidationError("density_from_bloch: |r| > 1");
  Matrix m = 0.5 * (pauli::I().matrix() + b.r[0] * pauli::X().matrix() +
                    b.r[1] * pauli::Y().matrix() + b.r[2] * pauli::Z().matrix());
  return DensityMatrix(Operator(std::move(m)));
}

/// Bloch vector of a single-qubit density matrix.
inline BlochVector bloch_from_density(const DensityMatrix& rho) {
  if (rho.dim() != 2) throw ValidationError("bloch_from_density: not a single qubit");
  const Matrix& m = rho.matrix();
  return BlochVector{{2.0 * m(0, 1).real(), -2.0 * m(0, 1).imag(), (m(0, 0) - m(1, 1)).real()}};
}

namespace physical {
inline constexpr double hbar = 1.054571817e-34;       // J s
inline constexpr double boltzmann = 1.380649e-23;     // J / K
}  // namespace physical

/// High-temperature deviation density -sum_i (omega_i / omega_ref) I_z^i.
///
/// omega_ref is the mean Larmor frequency, so equal frequencies give
/// coefficient -1 per spin. The returned polarization is
/// hbar * omega_ref / (2^n k_B T) at `temperature_k`.
inline DeviationDensity thermal_deviation_state(std::span<const double> omegas, int n,
                                                double temperature_k = 300.0) {
  if (n < 1) throw ValidationError("thermal_deviation_state: n must be >= 1");
  if (omegas.size() != static_cast<std::size_t>(n))
    throw ValidationError("thermal_deviation_state: need one Larmor frequency per spin");
  if (!(temperature_k > 0.0)) throw ValidationError("thermal_deviation_state: temperature <= 0");
  double ref = 0.0;
  for (double w : omegas) ref += w;
  ref /= static_cast<double>(n);
  if (ref == 0.0) throw ValidationError("thermal_deviation_state: mean Larmor frequency is zero");
  Operator acc = Operator::zero(std::size_t{1} << n);
  for (int i = 0; i < n; ++i)
    acc = acc - (omegas[static_cast<std::size_t>(i)] / ref) * embed(pauli::Iz(), i, n);
  const double eps = physical::hbar * std::abs(ref) /
                     (std::ldexp(1.0, n) * physical::boltzmann * temperature_k);
  return DeviationDensity(std::move(acc), eps);
}

/// Braunstein bound: pseudo-pure states can be non-separable only for
/// polarization above 1 / (1 + 2^{n/2}).
inline double pseudo_pure_threshold(int n) {
  if (n < 1) throw ValidationError("pseudo_pure_threshold: n must be >= 1");
  return 1.0 / (1.0 + std::pow(2.0, 0.5 * n));
}

/// <A> = Tr[A rho] for Hermitian A. The imaginary residue must be below 1e-10.
inline double expectation(const Operator& a, const Operator& rho) {
  if (a.dim() != rho.dim()) throw ValidationError("expectation: dimension mismatch");
  if (!a.is_hermitian()) throw ValidationError("expectation: observable is not Hermitian");
  const cplx v = (a.matrix() * rho.matrix()).trace();
  const double scale = std::max(1.0, a.matrix().norm() * rho.matrix().norm());
  if (std::abs(v.imag()) > 1e-10 * scale)
    throw NumericError("expectation: imaginary residue " + std::to_string(v.imag()));
  return v.real();
}

inline double expectation(const Operator& a, const DensityMatrix& rho) {
  return expectation(a, rho.op());
}

/// Deviation signal: the identity part of the full state contributes nothing.
inline double expectation(const Operator& a, const DeviationDensity& rho) {
  return expectation(a, rho.op());
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const int> keep,
                                   std::span<const std::size_t> dims) {
  return DensityMatrix(partial_trace(rho.op(), keep, dims));
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::initializer_list<int> keep,
                                   std::initializer_list<std::size_t> dims) {
  return DensityMatrix(partial_trace(rho.op(), keep, dims));
}

}  // namespace spinlab
