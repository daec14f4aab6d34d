// common.hpp
// Shared scalar types, tolerances and error classes for spinlab.

#pragma once

#include <atomic>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace spinlab {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using Mat2 = Eigen::Matrix2cd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr cplx kI{0.0, 1.0};

namespace tol {
inline constexpr double hermitian = 1e-12;
inline constexpr double unitary = 1e-10;
inline constexpr double trace = 1e-10;
inline constexpr double psd_floor = -1e-10;
inline constexpr double purity = 1e-8;
inline constexpr double traceless = 1e-12;
}  // namespace tol

// Malformed input: bad dimensions, out-of-range indices, unknown names,
// violated preconditions. The CLI maps this to exit status 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation that could not produce a trustworthy number (singular
// system, non-finite objective, failed convergence). CLI exit status 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline std::atomic<int>& max_qubits_storage() {
  static std::atomic<int> value{4};
  return value;
}
}  // namespace detail

// Largest register size accepted by Operator. Guards against accidentally
// building 2^n x 2^n matrices for large n.
inline int max_qubits() { return detail::max_qubits_storage().load(); }

inline void set_max_qubits(int n) {
  if (n < 1 || n > 12) throw ValidationError("max_qubits must be in [1, 12]");
  detail::max_qubits_storage().store(n);
}

constexpr bool is_power_of_two(std::size_t x) { return x != 0 && (x & (x - 1)) == 0; }

constexpr int log2_exact(std::size_t x) {
  int n = 0;
  while (x > 1) {
    x >>= 1;
    ++n;
  }
  return n;
}

// Max-abs elementwise norm, the comparison norm used throughout.
template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace spinlab
