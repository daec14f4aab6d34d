// operator.hpp
// Dense complex operators on n-qubit registers: tensor products, single-site
// embeddings, Hermitian matrix exponentials and partial traces.

#pragma once

#include <cmath>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "spinlab/common.hpp"

namespace spinlab {

/// Square complex matrix acting on a register of qubits (dimension 2^n,
/// 1 <= n <= max_qubits()). Immutable value type.
class Operator {
 public:
  explicit Operator(Matrix m) : m_(std::move(m)) { check_shape(); }

  static Operator identity(std::size_t dim) { return Operator(Matrix::Identity(dim, dim)); }
  static Operator zero(std::size_t dim) { return Operator(Matrix::Zero(dim, dim)); }

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  int qubits() const { return log2_exact(dim()); }
  const Matrix& matrix() const { return m_; }
  cplx operator()(Eigen::Index r, Eigen::Index c) const { return m_(r, c); }

  Operator adjoint() const { return Operator(m_.adjoint()); }
  cplx trace() const { return m_.trace(); }

  bool is_hermitian(double tolerance = tol::hermitian) const {
    return max_abs(m_ - m_.adjoint()) <= tolerance;
  }
  bool is_unitary(double tolerance = tol::unitary) const {
    return max_abs(m_ * m_.adjoint() - Matrix::Identity(m_.rows(), m_.cols())) <= tolerance;
  }

  friend Operator operator*(const Operator& a, const Operator& b) {
    require_same_dim(a, b, "operator*");
    return Operator(a.m_ * b.m_);
  }
  friend Operator operator+(const Operator& a, const Operator& b) {
    require_same_dim(a, b, "operator+");
    return Operator(a.m_ + b.m_);
  }
  friend Operator operator-(const Operator& a, const Operator& b) {
    require_same_dim(a, b, "operator-");
    return Operator(a.m_ - b.m_);
  }
  friend Operator operator*(cplx s, const Operator& a) { return Operator(s * a.m_); }
  friend Operator operator*(const Operator& a, cplx s) { return Operator(s * a.m_); }
  friend Operator operator*(double s, const Operator& a) { return Operator(s * a.m_); }
  friend Operator operator*(const Operator& a, double s) { return Operator(s * a.m_); }
  Operator operator-() const { return Operator(-m_); }

 private:
  static void require_same_dim(const Operator& a, const Operator& b, const char* what) {
    if (a.dim() != b.dim()) throw ValidationError(std::string(what) + ": dimension mismatch");
  }

  void check_shape() const {
    if (m_.rows() != m_.cols()) throw ValidationError("Operator: matrix is not square");
    const auto d = static_cast<std::size_t>(m_.rows());
    if (d < 2 || !is_power_of_two(d))
      throw ValidationError("Operator: dimension must be a power of two >= 2, got " +
                            std::to_string(d));
    if (log2_exact(d) > max_qubits())
      throw ValidationError("Operator: " + std::to_string(log2_exact(d)) +
                            " qubits exceeds the configured maximum of " +
                            std::to_string(max_qubits()));
  }

  Matrix m_;
};

inline double max_abs_diff(const Operator& a, const Operator& b) {
  if (a.dim() != b.dim()) throw ValidationError("max_abs_diff: dimension mismatch");
  return max_abs(a.matrix() - b.matrix());
}

// Pauli matrices and spin-1/2 operators (I_a = sigma_a / 2).
namespace pauli {

inline Operator I() { return Operator::identity(2); }

inline Operator X() {
  Matrix m(2, 2);
  m << 0.0, 1.0, 1.0, 0.0;
  return Operator(m);
}

inline Operator Y() {
  Matrix m(2, 2);
  m << 0.0, -kI, kI, 0.0;
  return Operator(m);
}

inline Operator Z() {
  Matrix m(2, 2);
  m << 1.0, 0.0, 0.0, -1.0;
  return Operator(m);
}

inline Operator Ix() { return 0.5 * X(); }
inline Operator Iy() { return 0.5 * Y(); }
inline Operator Iz() { return 0.5 * Z(); }

}  // namespace pauli

/// Tensor (Kronecker) product a ⊗ b; `a` occupies the leading qubits.
inline Operator kron(const Operator& a, const Operator& b) {
  const auto da = static_cast<Eigen::Index>(a.dim());
  const auto db = static_cast<Eigen::Index>(b.dim());
  Matrix out(da * db, da * db);
  for (Eigen::Index i = 0; i < da; ++i)
    for (Eigen::Index j = 0; j < da; ++j) out.block(i * db, j * db, db, db) = a(i, j) * b.matrix();
  return Operator(std::move(out));
}

inline Operator kron(std::initializer_list<Operator> factors) {
  if (factors.size() == 0) throw ValidationError("kron: no factors");
  auto it = factors.begin();
  Operator acc = *it++;
  for (; it != factors.end(); ++it) acc = kron(acc, *it);
  return acc;
}

/// I ⊗ ... ⊗ op ⊗ ... ⊗ I with `op` on qubit `site` (0 = leftmost factor).
inline Operator embed(const Operator& op, int site, int n) {
  if (op.dim() != 2) throw ValidationError("embed: operator must be 2x2");
  if (n < 1) throw ValidationError("embed: qubit count must be >= 1");
  if (site < 0 || site >= n)
    throw ValidationError("embed: site " + std::to_string(site) + " out of range for " +
                          std::to_string(n) + " qubits");
  if (n > max_qubits()) throw ValidationError("embed: qubit count exceeds configured maximum");
  const std::size_t left = std::size_t{1} << site;
  const std::size_t right = std::size_t{1} << (n - site - 1);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(left * 2 * right),
                            static_cast<Eigen::Index>(left * 2 * right));
  const auto r = static_cast<Eigen::Index>(right);
  for (std::size_t l = 0; l < left; ++l) {
    const auto base = static_cast<Eigen::Index>(l * 2 * right);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        out.block(base + a * r, base + b * r, r, r) = op(a, b) * Matrix::Identity(r, r);
  }
  return Operator(std::move(out));
}

/// exp(-i h t) for Hermitian h, via the eigendecomposition of h.
inline Operator expm_hermitian(const Operator& h, double t) {
  if (!h.is_hermitian()) throw ValidationError("expm_hermitian: generator is not Hermitian");
  if (!std::isfinite(t)) throw ValidationError("expm_hermitian: non-finite time");
  if (t == 0.0) return Operator::identity(h.dim());
  // Symmetrize to remove sub-tolerance anti-Hermitian noise before solving.
  const Matrix hs = 0.5 * (h.matrix() + h.matrix().adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(hs);
  if (es.info() != Eigen::Success) throw NumericError("expm_hermitian: eigensolver failed");
  const Eigen::VectorXd& w = es.eigenvalues();
  Vector phases(w.size());
  for (Eigen::Index k = 0; k < w.size(); ++k) phases(k) = std::exp(-kI * (w(k) * t));
  const Matrix& v = es.eigenvectors();
  return Operator(v * phases.asDiagonal() * v.adjoint());
}

/// U rho U†.
inline Operator conjugate(const Operator& u, const Operator& rho) {
  if (u.dim() != rho.dim()) throw ValidationError("conjugate: dimension mismatch");
  return Operator(u.matrix() * rho.matrix() * u.matrix().adjoint());
}

/// [a, b] = ab - ba.
inline Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }

/// Hilbert-Schmidt inner product Tr[a† b].
inline cplx hs_inner(const Operator& a, const Operator& b) {
  if (a.dim() != b.dim()) throw ValidationError("hs_inner: dimension mismatch");
  return (a.matrix().adjoint() * b.matrix()).trace();
}

/// Traces out every factor not listed in `keep`.
///
/// `dims` lists the factor dimensions (each a power of two) in register
/// order; their product must equal rho.dim(). Kept factors stay in their
/// original relative order.
inline Operator partial_trace(const Operator& rho, std::span<const int> keep,
                              std::span<const std::size_t> dims) {
  std::size_t total = 1;
  for (std::size_t d : dims) {
    if (d < 2 || !is_power_of_two(d))
      throw ValidationError("partial_trace: factor dimensions must be powers of two >= 2");
    total *= d;
  }
  if (total != rho.dim()) throw ValidationError("partial_trace: factor dimensions inconsistent");
  const int nf = static_cast<int>(dims.size());
  std::vector<bool> kept(dims.size(), false);
  for (int k : keep) {
    if (k < 0 || k >= nf) throw ValidationError("partial_trace: kept index out of range");
    if (kept[static_cast<std::size_t>(k)]) throw ValidationError("partial_trace: duplicate index");
    kept[static_cast<std::size_t>(k)] = true;
  }
  std::size_t dim_keep = 1;
  for (int f = 0; f < nf; ++f)
    if (kept[static_cast<std::size_t>(f)]) dim_keep *= dims[static_cast<std::size_t>(f)];
  if (dim_keep == 1) throw ValidationError("partial_trace: must keep at least one factor");

  // Strides of each factor in the full row-major index.
  std::vector<std::size_t> stride(dims.size());
  {
    std::size_t s = 1;
    for (int f = nf - 1; f >= 0; --f) {
      stride[static_cast<std::size_t>(f)] = s;
      s *= dims[static_cast<std::size_t>(f)];
    }
  }
  auto split = [&](std::size_t idx, std::size_t& kidx, std::size_t& tidx) {
    kidx = 0;
    tidx = 0;
    for (int f = 0; f < nf; ++f) {
      const auto uf = static_cast<std::size_t>(f);
      const std::size_t digit = (idx / stride[uf]) % dims[uf];
      if (kept[uf])
        kidx = kidx * dims[uf] + digit;
      else
        tidx = tidx * dims[uf] + digit;
    }
  };

  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(dim_keep), static_cast<Eigen::Index>(dim_keep));
  const std::size_t d = rho.dim();
  for (std::size_t i = 0; i < d; ++i) {
    std::size_t ki, ti;
    split(i, ki, ti);
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t kj, tj;
      split(j, kj, tj);
      if (ti == tj)
        out(static_cast<Eigen::Index>(ki), static_cast<Eigen::Index>(kj)) +=
            rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  return Operator(std::move(out));
}

inline Operator partial_trace(const Operator& rho, std::initializer_list<int> keep,
                              std::initializer_list<std::size_t> dims) {
  return partial_trace(rho, std::span<const int>(keep.begin(), keep.size()),
                       std::span<const std::size_t>(dims.begin(), dims.size()));
}

}  // namespace spinlab
