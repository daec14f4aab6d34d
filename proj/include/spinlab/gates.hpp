// gates.hpp
// Rotations, named gates, NMR pulse-sequence composition, gate fidelity and
// weak-coupling transition lines.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "spinlab/operator.hpp"

namespace spinlab {

struct RotationSpec {
  std::array<double, 3> axis{1.0, 0.0, 0.0};  // unit vector
  double angle = 0.0;                         // radians
  int target = 0;
};

/// R_n(theta) = cos(theta/2) I - i sin(theta/2) (n·sigma) on qubit `target`.
inline Operator rotation(const RotationSpec& spec, int n) {
  const auto& a = spec.axis;
  const double norm = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  if (std::abs(norm - 1.0) > 1e-10) throw ValidationError("rotation: axis is not a unit vector");
  const double c = std::cos(0.5 * spec.angle);
  const double s = std::sin(0.5 * spec.angle);
  const Matrix local = c * pauli::I().matrix() -
                      kI * s * (a[0] * pauli::X().matrix() + a[1] * pauli::Y().matrix() +
                                a[2] * pauli::Z().matrix());
  return embed(Operator(local), spec.target, n);
}

inline RotationSpec rx(double angle, int target = 0) { return {{1.0, 0.0, 0.0}, angle, target}; }
inline RotationSpec ry(double angle, int target = 0) { return {{0.0, 1.0, 0.0}, angle, target}; }
inline RotationSpec rz(double angle, int target = 0) { return {{0.0, 0.0, 1.0}, angle, target}; }

enum class Gate { H, S, CNOT, X, Y, Z };

inline Gate parse_gate(std::string_view name) {
  if (name == "H") return Gate::H;
  if (name == "S") return Gate::S;
  if (name == "CNOT") return Gate::CNOT;
  if (name == "X") return Gate::X;
  if (name == "Y") return Gate::Y;
  if (name == "Z") return Gate::Z;
  throw ValidationError("unknown gate '" + std::string(name) + "'");
}

inline Operator standard_gate(Gate g) {
  switch (g) {
    case Gate::H: {
      Matrix m(2, 2);
      m << 1.0, 1.0, 1.0, -1.0;
      return Operator(m / std::sqrt(2.0));
    }
    case Gate::S: {
      Matrix m(2, 2);
      m << 1.0, 0.0, 0.0, kI;
      return Operator(m);
    }
    case Gate::CNOT: {
      Matrix m = Matrix::Zero(4, 4);
      m(0, 0) = m(1, 1) = m(2, 3) = m(3, 2) = 1.0;
      return Operator(m);
    }
    case Gate::X: return pauli::X();
    case Gate::Y: return pauli::Y();
    case Gate::Z: return pauli::Z();
  }
  throw ValidationError("standard_gate: unknown gate");
}

inline Operator standard_gate(std::string_view name) { return standard_gate(parse_gate(name)); }

/// exp(-i 2 pi J t I_z^a I_z^b) on an n-qubit register. Diagonal.
inline Operator coupling_propagator(double j_hz, double t_s, int a, int b, int n) {
  if (t_s < 0.0) throw ValidationError("coupling_propagator: negative duration");
  if (a == b) throw ValidationError("coupling_propagator: pair must be two distinct qubits");
  const Operator zz = embed(pauli::Iz(), a, n) * embed(pauli::Iz(), b, n);
  Matrix u = Matrix::Zero(static_cast<Eigen::Index>(zz.dim()), static_cast<Eigen::Index>(zz.dim()));
  for (Eigen::Index k = 0; k < u.rows(); ++k)
    u(k, k) = std::exp(-kI * (2.0 * kPi * j_hz * t_s * zz(k, k).real()));
  return Operator(std::move(u));
}

/// Two-qubit form, exp(-i 2 pi J I_z S_z t).
inline Operator coupling_propagator(double j_hz, double t_s) {
  return coupling_propagator(j_hz, t_s, 0, 1, 2);
}

/// Weak-coupling internal Hamiltonian in rad/s:
/// sum_i 2 pi nu_i I_z^i + 2 pi sum_{i<j} J_ij I_z^i I_z^j.
/// `couplings_hz` is a row-major n x n matrix (only i < j entries are read).
inline Operator weak_coupling_hamiltonian(std::span<const double> offsets_hz,
                                          std::span<const double> couplings_hz) {
  const int n = static_cast<int>(offsets_hz.size());
  if (n < 1) throw ValidationError("weak_coupling_hamiltonian: no spins");
  if (!couplings_hz.empty() && couplings_hz.size() != offsets_hz.size() * offsets_hz.size())
    throw ValidationError("weak_coupling_hamiltonian: coupling matrix must be n x n");
  Operator h = Operator::zero(std::size_t{1} << n);
  for (int i = 0; i < n; ++i)
    h = h + (2.0 * kPi * offsets_hz[static_cast<std::size_t>(i)]) * embed(pauli::Iz(), i, n);
  if (!couplings_hz.empty()) {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double jij = couplings_hz[static_cast<std::size_t>(i * n + j)];
        if (jij != 0.0)
          h = h + (2.0 * kPi * jij) * (embed(pauli::Iz(), i, n) * embed(pauli::Iz(), j, n));
      }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Pulse sequences. Elements are listed in time order (first applied first).

struct RotationElement {
  RotationSpec spec;
};

struct CouplingDelay {
  double duration_s = 0.0;
  double j_hz = 0.0;
  std::array<int, 2> pair{0, 1};
};

struct FreeEvolution {
  double duration_s = 0.0;
  Operator hamiltonian;  // rad/s
  std::string tag;       // e.g. "chemical_shift", "weak_coupling"
};

using PulseElement = std::variant<RotationElement, CouplingDelay, FreeEvolution>;

struct PulseSequence {
  std::vector<PulseElement> elements;

  PulseSequence& rotate(const RotationSpec& spec) {
    elements.emplace_back(RotationElement{spec});
    return *this;
  }
  PulseSequence& couple(double duration_s, double j_hz, int a = 0, int b = 1) {
    elements.emplace_back(CouplingDelay{duration_s, j_hz, {a, b}});
    return *this;
  }
  PulseSequence& evolve(double duration_s, Operator h, std::string tag = {}) {
    elements.emplace_back(FreeEvolution{duration_s, std::move(h), std::move(tag)});
    return *this;
  }
};

inline Operator element_unitary(const PulseElement& e, int n) {
  return std::visit(
      [n](const auto& el) -> Operator {
        using T = std::decay_t<decltype(el)>;
        if constexpr (std::is_same_v<T, RotationElement>) {
          if (el.spec.target < 0 || el.spec.target >= n)
            throw ValidationError("compile_sequence: rotation target out of range");
          return rotation(el.spec, n);
        } else if constexpr (std::is_same_v<T, CouplingDelay>) {
          for (int q : el.pair)
            if (q < 0 || q >= n) throw ValidationError("compile_sequence: coupling pair out of range");
          return coupling_propagator(el.j_hz, el.duration_s, el.pair[0], el.pair[1], n);
        } else {
          if (el.hamiltonian.dim() != (std::size_t{1} << n))
            throw ValidationError("compile_sequence: Hamiltonian dimension mismatch");
          if (el.duration_s < 0.0) throw ValidationError("compile_sequence: negative duration");
          return expm_hermitian(el.hamiltonian, el.duration_s);
        }
      },
      e);
}

/// U = U_last ... U_first.
inline Operator compile_sequence(const PulseSequence& seq, int n) {
  if (n < 1) throw ValidationError("compile_sequence: qubit count must be >= 1");
  Operator u = Operator::identity(std::size_t{1} << n);
  for (const auto& e : seq.elements) u = element_unitary(e, n) * u;
  return u;
}

/// F = |Tr[U1 U2†]| / 2^n. Insensitive to global phase.
inline double gate_fidelity(const Operator& u1, const Operator& u2) {
  if (u1.dim() != u2.dim()) throw ValidationError("gate_fidelity: dimension mismatch");
  const double f = std::abs((u1.matrix() * u2.matrix().adjoint()).trace()) /
                   static_cast<double>(u1.dim());
  return std::min(f, 1.0);
}

/// The CNOT realization by z, x, y rotations around a J-coupling delay of
/// 1/(2J), in time order: (R_y^{pi/2})_S, U(1/2J), (R_x^{pi/2})_S,
/// (R_z^{-pi/2})_S, (R_z^{pi/2})_I. Qubit 0 is I (control), qubit 1 is S.
inline PulseSequence nmr_cnot_sequence(double j_hz) {
  if (!(j_hz > 0.0)) throw ValidationError("nmr_cnot_sequence: J must be positive");
  PulseSequence seq;
  seq.rotate(ry(kPi / 2, 1))
      .couple(1.0 / (2.0 * j_hz), j_hz, 0, 1)
      .rotate(rx(kPi / 2, 1))
      .rotate(rz(-kPi / 2, 1))
      .rotate(rz(kPi / 2, 0));
  return seq;
}

// ---------------------------------------------------------------------------
// Weak-coupling spectra

struct TransitionLine {
  int spin = 0;
  double frequency_hz = 0.0;
};

/// First-order line positions: for spin i, one line per configuration of the
/// other spins at offset_i + sum_j (±J_ij / 2). Returns n·2^{n-1} lines,
/// grouped by spin and ordered by partner configuration.
inline std::vector<TransitionLine> transition_lines(std::span<const double> offsets_hz,
                                                    std::span<const double> couplings_hz) {
  const std::size_t n = offsets_hz.size();
  if (n == 0) throw ValidationError("transition_lines: no spins");
  if (!couplings_hz.empty() && couplings_hz.size() != n * n)
    throw ValidationError("transition_lines: coupling matrix must be n x n");
  if (n > 20) throw ValidationError("transition_lines: too many spins");
  auto coupling = [&](std::size_t i, std::size_t j) {
    if (couplings_hz.empty()) return 0.0;
    return i < j ? couplings_hz[i * n + j] : couplings_hz[j * n + i];
  };
  std::vector<TransitionLine> lines;
  lines.reserve(n << (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t partners = n - 1;
    for (std::size_t cfg = 0; cfg < (std::size_t{1} << partners); ++cfg) {
      double f = offsets_hz[i];
      std::size_t bit = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        // Partner in |0> (m = +1/2) shifts by +J/2, in |1> by -J/2.
        const bool down = (cfg >> (partners - 1 - bit)) & 1U;
        f += (down ? -0.5 : 0.5) * coupling(i, j);
        ++bit;
      }
      lines.push_back({static_cast<int>(i), f});
    }
  }
  return lines;
}

}  // namespace spinlab
