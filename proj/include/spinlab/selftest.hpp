// selftest.hpp
// Exact-identity checks run by `spinlab selftest`: product-operator rules,
// gate constructions, refocusing, DD timing, line counting and J0 zeros.

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "spinlab/decoherence.hpp"
#include "spinlab/gates.hpp"
#include "spinlab/numerics.hpp"
#include "spinlab/tomography.hpp"

namespace spinlab {

struct CheckResult {
  std::string name;
  double error = 0.0;      // measured deviation from the exact value
  double tolerance = 0.0;
  bool pass = false;
};

namespace detail {

inline CheckResult check(std::string name, double error, double tolerance) {
  return {std::move(name), error, tolerance, std::isfinite(error) && error <= tolerance};
}

// max-abs distance between U A U† and the expected operator.
inline double rule_error(const Operator& u, const Operator& a, const Operator& expected) {
  return max_abs_diff(conjugate(u, a), expected);
}

}  // namespace detail

inline std::vector<CheckResult> identity_checks() {
  using detail::check;
  using detail::rule_error;
  std::vector<CheckResult> out;
  const Operator ix = pauli::Ix(), iy = pauli::Iy(), iz = pauli::Iz();

  {  // free evolution under Omega I_z
    const double a = 0.7;
    const Operator u = expm_hermitian(iz, a);
    out.push_back(check("product-op Omega Iz: Iz -> Iz", rule_error(u, iz, iz), 1e-10));
    out.push_back(check("product-op Omega Iz: Ix -> Ix cos + Iy sin",
                        rule_error(u, ix, std::cos(a) * ix + std::sin(a) * iy), 1e-10));
    out.push_back(check("product-op Omega Iz: Iy -> Iy cos - Ix sin",
                        rule_error(u, iy, std::cos(a) * iy - std::sin(a) * ix), 1e-10));
  }
  {  // RF pulse theta I_x
    const double a = 1.1;
    const Operator u = expm_hermitian(ix, a);
    out.push_back(check("product-op theta Ix: Ix -> Ix", rule_error(u, ix, ix), 1e-10));
    out.push_back(check("product-op theta Ix: Iy -> Iy cos + Iz sin",
                        rule_error(u, iy, std::cos(a) * iy + std::sin(a) * iz), 1e-10));
    out.push_back(check("product-op theta Ix: Iz -> Iz cos - Iy sin",
                        rule_error(u, iz, std::cos(a) * iz - std::sin(a) * iy), 1e-10));
  }
  {  // RF pulse theta1 I_y
    const double a = 0.4;
    const Operator u = expm_hermitian(iy, a);
    out.push_back(check("product-op theta Iy: Ix -> Ix cos - Iz sin",
                        rule_error(u, ix, std::cos(a) * ix - std::sin(a) * iz), 1e-10));
    out.push_back(check("product-op theta Iy: Iy -> Iy", rule_error(u, iy, iy), 1e-10));
    out.push_back(check("product-op theta Iy: Iz -> Iz cos + Ix sin",
                        rule_error(u, iz, std::cos(a) * iz + std::sin(a) * ix), 1e-10));
  }
  {  // scalar coupling, Theta = pi J t
    const double j = 209.4, t = 0.9 / (kPi * 209.4), th = kPi * j * t;
    const Operator u = coupling_propagator(j, t);
    const Operator i = pauli::I();
    const Operator Ix = kron(ix, i), Iy = kron(iy, i), Iz = kron(iz, i), Sz = kron(i, iz);
    const double c = std::cos(th), s = std::sin(th);
    out.push_back(check("product-op 2piJ IzSz: Ix -> Ix cos + 2IySz sin",
                        rule_error(u, Ix, c * Ix + s * (2.0 * Iy * Sz)), 1e-10));
    out.push_back(check("product-op 2piJ IzSz: Iy -> Iy cos - 2IxSz sin",
                        rule_error(u, Iy, c * Iy - s * (2.0 * Ix * Sz)), 1e-10));
    out.push_back(check("product-op 2piJ IzSz: Iz -> Iz", rule_error(u, Iz, Iz), 1e-10));
    out.push_back(check("product-op 2piJ IzSz: 2IxSz -> 2IxSz cos + Iy sin",
                        rule_error(u, 2.0 * Ix * Sz, c * (2.0 * Ix * Sz) + s * Iy), 1e-10));
    out.push_back(check("product-op 2piJ IzSz: 2IySz -> 2IySz cos - Ix sin",
                        rule_error(u, 2.0 * Iy * Sz, c * (2.0 * Iy * Sz) - s * Ix), 1e-10));
    out.push_back(check("product-op 2piJ IzSz: 2IzSz -> 2IzSz", rule_error(u, 2.0 * Iz * Sz, 2.0 * Iz * Sz),
                        1e-10));
    const Operator u2 = coupling_propagator(j, 1.0 / (2.0 * j));
    out.push_back(check("coupling t=1/2J: Ix -> 2IySz", rule_error(u2, Ix, 2.0 * Iy * Sz), 1e-10));
  }
  {  // rotations
    const double th = 0.83;
    const Operator r = rotation(rx(th), 1);
    const Operator expect = Operator(std::cos(th / 2) * pauli::I().matrix() - kI * std::sin(th / 2) * pauli::X().matrix());
    out.push_back(check("rotation: exp(-i theta X/2) = cos I - i sin X",
                        max_abs_diff(expm_hermitian(pauli::X(), th / 2), expect), 1e-12));
    out.push_back(check("rotation matches its closed form", max_abs_diff(r, expect), 1e-12));
    out.push_back(check("R_x^pi = -iX", max_abs_diff(rotation(rx(kPi), 1), -kI * pauli::X()), 1e-12));
    out.push_back(check("R_z^2pi = -I", max_abs_diff(rotation(rz(2 * kPi), 1), -1.0 * pauli::I()), 1e-12));
  }
  {  // named gates and sequences
    const Operator s = standard_gate(Gate::S);
    out.push_back(check("S^2 = Z", max_abs_diff(s * s, pauli::Z()), 0.0));
    Vector k10 = Vector::Zero(4), k11 = Vector::Zero(4);
    k10(2) = 1.0;
    k11(3) = 1.0;
    out.push_back(check("CNOT |10> = |11>", (standard_gate(Gate::CNOT).matrix() * k10 - k11).cwiseAbs().maxCoeff(), 0.0));
    PulseSequence had;
    had.rotate(ry(kPi / 2)).rotate(rx(kPi));
    out.push_back(check("Hadamard from [R_y^pi/2, R_x^pi]",
                        1.0 - gate_fidelity(compile_sequence(had, 1), standard_gate(Gate::H)), 1e-12));
    out.push_back(check("CNOT pulse sequence fidelity",
                        1.0 - gate_fidelity(compile_sequence(nmr_cnot_sequence(209.4), 2), standard_gate(Gate::CNOT)),
                        1e-9));
  }
  {  // refocusing
    const double omega = 2.0 * kPi * 104.7, tau = 0.0123;
    PulseSequence hahn;
    hahn.evolve(tau / 2, omega * pauli::Iz(), "chemical_shift").rotate(rx(kPi)).evolve(tau / 2, omega * pauli::Iz(), "chemical_shift");
    out.push_back(check("Hahn echo cancels the chemical shift",
                        1.0 - gate_fidelity(compile_sequence(hahn, 1), rotation(rx(kPi), 1)), 1e-12));
    const double j = 209.4;
    PulseSequence cj;
    cj.couple(tau / 2, j).rotate(rx(kPi, 1)).couple(tau / 2, j);
    out.push_back(check("pi pulse on one spin refocuses J",
                        1.0 - gate_fidelity(compile_sequence(cj, 2), rotation(rx(kPi, 1), 2)), 1e-12));
    const double nu[2] = {104.7, 0.0};
    const double jm[4] = {0.0, j, 0.0, 0.0};
    const Operator hw = weak_coupling_hamiltonian(nu, jm);
    PulseSequence both;
    both.evolve(tau / 2, hw, "weak_coupling").rotate(rx(kPi, 0)).rotate(rx(kPi, 1)).evolve(tau / 2, hw, "weak_coupling");
    const Operator pp = rotation(rx(kPi, 0), 2) * rotation(rx(kPi, 1), 2);
    // Pi pulses on both spins refocus shifts but not the coupling; the
    // residual is the full J evolution over tau.
    out.push_back(check("pi pulses on both spins refocus shifts only",
                        1.0 - gate_fidelity(compile_sequence(both, 2), pp * coupling_propagator(j, tau)), 1e-12));
  }
  {  // DD timing
    const double tc = 22.4e-3;
    out.push_back(check("udd N=1 equals the Hahn echo time", std::abs(dd_schedule(DDKind::udd, 1, tc)[0] - tc / 2), 1e-15));
    const auto u7 = dd_schedule(DDKind::udd, 7, tc);
    const double s1 = std::sin(kPi / 16);
    out.push_back(check("udd N=7 first pulse at t_c sin^2(pi/16)", std::abs(u7[0] - tc * s1 * s1), 1e-15));
    const auto c7 = dd_schedule(DDKind::cpmg, 7, tc);
    double asym = 0.0;
    for (std::size_t i = 0; i < c7.size(); ++i) asym = std::max(asym, std::abs(c7[i] + c7[c7.size() - 1 - i] - tc));
    out.push_back(check("cpmg N=7 mirror-symmetric about t_c/2", asym, 1e-15));
  }
  {  // line counting
    double worst = 0.0;
    for (int n = 1; n <= 4; ++n) {
      std::vector<double> nu(static_cast<std::size_t>(n)), jm(static_cast<std::size_t>(n * n), 0.0);
      for (int i = 0; i < n; ++i) {
        nu[static_cast<std::size_t>(i)] = 100.0 * i;
        for (int k = i + 1; k < n; ++k) jm[static_cast<std::size_t>(i * n + k)] = 10.0 + i + k;
      }
      const auto lines = transition_lines(nu, jm);
      worst = std::max(worst, std::abs(static_cast<double>(lines.size()) - n * std::ldexp(1.0, n - 1)));
    }
    out.push_back(check("transition line count n 2^(n-1), n = 1..4", worst, 0.0));
  }
  {  // Bessel J0
    const double zeros[3] = {2.404825557695773, 5.520078110286311, 8.653727912911012};
    double worst = 0.0;
    for (double z : zeros) worst = std::max(worst, std::abs(numerics::bessel_j0(z)));
    out.push_back(check("J0 vanishes at its first three zeros", worst, 1e-9));
    double odd = 0.0;
    for (double x = 0.0; x <= 50.0; x += 0.37) odd = std::max(odd, std::abs(numerics::bessel_j0(x) - numerics::bessel_j0(-x)));
    out.push_back(check("J0 is even", odd, 0.0));
    out.push_back(check("J0(0) = 1", std::abs(numerics::bessel_j0(0.0) - 1.0), 0.0));
  }
  {  // tomography
    const ChiMatrix id = qpt_single(channels::identity());
    Eigen::Matrix4cd e = Eigen::Matrix4cd::Zero();
    e(0, 0) = 1.0;
    out.push_back(check("QPT of the identity channel is chi_EE = 1", max_abs(id.chi - e), 1e-8));
    const auto rho = qst_single(0.3, -0.5, 0.6).rho;
    const double err = std::abs(expectation(pauli::X(), rho) - 0.3) + std::abs(expectation(pauli::Y(), rho) + 0.5) +
                       std::abs(expectation(pauli::Z(), rho) - 0.6);
    out.push_back(check("QST round trip", err, 1e-10));
    out.push_back(check("kick gamma at alpha = pi/4 is 2/pi", std::abs(kick_gamma(kPi / 4) - 2.0 / kPi), 1e-15));
  }
  return out;
}

}  // namespace spinlab
