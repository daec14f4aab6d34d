// tomography.hpp
// Single-qubit state tomography, chi-matrix process tomography and CPMG
// noise spectroscopy.

#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "spinlab/decoherence.hpp"
#include "spinlab/numerics.hpp"
#include "spinlab/state.hpp"

namespace spinlab {

// ---------------------------------------------------------------------------
// State tomography

struct QstResult {
  DensityMatrix rho;
  bool projected = false;  // input Bloch vector was outside the unit ball
  double input_norm = 0.0;
};

/// rho = (I + <X> X + <Y> Y + <Z> Z) / 2. Bloch norms above 1 + 1e-6 are
/// projected onto the unit sphere and reported; smaller overshoots are
/// rescaled silently.
inline QstResult qst_single(double ex, double ey, double ez) {
  if (!std::isfinite(ex) || !std::isfinite(ey) || !std::isfinite(ez))
    throw ValidationError("qst_single: non-finite expectation value");
  BlochVector b{{ex, ey, ez}};
  const double norm = b.norm();
  bool projected = false;
  if (norm > 1.0) {
    projected = norm > 1.0 + 1e-6;
    for (double& v : b.r) v /= norm;
  }
  return QstResult{density_from_bloch(b), projected, norm};
}

// ---------------------------------------------------------------------------
// Process tomography

/// Chi matrix in the operator basis {E, X, -iY, Z}:
/// channel(rho) = sum_mn chi_mn E_m rho E_n†.
struct ChiMatrix {
  Eigen::Matrix4cd chi = Eigen::Matrix4cd::Zero();

  static const std::array<std::string, 4>& labels() {
    static const std::array<std::string, 4> l{"E", "X", "-iY", "Z"};
    return l;
  }

  static const std::array<Mat2, 4>& basis() {
    static const std::array<Mat2, 4> b = [] {
      std::array<Mat2, 4> out;
      out[0] = Mat2::Identity();
      out[1] << 0.0, 1.0, 1.0, 0.0;
      out[2] << 0.0, -1.0, 1.0, 0.0;  // -iY
      out[3] << 1.0, 0.0, 0.0, -1.0;
      return out;
    }();
    return b;
  }

  cplx operator()(int m, int n) const { return chi(m, n); }

  bool is_hermitian(double tolerance = 1e-8) const { return max_abs(chi - chi.adjoint()) <= tolerance; }

  /// max-abs of sum_mn chi_mn E_n† E_m - I; zero for trace-preserving maps.
  double completeness_residual() const {
    Mat2 acc = Mat2::Zero();
    const auto& e = basis();
    for (int m = 0; m < 4; ++m)
      for (int n = 0; n < 4; ++n) acc += chi(m, n) * (e[n].adjoint() * e[m]);
    return max_abs(acc - Mat2::Identity());
  }

  /// max(0, -lambda_min): how far chi is from positive semidefinite.
  double psd_distance() const {
    const Eigen::Matrix4cd h = 0.5 * (chi + chi.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(h, Eigen::EigenvaluesOnly);
    return std::max(0.0, -es.eigenvalues().minCoeff());
  }

  Eigen::Vector4d eigenvalues() const {
    const Eigen::Matrix4cd h = 0.5 * (chi + chi.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

  /// The same map in the plain Pauli basis {I, X, Y, Z}: since
  /// E_m = f_m P_m with f = (1, 1, -i, 1), chi^P_mn = f_m conj(f_n) chi_mn.
  Eigen::Matrix4cd to_pauli_basis() const {
    const cplx f[4] = {1.0, 1.0, -kI, 1.0};
    Eigen::Matrix4cd out;
    for (int m = 0; m < 4; ++m)
      for (int n = 0; n < 4; ++n) out(m, n) = f[m] * std::conj(f[n]) * chi(m, n);
    return out;
  }

  Mat2 apply(const Mat2& rho) const {
    Mat2 acc = Mat2::Zero();
    const auto& e = basis();
    for (int m = 0; m < 4; ++m)
      for (int n = 0; n < 4; ++n) acc += chi(m, n) * (e[m] * rho * e[n].adjoint());
    return acc;
  }
};

using Channel = std::function<DensityMatrix(const DensityMatrix&)>;

/// Probe states |0>, |1>, (|0>+|1>)/sqrt2, (|0>-i|1>)/sqrt2.
inline std::array<DensityMatrix, 4> qpt_probe_states() {
  const double r = 1.0 / std::sqrt(2.0);
  Vector k0(2), k1(2), kp(2), km(2);
  k0 << 1.0, 0.0;
  k1 << 0.0, 1.0;
  kp << r, r;
  km << r, -kI * r;
  return {DensityMatrix::from_ket(k0), DensityMatrix::from_ket(k1), DensityMatrix::from_ket(kp),
          DensityMatrix::from_ket(km)};
}

/// Solves sum_mn beta^{mn}_{pq} chi_mn = lambda_pq for chi, with
/// beta^{mn}_{pq} = Tr[E_m rho_p E_n† rho_q] and lambda_pq = Tr[rho'_p rho_q].
/// rho_p and rho_q both run over the probe states; rho'_p is the channel
/// output reconstructed by state tomography from its Pauli expectations.
inline ChiMatrix qpt_single(const Channel& channel) {
  if (!channel) throw ValidationError("qpt_single: empty channel");
  const auto probes = qpt_probe_states();
  const auto& e = ChiMatrix::basis();
  std::array<Mat2, 4> outputs;
  for (int p = 0; p < 4; ++p) {
    const DensityMatrix out = channel(probes[static_cast<std::size_t>(p)]);
    if (out.dim() != 2) throw ValidationError("qpt_single: channel output is not single-qubit");
    const double ex = expectation(pauli::X(), out);
    const double ey = expectation(pauli::Y(), out);
    const double ez = expectation(pauli::Z(), out);
    outputs[static_cast<std::size_t>(p)] = qst_single(ex, ey, ez).rho.matrix();
  }
  Matrix beta(16, 16);
  Vector lambda(16);
  for (int p = 0; p < 4; ++p) {
    const Mat2 rp = probes[static_cast<std::size_t>(p)].matrix();
    for (int q = 0; q < 4; ++q) {
      const Mat2 rq = probes[static_cast<std::size_t>(q)].matrix();
      const int row = 4 * p + q;
      lambda(row) = (outputs[static_cast<std::size_t>(p)] * rq).trace();
      for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n)
          beta(row, 4 * m + n) = (e[m] * rp * e[n].adjoint() * rq).trace();
    }
  }
  const Vector x = numerics::linsolve(beta, lambda);
  ChiMatrix out;
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n) out.chi(m, n) = x(4 * m + n);
  return out;
}

namespace channels {

inline Channel unitary(const Operator& u) {
  if (u.dim() != 2 || !u.is_unitary()) throw ValidationError("channels::unitary: need a 2x2 unitary");
  return [u](const DensityMatrix& rho) { return DensityMatrix(conjugate(u, rho.op())); };
}

inline Channel identity() { return unitary(pauli::I()); }

/// rho -> (1-p) rho + p Z rho Z; p = 1/2 is complete dephasing.
inline Channel dephasing(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("channels::dephasing: p must be in [0, 1]");
  return [p](const DensityMatrix& rho) {
    return DensityMatrix(Operator((1.0 - p) * rho.matrix() + p * conjugate(pauli::Z(), rho.op()).matrix()));
  };
}

/// Pure dephasing that multiplies rho_01 by a complex factor d (|d| <= 1).
inline Channel coherence_factor(cplx d) {
  if (std::abs(d) > 1.0 + 1e-12) throw ValidationError("channels::coherence_factor: |d| > 1");
  return [d](const DensityMatrix& rho) {
    Matrix m = rho.matrix();
    m(0, 1) *= d;
    m(1, 0) *= std::conj(d);
    return DensityMatrix(Operator(std::move(m)));
  };
}

inline Channel mixture(const Channel& a, const Channel& b, double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("channels::mixture: weight must be in [0, 1]");
  return [a, b, w](const DensityMatrix& rho) {
    return DensityMatrix(Operator(w * a(rho).matrix() + (1.0 - w) * b(rho).matrix()));
  };
}

}  // namespace channels

// ---------------------------------------------------------------------------
// Noise spectroscopy

struct SpectrumPoint {
  double tau = 0.0;    // seconds between CPMG pulses
  double omega = 0.0;  // pi / tau
  double t2 = 0.0;     // seconds; +inf when no decay was resolved
  double s = 0.0;      // pi^2 / (4 T2), 1/s
};

struct NoiseSpectrum {
  std::vector<SpectrumPoint> points;
  std::vector<std::string> diagnostics;  // omitted points
};

/// Decays exp(-t / T2(omega)) sampled at cycle boundaries.
struct SyntheticBath {
  std::function<double(double omega)> t2_of_omega;
  int cycles = 20;
};

/// CPMG-filtered evolution of the S qubit under the kick bath. The kick
/// schedule's t_c is replaced by N tau for each grid point.
struct KickBath {
  SystemEnvModel model;
  KickSchedule sched;
  int cycles = 20;
  std::size_t realizations = 500;
  double intrinsic_t2 = std::numeric_limits<double>::infinity();
};

using BathSource = std::variant<SyntheticBath, KickBath>;

/// Decay samples (t, M_x) for one tau with an N-pulse CPMG cycle.
inline std::pair<std::vector<double>, std::vector<double>> cpmg_decay(const BathSource& bath, double tau, int n_pulses,
                                                                      std::size_t grid_index = 0) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("noise spectroscopy: tau must be > 0");
  if (n_pulses < 1) throw ValidationError("noise spectroscopy: CPMG N must be >= 1");
  const double t_c = n_pulses * tau;
  std::vector<double> t, y;
  if (const auto* syn = std::get_if<SyntheticBath>(&bath)) {
    if (!syn->t2_of_omega) throw ValidationError("SyntheticBath: missing T2(omega)");
    if (syn->cycles < 2) throw ValidationError("SyntheticBath: cycles must be >= 2");
    const double t2 = syn->t2_of_omega(kPi / tau);
    if (!(t2 > 0.0)) throw ValidationError("SyntheticBath: T2 must be > 0");
    for (int m = 0; m <= syn->cycles; ++m) {
      t.push_back(m * t_c);
      y.push_back(std::exp(-m * t_c / t2));
    }
  } else {
    const auto& kb = std::get<KickBath>(bath);
    if (kb.cycles < 2) throw ValidationError("KickBath: cycles must be >= 2");
    KickSchedule s = kb.sched;
    s.t_c = t_c;
    s.seed = derive_seed(kb.sched.seed, grid_index);
    const auto series = run_dd_under_kicks(kb.model, s, dd_schedule(DDKind::cpmg, n_pulses, t_c), kb.cycles,
                                           kb.realizations, kb.intrinsic_t2);
    for (const auto& p : series.points) {
      t.push_back(p.t);
      y.push_back(p.mx);
    }
  }
  return {t, y};
}

/// For each tau: CPMG decay, T2 by fit_t2, then (pi/tau, pi^2/(4 T2)).
/// Points whose decay cannot be fitted are omitted with a diagnostic.
inline NoiseSpectrum noise_spectroscopy(const BathSource& bath, const std::vector<double>& tau_grid, int n_pulses) {
  if (tau_grid.empty()) throw ValidationError("noise_spectroscopy: empty tau grid");
  NoiseSpectrum out;
  for (std::size_t i = 0; i < tau_grid.size(); ++i) {
    const double tau = tau_grid[i];
    const auto [t, y] = cpmg_decay(bath, tau, n_pulses, i);
    SpectrumPoint pt;
    pt.tau = tau;
    pt.omega = kPi / tau;
    try {
      pt.t2 = fit_t2(t, y);
    } catch (const std::exception& ex) {
      out.diagnostics.push_back("tau=" + std::to_string(tau) + " s omitted: " + ex.what());
      continue;
    }
    pt.s = std::isinf(pt.t2) ? 0.0 : kPi * kPi / (4.0 * pt.t2);
    out.points.push_back(pt);
  }
  return out;
}

}  // namespace spinlab
