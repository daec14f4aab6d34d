// dmf.hpp
// Dynamical many-body freezing: Trotterized evolution of the driven
// transverse-field Ising chain
//
//   H(t) = -1/2 [ Jc sum_i Z_i Z_{i+1} + h0 cos(omega t) sum_i X_i ],
//
// stroboscopic magnetization, the order parameter Q, its closed forms,
// decay fitting and inverse-decay correction.
//
// Jc is an angular frequency. An NMR coupling 2 pi J_hz I_z I_z equals
// (pi J_hz / 2) Z Z, so Jc = -pi J_hz for the sign convention above.

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "spinlab/numerics.hpp"
#include "spinlab/operator.hpp"
#include "spinlab/parallel.hpp"

namespace spinlab {

enum class Boundary { open, periodic };

inline Boundary parse_boundary(std::string_view s) {
  if (s == "open") return Boundary::open;
  if (s == "periodic") return Boundary::periodic;
  throw ValidationError("boundary must be 'open' or 'periodic', got '" + std::string(s) + "'");
}

inline const char* to_string(Boundary b) { return b == Boundary::open ? "open" : "periodic"; }

struct DriveParams {
  double h0 = 5.0 * kPi;           // rad/s
  double jc = 5.0 * kPi / 20.0;    // rad/s
  double omega = 8.4;              // rad/s
  int n = 3;
  Boundary boundary = Boundary::periodic;

  void validate() const {
    if (!(omega > 0.0) || !std::isfinite(omega)) throw ValidationError("DriveParams: omega must be > 0");
    if (!std::isfinite(h0) || !std::isfinite(jc)) throw ValidationError("DriveParams: non-finite drive");
    if (n < 1 || n > max_qubits())
      throw ValidationError("DriveParams: n must be in [1, " + std::to_string(max_qubits()) + "]");
  }

  double tau() const { return 2.0 * kPi / omega; }

  /// Non-empty when outside the fast, strong drive regime (omega > 2 Jc and
  /// h0 > Jc) where the freezing picture applies. Advisory only.
  std::vector<std::string> advisories() const {
    std::vector<std::string> out;
    if (omega <= 2.0 * std::abs(jc)) out.push_back("omega <= 2 Jc: drive is not fast");
    if (std::abs(h0) <= std::abs(jc)) out.push_back("h0 <= Jc: drive is not strong");
    return out;
  }
};

namespace detail {

/// sum_i Z_i Z_{i+1}; periodic adds the (n-1, 0) bond when n >= 3.
inline Matrix zz_chain(int n, Boundary b) {
  const auto dim = static_cast<Eigen::Index>(std::size_t{1} << n);
  Matrix acc = Matrix::Zero(dim, dim);
  const int bonds = (b == Boundary::periodic && n >= 3) ? n : n - 1;
  for (int i = 0; i < bonds; ++i)
    acc += (embed(pauli::Z(), i, n) * embed(pauli::Z(), (i + 1) % n, n)).matrix();
  return acc;
}

inline Matrix sum_x(int n) {
  const auto dim = static_cast<Eigen::Index>(std::size_t{1} << n);
  Matrix acc = Matrix::Zero(dim, dim);
  for (int i = 0; i < n; ++i) acc += embed(pauli::X(), i, n).matrix();
  return acc;
}

}  // namespace detail

/// U(tau) = U_slices ... U_1, each slice exp(-i H(t_mid) tau/slices) with the
/// Hamiltonian sampled at the slice midpoint.
inline Operator dmf_cycle_propagator(const DriveParams& p, int slices) {
  p.validate();
  if (slices < 1) throw ValidationError("dmf_cycle_propagator: slices must be >= 1");
  const Matrix zz = detail::zz_chain(p.n, p.boundary);
  const Matrix sx = detail::sum_x(p.n);
  const double dt = p.tau() / slices;
  Matrix u = Matrix::Identity(zz.rows(), zz.cols());
  for (int s = 0; s < slices; ++s) {
    const double t = (s + 0.5) * dt;
    const Matrix h = -0.5 * (p.jc * zz + (p.h0 * std::cos(p.omega * t)) * sx);
    u = expm_hermitian(Operator(h), dt).matrix() * u;
  }
  return Operator(std::move(u));
}

/// sum_i (sin(theta) X_i + cos(theta) Z_i) / 2: the transverse preparation
/// after a rotation by theta from the z axis. theta = pi/2 gives
/// sum X_i / 2 (m_x(0) = 1), theta = pi/6 gives m_x(0) = 1/2.
inline Operator dmf_initial_state(int n, double theta) {
  Operator acc = Operator::zero(std::size_t{1} << n);
  for (int i = 0; i < n; ++i)
    acc = acc + (0.5 * std::sin(theta)) * embed(pauli::X(), i, n) +
          (0.5 * std::cos(theta)) * embed(pauli::Z(), i, n);
  return acc;
}

struct MagnetizationSeries {
  double tau = 0.0;          // seconds per cycle
  std::vector<double> t;     // t_j = j tau
  std::vector<double> mx;

  std::size_t size() const { return mx.size(); }
};

/// m_x(j tau) = Tr[rho(j tau) sum X_i/2] / Tr[(sum X_i/2)^2], so the
/// reference deviation state sum X_i/2 starts at exactly 1. Works for
/// deviation and full density matrices alike (the identity part of rho
/// does not contribute).
inline MagnetizationSeries simulate_dmf(const DriveParams& p, const Operator& rho0, int cycles,
                                        int slices = 11) {
  p.validate();
  if (cycles < 0) throw ValidationError("simulate_dmf: cycle count must be >= 0");
  if (rho0.dim() != (std::size_t{1} << p.n))
    throw ValidationError("simulate_dmf: initial state dimension does not match n");
  if (!rho0.is_hermitian()) throw ValidationError("simulate_dmf: initial state is not Hermitian");
  const Matrix u = dmf_cycle_propagator(p, slices).matrix();
  const Matrix obs = 0.5 * detail::sum_x(p.n);
  const double ref = (obs * obs).trace().real();
  MagnetizationSeries s;
  s.tau = p.tau();
  Matrix rho = rho0.matrix();
  for (int j = 0; j <= cycles; ++j) {
    s.t.push_back(j * s.tau);
    s.mx.push_back((rho * obs).trace().real() / ref);
    rho = u * rho * u.adjoint();
  }
  return s;
}

/// Q = mean of the N+1 stroboscopic samples.
inline double q_from_series(const MagnetizationSeries& s) {
  if (s.mx.empty()) throw ValidationError("q_from_series: empty series");
  double acc = 0.0;
  for (double v : s.mx) acc += v;
  return acc / static_cast<double>(s.mx.size());
}

enum class QVariant { infinite, three };

/// Q_inf = 1/(1+|J0(2h0/w)|), Q_3 = (1+|J0|)/(1+3|J0|).
inline double q_closed_form(QVariant v, double h0, double omega) {
  if (!(omega > 0.0) || !std::isfinite(omega)) throw ValidationError("q_closed_form: omega must be > 0");
  const double j = std::abs(numerics::bessel_j0(2.0 * h0 / omega));
  return v == QVariant::infinite ? 1.0 / (1.0 + j) : (1.0 + j) / (1.0 + 3.0 * j);
}

// ---------------------------------------------------------------------------
// Decay model m(t) = alpha + [beta + gamma cos(c t)] exp(-t/T_d)

struct DecayFit {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double c = 0.0;      // rad/s
  double t_d = std::numeric_limits<double>::infinity();  // seconds
  double rms = 0.0;
  bool converged = false;
  bool degenerate = false;  // gamma ~ 0: c is not identifiable

  double operator()(double t) const {
    return alpha + (beta + gamma * std::cos(c * t)) * std::exp(-t / t_d);
  }
};

class DecayFitError : public NumericError {
 public:
  DecayFitError(const std::string& what, DecayFit best) : NumericError(what), best_(best) {}
  const DecayFit& best() const { return best_; }

 private:
  DecayFit best_;
};

namespace detail {

inline double decay_model(std::span<const double> q, double t) {
  return q[0] + (q[1] + q[2] * std::cos(q[3] * t)) * std::exp(-t / q[4]);
}

// Linear least squares for (alpha, beta, gamma) at fixed (c, T_d).
inline double linear_decay_fit(const std::vector<double>& t, const std::vector<double>& y, double c,
                               double td, double out[3]) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = std::exp(-t[static_cast<std::size_t>(i)] / td);
    a(i, 0) = 1.0;
    a(i, 1) = e;
    a(i, 2) = std::cos(c * t[static_cast<std::size_t>(i)]) * e;
    b(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
  for (int k = 0; k < 3; ++k) out[k] = x(k);
  return (a * x - b).squaredNorm();
}

}  // namespace detail

/// Least-squares fit of the decay model. Without an initial guess, (c, T_d)
/// are seeded by a grid search over c up to the sampling Nyquist limit and a
/// few T_d values (alpha, beta, gamma solved linearly at each node).
/// Throws DecayFitError (carrying the best parameters) if the optimizer
/// does not converge.
inline DecayFit decay_fit(const std::vector<double>& t, const std::vector<double>& y,
                          std::optional<DecayFit> init = std::nullopt, int max_iter = 400) {
  if (t.size() != y.size()) throw ValidationError("decay_fit: t and y sizes differ");
  if (t.size() < 6) throw ValidationError("decay_fit: need at least 6 samples");
  double t_max = 0.0, dt_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(y[i])) throw ValidationError("decay_fit: non-finite sample");
    t_max = std::max(t_max, t[i]);
    if (i > 0) dt_min = std::min(dt_min, std::abs(t[i] - t[i - 1]));
  }
  if (!(t_max > 0.0) || !(dt_min > 0.0)) throw ValidationError("decay_fit: sample times must be distinct");

  double y_lo = y[0], y_hi = y[0];
  for (double v : y) {
    y_lo = std::min(y_lo, v);
    y_hi = std::max(y_hi, v);
  }
  const double y_scale = std::max({std::abs(y_lo), std::abs(y_hi), 1e-300});

  std::vector<double> start(5);
  if (init) {
    start = {init->alpha, init->beta, init->gamma, init->c, init->t_d};
  } else {
    const double c_max = kPi / dt_min;
    const int nc = 240;
    // T_d grid log-spaced over 0.02..20 t_max.
    std::vector<double> tds(25);
    for (std::size_t i = 0; i < tds.size(); ++i) tds[i] = 0.02 * t_max * std::pow(1000.0, i / 24.0);
    double best = std::numeric_limits<double>::infinity();
    for (int ic = 1; ic <= nc; ++ic) {
      const double c = c_max * ic / nc;
      for (double td : tds) {
        double lin[3];
        const double ssr = detail::linear_decay_fit(t, y, c, td, lin);
        if (ssr < best) {
          best = ssr;
          start = {lin[0], lin[1], lin[2], c, td};
        }
      }
    }
  }

  numerics::FitProblem prob;
  prob.model = detail::decay_model;
  prob.t = t;
  prob.y = y;
  prob.init = start;
  const double inf = std::numeric_limits<double>::infinity();
  prob.lower = std::vector<double>{-inf, -inf, -inf, 0.0, 1e-9 * t_max};
  prob.upper = std::vector<double>{inf, inf, inf, inf, 1e9 * t_max};
  const auto r = numerics::nls_fit(prob, max_iter, 1e-14);

  DecayFit f;
  f.alpha = r.params[0];
  f.beta = r.params[1];
  f.gamma = r.params[2];
  f.c = r.params[3];
  f.t_d = r.params[4];
  f.rms = r.rms;
  f.converged = r.converged;
  f.degenerate = std::abs(f.gamma) <= 1e-6 * y_scale;
  if (!r.converged) throw DecayFitError("decay_fit: no convergence after " + std::to_string(max_iter) +
                                            " iterations",
                                        f);
  return f;
}

inline DecayFit decay_fit(const MagnetizationSeries& s, std::optional<DecayFit> init = std::nullopt) {
  return decay_fit(s.t, s.mx, init);
}

struct CorrectedSeries {
  MagnetizationSeries series;
  std::vector<std::size_t> flagged;  // samples where the correction overflowed
};

/// corrected(t) = alpha + (raw(t) - alpha) exp(t / T_d). Samples where the
/// factor overflows keep their raw value and are listed in `flagged`.
inline CorrectedSeries inverse_decay_correct(const MagnetizationSeries& s, const DecayFit& f) {
  if (!(f.t_d > 0.0)) throw ValidationError("inverse_decay_correct: T_d must be positive");
  CorrectedSeries out;
  out.series = s;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double factor = std::exp(s.t[j] / f.t_d);
    const double v = f.alpha + (s.mx[j] - f.alpha) * factor;
    if (std::isfinite(v)) {
      out.series.mx[j] = v;
    } else {
      out.flagged.push_back(j);
    }
  }
  return out;
}

/// Ensemble average over drive amplitudes h0 * scale, times a coherence
/// damping exp(-j tau / T2) per cycle. T2 may be +inf.
inline MagnetizationSeries noisy_simulate(const DriveParams& p, const Operator& rho0, int cycles,
                                          int slices, double t2,
                                          const std::vector<std::pair<double, double>>& rf_ensemble) {
  if (!(t2 > 0.0)) throw ValidationError("noisy_simulate: T2 must be > 0");
  if (rf_ensemble.empty()) throw ValidationError("noisy_simulate: empty RF ensemble");
  double total = 0.0;
  for (const auto& [scale, w] : rf_ensemble) {
    if (!(w >= 0.0) || !std::isfinite(scale)) throw ValidationError("noisy_simulate: bad ensemble member");
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("noisy_simulate: ensemble weights sum to zero");
  MagnetizationSeries acc;
  for (std::size_t m = 0; m < rf_ensemble.size(); ++m) {
    DriveParams q = p;
    q.h0 = p.h0 * rf_ensemble[m].first;
    const auto s = simulate_dmf(q, rho0, cycles, slices);
    const double w = rf_ensemble[m].second / total;
    if (m == 0) {
      acc = s;
      for (auto& v : acc.mx) v *= w;
    } else {
      for (std::size_t j = 0; j < s.size(); ++j) acc.mx[j] += w * s.mx[j];
    }
  }
  for (std::size_t j = 0; j < acc.size(); ++j) acc.mx[j] *= std::exp(-acc.t[j] / t2);
  return acc;
}

// ---------------------------------------------------------------------------
// Frequency sweep

struct NoiseModel {
  double t2 = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> rf_ensemble{{1.0, 1.0}};
};

struct SweepPoint {
  double omega = 0.0;
  double q_sim = 0.0;
  double q3 = 0.0;
  double qinf = 0.0;
  double q_noisy = 0.0;
  double q_corrected = 0.0;  // NaN when the decay fit failed
};

/// One point per omega, evaluated in parallel and returned in input order.
inline std::vector<SweepPoint> dmf_sweep(const DriveParams& base, const Operator& rho0,
                                         const std::vector<double>& omegas, int cycles, int slices,
                                         const NoiseModel& noise) {
  std::vector<SweepPoint> out(omegas.size());
  parallel_for(omegas.size(), [&](std::size_t i) {
    DriveParams p = base;
    p.omega = omegas[i];
    SweepPoint& pt = out[i];
    pt.omega = p.omega;
    pt.q_sim = q_from_series(simulate_dmf(p, rho0, cycles, slices));
    pt.q3 = q_closed_form(QVariant::three, p.h0, p.omega);
    pt.qinf = q_closed_form(QVariant::infinite, p.h0, p.omega);
    const auto noisy = noisy_simulate(p, rho0, cycles, slices, noise.t2, noise.rf_ensemble);
    pt.q_noisy = q_from_series(noisy);
    try {
      const auto fit = decay_fit(noisy);
      pt.q_corrected = q_from_series(inverse_decay_correct(noisy, fit).series);
    } catch (const NumericError&) {
      pt.q_corrected = std::numeric_limits<double>::quiet_NaN();
    }
  });
  return out;
}

}  // namespace spinlab
