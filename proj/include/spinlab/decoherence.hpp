// decoherence.hpp
// Engineered dephasing of a system qubit S coupled to an environment qubit E
// that receives random kicks, with dynamical decoupling on S.
//
// Register order is (S, E). The Hamiltonian in rad/s is
//   H = pi (nu_S Z_S + nu_E Z_E + (J/2) Z_S Z_E).

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spinlab/numerics.hpp"
#include "spinlab/operator.hpp"
#include "spinlab/parallel.hpp"
#include "spinlab/rng.hpp"
#include "spinlab/state.hpp"

namespace spinlab {

// ---------------------------------------------------------------------------
// Zurek model

struct EnvSpin {
  cplx alpha{1.0, 0.0};  // amplitude of |0>
  cplx beta{0.0, 0.0};   // amplitude of |1>
};

/// z(t) = prod_j (|alpha_j|^2 e^{-2i J_1j t} + |beta_j|^2 e^{2i J_1j t}) for
/// H = sum_j J_1j Z_1 Z_j (J in rad/s).
inline cplx zurek_factor(const std::vector<EnvSpin>& env, const std::vector<double>& couplings, double t) {
  if (env.size() != couplings.size()) throw ValidationError("zurek_factor: one coupling per environment spin");
  cplx z{1.0, 0.0};
  for (std::size_t j = 0; j < env.size(); ++j) {
    const double a2 = std::norm(env[j].alpha);
    const double b2 = std::norm(env[j].beta);
    if (std::abs(a2 + b2 - 1.0) > 1e-10) throw ValidationError("zurek_factor: unnormalized amplitudes");
    z *= a2 * std::exp(-2.0 * kI * (couplings[j] * t)) + b2 * std::exp(2.0 * kI * (couplings[j] * t));
  }
  return z;
}

// ---------------------------------------------------------------------------
// Kick model

enum class AngleMode { symmetric, positive };  // epsilon in [-alpha, alpha] or [0, alpha]
enum class PhaseMode { fixed_y, uniform };     // kick axis y, or uniform in the xy-plane

struct KickSchedule {
  double gamma_per_ms = 25.0;  // kicks per millisecond
  double alpha = 0.0;          // radians
  AngleMode angle_mode = AngleMode::symmetric;
  PhaseMode phase_mode = PhaseMode::fixed_y;
  double t_c = 22.4e-3;        // seconds per cycle
  std::uint64_t seed = 1;

  void validate() const {
    if (!(gamma_per_ms > 0.0) || !std::isfinite(gamma_per_ms)) throw ValidationError("KickSchedule: gamma must be > 0");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("KickSchedule: alpha must be >= 0");
    if (!(t_c > 0.0) || !std::isfinite(t_c)) throw ValidationError("KickSchedule: t_c must be > 0");
    if (gamma_per_ms * t_c * 1e3 > 1e7) throw ValidationError("KickSchedule: more than 1e7 kicks per cycle");
  }

  /// k = round(Gamma t_c), at least 1.
  int kicks_per_cycle() const {
    validate();
    return static_cast<int>(std::max(1LL, std::llround(gamma_per_ms * 1e3 * t_c)));
  }

  double delta() const { return t_c / kicks_per_cycle(); }
};

struct SystemEnvModel {
  double j_hz = 209.4;
  double nu_s_hz = 0.0;
  double nu_e_hz = 0.0;
  Operator rho_s0 = density_from_bloch({{1.0, 0.0, 0.0}}).op();
  Operator rho_e0 = DensityMatrix::maximally_mixed(2).op();

  void validate() const {
    if (!std::isfinite(j_hz) || !std::isfinite(nu_s_hz) || !std::isfinite(nu_e_hz))
      throw ValidationError("SystemEnvModel: non-finite frequency");
    if (rho_s0.dim() != 2 || rho_e0.dim() != 2)
      throw ValidationError("SystemEnvModel: states must be single-qubit");
    const auto cs = validate_density(rho_s0.matrix());
    if (!cs.valid()) throw ValidationError("SystemEnvModel: rho_S0 " + cs.reason);
    const auto ce = validate_density(rho_e0.matrix());
    if (!ce.valid()) throw ValidationError("SystemEnvModel: rho_E0 " + ce.reason);
  }

  /// Diagonal of H (rad/s) for S basis state s and E basis state e.
  double energy(int s, int e) const {
    const double zs = s == 0 ? 1.0 : -1.0;
    const double ze = e == 0 ? 1.0 : -1.0;
    return kPi * (nu_s_hz * zs + nu_e_hz * ze + 0.5 * j_hz * zs * ze);
  }

  Operator hamiltonian() const {
    Matrix h = Matrix::Zero(4, 4);
    for (int s = 0; s < 2; ++s)
      for (int e = 0; e < 2; ++e) h(2 * s + e, 2 * s + e) = energy(s, e);
    return Operator(std::move(h));
  }
};

namespace detail {

struct Kick {
  double epsilon = 0.0;
  double theta = 0.5 * kPi;
};

inline Kick draw_kick(const KickSchedule& k, Rng& rng) {
  Kick out;
  out.epsilon = k.angle_mode == AngleMode::symmetric ? rng.uniform(-k.alpha, k.alpha) : rng.uniform(0.0, k.alpha);
  if (k.phase_mode == PhaseMode::uniform) out.theta = rng.uniform(0.0, 2.0 * kPi);
  return out;
}

/// exp(-i eps (cos(theta) X + sin(theta) Y)).
inline Mat2 kick_matrix(const Kick& k) {
  const double c = std::cos(k.epsilon);
  const double s = std::sin(k.epsilon);
  Mat2 m;
  m << c, -kI * s * std::exp(-kI * k.theta), -kI * s * std::exp(kI * k.theta), c;
  return m;
}

}  // namespace detail

/// One cycle U_k(T) = K_k U(delta) ... K_1 U(delta) with kicks
/// K_m = 1_S (x) exp(-i eps_m n_m . sigma_E), drawn from Rng(seed).
inline Operator kicked_propagator(const SystemEnvModel& model, const KickSchedule& sched, std::uint64_t seed) {
  model.validate();
  const int k = sched.kicks_per_cycle();
  const Matrix ud = expm_hermitian(model.hamiltonian(), sched.t_c / k).matrix();
  Rng rng(seed);
  Matrix u = Matrix::Identity(4, 4);
  for (int m = 0; m < k; ++m) {
    const Mat2 km = detail::kick_matrix(detail::draw_kick(sched, rng));
    Matrix kk = Matrix::Zero(4, 4);
    kk.block(0, 0, 2, 2) = km;
    kk.block(2, 2, 2, 2) = km;
    u = kk * ud * u;
  }
  return Operator(std::move(u));
}

// ---------------------------------------------------------------------------
// Dynamical decoupling

enum class DDKind { hahn, cpmg, udd };

inline DDKind parse_dd_kind(std::string_view s) {
  if (s == "hahn") return DDKind::hahn;
  if (s == "cpmg") return DDKind::cpmg;
  if (s == "udd") return DDKind::udd;
  throw ValidationError("unknown DD kind '" + std::string(s) + "'");
}

inline const char* to_string(DDKind k) {
  switch (k) {
    case DDKind::hahn: return "hahn";
    case DDKind::cpmg: return "cpmg";
    case DDKind::udd: return "udd";
  }
  return "?";
}

/// Pi-pulse times in (0, t_c). Hahn: t_c/2 (N forced to 1). CPMG:
/// (2j-1) t_c / (2N). UDD: t_c sin^2(pi j / (2(N+1))).
inline std::vector<double> dd_schedule(DDKind kind, int n, double t_c) {
  if (!(t_c > 0.0)) throw ValidationError("dd_schedule: t_c must be > 0");
  if (kind == DDKind::hahn) n = 1;
  if (n < 1) throw ValidationError("dd_schedule: N must be >= 1");
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) {
    double v = 0.0;
    switch (kind) {
      case DDKind::hahn: v = 0.5 * t_c; break;
      case DDKind::cpmg: v = (2.0 * j - 1.0) * t_c / (2.0 * n); break;
      case DDKind::udd: {
        const double s = std::sin(kPi * j / (2.0 * (n + 1)));
        v = t_c * s * s;
        break;
      }
    }
    t[static_cast<std::size_t>(j - 1)] = v;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Monte Carlo ensemble

struct EnsembleOptions {
  std::vector<double> dd_times;        // pi pulses on S within each cycle
  std::optional<double> dd_phase;      // pulse axis angle in the xy-plane; default: along rho_S0
  double intrinsic_t2 = std::numeric_limits<double>::infinity();  // envelope on coherences
  std::uint64_t first_realization = 0;  // offset into the realization stream
};

struct CoherencePoint {
  double t = 0.0;
  cplx coherence{0.0, 0.0};   // mean rho_S^{01}(t) / rho_S^{01}(0)
  double coherence_stderr = 0.0;  // sqrt(var Re + var Im) / sqrt(M)
  Mat2 block = Mat2::Zero();  // mean normalized E-space block; its trace is `coherence`
  double mx = 0.0;            // |block_00| + |block_11|: line-resolved magnitude envelope
  double mx_stderr = 0.0;
  Mat2 rho_s = Mat2::Zero();  // ensemble-mean reduced state of S
  bool flipped = false;       // odd number of pi pulses so far: S populations swapped
};

struct CoherenceSeries {
  std::vector<CoherencePoint> points;  // cycle m = 0..cycles at t = m t_c
  std::size_t realizations = 0;
  int kicks_per_cycle = 0;
};

namespace detail {

enum class EventKind { kick = 0, pulse = 1 };

struct Event {
  double t;
  EventKind kind;
};

inline std::vector<Event> cycle_events(int k, double delta, const std::vector<double>& dd, double t_c) {
  std::vector<Event> ev;
  ev.reserve(static_cast<std::size_t>(k) + dd.size());
  for (int m = 1; m <= k; ++m) ev.push_back({m == k ? t_c : m * delta, EventKind::kick});
  for (double t : dd) {
    if (!(t > 0.0 && t < t_c)) throw ValidationError("DD pulse time outside (0, t_c)");
    ev.push_back({t, EventKind::pulse});
  }
  // Kick before pulse at equal timestamps.
  std::stable_sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) {
    return a.t < b.t || (a.t == b.t && a.kind < b.kind);
  });
  return ev;
}

struct Branches {
  Mat2 a[2];     // E-space propagator of the branch that started in S state s
  int sigma[2];  // current S state of that branch
};

inline void evolve(Branches& b, const SystemEnvModel& m, double dt) {
  if (dt <= 0.0) return;
  for (int s = 0; s < 2; ++s) {
    const int sg = b.sigma[s];
    b.a[s].row(0) *= std::exp(-kI * (m.energy(sg, 0) * dt));
    b.a[s].row(1) *= std::exp(-kI * (m.energy(sg, 1) * dt));
  }
}

}  // namespace detail

/// Ensemble of M kicked realizations over `cycles` cycles, sampled at cycle
/// boundaries. Realization i draws kicks from Rng(derive_seed(seed, i)).
///
/// The system Hamiltonian commutes with Z_S, so each S basis state carries
/// its own 2x2 E propagator; instantaneous pi pulses on S swap branch
/// labels with phases -i e^{+-i phi}. The reported block is
/// rho_S0[s0, s1] A_{s0} rho_E0 A_{s1}† / rho_S0^{01}, where s0 (s1) is the
/// branch currently in S state 0 (1), so its trace is the normalized
/// coherence.
inline CoherenceSeries ensemble_coherence(const SystemEnvModel& model, const KickSchedule& sched, std::size_t m_real,
                                          int cycles, const EnsembleOptions& opt = {}) {
  model.validate();
  sched.validate();
  if (m_real < 1) throw ValidationError("ensemble_coherence: M must be >= 1");
  if (cycles < 0) throw ValidationError("ensemble_coherence: cycles must be >= 0");
  if (!(opt.intrinsic_t2 > 0.0)) throw ValidationError("ensemble_coherence: intrinsic T2 must be > 0");
  const Mat2 rs0 = model.rho_s0.matrix();
  const Mat2 re0 = model.rho_e0.matrix();
  const cplx c0 = rs0(0, 1);
  if (std::abs(c0) < 1e-12) throw ValidationError("ensemble_coherence: rho_S0 carries no coherence");
  const double phi = opt.dd_phase ? *opt.dd_phase : std::arg(std::conj(c0));
  const cplx flip_from0 = -kI * std::exp(kI * phi);   // |0> -> phase |1>
  const cplx flip_from1 = -kI * std::exp(-kI * phi);  // |1> -> phase |0>

  const int k = sched.kicks_per_cycle();
  const double delta = sched.t_c / k;
  const auto events = detail::cycle_events(k, delta, opt.dd_times, sched.t_c);
  const std::size_t samples = static_cast<std::size_t>(cycles) + 1;

  // Per-realization normalized blocks, reduced afterwards in index order.
  std::vector<Mat2> blocks(m_real * samples);
  std::vector<int> sigma0_branch(samples, 0);  // identical for every realization

  parallel_for(m_real, [&](std::size_t r) {
    Rng rng(derive_seed(sched.seed, opt.first_realization + r));
    detail::Branches b;
    b.a[0] = b.a[1] = Mat2::Identity();
    b.sigma[0] = 0;
    b.sigma[1] = 1;
    auto record = [&](std::size_t idx) {
      const int s0 = b.sigma[0] == 0 ? 0 : 1;
      const int s1 = 1 - s0;
      blocks[r * samples + idx] = (rs0(s0, s1) / c0) * (b.a[s0] * re0 * b.a[s1].adjoint());
      if (r == 0) sigma0_branch[idx] = s0;
    };
    record(0);
    for (int c = 0; c < cycles; ++c) {
      double t = 0.0;
      for (const auto& e : events) {
        detail::evolve(b, model, e.t - t);
        t = e.t;
        if (e.kind == detail::EventKind::kick) {
          const Mat2 km = detail::kick_matrix(detail::draw_kick(sched, rng));
          b.a[0] = km * b.a[0];
          b.a[1] = km * b.a[1];
        } else {
          for (int s = 0; s < 2; ++s) {
            b.a[s] *= b.sigma[s] == 0 ? flip_from0 : flip_from1;
            b.sigma[s] = 1 - b.sigma[s];
          }
        }
      }
      detail::evolve(b, model, sched.t_c - t);
      record(static_cast<std::size_t>(c) + 1);
    }
  });

  CoherenceSeries out;
  out.realizations = m_real;
  out.kicks_per_cycle = k;
  const double mf = static_cast<double>(m_real);
  for (std::size_t i = 0; i < samples; ++i) {
    CoherencePoint p;
    p.t = static_cast<double>(i) * sched.t_c;
    const double env = std::exp(-p.t / opt.intrinsic_t2);
    Mat2 mean = Mat2::Zero();
    for (std::size_t r = 0; r < m_real; ++r) mean += blocks[r * samples + i];
    mean /= mf;
    mean *= env;
    p.block = mean;
    p.coherence = mean.trace();
    p.mx = std::abs(mean(0, 0)) + std::abs(mean(1, 1));
    // Standard errors: the coherence from the per-realization traces, the
    // envelope by linearizing |.| around the mean of each line.
    const cplx u0 = std::abs(mean(0, 0)) > 0.0 ? std::conj(mean(0, 0)) / std::abs(mean(0, 0)) : cplx{0.0, 0.0};
    const cplx u1 = std::abs(mean(1, 1)) > 0.0 ? std::conj(mean(1, 1)) / std::abs(mean(1, 1)) : cplx{0.0, 0.0};
    double var_re = 0.0, var_im = 0.0, var_env = 0.0;
    for (std::size_t r = 0; r < m_real; ++r) {
      const Mat2 br = env * blocks[r * samples + i];
      const cplx dtr = br.trace() - p.coherence;
      var_re += dtr.real() * dtr.real();
      var_im += dtr.imag() * dtr.imag();
      const double de = (u0 * (br(0, 0) - mean(0, 0))).real() + (u1 * (br(1, 1) - mean(1, 1))).real();
      var_env += de * de;
    }
    const double dof = m_real > 1 ? mf - 1.0 : 1.0;
    p.coherence_stderr = std::sqrt((var_re + var_im) / dof / mf);
    p.mx_stderr = std::sqrt(var_env / dof / mf);
    // Populations are untouched by pure dephasing; pulses swap them.
    const int s0 = sigma0_branch[i];
    p.flipped = s0 == 1;
    p.rho_s(0, 0) = rs0(s0, s0);
    p.rho_s(1, 1) = rs0(1 - s0, 1 - s0);
    p.rho_s(0, 1) = c0 * p.coherence;
    p.rho_s(1, 0) = std::conj(p.rho_s(0, 1));
    out.points.push_back(p);
  }
  return out;
}

/// Kicked evolution with a DD pulse train repeated every cycle.
inline CoherenceSeries run_dd_under_kicks(const SystemEnvModel& model, const KickSchedule& sched,
                                          const std::vector<double>& dd_times, int cycles, std::size_t m_real,
                                          double intrinsic_t2 = std::numeric_limits<double>::infinity()) {
  EnsembleOptions opt;
  opt.dd_times = dd_times;
  opt.intrinsic_t2 = intrinsic_t2;
  return ensemble_coherence(model, sched, m_real, cycles, opt);
}

// ---------------------------------------------------------------------------
// Superoperator prediction

/// gamma = sin(2 alpha) / (2 alpha), with gamma(0) = 1.
inline double kick_gamma(double alpha) {
  if (!(alpha >= 0.0)) throw ValidationError("kick_gamma: alpha must be >= 0");
  if (alpha < 1e-8) return 1.0 - 2.0 * alpha * alpha / 3.0;
  return std::sin(2.0 * alpha) / (2.0 * alpha);
}

struct SuperopPoint {
  cplx d{1.0, 0.0};   // Tr_E[O^k(rho_E)]
  double mx = 1.0;    // |r_00| + |r_11|, the line-resolved magnitude
};

/// Iterates O(r) = c V r V + d Y V r V Y with V = exp(-i pi J delta Z_E / 2),
/// c = (1+gamma)/2, d = (1-gamma)/2, sampling after every `stride` kicks
/// (so point m corresponds to m * stride kicks). V is applied on both
/// sides without a dagger: the operand is the S-coherence block of E, whose
/// two sides evolve under opposite ZZ phases.
inline std::vector<SuperopPoint> superop_series(double alpha, double j_hz, double delta, const Operator& rho_e0,
                                                long long stride, int samples) {
  if (rho_e0.dim() != 2) throw ValidationError("superop_series: rho_E must be single-qubit");
  if (stride < 1 || samples < 0) throw ValidationError("superop_series: bad sampling");
  const double g = kick_gamma(alpha);
  const double c = 0.5 * (1.0 + g);
  const double d = 0.5 * (1.0 - g);
  const double ph = 0.5 * kPi * j_hz * delta;
  const cplx v0 = std::exp(-kI * ph);
  const cplx v1 = std::exp(kI * ph);
  Mat2 r = rho_e0.matrix();
  std::vector<SuperopPoint> out;
  auto sample = [&] { out.push_back({r.trace(), std::abs(r(0, 0)) + std::abs(r(1, 1))}); };
  sample();
  for (int m = 0; m < samples; ++m) {
    for (long long i = 0; i < stride; ++i) {
      // V r V for diagonal V
      r(0, 0) *= v0 * v0;
      r(1, 1) *= v1 * v1;
      r(0, 1) *= v0 * v1;
      r(1, 0) *= v1 * v0;
      // Y r Y = [[r11, -r10], [-r01, r00]]
      const Mat2 yry = (Mat2() << r(1, 1), -r(1, 0), -r(0, 1), r(0, 0)).finished();
      r = c * r + d * yry;
    }
    sample();
  }
  return out;
}

/// D(k) = Tr_E[O^k(rho_E)] for the schedule's delta and alpha.
inline cplx superop_factor(const KickSchedule& sched, const SystemEnvModel& model, long long k_total) {
  if (k_total < 0) throw ValidationError("superop_factor: k must be >= 0");
  if (k_total == 0) return model.rho_e0.trace();
  return superop_series(sched.alpha, model.j_hz, sched.delta(), model.rho_e0, k_total, 1).back().d;
}

// ---------------------------------------------------------------------------
// T2 fitting

/// Fits M(t) = M(0) exp(-t/T2) with M(0) fixed to the first sample: a
/// log-linear fit through the origin on the positive samples, refined by
/// nonlinear least squares on the rate. Returns +inf for non-decaying data.
inline double fit_t2(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() != y.size()) throw ValidationError("fit_t2: t and y sizes differ");
  if (t.size() < 3) throw ValidationError("fit_t2: need at least 3 samples");
  const double y0 = y[0];
  const double t0 = t[0];
  if (!(y0 > 0.0) || !std::isfinite(y0)) throw ValidationError("fit_t2: first sample must be positive");
  double num = 0.0, den = 0.0, span = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(y[i])) throw ValidationError("fit_t2: non-finite sample");
    const double dt = t[i] - t0;
    span = std::max(span, dt);
    if (y[i] > 0.0 && dt > 0.0) {
      num += dt * std::log(y[i] / y0);
      den += dt * dt;
    }
  }
  if (!(span > 0.0)) throw ValidationError("fit_t2: samples span no time");
  double rate = den > 0.0 ? -num / den : 0.0;
  if (!(rate * span > 1e-12)) return std::numeric_limits<double>::infinity();

  numerics::FitProblem p;
  p.model = [y0, t0](std::span<const double> q, double tt) { return y0 * std::exp(-q[0] * (tt - t0)); };
  p.t = t;
  p.y = y;
  p.init = {rate};
  p.lower = std::vector<double>{0.0};
  const auto r = numerics::nls_fit(p);
  rate = r.params[0];
  if (!(rate * span > 1e-12)) return std::numeric_limits<double>::infinity();
  return 1.0 / rate;
}

}  // namespace spinlab
