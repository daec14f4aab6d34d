// grape.hpp
// Gradient ascent pulse engineering for state transfer, with an
// RF-amplitude scaling ensemble.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spinlab/io.hpp"
#include "spinlab/operator.hpp"
#include "spinlab/parallel.hpp"
#include "spinlab/rng.hpp"

namespace spinlab {

/// Piecewise-constant amplitudes u[k][j] (rad/s) for control k, step j.
struct ControlPulse {
  double dt = 0.0;                          // seconds per step
  std::vector<std::vector<double>> u;       // [channel][step]

  static ControlPulse zeros(std::size_t channels, std::size_t steps, double dt) {
    ControlPulse p;
    p.dt = dt;
    p.u.assign(channels, std::vector<double>(steps, 0.0));
    return p;
  }

  /// Seeded uniform init in [-u_max, u_max].
  static ControlPulse random(std::size_t channels, std::size_t steps, double dt, double u_max,
                             std::uint64_t seed) {
    ControlPulse p = zeros(channels, steps, dt);
    Rng rng(seed);
    for (auto& ch : p.u)
      for (auto& v : ch) v = rng.uniform(-u_max, u_max);
    return p;
  }

  std::size_t channels() const { return u.size(); }
  std::size_t steps() const { return u.empty() ? 0 : u.front().size(); }
  double duration() const { return dt * static_cast<double>(steps()); }

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("ControlPulse: dt must be positive");
    if (u.empty()) throw ValidationError("ControlPulse: no control channels");
    for (const auto& ch : u) {
      if (ch.size() != u.front().size()) throw ValidationError("ControlPulse: ragged channels");
      for (double v : ch)
        if (!std::isfinite(v)) throw ValidationError("ControlPulse: non-finite amplitude");
    }
    if (steps() == 0) throw ValidationError("ControlPulse: N must be >= 1");
  }
};

struct EnsembleMember {
  double scale = 1.0;
  double weight = 1.0;
};

/// Weights for the RF-inhomogeneity distribution at scales 0.8 ... 1.2.
/// The printed percentages sum to 92.71%; they are renormalized to one.
inline std::vector<EnsembleMember> paper_rf_ensemble() {
  const double w[5] = {4.31, 0.81, 75.32, 8.01, 4.26};
  const double s[5] = {0.8, 0.9, 1.0, 1.1, 1.2};
  double total = 0.0;
  for (double x : w) total += x;
  std::vector<EnsembleMember> out;
  for (int i = 0; i < 5; ++i) out.push_back({s[i], w[i] / total});
  return out;
}

struct GrapeProblem {
  Operator drift;
  std::vector<Operator> controls;
  Operator rho0;
  Operator target;
  std::vector<EnsembleMember> ensemble{{1.0, 1.0}};

  void validate() const {
    const std::size_t d = drift.dim();
    if (!drift.is_hermitian()) throw ValidationError("GrapeProblem: drift is not Hermitian");
    if (controls.empty()) throw ValidationError("GrapeProblem: no control Hamiltonians");
    for (const auto& h : controls) {
      if (h.dim() != d) throw ValidationError("GrapeProblem: control dimension mismatch");
      if (!h.is_hermitian()) throw ValidationError("GrapeProblem: control is not Hermitian");
    }
    if (rho0.dim() != d || target.dim() != d)
      throw ValidationError("GrapeProblem: state/target dimension mismatch");
    if (rho0.matrix().norm() == 0.0) throw ValidationError("GrapeProblem: initial state is zero");
    if (target.matrix().norm() == 0.0) throw ValidationError("GrapeProblem: target is zero");
    if (ensemble.empty()) throw ValidationError("GrapeProblem: empty ensemble");
    double total = 0.0;
    for (const auto& m : ensemble) {
      if (!(m.weight >= 0.0) || !std::isfinite(m.scale))
        throw ValidationError("GrapeProblem: invalid ensemble member");
      total += m.weight;
    }
    if (!(total > 0.0)) throw ValidationError("GrapeProblem: ensemble weights sum to zero");
  }

  /// Weights rescaled to sum to one.
  std::vector<EnsembleMember> normalized_ensemble() const {
    double total = 0.0;
    for (const auto& m : ensemble) total += m.weight;
    auto out = ensemble;
    for (auto& m : out) m.weight /= total;
    return out;
  }
};

namespace detail {

inline void check_pulse(const GrapeProblem& p, const ControlPulse& pulse) {
  pulse.validate();
  if (pulse.channels() != p.controls.size())
    throw ValidationError("GRAPE: pulse has " + std::to_string(pulse.channels()) +
                          " channels, problem has " + std::to_string(p.controls.size()));
}

inline std::vector<Matrix> step_propagators(const GrapeProblem& p, const ControlPulse& pulse,
                                            double scale) {
  std::vector<Matrix> us;
  us.reserve(pulse.steps());
  for (std::size_t j = 0; j < pulse.steps(); ++j) {
    Matrix h = p.drift.matrix();
    for (std::size_t k = 0; k < p.controls.size(); ++k)
      h += (scale * pulse.u[k][j]) * p.controls[k].matrix();
    us.push_back(expm_hermitian(Operator(std::move(h)), pulse.dt).matrix());
  }
  return us;
}

inline double phi_of(const GrapeProblem& p, const Matrix& rho_t) {
  const double denom = p.target.matrix().norm() * rho_t.norm();
  return (p.target.matrix().adjoint() * rho_t).trace().real() / denom;
}

}  // namespace detail

/// rho_j = U_j ... U_1 rho(0) U_1† ... U_j†, j = 0..N, with every control
/// amplitude multiplied by `scale`.
inline std::vector<Operator> forward_propagate(const GrapeProblem& p, const ControlPulse& pulse,
                                               double scale = 1.0) {
  p.validate();
  detail::check_pulse(p, pulse);
  const auto us = detail::step_propagators(p, pulse, scale);
  std::vector<Operator> out;
  out.reserve(us.size() + 1);
  out.push_back(p.rho0);
  Matrix rho = p.rho0.matrix();
  for (const auto& u : us) {
    rho = u * rho * u.adjoint();
    out.emplace_back(rho);
  }
  return out;
}

/// Phi_0 = Tr[C† rho(T)] / (|C|_F |rho(T)|_F) at one ensemble scale.
inline double grape_phi(const GrapeProblem& p, const ControlPulse& pulse, double scale = 1.0) {
  const auto rhos = forward_propagate(p, pulse, scale);
  return detail::phi_of(p, rhos.back().matrix());
}

using Gradient = std::vector<std::vector<double>>;

struct PhiAndGradient {
  double phi = 0.0;
  Gradient grad;
};

/// First-order GRAPE gradient at one scale:
/// g[k][j] = -Re Tr[lambda_j† i dt [s H_k, rho_j]] / (|C|_F |rho(0)|_F),
/// with lambda_N = C propagated backwards. The normalization matches
/// grape_phi (unitary evolution keeps |rho|_F fixed).
inline PhiAndGradient grape_phi_and_gradient(const GrapeProblem& p, const ControlPulse& pulse,
                                             double scale = 1.0) {
  p.validate();
  detail::check_pulse(p, pulse);
  const auto us = detail::step_propagators(p, pulse, scale);
  const std::size_t n = us.size();
  std::vector<Matrix> rho(n + 1);
  rho[0] = p.rho0.matrix();
  for (std::size_t j = 0; j < n; ++j) rho[j + 1] = us[j] * rho[j] * us[j].adjoint();

  PhiAndGradient out;
  out.phi = detail::phi_of(p, rho[n]);
  const double norm = p.target.matrix().norm() * rho[n].norm();
  out.grad.assign(p.controls.size(), std::vector<double>(n, 0.0));
  Matrix lambda = p.target.matrix();
  for (std::size_t j = n; j >= 1; --j) {
    const Matrix& r = rho[j];
    for (std::size_t k = 0; k < p.controls.size(); ++k) {
      const Matrix& hk = p.controls[k].matrix();
      const Matrix comm = hk * r - r * hk;
      const cplx v = (lambda.adjoint() * comm).trace();
      // -Re Tr[lambda† (i dt s [H_k, rho])]
      out.grad[k][j - 1] = -(kI * v).real() * pulse.dt * scale / norm;
    }
    lambda = us[j - 1].adjoint() * lambda * us[j - 1];
  }
  return out;
}

inline Gradient grape_gradient(const GrapeProblem& p, const ControlPulse& pulse, double scale = 1.0) {
  return grape_phi_and_gradient(p, pulse, scale).grad;
}

/// Weighted ensemble average of Phi and of its gradient. Members are
/// evaluated in parallel and summed in member order.
inline PhiAndGradient ensemble_phi_and_gradient(const GrapeProblem& p, const ControlPulse& pulse) {
  const auto members = p.normalized_ensemble();
  std::vector<PhiAndGradient> parts(members.size());
  parallel_for(members.size(), [&](std::size_t i) {
    parts[i] = grape_phi_and_gradient(p, pulse, members[i].scale);
  });
  PhiAndGradient out;
  out.grad.assign(pulse.channels(), std::vector<double>(pulse.steps(), 0.0));
  for (std::size_t i = 0; i < members.size(); ++i) {
    const double w = members[i].weight;
    out.phi += w * parts[i].phi;
    for (std::size_t k = 0; k < out.grad.size(); ++k)
      for (std::size_t j = 0; j < out.grad[k].size(); ++j) out.grad[k][j] += w * parts[i].grad[k][j];
  }
  return out;
}

inline double ensemble_phi(const GrapeProblem& p, const ControlPulse& pulse) {
  const auto members = p.normalized_ensemble();
  std::vector<double> parts(members.size());
  parallel_for(members.size(), [&](std::size_t i) { parts[i] = grape_phi(p, pulse, members[i].scale); });
  double phi = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) phi += members[i].weight * parts[i];
  return phi;
}

struct GrapeOptions {
  double epsilon = 1.0;       // step size in u += epsilon * grad
  int max_iter = 500;
  double target_phi = 0.99;
  bool backtracking = true;   // false: the plain fixed-epsilon update
  int max_halvings = 30;
};

struct GrapeResult {
  ControlPulse pulse;
  std::vector<double> history;  // ensemble Phi after each accepted iterate, starting with init
  bool reached_target = false;
  int iterations = 0;
  std::string stop_reason;
};

/// u_k(j) <- u_k(j) + epsilon dPhi/du_k(j) on the ensemble-average Phi.
///
/// With backtracking, a trial step that lowers Phi is retried with epsilon
/// halved, up to max_halvings times; epsilon resets to its configured value
/// at the next iteration. If no halving yields an improvement the optimizer
/// stops at the current (locally stationary) pulse.
inline GrapeResult grape_optimize(const GrapeProblem& p, const ControlPulse& init,
                                  const GrapeOptions& opt = {}) {
  if (!(opt.epsilon > 0.0) || !std::isfinite(opt.epsilon))
    throw ValidationError("grape_optimize: epsilon must be positive");
  if (opt.max_iter < 0) throw ValidationError("grape_optimize: max_iter must be >= 0");
  if (opt.max_halvings < 0) throw ValidationError("grape_optimize: max_halvings must be >= 0");
  p.validate();
  detail::check_pulse(p, init);

  GrapeResult res;
  res.pulse = init;
  auto cur = ensemble_phi_and_gradient(p, res.pulse);
  if (!std::isfinite(cur.phi)) throw NumericError("grape_optimize: non-finite Phi at initial pulse");
  res.history.push_back(cur.phi);

  auto step = [&](const Gradient& g, double eps) {
    ControlPulse trial = res.pulse;
    for (std::size_t k = 0; k < trial.u.size(); ++k)
      for (std::size_t j = 0; j < trial.u[k].size(); ++j) trial.u[k][j] += eps * g[k][j];
    return trial;
  };

  while (true) {
    if (cur.phi >= opt.target_phi) {
      res.reached_target = true;
      res.stop_reason = "target reached";
      break;
    }
    if (res.iterations >= opt.max_iter) {
      res.stop_reason = "iteration limit";
      break;
    }
    double eps = opt.epsilon;
    bool accepted = false;
    PhiAndGradient next;
    ControlPulse trial;
    const int attempts = opt.backtracking ? opt.max_halvings + 1 : 1;
    for (int a = 0; a < attempts; ++a, eps *= 0.5) {
      trial = step(cur.grad, eps);
      next = ensemble_phi_and_gradient(p, trial);
      if (!std::isfinite(next.phi))
        throw NumericError("grape_optimize: non-finite Phi at iteration " +
                           std::to_string(res.iterations + 1));
      if (!opt.backtracking || next.phi >= cur.phi) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.stop_reason = "no ascent step after " + std::to_string(opt.max_halvings) + " halvings";
      break;
    }
    ++res.iterations;
    res.pulse = std::move(trial);
    cur = std::move(next);
    res.history.push_back(cur.phi);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Pulse import/export

/// CSV with header step,dt_s,u1,...,um; one row per step (1-based).
inline std::string pulse_to_csv(const ControlPulse& pulse) {
  pulse.validate();
  io::Table t;
  t.header = {"step", "dt_s"};
  for (std::size_t k = 0; k < pulse.channels(); ++k) t.header.push_back("u" + std::to_string(k + 1));
  for (std::size_t j = 0; j < pulse.steps(); ++j) {
    std::vector<double> row{static_cast<double>(j + 1), pulse.dt};
    for (std::size_t k = 0; k < pulse.channels(); ++k) row.push_back(pulse.u[k][j]);
    t.add(std::move(row));
  }
  return t.to_csv();
}

inline ControlPulse pulse_from_csv(std::string_view text) {
  const auto t = io::parse_csv(text);
  if (t.header.size() < 3 || t.header[0] != "step" || t.header[1] != "dt_s")
    throw ValidationError("pulse CSV: header must be step,dt_s,u1,...");
  for (std::size_t c = 2; c < t.header.size(); ++c)
    if (t.header[c] != "u" + std::to_string(c - 1))
      throw ValidationError("pulse CSV: unexpected column '" + t.header[c] + "'");
  if (t.rows.empty()) throw ValidationError("pulse CSV: no steps");
  ControlPulse p = ControlPulse::zeros(t.header.size() - 2, t.rows.size(), t.rows[0][1]);
  for (std::size_t j = 0; j < t.rows.size(); ++j) {
    const auto& r = t.rows[j];
    if (r[0] != static_cast<double>(j + 1)) throw ValidationError("pulse CSV: steps out of order");
    if (r[1] != p.dt) throw ValidationError("pulse CSV: non-uniform dt_s");
    for (std::size_t k = 0; k < p.channels(); ++k) p.u[k][j] = r[k + 2];
  }
  p.validate();
  return p;
}

/// Content hash of a problem: matrices and ensemble at full precision.
inline std::string problem_hash(const GrapeProblem& p) {
  std::string s;
  auto add_matrix = [&](const Matrix& m) {
    s += std::to_string(m.rows()) + ';';
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        s += io::format_double(m(i, j).real()) + ',' + io::format_double(m(i, j).imag()) + ';';
  };
  add_matrix(p.drift.matrix());
  for (const auto& h : p.controls) add_matrix(h.matrix());
  add_matrix(p.rho0.matrix());
  add_matrix(p.target.matrix());
  for (const auto& m : p.ensemble) s += io::format_double(m.scale) + ':' + io::format_double(m.weight) + ';';
  return io::hex64(io::fnv1a(s));
}

}  // namespace spinlab
