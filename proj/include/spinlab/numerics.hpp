// numerics.hpp
// Special functions and fitting helpers: Bessel J0, damped Gauss-Newton
// least squares, and a checked dense complex linear solve.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spinlab/common.hpp"

namespace spinlab::numerics {

namespace detail {

inline constexpr double kJ0SeriesLimit = 12.0;

// Sum_k (-1)^k (x/2)^{2k} / (k!)^2, stopped once the increment drops below 1e-16.
inline double j0_power_series(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= -q / (static_cast<double>(k) * static_cast<double>(k));
    sum += term;
    if (std::abs(term) < 1e-16) break;
  }
  return sum;
}

// Hankel asymptotic expansion, truncated at its smallest term.
inline double j0_hankel(double x) {
  double p = 0.0;
  double q = 0.0;
  double a = 1.0;  // a_k(0) / x^k
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 120; ++k) {
    if (k > 0) {
      const double odd = 2.0 * k - 1.0;
      a *= -(odd * odd) / (8.0 * k * x);
    }
    const double mag = std::abs(a);
    if (mag > prev) break;
    prev = mag;
    switch (k % 4) {
      case 0: p += a; break;
      case 1: q += a; break;
      case 2: p -= a; break;
      case 3: q -= a; break;
    }
    if (mag < 1e-17) break;
  }
  const double w = x - 0.25 * kPi;
  return std::sqrt(2.0 / (kPi * x)) * (p * std::cos(w) - q * std::sin(w));
}

}  // namespace detail

/// Zeroth-order Bessel function of the first kind.
///
/// Power series for |x| <= 12, Hankel asymptotic expansion beyond; the two
/// branches agree to ~1e-11 at the crossover. Absolute error is below 1e-9
/// for |x| <= 50.
inline double bessel_j0(double x) {
  if (!std::isfinite(x)) throw ValidationError("bessel_j0: non-finite argument");
  const double ax = std::abs(x);
  return ax <= detail::kJ0SeriesLimit ? detail::j0_power_series(ax) : detail::j0_hankel(ax);
}

// ---------------------------------------------------------------------------
// Nonlinear least squares

using ModelFn = std::function<double(std::span<const double> params, double t)>;

struct FitProblem {
  ModelFn model;
  std::vector<double> t;
  std::vector<double> y;
  std::vector<double> init;
  // Optional box constraints; steps are projected onto the box.
  std::optional<std::vector<double>> lower;
  std::optional<std::vector<double>> upper;
};

struct FitResult {
  std::vector<double> params;
  double rms = 0.0;
  bool converged = false;
  int iterations = 0;
};

namespace detail {

inline double sum_squares(const FitProblem& p, std::span<const double> params) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.t.size(); ++i) {
    const double r = p.y[i] - p.model(params, p.t[i]);
    s += r * r;
  }
  return s;
}

inline void project(const FitProblem& p, std::vector<double>& params) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (p.lower) params[k] = std::max(params[k], (*p.lower)[k]);
    if (p.upper) params[k] = std::min(params[k], (*p.upper)[k]);
  }
}

}  // namespace detail

/// Levenberg-Marquardt style damped Gauss-Newton fit.
///
/// The Jacobian is taken by central differences with step
/// 1e-6 * max(1, |param|). Damping shrinks after an accepted step and grows
/// after a rejected one, so the residual never increases across accepted
/// iterations. Convergence is declared when an accepted step changes the
/// sum of squares by less than `tol` relative (or the residual vanishes).
/// On exhaustion of `max_iter` the best parameters are returned with
/// `converged = false`.
inline FitResult nls_fit(const FitProblem& p, int max_iter = 200, double tol = 1e-12) {
  const std::size_t n = p.t.size();
  const std::size_t m = p.init.size();
  if (p.y.size() != n) throw ValidationError("nls_fit: t and y sizes differ");
  if (m == 0) throw ValidationError("nls_fit: no parameters");
  if (n < m) throw ValidationError("nls_fit: fewer samples than parameters");
  if (!p.model) throw ValidationError("nls_fit: missing model");
  if ((p.lower && p.lower->size() != m) || (p.upper && p.upper->size() != m))
    throw ValidationError("nls_fit: bound vector size mismatch");

  std::vector<double> params = p.init;
  detail::project(p, params);
  double ssr = detail::sum_squares(p, params);
  if (!std::isfinite(ssr)) throw NumericError("nls_fit: non-finite residual at initial guess");

  double scale_y = 0.0;
  for (double v : p.y) scale_y = std::max(scale_y, std::abs(v));
  const double ssr_floor = 1e-28 * std::max(1.0, scale_y * scale_y) * static_cast<double>(n);

  FitResult out;
  double lambda = 1e-10;
  Eigen::MatrixXd jac(n, m);
  Eigen::VectorXd resid(n);
  std::vector<double> trial(m);

  int iter = 0;
  bool converged = ssr <= ssr_floor;
  while (!converged && iter < max_iter) {
    ++iter;
    for (std::size_t i = 0; i < n; ++i) resid(i) = p.y[i] - p.model(params, p.t[i]);
    for (std::size_t k = 0; k < m; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(params[k]));
      std::vector<double> up = params, dn = params;
      up[k] += h;
      dn[k] -= h;
      for (std::size_t i = 0; i < n; ++i)
        jac(i, k) = (p.model(up, p.t[i]) - p.model(dn, p.t[i])) / (2.0 * h);
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * resid;

    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      Eigen::MatrixXd a = jtj;
      for (std::size_t k = 0; k < m; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-12);
      const Eigen::VectorXd step = a.ldlt().solve(jtr);
      for (std::size_t k = 0; k < m; ++k) trial[k] = params[k] + step(k);
      detail::project(p, trial);
      const double trial_ssr = detail::sum_squares(p, trial);
      if (std::isfinite(trial_ssr) && trial_ssr <= ssr) {
        const double change = ssr - trial_ssr;
        bool small_step = true;
        for (std::size_t k = 0; k < m; ++k)
          small_step = small_step && std::abs(trial[k] - params[k]) <= 1e-10 * (std::abs(params[k]) + 1e-10);
        params = trial;
        accepted = true;
        lambda = std::max(lambda / 3.0, 1e-12);
        const double old = ssr;
        ssr = trial_ssr;
        if (ssr <= ssr_floor || change <= tol * old || small_step) converged = true;
      } else {
        lambda *= 4.0;
      }
    }
    if (!accepted) {
      // No descent direction left at any damping: a (local) minimum.
      converged = true;
    }
  }

  out.params = std::move(params);
  out.rms = std::sqrt(ssr / static_cast<double>(n));
  out.converged = converged;
  out.iterations = iter;
  return out;
}

// ---------------------------------------------------------------------------
// Dense complex linear solve

/// Solves A x = b with partially pivoted LU.
///
/// Rejects matrices whose reciprocal 1-norm condition estimate is below
/// 1e-12 and verifies the relative residual ||Ax - b|| / ||b|| <= 1e-10.
inline Vector linsolve(const Matrix& a, const Vector& b) {
  if (a.rows() != a.cols()) throw ValidationError("linsolve: matrix is not square");
  if (a.rows() != b.size()) throw ValidationError("linsolve: dimension mismatch");
  if (a.rows() == 0) throw ValidationError("linsolve: empty system");
  Eigen::PartialPivLU<Matrix> lu(a);
  const double rcond = lu.rcond();
  if (!(rcond >= 1e-12)) {
    throw NumericError("linsolve: singular or ill-conditioned matrix (rcond estimate " +
                       std::to_string(rcond) + ")");
  }
  Vector x = lu.solve(b);
  const double bnorm = b.norm();
  const double rel = (a * x - b).norm() / (bnorm > 0.0 ? bnorm : 1.0);
  if (!(rel <= 1e-10)) throw NumericError("linsolve: residual check failed");
  return x;
}

}  // namespace spinlab::numerics
