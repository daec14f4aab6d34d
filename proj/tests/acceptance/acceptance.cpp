// Acceptance criteria 1-10. Usage: acceptance [N | all]
// Prints one PASS/FAIL line per criterion (plus indented details) and exits
// non-zero if any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "spinlab/spinlab.hpp"
#include "spinlab/workbench.hpp"

using namespace spinlab;

namespace {

struct Outcome {
  bool pass = true;
  std::string summary;
};

void detail(const char* fmt, auto... args) {
  std::printf("    ");
  std::printf(fmt, args...);
  std::printf("\n");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Q_3 from the standard library Bessel function.
double q3_oracle(double h0, double omega) {
  const double j = std::abs(std::cyl_bessel_j(0.0, 2.0 * h0 / omega));
  return (1.0 + j) / (1.0 + 3.0 * j);
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  set_thread_count(1);
  const auto t0 = std::chrono::steady_clock::now();
  DriveParams p;
  p.h0 = 5.0 * kPi;
  p.jc = p.h0 / 20.0;
  p.n = 3;
  const Operator rho0 = dmf_initial_state(3, kPi / 2);
  std::vector<double> w, q;
  for (int i = 0; i <= 130; ++i) {
    p.omega = 4.0 + 0.2 * i;
    w.push_back(p.omega);
    q.push_back(q_from_series(simulate_dmf(p, rho0, 30, 11)));
  }
  const double runtime = seconds_since(t0);
  set_thread_count(0);

  double worst = 0.0, worst_w = 0.0, worst_sq = 0.0;
  int over = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = std::abs(q[i] - q3_oracle(p.h0, w[i]));
    if (d > 0.08) ++over;
    if (d > worst) {
      worst = d;
      worst_w = w[i];
    }
    // Effective-Hamiltonian long-time average for n = 3 (informational).
    const double j = std::cyl_bessel_j(0.0, 2.0 * p.h0 / w[i]);
    worst_sq = std::max(worst_sq, std::abs(q[i] - (1.0 + j * j) / (1.0 + 3.0 * j * j)));
  }
  // Peaks: argmax of Q_sim in a window around each J0 zero of 2 h0 / omega.
  const double zero1 = 2.0 * p.h0 / 5.520078110286311, zero2 = 2.0 * p.h0 / 2.404825557695773;
  auto peak_in = [&](double lo, double hi) {
    double best = -1.0, at = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (w[i] >= lo && w[i] <= hi && q[i] > best) {
        best = q[i];
        at = w[i];
      }
    return at;
  };
  const double pk1 = peak_in(zero1 - 1.5, zero1 + 1.5), pk2 = peak_in(zero2 - 2.0, zero2 + 2.0);
  const bool tol_ok = over == 0;
  const bool peaks_ok = std::abs(pk1 - zero1) <= 0.4 && std::abs(pk2 - zero2) <= 0.4;
  const bool time_ok = runtime < 120.0;
  detail("max |Q_sim - Q3| = %.4f at omega = %.1f rad/s; %d of %zu grid points exceed 0.08", worst, worst_w, over,
         w.size());
  detail("peaks at %.1f and %.1f rad/s; J0-zero predictions %.3f and %.3f", pk1, pk2, zero1, zero2);
  detail("single-threaded runtime %.2f s", runtime);
  detail("info: max |Q_sim - (1+J0^2)/(1+3J0^2)| = %.4f", worst_sq);
  char buf[160];
  std::snprintf(buf, sizeof buf, "tolerance %s, peaks %s, runtime %s", tol_ok ? "ok" : "FAILED",
                peaks_ok ? "ok" : "FAILED", time_ok ? "ok" : "FAILED");
  return {tol_ok && peaks_ok && time_ok, buf};
}

Outcome criterion2() {
  DriveParams p;
  p.h0 = 5.0 * kPi;
  p.jc = p.h0 / 20.0;
  bool ok = true;
  std::string s;
  for (double omega : {5.61, 12.88}) {
    p.omega = omega;
    for (double theta_deg : {90.0, 30.0}) {
      const auto series = simulate_dmf(p, dmf_initial_state(3, theta_deg * kPi / 180.0), 30, 11);
      const double m0 = series.mx[0];
      double lo = 1e300;
      for (double v : series.mx) lo = std::min(lo, v / m0);
      const bool pass = lo >= 0.9;
      ok = ok && pass;
      detail("omega %.2f, theta %.0f deg: m_x(0) = %.4f, min normalized m_x = %.4f %s", omega, theta_deg, m0, lo,
             pass ? "" : "(below 0.9)");
    }
  }
  return {ok, ok ? "normalized m_x >= 0.9 for both preparations" : "normalized m_x dropped below 0.9"};
}

Outcome criterion3() {
  // pi/2 transfer Iz -> Ix (rotation about -y) under the RF ensemble.
  GrapeProblem prob{Operator::zero(2), {pauli::Ix(), pauli::Iy()}, pauli::Iz(), pauli::Ix(), paper_rf_ensemble()};
  const std::size_t n = 20;
  const double dt = 0.05;
  GrapeOptions opt;
  opt.epsilon = 1.0 / (n * dt * dt);
  opt.max_iter = 500;
  opt.target_phi = 0.99;
  const auto res = grape_optimize(prob, ControlPulse::zeros(2, n, dt), opt);
  const double phi = ensemble_phi(prob, res.pulse);
  const bool opt_ok = phi >= 0.99 && res.iterations <= 500;
  detail("ensemble Phi = %.5f after %d iterations (%s)", phi, res.iterations, res.stop_reason.c_str());

  // Central finite differences on a random pulse with dt ||H|| <= 1e-3.
  GrapeProblem g{0.3 * pauli::Iz(), {pauli::Ix(), pauli::Iy()}, pauli::Iz(), pauli::Iy(), {{1.0, 1.0}}};
  const double u_max = 2.0;
  const double dtg = 1e-3 / (0.5 * (0.3 + 2.0 * u_max));
  const auto pulse = ControlPulse::random(2, 12, dtg, u_max, 7);
  double hmax = 0.0;
  for (std::size_t j = 0; j < pulse.steps(); ++j) {
    const Operator h = g.drift + pulse.u[0][j] * g.controls[0] + pulse.u[1][j] * g.controls[1];
    hmax = std::max(hmax, h.matrix().operatorNorm());
  }
  const auto grad = grape_gradient(g, pulse);
  double num = 0.0, den = 0.0;
  const double step = 1e-3;
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < pulse.steps(); ++j) {
      ControlPulse a = pulse, b = pulse;
      a.u[k][j] += step;
      b.u[k][j] -= step;
      const double fd = (grape_phi(g, a) - grape_phi(g, b)) / (2.0 * step);
      num += (grad[k][j] - fd) * (grad[k][j] - fd);
      den += fd * fd;
    }
  const double rel = std::sqrt(num / den);
  const bool grad_ok = rel <= 1e-3 && dtg * hmax <= 1e-3;
  detail("gradient vs central differences: relative error %.3g at dt||H|| = %.3g", rel, dtg * hmax);
  return {opt_ok && grad_ok, std::string("ensemble transfer ") + (opt_ok ? "ok" : "FAILED") + ", gradient " +
                                 (grad_ok ? "ok" : "FAILED")};
}

Outcome criterion4() {
  bool ok = true;
  double worst_z = 0.0;
  for (double gamma : {10.0, 25.0})
    for (double alpha_deg : {1.0, 2.0}) {
      SystemEnvModel m;
      KickSchedule k;
      k.gamma_per_ms = gamma;
      k.alpha = alpha_deg * kPi / 180.0;
      k.seed = 20240401;
      const int cycles = 20;
      const auto s = ensemble_coherence(m, k, 5000, cycles);
      const auto so = superop_series(k.alpha, m.j_hz, k.delta(), m.rho_e0, k.kicks_per_cycle(), cycles);
      double z_env = 0.0, z_coh = 0.0;
      for (std::size_t i = 1; i < s.points.size(); ++i) {
        const auto& pt = s.points[i];
        if (pt.mx_stderr > 0.0) z_env = std::max(z_env, std::abs(pt.mx - so[i].mx) / pt.mx_stderr);
        if (pt.coherence_stderr > 0.0)
          z_coh = std::max(z_coh, std::abs(std::abs(pt.coherence) - std::abs(so[i].d)) / pt.coherence_stderr);
      }
      const bool pass = z_env <= 3.0;
      ok = ok && pass;
      worst_z = std::max(worst_z, z_env);
      detail("Gamma %2.0f /ms, alpha %.0f deg: max envelope z = %.2f (|coherence| z = %.2f), final envelope %.4f vs %.4f",
             gamma, alpha_deg, z_env, z_coh, s.points.back().mx, so.back().mx);
    }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max |z| = %.2f over 4 settings x 20 cycles", worst_z);
  return {ok, buf};
}

double kick_t2(double gamma, double alpha_deg, std::uint64_t seed) {
  SystemEnvModel m;
  KickSchedule k;
  k.gamma_per_ms = gamma;
  k.alpha = alpha_deg * kPi / 180.0;
  k.seed = seed;
  const auto s = run_dd_under_kicks(m, k, {}, 20, 2000, 2.9);
  std::vector<double> t, y;
  for (const auto& p : s.points) {
    t.push_back(p.t);
    y.push_back(p.mx);
  }
  return fit_t2(t, y);
}

Outcome criterion5() {
  std::vector<double> rates;
  for (double g : {5.0, 10.0, 25.0}) rates.push_back(1.0 / kick_t2(g, 1.0, 11));
  const double r2 = 1.0 / kick_t2(25.0, 2.0, 11);
  detail("alpha 1 deg: 1/T2 = %.4f, %.4f, %.4f /s at Gamma = 5, 10, 25 /ms", rates[0], rates[1], rates[2]);
  detail("Gamma 25 /ms: 1/T2 = %.4f /s (1 deg), %.4f /s (2 deg)", rates[2], r2);
  const bool ok = rates[0] < rates[1] && rates[1] < rates[2] && rates[2] < r2;
  return {ok, ok ? "1/T2 strictly increasing in Gamma and alpha" : "1/T2 not monotone"};
}

Outcome criterion6() {
  SystemEnvModel m;
  KickSchedule k;
  k.gamma_per_ms = 25.0;
  k.alpha = kPi / 180.0;
  k.t_c = 22.4e-3;
  k.seed = 606;
  const int cycles = 20;
  const std::size_t mm = 5000;
  const auto none = run_dd_under_kicks(m, k, {}, cycles, mm, 2.9).points.back();
  const auto cpmg = run_dd_under_kicks(m, k, dd_schedule(DDKind::cpmg, 7, k.t_c), cycles, mm, 2.9).points.back();
  const auto udd = run_dd_under_kicks(m, k, dd_schedule(DDKind::udd, 7, k.t_c), cycles, mm, 2.9).points.back();
  const double c = std::abs(cpmg.coherence), u = std::abs(udd.coherence), n = std::abs(none.coherence);
  const double g1 = 3.0 * std::hypot(cpmg.coherence_stderr, udd.coherence_stderr);
  const double g2 = 3.0 * std::hypot(udd.coherence_stderr, none.coherence_stderr);
  detail("endpoint |coherence| at t = %.3f s: CPMG %.4f +- %.4f, UDD %.4f +- %.4f, none %.4f +- %.4f", cpmg.t, c,
         cpmg.coherence_stderr, u, udd.coherence_stderr, n, none.coherence_stderr);
  detail("gaps: CPMG-UDD %.4f (3 sigma %.4f), UDD-none %.4f (3 sigma %.4f)", c - u, g1, u - n, g2);
  const bool ok = c - u > g1 && u - n > g2;
  return {ok, ok ? "CPMG > UDD > none, each gap beyond 3 sigma" : "ordering or significance not met"};
}

Outcome criterion7() {
  auto off_max = [](const ChiMatrix& c, std::vector<std::pair<int, int>> skip) {
    double w = 0.0;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        if (std::find(skip.begin(), skip.end(), std::make_pair(a, b)) == skip.end()) w = std::max(w, std::abs(c(a, b)));
    return w;
  };
  const auto id = qpt_single(channels::identity());
  const auto x = qpt_single(channels::unitary(pauli::X()));
  const auto dp = qpt_single(channels::dephasing(0.5));
  const double e_id = std::max(std::abs(id(0, 0) - 1.0), off_max(id, {{0, 0}}));
  const double e_x = std::max(std::abs(x(1, 1) - 1.0), off_max(x, {{1, 1}}));
  const double e_dp = std::max({std::abs(dp(0, 0) - 0.5), std::abs(dp(3, 3) - 0.5), off_max(dp, {{0, 0}, {3, 3}})});
  double e_qst = 0.0;
  Rng rng(77);
  for (int i = 0; i < 200; ++i) {
    double v[3];
    for (double& c : v) c = rng.uniform(-1.0, 1.0);
    const double nrm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (nrm > 1.0)
      for (double& c : v) c /= nrm;
    const auto r = qst_single(v[0], v[1], v[2]).rho;
    // Oracle: (I + x X + y Y + z Z) / 2 assembled by hand.
    const cplx expect[2][2] = {{0.5 * (1.0 + v[2]), 0.5 * cplx(v[0], -v[1])}, {0.5 * cplx(v[0], v[1]), 0.5 * (1.0 - v[2])}};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) e_qst = std::max(e_qst, std::abs(r.matrix()(a, b) - expect[a][b]));
  }
  detail("identity: %.2e, X gate: %.2e, full dephasing: %.2e (tolerance 1e-8)", e_id, e_x, e_dp);
  detail("QST round trip over 200 random Bloch vectors: %.2e (tolerance 1e-10)", e_qst);
  const bool ok = e_id <= 1e-8 && e_x <= 1e-8 && e_dp <= 1e-8 && e_qst <= 1e-10;
  return {ok, ok ? "all chi and QST oracles within tolerance" : "tomography oracle mismatch"};
}

Outcome criterion8() {
  const double t2 = 2.9;
  const std::vector<double> taus{0.8e-3, 1.2e-3, 1.6e-3, 2.4e-3, 3.2e-3, 4.8e-3, 6.4e-3};
  const auto syn = noise_spectroscopy(SyntheticBath{[t2](double) { return t2; }, 20}, taus, 7);
  const double expect = kPi * kPi / (4.0 * t2);
  double worst = 0.0;
  for (const auto& p : syn.points) worst = std::max(worst, std::abs(p.s - expect) / expect);
  const bool syn_ok = syn.points.size() == taus.size() && worst <= 0.02;
  detail("synthetic T2 = %.1f s: max relative deviation from pi^2/(4 T2) = %.2e over %zu points", t2, worst,
         syn.points.size());

  SystemEnvModel m;
  KickSchedule k;
  k.gamma_per_ms = 25.0;
  k.alpha = kPi / 180.0;
  k.seed = 808;
  KickBath kb{m, k, 20, 500, 2.9};
  KickBath quiet = kb;
  quiet.sched.alpha = 0.0;
  quiet.realizations = 1;
  const auto s = noise_spectroscopy(kb, taus, 7);
  const auto b = noise_spectroscopy(quiet, taus, 7);
  bool kick_ok = s.points.size() == taus.size() && b.points.size() == taus.size();
  for (std::size_t i = 0; kick_ok && i < taus.size(); ++i) {
    detail("omega %7.1f rad/s: S_kick = %.4f /s, S_baseline = %.4f /s", s.points[i].omega, s.points[i].s, b.points[i].s);
    kick_ok = s.points[i].s >= b.points[i].s;
  }
  return {syn_ok && kick_ok, std::string("synthetic ") + (syn_ok ? "ok" : "FAILED") + ", kick >= baseline " +
                                 (kick_ok ? "ok" : "FAILED")};
}

Outcome criterion9() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = identity_checks();
  const double runtime = seconds_since(t0);
  int failed = 0;
  for (const auto& c : checks)
    if (!c.pass) {
      ++failed;
      detail("FAIL %s: error %.3g > %.3g", c.name.c_str(), c.error, c.tolerance);
    }
  detail("%zu identities checked in %.3f s", checks.size(), runtime);
  const bool ok = failed == 0 && runtime < 30.0;
  return {ok, std::to_string(checks.size() - static_cast<std::size_t>(failed)) + "/" + std::to_string(checks.size()) +
                  " identities hold"};
}

Outcome criterion10() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / ("spinlab_determinism_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::vector<std::pair<std::string, std::string>> configs{
      {"kick", R"({"kind": "kick-decay", "seed": 42, "params": {"realizations": 300, "cycles": 6}})"},
      {"dd", R"({"kind": "dd-compare", "seed": 7, "params": {"realizations": 200, "cycles": 4}})"},
      {"sweep", R"({"kind": "dmf-sweep", "seed": 3, "params": {"omega_min_rad_s": 5.0, "omega_max_rad_s": 6.0, "omega_step_rad_s": 0.5, "cycles": 10}})"},
      {"grape", R"({"kind": "grape-opt", "seed": 5, "params": {"init": "random", "max_iter": 20}})"},
      {"ns", R"({"kind": "ns-scan", "seed": 9, "params": {"realizations": 50, "cycles": 4, "tau_ms": [1.6, 3.2]}})"}};
  bool ok = true;
  std::size_t compared = 0;
  for (const auto& [name, text] : configs) {
    const fs::path cfg = root / (name + ".json");
    io::write_file(cfg.string(), text);
    std::vector<std::string> outs;
    for (const auto& [tag, threads] : std::vector<std::pair<std::string, int>>{{"a", 1}, {"b", 1}, {"c", 4}}) {
      const fs::path out = root / (name + "_" + tag);
      const std::string cmd = std::string("\"") + SPINLAB_CLI_PATH + "\" --threads " + std::to_string(threads) +
                              " run \"" + cfg.string() + "\" --output-dir \"" + out.string() + "\" > /dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        detail("%s: run with --threads %d failed", name.c_str(), threads);
        ok = false;
      }
      outs.push_back(out.string());
    }
    for (const auto& e : fs::directory_iterator(outs[0])) {
      if (e.path().extension() != ".csv") continue;
      const std::string ref = io::read_file(e.path().string());
      for (std::size_t i = 1; i < outs.size(); ++i) {
        const fs::path other = fs::path(outs[i]) / e.path().filename();
        const bool same = fs::exists(other) && io::read_file(other.string()) == ref;
        if (!same) detail("%s: %s differs between runs", name.c_str(), e.path().filename().c_str());
        ok = ok && same;
        ++compared;
      }
    }
  }
  fs::remove_all(root);
  detail("%zu CSV comparisons across repeated runs and --threads 1 vs 4", compared);
  return {ok && compared > 0, ok ? "CSV outputs byte-identical" : "CSV outputs differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"DMF oracle agreement", criterion1},         {"freezing universality", criterion2},
      {"GRAPE ensemble and gradient", criterion3},  {"kick-model cross-oracle", criterion4},
      {"decay-rate monotonicity", criterion5},      {"DD suppression ordering", criterion6},
      {"tomography oracles", criterion7},           {"noise spectroscopy round trip", criterion8},
      {"exact identities", criterion9},             {"determinism", criterion10}};
  std::vector<int> which;
  const std::string arg = argc > 1 ? argv[1] : "all";
  if (arg == "all") {
    for (int i = 1; i <= 10; ++i) which.push_back(i);
  } else {
    const int n = std::atoi(arg.c_str());
    if (n < 1 || n > 10) {
      std::fprintf(stderr, "usage: acceptance [1-10 | all]\n");
      return 2;
    }
    which.push_back(n);
  }
  int failed = 0;
  for (int n : which) {
    const auto& [name, fn] = criteria[static_cast<std::size_t>(n - 1)];
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %2d %s: %s (%s)\n", n, o.pass ? "PASS" : "FAIL", name, o.summary.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed ? 1 : 0;
}
