// workbench.hpp
// Config-driven experiment runner: strict JSON configs in, CSV/JSON tables
// and a record.json out, plus plot-ready data for the standard figures.
//
// Config layout:
//   { "kind": "<experiment>", "seed": <uint64>, "output_dir": "<path>",
//     "params": { ...kind-specific, unit-suffixed keys... } }
// Unknown keys are rejected at both levels. Non-finite times (T2 = inf)
// are written as JSON null.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spinlab/decoherence.hpp"
#include "spinlab/dmf.hpp"
#include "spinlab/gates.hpp"
#include "spinlab/grape.hpp"
#include "spinlab/io.hpp"
#include "spinlab/selftest.hpp"
#include "spinlab/tomography.hpp"

#ifndef SPINLAB_VERSION
#define SPINLAB_VERSION "0.1.0"
#endif
#ifndef SPINLAB_GIT_REV
#define SPINLAB_GIT_REV "unknown"
#endif

namespace spinlab::workbench {

using json = nlohmann::json;

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k{"dmf-sweep", "dmf-series", "grape-opt", "kick-decay",
                                          "dd-compare", "ns-scan", "qpt-run", "gate-check"};
  return k;
}

inline const std::vector<std::string>& figure_names() {
  static const std::vector<std::string> f{"fr_Q", "fr_fig2", "fr_fig3", "dec_mx", "sd_new", "dec_tomo"};
  return f;
}

inline json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double deg(double d) { return d * kPi / 180.0; }

// ---------------------------------------------------------------------------
// Strict parameter access

class Params {
 public:
  Params(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ValidationError(where_ + " must be a JSON object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  double number(const std::string& key, double def) {
    used_.insert(key);
    if (!obj_.contains(key)) return record(key, def);
    return record(key, as_number(key));
  }

  double number(const std::string& key) {
    used_.insert(key);
    if (!obj_.contains(key)) throw ValidationError(where_ + ": missing required key '" + key + "'");
    return record(key, as_number(key));
  }

  /// Missing or null means +inf (for time constants).
  double time_or_inf(const std::string& key, double def) {
    used_.insert(key);
    if (obj_.contains(key) && obj_.at(key).is_null()) return record(key, std::numeric_limits<double>::infinity());
    if (!obj_.contains(key)) return record(key, def);
    const double v = as_number(key);
    if (!(v > 0.0)) throw ValidationError(where_ + ": '" + key + "' must be > 0 or null");
    return record(key, v);
  }

  double positive(const std::string& key, double def) {
    const double v = number(key, def);
    if (!(v > 0.0)) throw ValidationError(where_ + ": '" + key + "' must be > 0");
    return v;
  }

  long long integer(const std::string& key, long long def, long long lo, long long hi) {
    used_.insert(key);
    long long v = def;
    if (obj_.contains(key)) {
      const auto& j = obj_.at(key);
      if (!j.is_number_integer()) throw ValidationError(where_ + ": '" + key + "' must be an integer");
      v = j.get<long long>();
    }
    if (v < lo || v > hi)
      throw ValidationError(where_ + ": '" + key + "' must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    resolved_[key] = v;
    return v;
  }

  bool boolean(const std::string& key, bool def) {
    used_.insert(key);
    bool v = def;
    if (obj_.contains(key)) {
      if (!obj_.at(key).is_boolean()) throw ValidationError(where_ + ": '" + key + "' must be true or false");
      v = obj_.at(key).get<bool>();
    }
    resolved_[key] = v;
    return v;
  }

  std::string choice(const std::string& key, const std::string& def, const std::vector<std::string>& allowed) {
    used_.insert(key);
    std::string v = def;
    if (obj_.contains(key)) {
      if (!obj_.at(key).is_string()) throw ValidationError(where_ + ": '" + key + "' must be a string");
      v = obj_.at(key).get<std::string>();
    }
    bool ok = false;
    for (const auto& a : allowed) ok = ok || a == v;
    if (!ok) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ValidationError(where_ + ": '" + key + "' must be one of {" + list + "}, got '" + v + "'");
    }
    resolved_[key] = v;
    return v;
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def) {
    used_.insert(key);
    if (obj_.contains(key)) {
      const auto& j = obj_.at(key);
      if (!j.is_array()) throw ValidationError(where_ + ": '" + key + "' must be an array of numbers");
      def.clear();
      for (const auto& e : j) {
        if (!e.is_number()) throw ValidationError(where_ + ": '" + key + "' must be an array of numbers");
        const double v = e.get<double>();
        if (!std::isfinite(v)) throw ValidationError(where_ + ": '" + key + "' has a non-finite entry");
        def.push_back(v);
      }
    }
    resolved_[key] = def;
    return def;
  }

  /// Rejects every key that no accessor asked for.
  void finish() const {
    std::string unknown;
    for (const auto& [k, v] : obj_.items())
      if (!used_.count(k)) unknown += (unknown.empty() ? "'" : ", '") + k + "'";
    if (!unknown.empty()) throw ValidationError(where_ + ": unknown key(s) " + unknown);
  }

  const json& resolved() const { return resolved_; }

 private:
  double as_number(const std::string& key) const {
    const auto& j = obj_.at(key);
    if (!j.is_number()) throw ValidationError(where_ + ": '" + key + "' must be a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ValidationError(where_ + ": '" + key + "' must be finite");
    return v;
  }

  double record(const std::string& key, double v) {
    resolved_[key] = jnum(v);
    return v;
  }

  const json& obj_;
  std::string where_;
  std::set<std::string> used_;
  json resolved_ = json::object();
};

// ---------------------------------------------------------------------------
// Run context

struct RunOptions {
  std::optional<std::uint64_t> seed_override;
  bool validate_only = false;
  std::optional<std::string> output_dir_override;
};

class Context {
 public:
  Context(std::string kind, std::uint64_t seed, std::filesystem::path dir, bool validate_only)
      : kind_(std::move(kind)), seed_(seed), dir_(std::move(dir)), validate_only_(validate_only) {}

  const std::string& kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  bool validate_only() const { return validate_only_; }
  const std::filesystem::path& dir() const { return dir_; }

  void warn(std::string w) { warnings_.push_back(std::move(w)); }

  void write(const std::string& name, const std::string& role, const std::string& content) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw ValidationError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    io::write_file((dir_ / name).string(), content);
    outputs_.push_back({{"role", role}, {"file", name}});
  }

  void write_table(const std::string& name, const std::string& role, const io::Table& t) { write(name, role, t.to_csv()); }

  json results = json::object();
  const std::vector<std::string>& warnings() const { return warnings_; }
  const json& outputs() const { return outputs_; }

 private:
  std::string kind_;
  std::uint64_t seed_;
  std::filesystem::path dir_;
  bool validate_only_;
  std::vector<std::string> warnings_;
  json outputs_ = json::array();
};

// ---------------------------------------------------------------------------
// Shared parameter groups

struct DmfParams {
  DriveParams drive;
  int cycles = 30;
  int slices = 11;
  double theta = kPi / 2;
  NoiseModel noise;
};

inline DmfParams read_dmf(Params& p, Context& ctx) {
  DmfParams d;
  d.drive.h0 = p.number("h0_rad_s", 5.0 * kPi);
  d.drive.jc = p.number("Jc_rad_s", d.drive.h0 / 20.0);
  d.drive.n = static_cast<int>(p.integer("n", 3, 1, max_qubits()));
  d.drive.boundary = parse_boundary(p.choice("boundary", "periodic", {"open", "periodic"}));
  d.cycles = static_cast<int>(p.integer("cycles", 30, 0, 100000));
  d.slices = static_cast<int>(p.integer("slices", 11, 1, 100000));
  d.theta = deg(p.number("theta_deg", 90.0));
  d.noise.t2 = p.time_or_inf("t2_s", 10.0);
  const std::string ens = p.choice("rf_ensemble", "paper", {"paper", "none"});
  d.noise.rf_ensemble.clear();
  if (ens == "paper") {
    for (const auto& m : paper_rf_ensemble()) d.noise.rf_ensemble.emplace_back(m.scale, m.weight);
  } else {
    d.noise.rf_ensemble.emplace_back(1.0, 1.0);
  }
  if (std::abs(std::sin(d.theta)) < 1e-12) throw ValidationError("params: theta_deg gives no transverse magnetization");
  (void)ctx;
  return d;
}

struct KickParams {
  SystemEnvModel model;
  KickSchedule sched;
};

inline KickParams read_kick(Params& p, Context& ctx) {
  KickParams k;
  k.model.j_hz = p.number("j_hz", 209.4);
  k.model.nu_s_hz = p.number("nu_s_hz", 0.0);
  k.model.nu_e_hz = p.number("nu_e_hz", 0.0);
  k.sched.gamma_per_ms = p.positive("gamma_kicks_per_ms", 25.0);
  k.sched.alpha = deg(p.number("alpha_deg", 1.0));
  if (k.sched.alpha < 0.0) throw ValidationError("params: alpha_deg must be >= 0");
  k.sched.t_c = p.positive("tc_ms", 22.4) * 1e-3;
  k.sched.angle_mode =
      p.choice("angle_mode", "symmetric", {"symmetric", "positive"}) == "symmetric" ? AngleMode::symmetric : AngleMode::positive;
  k.sched.phase_mode = p.choice("phase_mode", "fixed_y", {"fixed_y", "uniform"}) == "fixed_y" ? PhaseMode::fixed_y : PhaseMode::uniform;
  k.sched.seed = ctx.seed();
  k.sched.validate();
  const double exact = k.sched.gamma_per_ms * 1e3 * k.sched.t_c;
  const int kk = k.sched.kicks_per_cycle();
  if (std::abs(exact - kk) > 1e-9 * std::max(1.0, exact))
    ctx.warn("kicks per cycle rounded from " + io::format_double(exact) + " to " + std::to_string(kk) +
             "; delta recomputed as " + io::format_double(k.sched.delta()) + " s");
  return k;
}

inline io::Table decay_table(const CoherenceSeries& s) {
  io::Table t;
  t.header = {"t_s", "Mx_mean", "Mx_stderr"};
  for (const auto& p : s.points) t.add({p.t, p.mx, p.mx_stderr});
  return t;
}

inline double series_t2(const CoherenceSeries& s) {
  std::vector<double> t, y;
  for (const auto& p : s.points) {
    t.push_back(p.t);
    y.push_back(p.mx);
  }
  return fit_t2(t, y);
}

inline json schedule_json(DDKind kind, int n, double t_c) {
  const auto times = dd_schedule(kind, n, t_c);
  return json{{"kind", to_string(kind)}, {"N", kind == DDKind::hahn ? 1 : n}, {"t_c_s", t_c}, {"times_s", times}};
}

// ---------------------------------------------------------------------------
// Experiments

inline void run_dmf_sweep(Params& p, Context& ctx) {
  DmfParams d = read_dmf(p, ctx);
  const double w0 = p.positive("omega_min_rad_s", 4.0);
  const double w1 = p.positive("omega_max_rad_s", 30.0);
  const double dw = p.positive("omega_step_rad_s", 0.2);
  p.finish();
  if (w1 < w0) throw ValidationError("params: omega_max_rad_s < omega_min_rad_s");
  const auto count = static_cast<std::size_t>(std::llround((w1 - w0) / dw)) + 1;
  if (count > 100000) throw ValidationError("params: omega grid has more than 100000 points");
  std::vector<double> omegas(count);
  for (std::size_t i = 0; i < count; ++i) omegas[i] = w0 + dw * static_cast<double>(i);
  d.drive.omega = omegas.front();
  for (const auto& a : d.drive.advisories()) ctx.warn("at omega_min: " + a);
  if (ctx.validate_only()) return;

  const Operator rho0 = dmf_initial_state(d.drive.n, d.theta);
  const auto pts = dmf_sweep(d.drive, rho0, omegas, d.cycles, d.slices, d.noise);
  io::Table t;
  t.header = {"omega_rad_s", "Q_sim", "Q3_closed", "Qinf_closed", "Q_noisy", "Q_corrected"};
  int failed = 0;
  for (const auto& x : pts) {
    t.add({x.omega, x.q_sim, x.q3, x.qinf, x.q_noisy, x.q_corrected});
    if (std::isnan(x.q_corrected)) ++failed;
  }
  if (failed) ctx.warn(std::to_string(failed) + " sweep points have no decay-corrected Q (fit failed)");
  ctx.write_table("sweep.csv", "sweep", t);
  double worst = 0.0;
  for (const auto& x : pts) worst = std::max(worst, std::abs(x.q_sim - x.q3));
  ctx.results["points"] = pts.size();
  ctx.results["max_abs_Qsim_minus_Q3"] = worst;
}

inline void run_dmf_series(Params& p, Context& ctx) {
  DmfParams d = read_dmf(p, ctx);
  const auto omegas = p.numbers("omegas_rad_s", {5.61, 12.88, 8.4, 24.54});
  p.finish();
  if (omegas.empty()) throw ValidationError("params: omegas_rad_s is empty");
  for (double w : omegas)
    if (!(w > 0.0)) throw ValidationError("params: omegas_rad_s entries must be > 0");
  if (ctx.validate_only()) return;

  const Operator rho0 = dmf_initial_state(d.drive.n, d.theta);
  json per = json::array();
  for (std::size_t i = 0; i < omegas.size(); ++i) {
    DriveParams dp = d.drive;
    dp.omega = omegas[i];
    for (const auto& a : dp.advisories()) ctx.warn("omega " + io::format_double(dp.omega) + ": " + a);
    const auto raw = simulate_dmf(dp, rho0, d.cycles, d.slices);
    const auto noisy = noisy_simulate(dp, rho0, d.cycles, d.slices, d.noise.t2, d.noise.rf_ensemble);
    std::vector<double> corrected(noisy.size(), std::numeric_limits<double>::quiet_NaN());
    json fit_j = nullptr;
    try {
      const auto fit = decay_fit(noisy);
      const auto c = inverse_decay_correct(noisy, fit);
      corrected = c.series.mx;
      if (!c.flagged.empty()) ctx.warn("omega " + io::format_double(dp.omega) + ": correction overflow at " +
                                       std::to_string(c.flagged.size()) + " samples");
      fit_j = {{"alpha", fit.alpha}, {"beta", fit.beta}, {"gamma", fit.gamma}, {"c_rad_s", fit.c},
               {"T_d_s", jnum(fit.t_d)}, {"rms", fit.rms}, {"degenerate", fit.degenerate}};
    } catch (const NumericError& e) {
      ctx.warn("omega " + io::format_double(dp.omega) + ": decay fit failed: " + e.what());
    } catch (const ValidationError& e) {
      ctx.warn("omega " + io::format_double(dp.omega) + ": decay fit skipped: " + e.what());
    }
    io::Table t;
    t.header = {"j", "t_s", "mx_raw", "mx_noisy", "mx_corrected"};
    for (std::size_t j = 0; j < raw.size(); ++j)
      t.add({static_cast<double>(j), raw.t[j], raw.mx[j], noisy.mx[j], corrected[j]});
    const std::string name = "series_" + std::to_string(i) + ".csv";
    ctx.write_table(name, "series", t);
    double qc = 0.0;
    for (double v : corrected) qc += v;
    qc /= static_cast<double>(corrected.size());
    double lo = raw.mx[0];
    for (double v : raw.mx) lo = std::min(lo, v);
    per.push_back({{"omega_rad_s", dp.omega}, {"file", name}, {"Q_raw", q_from_series(raw)},
                   {"Q_noisy", q_from_series(noisy)}, {"Q_corrected", jnum(qc)}, {"min_mx_raw", lo},
                   {"Q3_closed", q_closed_form(QVariant::three, dp.h0, dp.omega)}, {"decay_fit", fit_j}});
  }
  ctx.results["series"] = per;
}

inline void run_grape(Params& p, Context& ctx) {
  const auto steps = static_cast<std::size_t>(p.integer("steps", 20, 1, 100000));
  const double duration = p.positive("duration_s", 1.0);
  const double rot = deg(p.number("rotation_deg", 90.0));
  const std::string axis = p.choice("rotation_axis", "x", {"x", "y"});
  const std::string ctrl = p.choice("controls", "xy", {"x", "xy"});
  const double offset = p.number("offset_rad_s", 0.0);
  const std::string ens = p.choice("ensemble", "paper", {"paper", "none"});
  const double dt = duration / static_cast<double>(steps);
  const double eps = p.positive("epsilon", 1.0 / (static_cast<double>(steps) * dt * dt));
  const int max_iter = static_cast<int>(p.integer("max_iter", 500, 0, 1000000));
  const double target = p.number("target_phi", 0.99);
  const bool backtrack = p.boolean("backtracking", true);
  const std::string init = p.choice("init", "zero", {"zero", "random"});
  const double u_max = p.positive("u_max_rad_s", 2.0 * kPi / duration);
  p.finish();
  if (ctx.validate_only()) return;

  GrapeProblem prob{offset * pauli::Iz(), {pauli::Ix()}, pauli::Iz(), pauli::Iz(), {{1.0, 1.0}}};
  if (ctrl == "xy") prob.controls.push_back(pauli::Iy());
  const Operator r = rotation(axis == "x" ? rx(rot) : ry(rot), 1);
  prob.target = conjugate(r, prob.rho0);
  if (ens == "paper") prob.ensemble = paper_rf_ensemble();
  const ControlPulse start = init == "zero" ? ControlPulse::zeros(prob.controls.size(), steps, dt)
                                            : ControlPulse::random(prob.controls.size(), steps, dt, u_max, ctx.seed());
  GrapeOptions opt;
  opt.epsilon = eps;
  opt.max_iter = max_iter;
  opt.target_phi = target;
  opt.backtracking = backtrack;
  const auto res = grape_optimize(prob, start, opt);
  ctx.write("pulse.csv", "pulse", pulse_to_csv(res.pulse));
  const json sidecar{{"problem_hash", problem_hash(prob)}, {"phi_bar", res.history.back()},
                     {"iterations", res.iterations}, {"reached_target", res.reached_target},
                     {"stop_reason", res.stop_reason}};
  ctx.write("pulse.json", "pulse-meta", sidecar.dump(2) + "\n");
  io::Table h;
  h.header = {"iteration", "phi_bar"};
  for (std::size_t i = 0; i < res.history.size(); ++i) h.add({static_cast<double>(i), res.history[i]});
  ctx.write_table("history.csv", "history", h);
  if (!res.reached_target) ctx.warn("GRAPE stopped before the target: " + res.stop_reason);
  ctx.results = sidecar;
}

inline void run_kick_decay(Params& p, Context& ctx) {
  KickParams k = read_kick(p, ctx);
  const int cycles = static_cast<int>(p.integer("cycles", 20, 2, 100000));
  const auto m = static_cast<std::size_t>(p.integer("realizations", 2000, 1, 10000000));
  const double t2i = p.time_or_inf("intrinsic_t2_s", 2.9);
  p.finish();
  if (k.sched.angle_mode != AngleMode::symmetric || k.sched.phase_mode != PhaseMode::fixed_y)
    ctx.warn("D_superop_abs assumes symmetric fixed-y kicks; it is not a prediction for these modes");
  if (ctx.validate_only()) return;

  const auto kicked = run_dd_under_kicks(k.model, k.sched, {}, cycles, m, t2i);
  KickSchedule quiet = k.sched;
  quiet.alpha = 0.0;
  const auto base = run_dd_under_kicks(k.model, quiet, {}, cycles, 1, t2i);
  ctx.write_table("decay.csv", "decay", decay_table(kicked));
  ctx.write_table("decay_nokick.csv", "decay-nokick", decay_table(base));
  const auto so = superop_series(k.sched.alpha, k.model.j_hz, k.sched.delta(), k.model.rho_e0,
                                 k.sched.kicks_per_cycle(), cycles);
  io::Table c;
  c.header = {"t_s", "coh_re", "coh_im", "coh_abs", "coh_stderr", "D_superop_abs"};
  for (std::size_t i = 0; i < kicked.points.size(); ++i) {
    const auto& q = kicked.points[i];
    c.add({q.t, q.coherence.real(), q.coherence.imag(), std::abs(q.coherence), q.coherence_stderr,
           std::abs(so[i].d) * std::exp(-q.t / t2i)});
  }
  ctx.write_table("coherence.csv", "coherence", c);
  ctx.results = {{"t2_s", jnum(series_t2(kicked))},
                 {"t2_nokick_s", jnum(series_t2(base))},
                 {"kicks_per_cycle", kicked.kicks_per_cycle},
                 {"delta_s", k.sched.delta()},
                 {"realizations", m}};
}

inline void run_dd_compare(Params& p, Context& ctx) {
  KickParams k = read_kick(p, ctx);
  const int cycles = static_cast<int>(p.integer("cycles", 20, 2, 100000));
  const auto m = static_cast<std::size_t>(p.integer("realizations", 2000, 1, 10000000));
  const double t2i = p.time_or_inf("intrinsic_t2_s", 2.9);
  const int n = static_cast<int>(p.integer("dd_pulses", 7, 1, 10000));
  p.finish();
  if (ctx.validate_only()) return;

  KickSchedule quiet = k.sched;
  quiet.alpha = 0.0;
  const double tc = k.sched.t_c;
  struct Run {
    const char* name;
    CoherenceSeries s;
  };
  std::vector<Run> runs;
  runs.push_back({"nokick", run_dd_under_kicks(k.model, quiet, {}, cycles, 1, t2i)});
  runs.push_back({"none", run_dd_under_kicks(k.model, k.sched, {}, cycles, m, t2i)});
  runs.push_back({"cpmg", run_dd_under_kicks(k.model, k.sched, dd_schedule(DDKind::cpmg, n, tc), cycles, m, t2i)});
  runs.push_back({"udd", run_dd_under_kicks(k.model, k.sched, dd_schedule(DDKind::udd, n, tc), cycles, m, t2i)});
  ctx.write("schedule_cpmg.json", "schedule", schedule_json(DDKind::cpmg, n, tc).dump(2) + "\n");
  ctx.write("schedule_udd.json", "schedule", schedule_json(DDKind::udd, n, tc).dump(2) + "\n");
  json per = json::object();
  for (const auto& r : runs) {
    const std::string name = std::string("decay_") + r.name + ".csv";
    ctx.write_table(name, std::string("decay-") + r.name, decay_table(r.s));
    const auto& end = r.s.points.back();
    per[r.name] = {{"file", name},
                   {"endpoint_coh_abs", std::abs(end.coherence)},
                   {"endpoint_coh_stderr", end.coherence_stderr},
                   {"endpoint_Mx", end.mx},
                   {"t2_s", jnum(series_t2(r.s))}};
  }
  ctx.results = {{"runs", per}, {"kicks_per_cycle", runs[1].s.kicks_per_cycle}, {"realizations", m}};
}

inline void run_ns_scan(Params& p, Context& ctx) {
  const std::string bath = p.choice("bath", "kick", {"kick", "synthetic"});
  const auto taus_ms = p.numbers("tau_ms", {0.8, 1.2, 1.6, 2.4, 3.2, 4.8, 6.4});
  const int n = static_cast<int>(p.integer("cpmg_pulses", 7, 1, 10000));
  const int cycles = static_cast<int>(p.integer("cycles", 20, 2, 100000));
  std::vector<double> taus;
  for (double t : taus_ms) {
    if (!(t > 0.0)) throw ValidationError("params: tau_ms entries must be > 0");
    taus.push_back(t * 1e-3);
  }
  if (taus.empty()) throw ValidationError("params: tau_ms is empty");
  auto spectrum_table = [](const NoiseSpectrum& s) {
    io::Table t;
    t.header = {"omega_rad_s", "S_per_s", "T2_s"};
    for (const auto& x : s.points) t.add({x.omega, x.s, x.t2});
    return t;
  };
  if (bath == "synthetic") {
    const double t2 = p.positive("synthetic_t2_s", 2.9);
    p.finish();
    if (ctx.validate_only()) return;
    const auto s = noise_spectroscopy(SyntheticBath{[t2](double) { return t2; }, cycles}, taus, n);
    for (const auto& d : s.diagnostics) ctx.warn(d);
    ctx.write_table("spectrum.csv", "spectrum", spectrum_table(s));
    ctx.results = {{"points", s.points.size()}, {"expected_S_per_s", kPi * kPi / (4.0 * t2)}};
    return;
  }
  KickParams k = read_kick(p, ctx);
  const auto m = static_cast<std::size_t>(p.integer("realizations", 500, 1, 10000000));
  const double t2i = p.time_or_inf("intrinsic_t2_s", 2.9);
  p.finish();
  if (ctx.validate_only()) return;
  KickBath kb{k.model, k.sched, cycles, m, t2i};
  const auto s = noise_spectroscopy(kb, taus, n);
  KickBath quiet = kb;
  quiet.sched.alpha = 0.0;
  quiet.realizations = 1;
  const auto b = noise_spectroscopy(quiet, taus, n);
  for (const auto& d : s.diagnostics) ctx.warn(d);
  for (const auto& d : b.diagnostics) ctx.warn("baseline: " + d);
  ctx.write_table("spectrum.csv", "spectrum", spectrum_table(s));
  ctx.write_table("spectrum_baseline.csv", "spectrum-baseline", spectrum_table(b));
  ctx.results = {{"points", s.points.size()}, {"baseline_points", b.points.size()}};
}

inline void run_qpt(Params& p, Context& ctx) {
  const std::string ch =
      p.choice("channel", "identity", {"identity", "x", "y", "z", "hadamard", "dephasing", "kick", "kick-cpmg", "kick-udd"});
  Channel channel;
  if (ch == "dephasing") {
    const double q = p.number("dephasing_p", 0.5);
    p.finish();
    channel = channels::dephasing(q);
  } else if (ch.rfind("kick", 0) == 0) {
    KickParams k = read_kick(p, ctx);
    const int cycles = static_cast<int>(p.integer("evolution_cycles", 1, 1, 100000));
    const auto m = static_cast<std::size_t>(p.integer("realizations", 2000, 1, 10000000));
    const int n = static_cast<int>(p.integer("dd_pulses", 7, 1, 10000));
    p.finish();
    if (ctx.validate_only()) return;
    std::vector<double> dd;
    if (ch == "kick-cpmg") dd = dd_schedule(DDKind::cpmg, n, k.sched.t_c);
    if (ch == "kick-udd") dd = dd_schedule(DDKind::udd, n, k.sched.t_c);
    const auto s = run_dd_under_kicks(k.model, k.sched, dd, cycles, m);
    const auto& end = s.points.back();
    const cplx d = end.coherence;
    const bool flipped = end.flipped;
    // Output coherence is the input coherence (of the branch pair now in
    // S states 0, 1) times d; an odd pulse count also swaps populations.
    channel = [d, flipped](const DensityMatrix& rho) {
      const Matrix& r = rho.matrix();
      Matrix o(2, 2);
      if (!flipped) {
        o << r(0, 0), d * r(0, 1), std::conj(d) * r(1, 0), r(1, 1);
      } else {
        o << r(1, 1), d * r(1, 0), std::conj(d) * r(0, 1), r(0, 0);
      }
      return DensityMatrix(Operator(std::move(o)));
    };
    ctx.results["coherence_factor"] = {{"re", d.real()}, {"im", d.imag()}, {"stderr", end.coherence_stderr}};
  } else {
    p.finish();
    if (ch == "identity") channel = channels::identity();
    if (ch == "x") channel = channels::unitary(pauli::X());
    if (ch == "y") channel = channels::unitary(pauli::Y());
    if (ch == "z") channel = channels::unitary(pauli::Z());
    if (ch == "hadamard") channel = channels::unitary(standard_gate(Gate::H));
  }
  if (ctx.validate_only()) return;
  const ChiMatrix chi = qpt_single(channel);
  json rows = json::array();
  for (int a = 0; a < 4; ++a) {
    json row = json::array();
    for (int b = 0; b < 4; ++b) row.push_back({chi(a, b).real(), chi(a, b).imag()});
    rows.push_back(row);
  }
  const json out{{"basis", ChiMatrix::labels()}, {"chi", rows}, {"channel", ch},
                 {"completeness_residual", chi.completeness_residual()}, {"psd_distance", chi.psd_distance()}};
  ctx.write("chi.json", "chi", out.dump(2) + "\n");
  ctx.results["chi_EE"] = chi(0, 0).real();
  ctx.results["psd_distance"] = chi.psd_distance();
}

inline void run_gate_check(Params& p, Context& ctx) {
  p.finish();
  if (ctx.validate_only()) return;
  json checks = json::array();
  bool all = true;
  for (const auto& c : identity_checks()) {
    checks.push_back({{"name", c.name}, {"error", c.error}, {"tolerance", c.tolerance}, {"pass", c.pass}});
    all = all && c.pass;
  }
  ctx.write("gate_check.json", "checks", json{{"checks", checks}}.dump(2) + "\n");
  ctx.results = {{"checks", checks.size()}, {"all_pass", all}};
  if (!all) ctx.warn("some identity checks failed");
}

// ---------------------------------------------------------------------------
// Entry points

inline std::uint64_t parse_seed(const json& j) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<long long>() >= 0) return static_cast<std::uint64_t>(j.get<long long>());
  throw ValidationError("config: 'seed' must be a non-negative integer");
}

struct ParsedConfig {
  std::string kind;
  std::uint64_t seed = 1;
  std::string output_dir = "spinlab_out";
  json params = json::object();
};

inline ParsedConfig parse_config(const json& config) {
  if (!config.is_object()) throw ValidationError("config must be a JSON object");
  ParsedConfig c;
  for (const auto& [k, v] : config.items()) {
    if (k == "kind") {
      if (!v.is_string()) throw ValidationError("config: 'kind' must be a string");
      c.kind = v.get<std::string>();
    } else if (k == "seed") {
      c.seed = parse_seed(v);
    } else if (k == "output_dir") {
      if (!v.is_string() || v.get<std::string>().empty()) throw ValidationError("config: 'output_dir' must be a non-empty string");
      c.output_dir = v.get<std::string>();
    } else if (k == "params") {
      if (!v.is_object()) throw ValidationError("config: 'params' must be an object");
      c.params = v;
    } else {
      throw ValidationError("config: unknown key '" + k + "'");
    }
  }
  if (c.kind.empty()) throw ValidationError("config: missing 'kind'");
  bool known = false;
  for (const auto& k : experiment_kinds()) known = known || k == c.kind;
  if (!known) throw ValidationError("config: unknown experiment kind '" + c.kind + "'");
  return c;
}

inline void dispatch(Params& p, Context& ctx) {
  const std::string& k = ctx.kind();
  if (k == "dmf-sweep") return run_dmf_sweep(p, ctx);
  if (k == "dmf-series") return run_dmf_series(p, ctx);
  if (k == "grape-opt") return run_grape(p, ctx);
  if (k == "kick-decay") return run_kick_decay(p, ctx);
  if (k == "dd-compare") return run_dd_compare(p, ctx);
  if (k == "ns-scan") return run_ns_scan(p, ctx);
  if (k == "qpt-run") return run_qpt(p, ctx);
  if (k == "gate-check") return run_gate_check(p, ctx);
  throw ValidationError("config: unknown experiment kind '" + k + "'");
}

/// Validates the config and, unless validate_only, runs it and writes the
/// outputs plus record.json into the output directory. Returns the record.
inline json run_experiment(const json& config, const RunOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  ParsedConfig c = parse_config(config);
  if (opts.seed_override) c.seed = *opts.seed_override;
  if (opts.output_dir_override) c.output_dir = *opts.output_dir_override;

  Context ctx(c.kind, c.seed, c.output_dir, opts.validate_only);
  Params p(c.params, "params");
  dispatch(p, ctx);

  json echo{{"kind", c.kind}, {"seed", c.seed}, {"output_dir", c.output_dir}, {"params", c.params}};
  json record{{"spinlab_version", SPINLAB_VERSION},
              {"git_rev", SPINLAB_GIT_REV},
              {"config", echo},
              {"params_resolved", p.resolved()},
              {"validate_only", opts.validate_only},
              {"warnings", ctx.warnings()}};
  if (opts.validate_only) return record;

  record["threads"] = thread_count();
  record["outputs"] = ctx.outputs();
  record["results"] = ctx.results;
  record["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::write_file((std::filesystem::path(c.output_dir) / "record.json").string(), record.dump(2) + "\n");
  return record;
}

// ---------------------------------------------------------------------------
// Plot data

struct LoadedRecord {
  json record;
  std::filesystem::path dir;
};

inline LoadedRecord load_record(const std::string& path) {
  LoadedRecord r;
  try {
    r.record = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("record '" + path + "' is not valid JSON: " + e.what());
  }
  if (!r.record.is_object() || !r.record.contains("config") || !r.record.contains("outputs"))
    throw ValidationError("record '" + path + "' is not a spinlab run record");
  r.dir = std::filesystem::path(path).parent_path();
  return r;
}

inline std::string record_kind(const LoadedRecord& r) { return r.record.at("config").value("kind", std::string()); }

inline std::vector<std::string> outputs_with_role(const LoadedRecord& r, const std::string& role) {
  std::vector<std::string> out;
  for (const auto& o : r.record.at("outputs"))
    if (o.value("role", std::string()) == role) out.push_back(o.value("file", std::string()));
  return out;
}

inline io::Table load_table(const LoadedRecord& r, const std::string& file) {
  const auto path = r.dir / file;
  if (!std::filesystem::exists(path)) throw ValidationError("missing table '" + path.string() + "'");
  return io::parse_csv(io::read_file(path.string()));
}

struct PlotSeries {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct PlotData {
  std::string figure;
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<PlotSeries> series;

  /// gnuplot data: one block per series, separated by two blank lines, so
  /// `index i` selects series i.
  std::string dat() const {
    std::string s;
    for (std::size_t i = 0; i < series.size(); ++i) {
      if (i) s += "\n\n";
      s += "# " + series[i].name + "\n# ";
      for (std::size_t c = 0; c < series[i].columns.size(); ++c) s += (c ? " " : "") + series[i].columns[c];
      s += "\n";
      for (const auto& row : series[i].rows) {
        for (std::size_t c = 0; c < row.size(); ++c) s += (c ? " " : "") + io::format_double(row[c]);
        s += "\n";
      }
    }
    return s;
  }

  json scene(const std::string& data_file) const {
    json ss = json::array();
    for (std::size_t i = 0; i < series.size(); ++i)
      ss.push_back({{"index", i}, {"name", series[i].name}, {"columns", series[i].columns}});
    return {{"figure", figure}, {"title", title}, {"xlabel", xlabel}, {"ylabel", ylabel}, {"data", data_file}, {"series", ss}};
  }
};

inline PlotSeries table_series(const io::Table& t, std::string name, const std::vector<std::string>& cols) {
  PlotSeries s{std::move(name), cols, {}};
  std::vector<std::vector<double>> c;
  for (const auto& col : cols) {
    c.push_back(t.column(col));
    if (c.back().size() != t.rows.size()) throw ValidationError("table lacks column '" + col + "'");
  }
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    std::vector<double> row;
    for (const auto& v : c) row.push_back(v[i]);
    s.rows.push_back(std::move(row));
  }
  return s;
}

inline void require_kind(const LoadedRecord& r, const std::string& figure, const std::vector<std::string>& kinds) {
  const std::string k = record_kind(r);
  for (const auto& x : kinds)
    if (x == k) return;
  std::string list;
  for (const auto& x : kinds) list += (list.empty() ? "" : " or ") + x;
  throw ValidationError("figure " + figure + " needs a " + list + " record, got '" + k + "'");
}

inline std::string theta_label(const LoadedRecord& r) {
  const auto& pr = r.record.value("params_resolved", json::object());
  const double th = pr.contains("theta_deg") && pr.at("theta_deg").is_number() ? pr.at("theta_deg").get<double>() : 90.0;
  return "theta=" + io::format_double(th) + "deg";
}

/// Builds the data for one figure from one or more run records.
inline PlotData build_plotdata(const std::vector<LoadedRecord>& recs, const std::string& figure) {
  bool known = false;
  for (const auto& f : figure_names()) known = known || f == figure;
  if (!known) throw ValidationError("unknown figure '" + figure + "'");
  if (recs.empty()) throw ValidationError("plotdata needs at least one record");
  PlotData d;
  d.figure = figure;
  for (const auto& r : recs) {
    if (figure == "fr_Q") {
      require_kind(r, figure, {"dmf-sweep"});
      d.title = "Long-time average magnetization Q vs drive frequency";
      d.xlabel = "omega (rad/s)";
      d.ylabel = "Q";
      const auto t = load_table(r, outputs_with_role(r, "sweep").at(0));
      d.series.push_back(table_series(t, "simulated " + theta_label(r), {"omega_rad_s", "Q_sim"}));
      d.series.push_back(table_series(t, "closed form n=3", {"omega_rad_s", "Q3_closed"}));
    } else if (figure == "fr_fig3") {
      require_kind(r, figure, {"dmf-sweep"});
      d.title = "Q vs omega: ideal, decayed and decay-corrected";
      d.xlabel = "omega (rad/s)";
      d.ylabel = "Q";
      const auto t = load_table(r, outputs_with_role(r, "sweep").at(0));
      const std::string th = theta_label(r);
      d.series.push_back(table_series(t, "simulated " + th, {"omega_rad_s", "Q_sim"}));
      d.series.push_back(table_series(t, "noisy " + th, {"omega_rad_s", "Q_noisy"}));
      d.series.push_back(table_series(t, "corrected " + th, {"omega_rad_s", "Q_corrected"}));
    } else if (figure == "fr_fig2") {
      require_kind(r, figure, {"dmf-series"});
      d.title = "m_x(t) at freezing and non-freezing frequencies";
      d.xlabel = "t (s)";
      d.ylabel = "m_x";
      const auto& per = r.record.at("results").at("series");
      for (const auto& s : per) {
        const auto t = load_table(r, s.at("file").get<std::string>());
        const std::string w = "omega=" + io::format_double(s.at("omega_rad_s").get<double>());
        d.series.push_back(table_series(t, w + " ideal", {"t_s", "mx_raw"}));
        d.series.push_back(table_series(t, w + " noisy", {"t_s", "mx_noisy"}));
        d.series.push_back(table_series(t, w + " corrected", {"t_s", "mx_corrected"}));
      }
    } else if (figure == "dec_mx") {
      require_kind(r, figure, {"kick-decay", "dd-compare"});
      d.title = "Transverse magnetization under random kicks";
      d.xlabel = "t (s)";
      d.ylabel = "M_x";
      for (const auto& o : r.record.at("outputs")) {
        const std::string role = o.value("role", std::string());
        if (role.rfind("decay", 0) != 0) continue;
        const auto t = load_table(r, o.at("file").get<std::string>());
        const std::string name = role == "decay" || role == "decay-none" ? "kicks" : role.substr(6);
        bool dup = false;
        for (const auto& s : d.series) dup = dup || s.name == name;
        if (!dup) d.series.push_back(table_series(t, name, {"t_s", "Mx_mean", "Mx_stderr"}));
      }
    } else if (figure == "sd_new") {
      require_kind(r, figure, {"ns-scan"});
      d.title = "Noise spectral density from CPMG filtering";
      d.xlabel = "omega (rad/s)";
      d.ylabel = "S (1/s)";
      for (const auto& role : {"spectrum", "spectrum-baseline"}) {
        const auto files = outputs_with_role(r, role);
        if (files.empty()) continue;
        d.series.push_back(table_series(load_table(r, files[0]), std::string(role) == "spectrum" ? "kicks" : "no kicks",
                                        {"omega_rad_s", "S_per_s"}));
      }
      if (d.series.empty()) throw ValidationError("missing table: record has no spectrum");
    } else if (figure == "dec_tomo") {
      require_kind(r, figure, {"qpt-run"});
      d.title = "Process matrix chi in the {E, X, -iY, Z} basis";
      d.xlabel = "m";
      d.ylabel = "n";
      const auto files = outputs_with_role(r, "chi");
      if (files.empty()) throw ValidationError("missing table: record has no chi.json");
      const auto path = r.dir / files[0];
      if (!std::filesystem::exists(path)) throw ValidationError("missing table '" + path.string() + "'");
      const json chi = json::parse(io::read_file(path.string()));
      PlotSeries s{"chi " + chi.value("channel", std::string()), {"m", "n", "re", "im"}, {}};
      for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n) {
          const auto& e = chi.at("chi").at(static_cast<std::size_t>(m)).at(static_cast<std::size_t>(n));
          s.rows.push_back({double(m), double(n), e.at(0).get<double>(), e.at(1).get<double>()});
        }
      d.series.push_back(std::move(s));
    }
  }
  return d;
}

/// Writes <figure>.dat and <figure>.scene.json next to the first record (or
/// into out_dir) and returns the .dat path.
inline std::string emit_plotdata(const std::vector<std::string>& record_paths, const std::string& figure,
                                 std::optional<std::string> out_dir = std::nullopt) {
  std::vector<LoadedRecord> recs;
  for (const auto& p : record_paths) recs.push_back(load_record(p));
  PlotData d;
  try {
    d = build_plotdata(recs, figure);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("record is missing data for figure ") + figure + ": " + e.what());
  } catch (const std::out_of_range& e) {
    throw ValidationError(std::string("missing table for figure ") + figure);
  }
  const std::filesystem::path dir = out_dir ? std::filesystem::path(*out_dir) : recs.front().dir;
  const std::string dat = figure + ".dat";
  io::write_file((dir / dat).string(), d.dat());
  io::write_file((dir / (figure + ".scene.json")).string(), d.scene(dat).dump(2) + "\n");
  return (dir / dat).string();
}

}  // namespace spinlab::workbench
