#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "spinlab/decoherence.hpp"
#include "spinlab/parallel.hpp"

using namespace spinlab;

namespace {

KickSchedule paper_kicks(double gamma = 25.0, double alpha_deg = 1.0, std::uint64_t seed = 1) {
  KickSchedule k;
  k.gamma_per_ms = gamma;
  k.alpha = alpha_deg * kPi / 180.0;
  k.t_c = 22.4e-3;
  k.seed = seed;
  return k;
}

std::vector<double> mx_of(const CoherenceSeries& s) {
  std::vector<double> y;
  for (const auto& p : s.points) y.push_back(p.mx);
  return y;
}

std::vector<double> t_of(const CoherenceSeries& s) {
  std::vector<double> t;
  for (const auto& p : s.points) t.push_back(p.t);
  return t;
}

// Full 4x4 state-vector-free oracle: rho_SE evolved by dense matrices with
// kicks I (x) K on E and pi pulses on S, for one realization.
std::vector<cplx> brute_force_coherence(const SystemEnvModel& m, const KickSchedule& k, const std::vector<double>& dd,
                                        int cycles, std::uint64_t realization) {
  const int nk = k.kicks_per_cycle();
  const double delta = k.t_c / nk;
  struct Ev {
    double t;
    int kind;
  };
  std::vector<Ev> ev;
  for (int j = 1; j <= nk; ++j) ev.push_back({j == nk ? k.t_c : j * delta, 0});
  for (double t : dd) ev.push_back({t, 1});
  std::stable_sort(ev.begin(), ev.end(), [](const Ev& a, const Ev& b) { return a.t < b.t || (a.t == b.t && a.kind < b.kind); });
  const Matrix h = m.hamiltonian().matrix();
  const double phi = std::arg(std::conj(m.rho_s0(0, 1)));
  const Matrix pulse = kron(Operator(-kI * (std::cos(phi) * pauli::X().matrix() + std::sin(phi) * pauli::Y().matrix())), pauli::I()).matrix();
  Matrix rho = kron(m.rho_s0, m.rho_e0).matrix();
  Rng rng(derive_seed(k.seed, realization));
  auto coh = [&] {
    const Operator rs = partial_trace(Operator(rho), {0}, {2, 2});
    return rs(0, 1) / m.rho_s0(0, 1);
  };
  std::vector<cplx> out{coh()};
  for (int c = 0; c < cycles; ++c) {
    double t = 0.0;
    for (const auto& e : ev) {
      const Matrix u = expm_hermitian(Operator(h), e.t - t).matrix();
      rho = u * rho * u.adjoint();
      t = e.t;
      Matrix op;
      if (e.kind == 0) {
        const Mat2 km = detail::kick_matrix(detail::draw_kick(k, rng));
        op = kron(pauli::I(), Operator(Matrix(km))).matrix();
      } else {
        op = pulse;
      }
      rho = op * rho * op.adjoint();
    }
    const Matrix u = expm_hermitian(Operator(h), k.t_c - t).matrix();
    rho = u * rho * u.adjoint();
    out.push_back(coh());
  }
  return out;
}

}  // namespace

TEST(ZurekFactor, UnityAtZeroTime) {
  EXPECT_EQ(zurek_factor({{{0.6, 0.0}, {0.8, 0.0}}}, {3.0}, 0.0), cplx(1.0));
}

TEST(ZurekFactor, SingleBalancedSpinIsCosine) {
  const double s = 1.0 / std::sqrt(2.0);
  for (double t : {0.1, 0.7, 2.3}) EXPECT_NEAR(std::abs(zurek_factor({{s, s}}, {1.5}, t) - std::cos(3.0 * t)), 0.0, 1e-14);
}

TEST(ZurekFactor, MatchesFullStateEvolution) {
  const std::vector<EnvSpin> env{{{0.6, 0.0}, {0.0, 0.8}}, {{std::sqrt(0.3), 0.0}, {std::sqrt(0.7), 0.0}}};
  const std::vector<double> j{1.1, 2.7};
  const double a = 1 / std::sqrt(2.0), b = 1 / std::sqrt(2.0);
  Vector psi(8);
  for (int s = 0; s < 2; ++s)
    for (int e1 = 0; e1 < 2; ++e1)
      for (int e2 = 0; e2 < 2; ++e2) {
        const cplx cs = s ? b : a;
        const cplx c1 = e1 ? env[0].beta : env[0].alpha;
        const cplx c2 = e2 ? env[1].beta : env[1].alpha;
        psi(4 * s + 2 * e1 + e2) = cs * c1 * c2;
      }
  const Operator h = j[0] * (embed(pauli::Z(), 0, 3) * embed(pauli::Z(), 1, 3)) +
                     j[1] * (embed(pauli::Z(), 0, 3) * embed(pauli::Z(), 2, 3));
  for (double t : {0.2, 0.9, 1.7}) {
    const Vector pt = expm_hermitian(h, t).matrix() * psi;
    const Operator rs = partial_trace(Operator(Matrix(pt * pt.adjoint())), {0}, {2, 4});
    EXPECT_NEAR(std::abs(rs(0, 1) / (a * std::conj(b)) - zurek_factor(env, j, t)), 0.0, 1e-10) << t;
  }
}

TEST(KickedPropagator, NoKicksIsFreeEvolution) {
  SystemEnvModel m;
  m.nu_s_hz = 12.0;
  auto k = paper_kicks(25.0, 0.0);
  EXPECT_LE(max_abs_diff(kicked_propagator(m, k, 5), expm_hermitian(m.hamiltonian(), k.t_c)), 1e-10);
}

TEST(KickedPropagator, SingleKickIsKickAfterFreeStep) {
  SystemEnvModel m;
  auto k = paper_kicks(1.0 / 22.4, 5.0);
  ASSERT_EQ(k.kicks_per_cycle(), 1);
  Rng rng(77);
  const auto kick = detail::draw_kick(k, rng);
  // Oracle kick matrix: exp(-i eps Y) for the fixed-y phase.
  const Operator ky = expm_hermitian(pauli::Y(), kick.epsilon);
  const Operator expect = kron(pauli::I(), ky) * expm_hermitian(m.hamiltonian(), k.t_c);
  EXPECT_LE(max_abs_diff(kicked_propagator(m, k, 77), expect), 1e-12);
}

TEST(KickedPropagator, SeedDeterminesPropagatorBitwise) {
  SystemEnvModel m;
  const auto k = paper_kicks(2.0, 3.0);
  EXPECT_EQ(kicked_propagator(m, k, 9).matrix(), kicked_propagator(m, k, 9).matrix());
  EXPECT_NE(kicked_propagator(m, k, 9).matrix(), kicked_propagator(m, k, 10).matrix());
  EXPECT_TRUE(kicked_propagator(m, k, 9).is_unitary());
}

TEST(KickMatrix, UniformPhaseAxis) {
  for (double th : {0.0, 0.4, 2.0}) {
    const Operator n(std::cos(th) * pauli::X().matrix() + std::sin(th) * pauli::Y().matrix());
    EXPECT_LE(max_abs(Matrix(detail::kick_matrix({0.3, th})) - expm_hermitian(n, 0.3).matrix()), 1e-14);
  }
}

TEST(EnsembleCoherence, MatchesBruteForcePerRealization) {
  SystemEnvModel m;
  m.nu_s_hz = 31.0;
  m.nu_e_hz = -17.0;
  m.rho_e0 = density_from_bloch({{0.2, 0.1, 0.4}}).op();
  m.rho_s0 = density_from_bloch({{0.5, 0.5, 0.1}}).op();
  auto k = paper_kicks(0.5, 20.0, 4);
  k.t_c = 10e-3;
  for (const auto& dd : {std::vector<double>{}, dd_schedule(DDKind::cpmg, 3, k.t_c), dd_schedule(DDKind::udd, 4, k.t_c)}) {
    EnsembleOptions opt;
    opt.dd_times = dd;
    opt.first_realization = 3;
    const auto s = ensemble_coherence(m, k, 1, 4, opt);
    const auto bf = brute_force_coherence(m, k, dd, 4, 3);
    for (std::size_t i = 0; i < bf.size(); ++i) EXPECT_NEAR(std::abs(s.points[i].coherence - bf[i]), 0.0, 1e-10) << i;
  }
}

TEST(EnsembleCoherence, NoKicksKeepsMagnitudeAtFullJPeriods) {
  SystemEnvModel m;
  auto k = paper_kicks(25.0, 0.0);
  k.t_c = 1.0 / m.j_hz;
  const auto s = ensemble_coherence(m, k, 1, 10);
  for (const auto& p : s.points) {
    EXPECT_NEAR(std::abs(p.coherence), 1.0, 1e-9);
    EXPECT_NEAR(p.mx, 1.0, 1e-9);
  }
}

TEST(EnsembleCoherence, KicksDecayFasterThanBaseline) {
  SystemEnvModel m;
  const auto kicked = ensemble_coherence(m, paper_kicks(), 400, 10);
  const auto base = ensemble_coherence(m, paper_kicks(25.0, 0.0), 1, 10);
  EXPECT_LT(kicked.points.back().mx, base.points.back().mx - 0.1);
  EXPECT_LT(fit_t2(t_of(kicked), mx_of(kicked)), fit_t2(t_of(base), mx_of(base)));
}

TEST(EnsembleCoherence, DisjointHalvesAgree) {
  SystemEnvModel m;
  const auto k = paper_kicks(10.0, 2.0, 55);
  EnsembleOptions a, b;
  b.first_realization = 1000;
  const auto s1 = ensemble_coherence(m, k, 1000, 8, a);
  const auto s2 = ensemble_coherence(m, k, 1000, 8, b);
  for (std::size_t i = 1; i < s1.points.size(); ++i) {
    const double se = std::hypot(s1.points[i].coherence_stderr, s2.points[i].coherence_stderr);
    EXPECT_LE(std::abs(s1.points[i].coherence - s2.points[i].coherence), 3.0 * se + 1e-12) << i;
  }
}

TEST(EnsembleCoherence, ThreadCountDoesNotChangeResults) {
  SystemEnvModel m;
  const auto k = paper_kicks(5.0, 2.0, 8);
  set_thread_count(1);
  const auto a = ensemble_coherence(m, k, 64, 4);
  set_thread_count(3);
  const auto b = ensemble_coherence(m, k, 64, 4);
  set_thread_count(0);
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].coherence, b.points[i].coherence);
    EXPECT_EQ(a.points[i].mx_stderr, b.points[i].mx_stderr);
  }
}

TEST(EnsembleCoherence, IntrinsicT2Envelope) {
  SystemEnvModel m;
  auto k = paper_kicks(25.0, 0.0);
  k.t_c = 1.0 / m.j_hz;
  EnsembleOptions opt;
  opt.intrinsic_t2 = 0.05;
  const auto s = ensemble_coherence(m, k, 1, 5, opt);
  for (const auto& p : s.points) EXPECT_NEAR(p.mx, std::exp(-p.t / 0.05), 1e-9);
}

TEST(EnsembleCoherence, RejectsIncoherentInitialState) {
  SystemEnvModel m;
  m.rho_s0 = density_from_bloch({{0.0, 0.0, 1.0}}).op();
  EXPECT_THROW(ensemble_coherence(m, paper_kicks(), 1, 1), ValidationError);
}

TEST(Superop, GammaValues) {
  EXPECT_EQ(kick_gamma(0.0), 1.0);
  EXPECT_NEAR(kick_gamma(1e-10), 1.0, 1e-15);
  EXPECT_NEAR(kick_gamma(kPi / 4), 2.0 / kPi, 1e-15);
  EXPECT_NEAR(kick_gamma(0.3), std::sin(0.6) / 0.6, 1e-15);
}

TEST(Superop, NoKickLimitIsZZDephasing) {
  SystemEnvModel m;
  auto k = paper_kicks(25.0, 0.0);
  for (long long kk : {1LL, 7LL, 560LL}) {
    const cplx d = superop_factor(k, m, kk);
    EXPECT_NEAR(d.real(), std::cos(kPi * m.j_hz * k.delta() * static_cast<double>(kk)), 1e-9) << kk;
    EXPECT_NEAR(d.imag(), 0.0, 1e-9);
  }
}

TEST(Superop, MatchesEnsembleWithinThreeSigma) {
  SystemEnvModel m;
  const auto k = paper_kicks(10.0, 2.0, 31);
  const auto s = ensemble_coherence(m, k, 3000, 10);
  const auto so = superop_series(k.alpha, m.j_hz, k.delta(), m.rho_e0, k.kicks_per_cycle(), 10);
  for (std::size_t i = 1; i < s.points.size(); ++i)
    EXPECT_LE(std::abs(s.points[i].mx - so[i].mx), 3.0 * s.points[i].mx_stderr) << i;
}

TEST(DdSchedule, KnownTimes) {
  const double tc = 1.0;
  EXPECT_DOUBLE_EQ(dd_schedule(DDKind::udd, 1, tc)[0], 0.5);
  EXPECT_DOUBLE_EQ(dd_schedule(DDKind::hahn, 5, tc)[0], 0.5);
  const auto u = dd_schedule(DDKind::udd, 7, tc);
  EXPECT_NEAR(u[0], 0.03806, 1e-5);
  EXPECT_NEAR(u[6], 0.96194, 1e-5);
  const auto c = dd_schedule(DDKind::cpmg, 7, tc);
  for (int j = 1; j <= 7; ++j) EXPECT_DOUBLE_EQ(c[static_cast<std::size_t>(j - 1)], (2.0 * j - 1) / 14.0);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(c[i] + c[6 - i], 1.0, 1e-15);
  EXPECT_THROW(dd_schedule(DDKind::cpmg, 0, tc), ValidationError);
  EXPECT_EQ(parse_dd_kind("udd"), DDKind::udd);
  EXPECT_THROW(parse_dd_kind("xy4"), ValidationError);
}

TEST(RunDd, NoKicksEchoesStaticCoupling) {
  SystemEnvModel m;
  m.nu_s_hz = 40.0;
  for (auto kind : {DDKind::hahn, DDKind::cpmg, DDKind::udd}) {
    const auto s = run_dd_under_kicks(m, paper_kicks(25.0, 0.0), dd_schedule(kind, 6, 22.4e-3), 6, 1);
    for (const auto& p : s.points) EXPECT_NEAR(std::abs(p.coherence), 1.0, 1e-9) << to_string(kind);
  }
}

TEST(RunDd, OddPulseCountSwapsPopulations) {
  SystemEnvModel m;
  m.rho_s0 = density_from_bloch({{0.6, 0.0, 0.8}}).op();
  const auto s = run_dd_under_kicks(m, paper_kicks(25.0, 0.0), dd_schedule(DDKind::cpmg, 1, 22.4e-3), 2, 1);
  EXPECT_TRUE(s.points[1].flipped);
  EXPECT_FALSE(s.points[2].flipped);
  EXPECT_NEAR(s.points[1].rho_s(0, 0).real(), 0.1, 1e-12);
}

TEST(RunDd, OrderingAtPaperOperatingPoint) {
  SystemEnvModel m;
  const auto k = paper_kicks(25.0, 1.0, 3);
  const auto none = run_dd_under_kicks(m, k, {}, 10, 600);
  const auto cpmg = run_dd_under_kicks(m, k, dd_schedule(DDKind::cpmg, 7, k.t_c), 10, 600);
  const auto udd = run_dd_under_kicks(m, k, dd_schedule(DDKind::udd, 7, k.t_c), 10, 600);
  EXPECT_GE(std::abs(cpmg.points.back().coherence), std::abs(none.points.back().coherence));
  EXPECT_GE(std::abs(cpmg.points.back().coherence), std::abs(udd.points.back().coherence));
}

TEST(FitT2, SyntheticRoundTrip) {
  std::vector<double> t, y;
  for (int i = 0; i < 10; ++i) {
    t.push_back(0.3 * i);
    y.push_back(std::exp(-0.3 * i / 2.9));
  }
  EXPECT_NEAR(fit_t2(t, y), 2.9, 0.029);
}

TEST(FitT2, FlatSeriesIsInfinite) {
  EXPECT_TRUE(std::isinf(fit_t2({0.0, 1.0, 2.0, 3.0}, {1.0, 1.0, 1.0, 1.0})));
}

TEST(FitT2, NoisySyntheticWithinTenPercent) {
  std::mt19937_64 g(3);
  std::normal_distribution<double> n(0.0, 0.02);
  std::vector<double> t, y;
  for (int i = 0; i < 40; ++i) {
    t.push_back(0.1 * i);
    y.push_back(std::exp(-0.1 * i / 2.9) + (i ? n(g) : 0.0));
  }
  EXPECT_NEAR(fit_t2(t, y), 2.9, 0.29);
}

TEST(FitT2, RejectsBadInput) {
  EXPECT_THROW(fit_t2({0.0, 1.0}, {1.0, 0.5}), ValidationError);
  EXPECT_THROW(fit_t2({0.0, 1.0, 2.0}, {0.0, 0.5, 0.2}), ValidationError);
}

TEST(KickSchedule, RoundsKickCountAndValidates) {
  auto k = paper_kicks();
  EXPECT_EQ(k.kicks_per_cycle(), 560);
  k.gamma_per_ms = 0.0;
  EXPECT_THROW(k.validate(), ValidationError);
}
