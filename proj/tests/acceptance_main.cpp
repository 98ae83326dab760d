// Acceptance runner: executes every release criterion at its stated
// tolerance and prints one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <vector>

#include "test_support.hpp"
#include "unmix/align.hpp"
#include "unmix/jade.hpp"
#include "unmix/metrics.hpp"
#include "unmix/pipeline.hpp"
#include "unmix/rescale.hpp"
#include "unmix/signal_io.hpp"
#include "unmix/spectral.hpp"
#include "unmix/stats.hpp"

using namespace unmix;

namespace {

int failures = 0;

void report(int index, const char* name, bool pass, const std::string& detail) {
  std::printf("%s  criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", index, name, detail.c_str());
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel_diff(const cplx& a, const cplx& b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

// --- 1: sliding cumulant update equals the from-scratch window ---
void criterion_slide() {
  const auto t0 = std::chrono::steady_clock::now();
  auto g = testsup::rng(9001);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto stream = testsup::random_samples(g, 120);
    const std::span<const Sample2> s(stream);
    const MomentSums start = accumulate(s.subspan(0, 100));
    const MomentSums slid = slide_update(start, s.subspan(0, 20), s.subspan(100, 20));
    const MomentSums fresh = accumulate(s.subspan(20, 100));
    auto track = [&](const cplx& a, const cplx& b) { worst = std::max(worst, rel_diff(a, b)); };
    for (int i = 0; i < 2; ++i) track(slid.first[i], fresh.first[i]);
    for (int i = 0; i < 3; ++i) {
      track(slid.pair_plain[i], fresh.pair_plain[i]);
      track(slid.pair_conj[i], fresh.pair_conj[i]);
    }
    for (int u = 0; u < 3; ++u)
      for (int v = 0; v < 3; ++v) track(slid.quad[u][v], fresh.quad[u][v]);
    const CumulantSet ca = cumulants(slid);
    const CumulantSet cb = cumulants(fresh);
    for (int m = 1; m <= 16; ++m) track(ca.Q(m), cb.Q(m));
  }
  const double elapsed = seconds_since(t0);
  char detail[160];
  std::snprintf(detail, sizeof(detail), "max relative deviation %.3e over 200 windows, %.2f s",
                worst, elapsed);
  report(1, "sliding cumulant update oracle equivalence", worst <= 1e-9 && elapsed < 5.0, detail);
}

// --- 2: JADE recovery on seeded kurtic mixtures ---
void criterion_jade() {
  const auto t0 = std::chrono::steady_clock::now();
  int good = 0;
  double worst_whiten = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    auto g = testsup::rng(9100 + static_cast<std::uint64_t>(trial));
    Eigen::Matrix2cd h;
    do {
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) h(i, j) = testsup::complex_gaussian(g);
    } while (std::abs(h.determinant()) < 0.3);
    std::vector<Sample2> samples(5000);
    for (auto& s : samples) {
      const cplx s1 = testsup::kurtic_sample(g);
      const cplx s2 = testsup::kurtic_sample(g);
      s = {h(0, 0) * s1 + h(0, 1) * s2, h(1, 0) * s1 + h(1, 1) * s2};
    }
    const CumulantSet c = cumulants(accumulate(samples));
    const WhiteningResult wh = whiten(c.covariance);
    worst_whiten = std::max(
        worst_whiten, (wh.whitener * c.covariance * wh.whitener.adjoint() -
                       Eigen::MatrixXcd::Identity(2, 2))
                          .cwiseAbs()
                          .maxCoeff());
    const MixingEstimate est = estimate_mixing(c, c.covariance);
    if (testsup::amari_index(est.mixing.inverse() * h) <= 0.2) ++good;
  }
  const double elapsed = seconds_since(t0);
  char detail[160];
  std::snprintf(detail, sizeof(detail), "%d/50 trials within 0.2, whitening residue %.2e, %.1f s",
                good, worst_whiten, elapsed);
  report(2, "mixing recovery from kurtic sources", good >= 45 && worst_whiten <= 1e-10 && elapsed < 30.0,
         detail);
}

// --- 3: joint diagonalizer on commuting sets ---
void criterion_joint_diag() {
  int good = 0;
  double worst_off = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto g = testsup::rng(9200 + static_cast<std::uint64_t>(trial));
    const int n = trial % 2 == 0 ? 2 : 3;
    const Eigen::MatrixXcd v0 = testsup::random_unitary(g, n);
    std::uniform_real_distribution<double> d(-3.0, 3.0);
    std::vector<Eigen::MatrixXcd> mats;
    for (int r = 0; r < n * n; ++r) {
      Eigen::VectorXd diag(n);
      for (int i = 0; i < n; ++i) diag(i) = d(g);
      mats.push_back(v0 * diag.asDiagonal() * v0.adjoint());
    }
    const JointDiagResult res = joint_diagonalize(mats);
    bool monotone = true;
    for (std::size_t s = 1; s < res.objective_per_sweep.size(); ++s)
      monotone &= res.objective_per_sweep[s] >=
                  res.objective_per_sweep[s - 1] - 1e-9 * std::abs(res.objective_per_sweep[s]);
    worst_off = std::max(worst_off, res.off_diag_norm);
    if (res.off_diag_norm <= 1e-10 && monotone && res.converged) ++good;
  }
  char detail[120];
  std::snprintf(detail, sizeof(detail), "%d/100 instances, worst off-diagonal norm %.2e", good,
                worst_off);
  report(3, "joint diagonalizer on commuting sets", good == 100, detail);
}

// --- 4: scaling solve recovers a constructed corruption ---
void criterion_scaling() {
  auto g = testsup::rng(9301);
  const std::size_t t_len = 256;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> mag(0.6, 1.6);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
  std::vector<cplx> mu(t_len / 2 + 1);
  mu[0] = 1.0;
  for (std::size_t b = 1; b < t_len / 2; ++b) mu[b] = std::polar(mag(g), ang(g));
  mu[t_len / 2] = mag(g);

  DemixerRow row(2);
  for (auto& entry : row) {
    std::vector<double> taps{1.2 + u(g), u(g)};
    std::vector<double> padded(t_len, 0.0);
    std::copy(taps.begin(), taps.end(), padded.begin());
    const auto full = forward_spectrum(padded);
    entry.assign(full.begin(), full.begin() + static_cast<long>(t_len / 2 + 1));
    for (std::size_t b = 0; b <= t_len / 2; ++b) entry[b] *= mu[b];
  }
  const ScalingRow sol = solve_scaling(row, 1.04, 2);
  double worst = 0.0;
  for (std::size_t b = 0; b <= t_len / 2; ++b)
    worst = std::max(worst, std::abs(sol.lambda[b] * mu[b] - cplx(1.0, 0.0)));
  char detail[120];
  std::snprintf(detail, sizeof(detail), "max |lambda*mu - 1| = %.2e, residual %.2e", worst,
                sol.residual);
  report(4, "weighted least-squares scaling recovery", worst <= 1e-6 && sol.residual <= 1e-10,
         detail);
}

// --- 5: permutation alignment fixtures ---
void criterion_alignment() {
  auto g = testsup::rng(9401);
  const std::size_t frames = 500;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  auto envelope = [&](double rate) {
    const double p1 = phase(g), p2 = phase(g);
    std::vector<double> out(frames);
    for (std::size_t t = 0; t < frames; ++t) {
      out[t] = std::max(0.05, 1.0 + 0.8 * std::sin(2.0 * std::numbers::pi * rate * t + p1) +
                                  0.35 * std::sin(2.0 * std::numbers::pi * 2.7 * rate * t + p2));
    }
    return out;
  };
  const auto env1 = envelope(0.011);
  const auto env2 = envelope(0.037);
  auto lagged = [&](const std::vector<double>& v, long lag) {
    std::vector<double> out(v.size(), v.front());
    for (std::size_t t = 0; t < v.size(); ++t) {
      const long src = static_cast<long>(t) - lag;
      if (src >= 0 && src < static_cast<long>(v.size())) out[t] = v[static_cast<std::size_t>(src)];
    }
    return out;
  };
  const BinAmplitudes ref{env1, env2};
  const BinAmplitudes cand{lagged(env2, 2), lagged(env1, 2)};
  bool ok = true;
  double min_margin = 1e9;
  for (int k0 : {4, 10, 15}) {
    const auto choice = frequency_permutation(ref, cand, k0);
    ok &= choice.sortable && choice.perm == std::vector<int>{1, 0} && choice.margin > 0.0;
    min_margin = std::min(min_margin, choice.margin);
  }
  const auto sum_choice = frequency_permutation(ref, cand, 10, LagAggregate::sum_abs);
  ok &= sum_choice.perm == std::vector<int>{1, 0} && sum_choice.margin > 0.0;
  char detail[120];
  std::snprintf(detail, sizeof(detail),
                "swap recovered for K0 in {4,10,15} and sum-lag variant, min margin %.3f",
                min_margin);
  report(5, "permutation alignment fixtures", ok, detail);
}

struct EndToEnd {
  TimeSeries sources, mixture;
  SeparationResult dyn, bat;
  EvalReport dyn_rep, bat_rep;
  double elapsed = 0.0;
};

EndToEnd run_end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const double rate = 16000.0;
  const std::uint64_t seed = 1;
  EndToEnd e;
  const TimeSeries s1 = synth_speech_like(6.0, rate, seed);
  const TimeSeries s2 = synth_harmonic(6.0, rate, seed + 1);
  e.sources = TimeSeries{{s1.channels[0], s2.channels[0]}, rate};
  e.mixture = convolve_mix(e.sources, default_demo_filters());
  const SeparationConfig cfg = preset_case2();
  e.dyn = separate_dynamic(e.mixture, cfg);
  e.bat = separate_batch(e.mixture, cfg);
  e.dyn_rep = evaluate(e.dyn.output, e.mixture, &e.sources, cfg.eval_max_lag);
  e.bat_rep = evaluate(e.bat.output, e.mixture, &e.sources, cfg.eval_max_lag);
  e.elapsed = seconds_since(t0);
  return e;
}

// --- 6: end-to-end desk-scale separation ---
void criterion_end_to_end(const EndToEnd& e) {
  const double mix_rho = e.dyn_rep.rho_bar_mixtures;
  const double dyn_rho = e.dyn_rep.rho_bar_separated;
  const double bat_rho = e.bat_rep.rho_bar_separated;
  const bool pass = mix_rho >= 0.4 && dyn_rho <= 0.15 && bat_rho <= 0.15 &&
                    mix_rho / dyn_rho >= 3.0 && mix_rho / bat_rho >= 3.0 &&
                    e.dyn_rep.ratio_1.value_or(0.0) >= 3.0 &&
                    e.dyn_rep.ratio_2.value_or(1.0) <= 1.0 / 3.0 &&
                    e.bat_rep.ratio_1.value_or(0.0) >= 3.0 &&
                    e.bat_rep.ratio_2.value_or(1.0) <= 1.0 / 3.0 && e.elapsed < 120.0;
  char detail[240];
  std::snprintf(detail, sizeof(detail),
                "mix %.3f, separated dyn %.3f bat %.3f, ratios dyn %.2f/%.3f bat %.2f/%.3f, %.0f s",
                mix_rho, dyn_rho, bat_rho, e.dyn_rep.ratio_1.value_or(0.0),
                e.dyn_rep.ratio_2.value_or(0.0), e.bat_rep.ratio_1.value_or(0.0),
                e.bat_rep.ratio_2.value_or(0.0), e.elapsed);
  report(6, "end-to-end desk-scale separation", pass, detail);
}

// --- 7: dynamic/batch consistency and update invariants ---
void criterion_consistency(const EndToEnd& e) {
  const std::size_t len = std::min(e.dyn.output.length(), e.bat.output.length());
  auto sp = [&](const TimeSeries& t, std::size_t c) {
    return std::span<const double>(t.channels[c].data(), len);
  };
  const double direct = std::min(rho_maxlag(sp(e.dyn.output, 0), sp(e.bat.output, 0), 20),
                                 rho_maxlag(sp(e.dyn.output, 1), sp(e.bat.output, 1), 20));
  const double crossed = std::min(rho_maxlag(sp(e.dyn.output, 0), sp(e.bat.output, 1), 20),
                                  rho_maxlag(sp(e.dyn.output, 1), sp(e.bat.output, 0), 20));
  const double consistency = std::max(direct, crossed);

  // append-only + diagonal-peak invariance on a fresh run of the same mixture
  const SeparationConfig cfg = preset_case2();
  SeparationState st = init_state(e.mixture, cfg);
  const TimeSeries snapshot = st.emitted;
  const double peak0 = st.bank.diag_peak(0);
  const double peak1 = st.bank.diag_peak(1);
  bool invariants = true;
  for (int k = 0; k < 6; ++k) {
    step_update(st, e.mixture, cfg);
    invariants &= std::abs(st.bank.diag_peak(0) - peak0) <= 1e-9 * peak0;
    invariants &= std::abs(st.bank.diag_peak(1) - peak1) <= 1e-9 * peak1;
  }
  for (std::size_t ch = 0; ch < 2 && invariants; ++ch)
    for (std::size_t k = 0; k < snapshot.length(); ++k)
      if (st.emitted.channels[ch][k] != snapshot.channels[ch][k]) {
        invariants = false;
        break;
      }
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "rho_bar(dyn, bat) = %.3f (need >= 0.8), append-only and peak invariance %s",
                consistency, invariants ? "hold" : "VIOLATED");
  report(7, "dynamic/batch consistency", consistency >= 0.8 && invariants, detail);
}

// --- 8: published reference values recorded for the repro display ---
void criterion_references() {
  bool ok = false;
  for (const auto& row : reference_correlations())
    if (std::string(row.label) == "(2)-A" && std::abs(row.mixture - 0.6240) < 1e-12 &&
        std::abs(row.dynamic_sep - 0.0503) < 1e-12)
      ok = true;
  bool ratios_ok = false;
  for (const auto& row : reference_ratios())
    if (std::string(row.label) == "dyn. s1 (A)" && std::abs(row.case2 - 4.5899) < 1e-12)
      ratios_ok = true;
  bool s2_ok = false;
  for (const auto& row : reference_ratios())
    if (std::string(row.label) == "dyn. s2 (A)" && std::abs(row.case2 - 0.1086) < 1e-12)
      s2_ok = true;
  report(8, "published reference values recorded",
         ok && ratios_ok && s2_ok,
         "tables carry (2)-A 0.6240/0.0503 and ratios 4.5899/0.1086; the repro command prints "
         "them as non-reproducible context");
}

}  // namespace

int main() {
  criterion_slide();
  criterion_jade();
  criterion_joint_diag();
  criterion_scaling();
  criterion_alignment();
  const EndToEnd e = run_end_to_end();
  criterion_end_to_end(e);
  criterion_consistency(e);
  criterion_references();
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
