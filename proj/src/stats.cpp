#include "unmix/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace unmix {

namespace {

// Unordered channel pair index: (0,0) -> 0, (0,1)/(1,0) -> 1, (1,1) -> 2.
inline int pair_index(int a, int b) { return a + b; }

inline std::array<cplx, 3> pair_products(const Sample2& y) {
  return {y[0] * y[0], y[0] * y[1], y[1] * y[1]};
}

}  // namespace

void add_block(MomentSums& sums, std::span<const Sample2> block) {
  for (const auto& y : block) {
    const auto p = pair_products(y);
    sums.first[0] += y[0];
    sums.first[1] += y[1];
    sums.pair_plain[0] += p[0];
    sums.pair_plain[1] += p[1];
    sums.pair_plain[2] += p[2];
    sums.pair_conj[0] += y[0] * std::conj(y[0]);
    sums.pair_conj[1] += y[0] * std::conj(y[1]);
    sums.pair_conj[2] += y[1] * std::conj(y[1]);
    for (int u = 0; u < 3; ++u)
      for (int v = 0; v < 3; ++v) sums.quad[u][v] += p[u] * std::conj(p[v]);
  }
  sums.count += block.size();
}

void remove_block(MomentSums& sums, std::span<const Sample2> block) {
  if (block.size() > sums.count)
    throw std::invalid_argument("removing more samples than accumulated");
  for (const auto& y : block) {
    const auto p = pair_products(y);
    sums.first[0] -= y[0];
    sums.first[1] -= y[1];
    sums.pair_plain[0] -= p[0];
    sums.pair_plain[1] -= p[1];
    sums.pair_plain[2] -= p[2];
    sums.pair_conj[0] -= y[0] * std::conj(y[0]);
    sums.pair_conj[1] -= y[0] * std::conj(y[1]);
    sums.pair_conj[2] -= y[1] * std::conj(y[1]);
    for (int u = 0; u < 3; ++u)
      for (int v = 0; v < 3; ++v) sums.quad[u][v] -= p[u] * std::conj(p[v]);
  }
  sums.count -= block.size();
}

MomentSums accumulate(std::span<const Sample2> block) {
  if (block.empty()) throw std::invalid_argument("cannot accumulate an empty block");
  MomentSums sums;
  add_block(sums, block);
  return sums;
}

MomentSums slide_update(const MomentSums& sums, std::span<const Sample2> removed,
                        std::span<const Sample2> added) {
  if (removed.size() != added.size())
    throw std::invalid_argument("slide blocks must have equal size");
  if (removed.size() >= sums.count)
    throw std::invalid_argument("slide block must be smaller than the window");
  MomentSums out = sums;
  remove_block(out, removed);
  add_block(out, added);
  return out;
}

cplx CumulantSet::cum_table(int a, int b, int c, int d) const {
  // invariant under swapping the plain arguments (a,d) and the conjugated
  // pair (b,c); conjugation maps (a,b,c,d) to (b,a,d,c)
  if (a > d) std::swap(a, d);
  if (b > c) std::swap(b, c);
  const int key = 8 * a + 4 * b + 2 * c + d;
  switch (key) {
    case 0b0000: return q[0];
    case 0b0001: return q[1];
    case 0b0010: return std::conj(q[1]);
    case 0b0011: return q[2];
    case 0b0110: return q[3];
    case 0b0111: return q[4];
    case 0b1001: return std::conj(q[3]);
    case 0b1011: return std::conj(q[4]);
    case 0b1111: return q[5];
    default: throw std::invalid_argument("cumulant channel indices must be 0 or 1");
  }
}

cplx CumulantSet::Q(int m) const {
  if (m < 1 || m > 16) throw std::invalid_argument("Q index must be in 1..16");
  const int bits = m - 1;
  return cum_table((bits >> 3) & 1, (bits >> 2) & 1, (bits >> 1) & 1, bits & 1);
}

CumulantSet cumulants(const MomentSums& sums) {
  if (sums.count < 4) throw std::invalid_argument("cumulants need at least 4 samples");
  const auto n = static_cast<double>(sums.count);

  // second-moment tables
  cplx conj2[2][2];  // sum y_a conj(y_b)
  conj2[0][0] = sums.pair_conj[0];
  conj2[0][1] = sums.pair_conj[1];
  conj2[1][0] = std::conj(sums.pair_conj[1]);
  conj2[1][1] = sums.pair_conj[2];
  cplx plain2[2][2];  // sum y_a y_b
  plain2[0][0] = sums.pair_plain[0];
  plain2[0][1] = plain2[1][0] = sums.pair_plain[1];
  plain2[1][1] = sums.pair_plain[2];

  CumulantSet out;
  out.sample_count = sums.count;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      out.covariance(a, b) =
          conj2[a][b] / n - sums.first[a] * std::conj(sums.first[b]) / (n * n);

  // Cum(y_p, conj(y_q), conj(y_r), y_s) for the six independent patterns,
  // empirical with 1/N normalization and the zero-mean fourth-order formula.
  auto cum = [&](int p, int qq, int r, int s) {
    const cplx fourth = sums.quad[pair_index(p, s)][pair_index(qq, r)] / n;
    const cplx second = (conj2[p][qq] * conj2[s][r] + conj2[p][r] * conj2[s][qq] +
                         plain2[p][s] * std::conj(plain2[qq][r])) /
                        (n * n);
    return fourth - second;
  };
  out.q[0] = cum(0, 0, 0, 0);
  out.q[1] = cum(0, 0, 0, 1);
  out.q[2] = cum(0, 0, 1, 1);
  out.q[3] = cum(0, 1, 1, 0);
  out.q[4] = cum(0, 1, 1, 1);
  out.q[5] = cum(1, 1, 1, 1);
  return out;
}

double cov(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cov needs equal lengths");
  if (a.size() < 2) throw std::invalid_argument("cov needs at least 2 samples");
  const auto m = static_cast<double>(a.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= m;
  mean_b /= m;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - mean_a) * (b[i] - mean_b);
  return acc / m;
}

cplx cov(std::span<const cplx> a, std::span<const cplx> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cov needs equal lengths");
  if (a.size() < 2) throw std::invalid_argument("cov needs at least 2 samples");
  const auto m = static_cast<double>(a.size());
  cplx mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= m;
  mean_b /= m;
  cplx acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - mean_a) * std::conj(b[i] - mean_b);
  return acc / m;
}

double rho(std::span<const double> a, std::span<const double> b) {
  const double var_a = cov(a, a);
  const double var_b = cov(b, b);
  // variance below the rounding floor of the second moment counts as zero
  double m2_a = 0.0, m2_b = 0.0;
  for (double v : a) m2_a += v * v;
  for (double v : b) m2_b += v * v;
  m2_a /= static_cast<double>(a.size());
  m2_b /= static_cast<double>(b.size());
  if (var_a <= 1e-20 * m2_a || var_b <= 1e-20 * m2_b || var_a <= 0.0 || var_b <= 0.0)
    throw std::invalid_argument("rho is undefined for zero-variance input");
  return cov(a, b) / std::sqrt(var_a * var_b);
}

double rho_at_lag(std::span<const double> a, std::span<const double> b, long lag) {
  const long la = static_cast<long>(a.size());
  const long lb = static_cast<long>(b.size());
  const long t0 = std::max<long>(0, -lag);
  const long t1 = std::min(la, lb - lag);
  if (t1 - t0 < 2) throw std::invalid_argument("lag leaves no overlap to correlate");
  const auto count = static_cast<std::size_t>(t1 - t0);
  return rho(a.subspan(static_cast<std::size_t>(t0), count),
             b.subspan(static_cast<std::size_t>(t0 + lag), count));
}

double rho_maxlag(std::span<const double> a, std::span<const double> b, int max_lag) {
  if (max_lag < 0) throw std::invalid_argument("max_lag must be nonnegative");
  const std::size_t min_len = std::min(a.size(), b.size());
  if (min_len <= 2 * static_cast<std::size_t>(max_lag))
    throw std::invalid_argument("sequences too short for the requested lag range");
  double best = 0.0;
  for (long k = -max_lag; k <= max_lag; ++k)
    best = std::max(best, std::abs(rho_at_lag(a, b, k)));
  return best;
}

std::vector<double> display_envelope(std::span<const double> series, double sample_rate) {
  if (sample_rate <= 200.0)
    throw std::invalid_argument("envelope needs a sample rate above 200 Hz");
  if (series.empty()) return {};

  constexpr std::size_t kTaps = 400;
  constexpr double kCutoffHz = 100.0;
  const double fc = kCutoffHz / sample_rate;  // normalized cutoff
  const double center = (static_cast<double>(kTaps) - 1.0) / 2.0;
  std::vector<double> fir(kTaps);
  double tap_sum = 0.0;
  for (std::size_t k = 0; k < kTaps; ++k) {
    const double t = static_cast<double>(k) - center;
    const double x = 2.0 * fc * t;
    const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double hamming =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                               (static_cast<double>(kTaps) - 1.0));
    fir[k] = 2.0 * fc * sinc * hamming;
    tap_sum += fir[k];
  }
  for (auto& v : fir) v /= tap_sum;  // unit DC gain

  // rectify, filter, compensate the group delay; partial kernel overlap at
  // the edges is renormalized by the covered kernel mass
  const std::size_t len = series.size();
  const std::size_t delay = (kTaps - 1) / 2;
  std::vector<double> out(len, 0.0);
  for (std::size_t i = 0; i < len + kTaps - 1; ++i) {
    if (i < delay || i >= delay + len) continue;
    double acc = 0.0, mass = 0.0;
    const std::size_t k_lo = i >= len ? i - len + 1 : 0;
    const std::size_t k_hi = std::min(i, kTaps - 1);
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
      acc += fir[k] * std::abs(series[i - k]);
      mass += fir[k];
    }
    out[i - delay] = mass > 0.1 ? acc / mass : acc;
  }

  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (auto& v : out) v /= peak;
  return out;
}

}  // namespace unmix
