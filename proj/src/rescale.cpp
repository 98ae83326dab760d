#include "unmix/rescale.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "unmix/parallel.hpp"
#include "unmix/spectral.hpp"

namespace unmix {

namespace {

constexpr double kConditionLimit = 1e12;
constexpr double kTikhonov = 1e-10;

std::vector<cplx> unit_roots(std::size_t t_len) {
  std::vector<cplx> roots(t_len);
  for (std::size_t k = 0; k < t_len; ++k) {
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(t_len);
    roots[k] = cplx(std::cos(ang), std::sin(ang));
  }
  return roots;
}

}  // namespace

double DemixFilterBank::diag_peak(std::size_t i) const {
  double peak = 0.0;
  for (double v : tap(i, i)) peak = std::max(peak, std::abs(v));
  return peak;
}

ScalingRow solve_scaling(const DemixerRow& row, double weight_base, std::size_t support_start,
                         const std::vector<std::size_t>& fixed_bins, double gain_prior) {
  if (gain_prior < 0.0) throw std::invalid_argument("gain prior must be nonnegative");
  if (row.empty()) throw std::invalid_argument("empty demixer row");
  const std::size_t n = row.size();
  const std::size_t bins = row.front().size();
  for (const auto& r : row)
    if (r.size() != bins) throw std::invalid_argument("row entries differ in bin count");
  if (bins < 2) throw std::invalid_argument("need bins 0..T/2 with T >= 2");
  const std::size_t t_len = 2 * (bins - 1);
  if (!(weight_base > 1.0)) throw std::invalid_argument("weight base must exceed 1");
  if (support_start < 1 || support_start >= t_len)
    throw std::invalid_argument("support start must be in [1, T)");

  double scale = 0.0;
  for (const auto& r : row)
    for (const auto& v : r) scale = std::max(scale, std::abs(v));
  for (const auto& r : row) {
    if (std::abs(r.front().imag()) > 1e-8 * std::max(1.0, scale) ||
        std::abs(r.back().imag()) > 1e-8 * std::max(1.0, scale))
      throw std::invalid_argument("bins 0 and T/2 of a demixer row must be real");
  }

  std::set<std::size_t> fixed(fixed_bins.begin(), fixed_bins.end());
  fixed.insert(0);
  for (std::size_t b : fixed)
    if (b >= bins) throw std::invalid_argument("fixed bin outside 0..T/2");

  // unknown packing: (re, im) per free bin in 1..T/2-1, then lambda(T/2)
  const std::size_t half_bin = bins - 1;
  std::vector<long> re_col(bins, -1), im_col(bins, -1);
  long cols = 0;
  for (std::size_t b = 1; b < half_bin; ++b) {
    if (fixed.count(b)) continue;
    re_col[b] = cols++;
    im_col[b] = cols++;
  }
  long half_col = -1;
  if (!fixed.count(half_bin)) half_col = cols++;

  const auto roots = unit_roots(t_len);
  const std::size_t eq_per_entry = t_len - support_start;
  const auto rows_total = static_cast<long>(n * eq_per_entry);

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows_total, std::max<long>(cols, 1));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(rows_total);

  long eq = 0;
  const double inv_t = 1.0 / static_cast<double>(t_len);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t tau = support_start; tau < t_len; ++tau, ++eq) {
      const double w = std::pow(weight_base, static_cast<double>(tau)) * inv_t;
      double fixed_part = row[j][0].real();  // lambda(0) = 1
      for (std::size_t b = 1; b < half_bin; ++b) {
        const cplx c = row[j][b] * roots[(b * tau) % t_len];
        if (fixed.count(b)) {
          fixed_part += 2.0 * c.real();
        } else {
          a(eq, re_col[b]) = w * 2.0 * c.real();
          a(eq, im_col[b]) = -w * 2.0 * c.imag();
        }
      }
      const double half_term = row[j][half_bin].real() * (tau % 2 == 0 ? 1.0 : -1.0);
      if (half_col >= 0)
        a(eq, half_col) = w * half_term;
      else
        fixed_part += half_term;
      rhs(eq) = -w * fixed_part;
    }
  }

  ScalingRow out;
  Eigen::VectorXd x;
  if (cols == 0) {
    x = Eigen::VectorXd::Zero(1);
    out.residual = rhs.squaredNorm();
    out.baseline = out.residual;
  } else {
    // orthogonal factorization; the squared R-diagonal ratio estimates the
    // condition of the normal system
    Eigen::VectorXd ones = Eigen::VectorXd::Zero(cols);
    for (std::size_t b = 1; b < half_bin; ++b)
      if (re_col[b] >= 0) ones(re_col[b]) = 1.0;
    if (half_col >= 0) ones(half_col) = 1.0;

    if (gain_prior > 0.0) {
      // soft pull toward lambda == 1, one row per unknown, scaled by the
      // matching data column so the prior strength is relative
      Eigen::MatrixXd prior = Eigen::MatrixXd::Zero(cols, cols);
      Eigen::VectorXd prior_rhs = Eigen::VectorXd::Zero(cols);
      for (long k = 0; k < cols; ++k) {
        const double scale = gain_prior * a.col(k).norm();
        prior(k, k) = scale;
        prior_rhs(k) = scale * ones(k);
      }
      Eigen::MatrixXd a_ext(rows_total + cols, cols);
      a_ext.topRows(rows_total) = a;
      a_ext.bottomRows(cols) = prior;
      Eigen::VectorXd rhs_ext(rows_total + cols);
      rhs_ext.head(rows_total) = rhs;
      rhs_ext.tail(cols) = prior_rhs;
      a.swap(a_ext);
      rhs.swap(rhs_ext);
    }
    const long data_rows = gain_prior > 0.0 ? rows_total + cols : rows_total;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    const auto& r = qr.matrixR();
    const double r_max = std::abs(r(0, 0));
    const double r_min = std::abs(r(cols - 1, cols - 1));
    out.regularized = !(r_min > 0.0) || (r_max / r_min) * (r_max / r_min) > kConditionLimit;
    if (!out.regularized) {
      x = qr.solve(rhs);
    } else {
      // Tikhonov on the normal system, realized as appended sqrt-weight rows;
      // centered on lambda == 1 so unconstrained directions stay unscaled
      Eigen::MatrixXd aug(data_rows + cols, cols);
      aug.topRows(data_rows) = a;
      aug.bottomRows(cols) =
          std::sqrt(kTikhonov) * Eigen::MatrixXd::Identity(cols, cols);
      Eigen::VectorXd rhs_aug(data_rows + cols);
      rhs_aug.head(data_rows) = rhs;
      rhs_aug.tail(cols) = std::sqrt(kTikhonov) * ones;
      x = aug.colPivHouseholderQr().solve(rhs_aug);
    }
    // residual and baseline report the plain weighted objective
    out.residual = (a.topRows(rows_total) * x - rhs.head(rows_total)).squaredNorm();
    out.baseline = (a.topRows(rows_total) * ones - rhs.head(rows_total)).squaredNorm();
  }

  out.lambda.assign(t_len, cplx(1.0, 0.0));
  for (std::size_t b = 1; b < half_bin; ++b) {
    const cplx v = re_col[b] >= 0 ? cplx(x(re_col[b]), x(im_col[b])) : cplx(1.0, 0.0);
    out.lambda[b] = v;
    out.lambda[t_len - b] = std::conj(v);
  }
  out.lambda[half_bin] = half_col >= 0 ? cplx(x(half_col), 0.0) : cplx(1.0, 0.0);
  return out;
}

DemixFilterBank build_filter_bank(const std::vector<Eigen::MatrixXcd>& inverse_half,
                                  const ScalingSolution& scaling) {
  if (inverse_half.size() < 2) throw std::invalid_argument("need bins 0..T/2");
  const std::size_t bins = inverse_half.size();
  const std::size_t t_len = 2 * (bins - 1);
  const auto n = static_cast<std::size_t>(inverse_half.front().rows());
  for (const auto& m : inverse_half)
    if (m.rows() != static_cast<Eigen::Index>(n) || m.cols() != static_cast<Eigen::Index>(n))
      throw std::invalid_argument("inverse matrices must be square with one size");
  if (scaling.rows.size() != n) throw std::invalid_argument("need one scaling row per channel");
  for (const auto& r : scaling.rows)
    if (r.lambda.size() != t_len) throw std::invalid_argument("scaling row has wrong bin count");

  DemixFilterBank bank;
  bank.n = n;
  bank.filter_len = t_len;
  bank.taps.assign(n * n, {});
  bank.tail_energy_fraction.assign(n, 0.0);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<cplx> spec(t_len);
      for (std::size_t b = 0; b < t_len; ++b) {
        const std::size_t bb = b <= t_len / 2 ? b : t_len - b;
        cplx v = inverse_half[bb](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (b > t_len / 2) v = std::conj(v);
        spec[b] = scaling.rows[i].lambda[b] * v;
      }
      bank.tap(i, j) = inverse_spectrum(spec);
    }
    double tail = 0.0, total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& h = bank.tap(i, j);
      for (std::size_t tau = 0; tau < t_len; ++tau) {
        const double e = h[tau] * h[tau];
        total += e;
        if (tau >= t_len / 2) tail += e;
      }
    }
    bank.tail_energy_fraction[i] = total > 0.0 ? tail / total : 0.0;
  }
  return bank;
}

DemixFilterBank continuity_normalize(const DemixFilterBank& fresh, const DemixFilterBank& previous,
                                     const std::vector<double>& signs) {
  if (fresh.n != previous.n || fresh.filter_len != previous.filter_len)
    throw std::invalid_argument("filter banks differ in shape");
  if (!signs.empty() && signs.size() != fresh.n)
    throw std::invalid_argument("need one sign per channel");
  DemixFilterBank out = fresh;
  for (std::size_t i = 0; i < fresh.n; ++i) {
    const double sign = signs.empty() ? 1.0 : (signs[i] < 0.0 ? -1.0 : 1.0);
    const double peak_new = fresh.diag_peak(i);
    if (!(peak_new > 0.0)) throw std::runtime_error("degenerate filter: zero diagonal peak");
    const double gain = sign * previous.diag_peak(i) / peak_new;
    for (std::size_t j = 0; j < fresh.n; ++j)
      for (auto& v : out.tap(i, j)) v *= gain;
  }
  return out;
}

TimeSeries apply_demix(const TimeSeries& mix, const DemixFilterBank& bank) {
  mix.validate();
  if (mix.num_channels() != bank.n)
    throw std::invalid_argument("channel count does not match the filter bank");
  if (mix.length() < bank.filter_len)
    throw std::invalid_argument("segment shorter than the filters");
  const std::size_t len = mix.length();
  TimeSeries out;
  out.sample_rate = mix.sample_rate;
  out.channels.assign(bank.n, std::vector<double>(len, 0.0));
  parallel_for(bank.n, [&](std::size_t i) {
    auto& dst = out.channels[i];
    for (std::size_t j = 0; j < bank.n; ++j) {
      const auto& h = bank.tap(i, j);
      const auto& x = mix.channels[j];
      for (std::size_t k = 0; k < len; ++k) {
        double acc = 0.0;
        const std::size_t tau_max = std::min(k + 1, bank.filter_len);
        for (std::size_t tau = 0; tau < tau_max; ++tau) acc += h[tau] * x[k - tau];
        dst[k] += acc;
      }
    }
  });
  return out;
}

void save_filter_bank(const DemixFilterBank& bank, const std::string& path) {
  nlohmann::json doc;
  doc["T"] = bank.filter_len;
  doc["h"] = bank.taps;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write filter bank to " + path);
  out << doc.dump(2) << '\n';
}

DemixFilterBank load_filter_bank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read filter bank from " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  DemixFilterBank bank;
  bank.filter_len = doc.at("T").get<std::size_t>();
  bank.taps = doc.at("h").get<std::vector<std::vector<double>>>();
  const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(bank.taps.size()))));
  if (n * n != bank.taps.size()) throw std::runtime_error("filter bank is not square");
  bank.n = n;
  for (const auto& h : bank.taps)
    if (h.size() != bank.filter_len) throw std::runtime_error("filter length mismatch in bank");
  bank.tail_energy_fraction.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double tail = 0.0, total = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t tau = 0; tau < bank.filter_len; ++tau) {
        const double e = bank.tap(i, j)[tau] * bank.tap(i, j)[tau];
        total += e;
        if (tau >= bank.filter_len / 2) tail += e;
      }
    bank.tail_energy_fraction[i] = total > 0.0 ? tail / total : 0.0;
  }
  return bank;
}

}  // namespace unmix
