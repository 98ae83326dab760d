#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unmix/types.hpp"

namespace unmix {

// Half-spectrum row of the inverse mixing estimate: entries[j][b] for
// j = 0..n-1, b = 0..T/2. Bins above T/2 follow by conjugate symmetry, so
// entries at b = 0 and b = T/2 must be real.
using DemixerRow = std::vector<std::vector<cplx>>;

struct ScalingRow {
  std::vector<cplx> lambda;  // full T bins, lambda(0) = 1, conjugate-symmetric
  double residual = 0.0;     // weighted objective at the solution
  double baseline = 0.0;     // weighted objective at lambda == 1
  bool regularized = false;
};

// Per-bin scale factors minimizing the exponentially weighted tail energy
//   sum_{tau=q}^{T-1} | beta^tau * ifft(lambda(w) row(w))(tau) |^2
// subject to lambda(0) = 1, lambda(T/2) real and conjugate symmetry. The
// problem is linear in the T-1 real unknowns and solved by an orthogonal
// factorization; a small Tikhonov term is added when the system is
// near-singular. Bins in fixed_bins keep lambda = 1.
//
// gain_prior > 0 adds soft equations pulling lambda toward 1 (scaled by the
// data columns), which stops estimation noise in the row from paying the
// objective to mute whole bands; zero keeps the plain least-squares problem.
ScalingRow solve_scaling(const DemixerRow& row, double weight_base, std::size_t support_start,
                         const std::vector<std::size_t>& fixed_bins = {},
                         double gain_prior = 0.0);

struct ScalingSolution {
  std::vector<ScalingRow> rows;
};

// Real time-domain demixing filters h[i*n+j](tau), tau in [0, T).
struct DemixFilterBank {
  std::size_t n = 0;
  std::size_t filter_len = 0;
  std::vector<std::vector<double>> taps;
  std::vector<double> tail_energy_fraction;  // per row, energy at tau >= T/2

  const std::vector<double>& tap(std::size_t i, std::size_t j) const { return taps[i * n + j]; }
  std::vector<double>& tap(std::size_t i, std::size_t j) { return taps[i * n + j]; }
  double diag_peak(std::size_t i) const;  // max_tau |h_ii(tau)|
};

// Inverse transform of lambda-scaled inverse mixing matrices given on bins
// 0..T/2 (symmetric extension applied internally).
DemixFilterBank build_filter_bank(const std::vector<Eigen::MatrixXcd>& inverse_half,
                                  const ScalingSolution& scaling);

// Rescale rows of a fresh bank so max_tau |h_ii| matches the previous bank,
// applying per-row sign flips requested by time alignment first.
DemixFilterBank continuity_normalize(const DemixFilterBank& fresh, const DemixFilterBank& previous,
                                     const std::vector<double>& signs = {});

// Causal FIR demixing: out_i(k) = sum_j sum_tau h_ij(tau) x_j(k - tau),
// with zero left padding; output length equals input length.
TimeSeries apply_demix(const TimeSeries& mix, const DemixFilterBank& bank);

void save_filter_bank(const DemixFilterBank& bank, const std::string& path);
DemixFilterBank load_filter_bank(const std::string& path);

}  // namespace unmix
