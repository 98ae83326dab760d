#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "unmix/types.hpp"

namespace unmix {

// One 2-channel complex observation.
using Sample2 = std::array<cplx, 2>;

// Running sums over a window of 2-channel complex samples. Covariance and all
// fourth-order cumulants are polynomial in these sums, and every sum is linear
// in per-sample product terms, so a window can slide in O(block) time
// independent of the window length.
//
// Pair indices run over the unordered channel pairs (1,1), (1,2), (2,2).
struct MomentSums {
  std::size_t count = 0;
  std::array<cplx, 2> first{};                 // sum y_a
  std::array<cplx, 3> pair_plain{};            // sum y_a*y_b
  std::array<cplx, 3> pair_conj{};             // sum y_a*conj(y_b)
  std::array<std::array<cplx, 3>, 3> quad{};   // sum (y_a y_b) conj(y_c y_d)
};

MomentSums accumulate(std::span<const Sample2> block);
void add_block(MomentSums& sums, std::span<const Sample2> block);
void remove_block(MomentSums& sums, std::span<const Sample2> block);
MomentSums slide_update(const MomentSums& sums, std::span<const Sample2> removed,
                        std::span<const Sample2> added);

// 2x2 covariance plus the six independent fourth-order cumulants; the other
// ten follow from argument symmetries. q holds, in order, the conjugation
// patterns (1,1*,1*,1), (1,1*,1*,2), (1,1*,2*,2), (1,2*,2*,1), (1,2*,2*,2),
// (2,2*,2*,2).
struct CumulantSet {
  Eigen::Matrix2cd covariance = Eigen::Matrix2cd::Zero();
  std::array<cplx, 6> q{};
  std::size_t sample_count = 0;

  // Cum(y_a, conj(y_b), conj(y_c), y_d), channel indices 0-based.
  cplx cum_table(int a, int b, int c, int d) const;
  // The 1..16 enumeration of the table patterns.
  cplx Q(int m) const;
  // Cum(y_i, conj(y_j), y_k, conj(y_l)) as used by the cumulant matrices.
  cplx cum4(int i, int j, int k, int l) const { return cum_table(i, j, l, k); }
};

CumulantSet cumulants(const MomentSums& sums);

// Biased covariance of two equal-length sequences (1/M normalization).
double cov(std::span<const double> a, std::span<const double> b);
cplx cov(std::span<const cplx> a, std::span<const cplx> b);

// Normalized correlation coefficient; zero-variance input is an error.
double rho(std::span<const double> a, std::span<const double> b);

// rho between a(t) and b(t + lag) over the overlapping index range (no
// wraparound).
double rho_at_lag(std::span<const double> a, std::span<const double> b, long lag);

// max_{|k| <= max_lag} |rho(a(t), b(t+k))|.
double rho_maxlag(std::span<const double> a, std::span<const double> b, int max_lag);

// Rectified, lowpassed (400-tap FIR, 100 Hz cutoff), peak-normalized envelope
// for plots and reports. All-zero input stays all-zero.
std::vector<double> display_envelope(std::span<const double> series, double sample_rate);

}  // namespace unmix
