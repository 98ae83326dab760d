#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace unmix {

using cplx = std::complex<double>;

// Raised when a covariance fails the full-rank requirement of the separation
// model; callers treat the offending frequency bin as degenerate.
struct RankError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Multichannel sampled audio; channels share one length and sample rate.
struct TimeSeries {
  std::vector<std::vector<double>> channels;
  double sample_rate = 0.0;

  std::size_t num_channels() const { return channels.size(); }
  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
  void validate() const;
};

// n x n bank of FIR mixing filters; taps[i*n + j] holds the impulse response
// feeding source j into receiver i.
struct MixingFilters {
  std::size_t n = 0;
  std::size_t filter_len = 0;
  std::vector<std::vector<double>> taps;

  const std::vector<double>& tap(std::size_t i, std::size_t j) const { return taps[i * n + j]; }
  void validate() const;
};

}  // namespace unmix
