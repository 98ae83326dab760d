#pragma once

#include <cstddef>
#include <vector>

#include "unmix/types.hpp"

namespace unmix {

// Frame layout over a sampled signal. Frame t covers samples
// [t*hop, t*hop + frame_len); trailing samples that do not fill a frame are
// dropped and counted.
struct FrameGrid {
  std::size_t frame_len = 0;  // power of two
  double overlap = 0.0;       // fraction in [0, 1)
  std::size_t hop = 0;
  std::size_t num_frames = 0;
  std::size_t dropped_samples = 0;

  std::size_t frame_start(std::size_t t) const { return t * hop; }
  std::size_t span_end(std::size_t t) const { return t * hop + frame_len; }
};

FrameGrid make_grid(std::size_t signal_len, std::size_t frame_len, double overlap);

struct FramedSignal {
  FrameGrid grid;
  // frames[ch][t] is one frame_len-sample slice
  std::vector<std::vector<std::vector<double>>> frames;
};

FramedSignal make_frames(const TimeSeries& series, std::size_t frame_len, double overlap);

// Complex spectra, data[ch][t][b] with bin b corresponding to frequency b/T.
// Spectra of real frames satisfy X(b) = X(T-b)^* and real X(0), X(T/2).
struct SpectralFrames {
  FrameGrid grid;
  std::vector<std::vector<std::vector<cplx>>> data;
};

// T-point transform with the e^{-2*pi*J*w*tau} sign convention. Frame length
// must be a power of two.
std::vector<cplx> forward_spectrum(const std::vector<double>& frame);

// Inverse transform of a conjugate-symmetric spectrum back to real samples.
// Asymmetry beyond symmetry_tol (max abs) is an error naming the worst bin;
// the imaginary residue of the transform is discarded after that check.
std::vector<double> inverse_spectrum(const std::vector<cplx>& spectrum,
                                     double symmetry_tol = 1e-8);

SpectralFrames stft(const TimeSeries& series, std::size_t frame_len, double overlap);

namespace detail {
// In-place radix-2 transform; length must be a power of two. The inverse
// includes the 1/N factor.
void fft_pow2(std::vector<cplx>& values, bool inverse);
bool is_pow2(std::size_t v);
}  // namespace detail

}  // namespace unmix
