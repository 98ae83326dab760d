#include "unmix/spectral.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace unmix {

namespace detail {

bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

void fft_pow2(std::vector<cplx>& values, bool inverse) {
  const std::size_t n = values.size();
  if (!is_pow2(n)) throw std::invalid_argument("fft length must be a power of two");
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(values[i], values[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const cplx wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = values[i + k];
        const cplx v = values[i + k + len / 2] * w;
        values[i + k] = u + v;
        values[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : values) v *= scale;
  }
}

}  // namespace detail

FrameGrid make_grid(std::size_t signal_len, std::size_t frame_len, double overlap) {
  if (!detail::is_pow2(frame_len)) throw std::invalid_argument("frame length must be a power of two");
  if (overlap < 0.0 || overlap >= 1.0) throw std::invalid_argument("overlap must be in [0, 1)");
  if (signal_len < frame_len) throw std::invalid_argument("signal shorter than one frame");
  const double hop_real = static_cast<double>(frame_len) * (1.0 - overlap);
  const auto hop = static_cast<std::size_t>(std::llround(hop_real));
  if (hop < 1 || std::abs(hop_real - static_cast<double>(hop)) > 1e-9)
    throw std::invalid_argument("overlap does not yield an integer hop");
  FrameGrid grid;
  grid.frame_len = frame_len;
  grid.overlap = overlap;
  grid.hop = hop;
  grid.num_frames = (signal_len - frame_len) / hop + 1;
  grid.dropped_samples = signal_len - ((grid.num_frames - 1) * hop + frame_len);
  return grid;
}

FramedSignal make_frames(const TimeSeries& series, std::size_t frame_len, double overlap) {
  series.validate();
  FramedSignal out;
  out.grid = make_grid(series.length(), frame_len, overlap);
  out.frames.resize(series.num_channels());
  for (std::size_t ch = 0; ch < series.num_channels(); ++ch) {
    out.frames[ch].resize(out.grid.num_frames);
    for (std::size_t t = 0; t < out.grid.num_frames; ++t) {
      const auto start = out.grid.frame_start(t);
      out.frames[ch][t].assign(series.channels[ch].begin() + static_cast<long>(start),
                               series.channels[ch].begin() + static_cast<long>(start + frame_len));
    }
  }
  return out;
}

std::vector<cplx> forward_spectrum(const std::vector<double>& frame) {
  if (!detail::is_pow2(frame.size())) throw std::invalid_argument("frame length must be a power of two");
  std::vector<cplx> spec(frame.begin(), frame.end());
  detail::fft_pow2(spec, false);
  return spec;
}

std::vector<double> inverse_spectrum(const std::vector<cplx>& spectrum, double symmetry_tol) {
  const std::size_t n = spectrum.size();
  if (!detail::is_pow2(n)) throw std::invalid_argument("spectrum length must be a power of two");
  // conjugate-symmetry check, worst offender reported
  double worst = 0.0;
  std::size_t worst_bin = 0;
  auto track = [&](std::size_t bin, double err) {
    if (err > worst) {
      worst = err;
      worst_bin = bin;
    }
  };
  track(0, std::abs(spectrum[0].imag()));
  if (n > 1) track(n / 2, std::abs(spectrum[n / 2].imag()));
  for (std::size_t b = 1; b < n / 2; ++b)
    track(b, std::abs(spectrum[b] - std::conj(spectrum[n - b])));
  if (worst > symmetry_tol)
    throw std::invalid_argument("spectrum not conjugate-symmetric: bin " + std::to_string(worst_bin) +
                                " deviates by " + std::to_string(worst));
  std::vector<cplx> work = spectrum;
  detail::fft_pow2(work, true);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = work[i].real();
  return out;
}

SpectralFrames stft(const TimeSeries& series, std::size_t frame_len, double overlap) {
  const FramedSignal framed = make_frames(series, frame_len, overlap);
  SpectralFrames out;
  out.grid = framed.grid;
  out.data.resize(framed.frames.size());
  for (std::size_t ch = 0; ch < framed.frames.size(); ++ch) {
    out.data[ch].resize(framed.grid.num_frames);
    for (std::size_t t = 0; t < framed.grid.num_frames; ++t)
      out.data[ch][t] = forward_spectrum(framed.frames[ch][t]);
  }
  return out;
}

void TimeSeries::validate() const {
  if (channels.empty()) throw std::invalid_argument("time series has no channels");
  if (sample_rate <= 0.0) throw std::invalid_argument("sample rate must be positive");
  const std::size_t len = channels.front().size();
  for (const auto& ch : channels)
    if (ch.size() != len) throw std::invalid_argument("channel lengths differ");
}

void MixingFilters::validate() const {
  if (n == 0) throw std::invalid_argument("mixing filters need n >= 1");
  if (filter_len == 0) throw std::invalid_argument("mixing filters need P >= 1");
  if (taps.size() != n * n) throw std::invalid_argument("mixing filters need n*n tap sequences");
  for (const auto& t : taps)
    if (t.size() != filter_len) throw std::invalid_argument("every tap sequence must have length P");
}

}  // namespace unmix
