#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "unmix/types.hpp"

namespace unmix {

// PCM WAV reader: 16-bit integer or 32-bit float, little-endian. Integer
// samples are scaled to [-1, 1] by 1/32768.
TimeSeries read_wav(const std::string& path);

// 16-bit PCM writer; samples outside [-1, 1] are clipped with a warning on
// stderr, non-finite samples are rejected.
void write_wav(const std::string& path, const TimeSeries& series);

// Synthetic convolutive mixture x_i(k) = sum_j sum_p a_ij(p) s_j(k-p) with
// causal zero padding. If noise_snr_db is set, white Gaussian noise is added
// per output channel at that SNR against the clean mixture power.
TimeSeries convolve_mix(const TimeSeries& sources, const MixingFilters& filters,
                        std::optional<double> noise_snr_db = {}, std::uint64_t seed = 0);

// Mixing setup as carried by the JSON config:
//   {"n":2,"P":48,"taps":[[..],..],"noise_snr_db":null,"seed":1234}
struct MixConfig {
  MixingFilters filters;
  std::optional<double> noise_snr_db;
  std::uint64_t seed = 0;
};

MixConfig load_mix_config(const std::string& path);
void save_mix_config(const MixConfig& config, const std::string& path);

// Built-in 2x2 demo filters (P = 48): direct paths with a few decaying echoes
// on the diagonal, delayed echo trains 6 dB down off the diagonal.
MixingFilters default_demo_filters();

// Seeded source generators for demos and fixtures.
TimeSeries synth_speech_like(double seconds, double sample_rate, std::uint64_t seed);
TimeSeries synth_harmonic(double seconds, double sample_rate, std::uint64_t seed);
TimeSeries synth_babble_noise(double seconds, double sample_rate, std::uint64_t seed);

}  // namespace unmix
