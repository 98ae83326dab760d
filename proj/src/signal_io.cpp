#include "unmix/signal_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace unmix {

namespace {

template <typename T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void append_le(std::vector<unsigned char>& buf, T v) {
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.insert(buf.end(), raw, raw + sizeof(T));
}

struct FmtChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

}  // namespace

TimeSeries read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error(path + " is not a RIFF/WAVE file");

  FmtChunk fmt;
  bool have_fmt = false;
  std::size_t data_off = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const auto size = read_le<std::uint32_t>(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw std::runtime_error(path + ": truncated chunk");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw std::runtime_error(path + ": malformed fmt chunk");
      fmt.format = read_le<std::uint16_t>(bytes.data() + body);
      fmt.channels = read_le<std::uint16_t>(bytes.data() + body + 2);
      fmt.sample_rate = read_le<std::uint32_t>(bytes.data() + body + 4);
      fmt.bits = read_le<std::uint16_t>(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = size;
    }
    pos = body + size + (size % 2);  // chunks are word-aligned
  }
  if (!have_fmt || data_off == 0) throw std::runtime_error(path + ": missing fmt or data chunk");
  if (fmt.channels == 0 || fmt.sample_rate == 0)
    throw std::runtime_error(path + ": malformed fmt chunk");

  const bool pcm16 = fmt.format == 1 && fmt.bits == 16;
  const bool float32 = fmt.format == 3 && fmt.bits == 32;
  if (!pcm16 && !float32)
    throw std::runtime_error(path + ": unsupported encoding (need 16-bit PCM or 32-bit float)");

  const std::size_t bytes_per_sample = fmt.bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  const std::size_t frames = data_len / frame_bytes;

  TimeSeries out;
  out.sample_rate = static_cast<double>(fmt.sample_rate);
  out.channels.assign(fmt.channels, std::vector<double>(frames));
  for (std::size_t k = 0; k < frames; ++k) {
    for (std::size_t ch = 0; ch < fmt.channels; ++ch) {
      const unsigned char* p = bytes.data() + data_off + k * frame_bytes + ch * bytes_per_sample;
      if (pcm16)
        out.channels[ch][k] = static_cast<double>(read_le<std::int16_t>(p)) / 32768.0;
      else
        out.channels[ch][k] = static_cast<double>(read_le<float>(p));
    }
  }
  return out;
}

void write_wav(const std::string& path, const TimeSeries& series) {
  series.validate();
  if (series.length() == 0) throw std::invalid_argument("refusing to write empty audio");
  for (const auto& ch : series.channels)
    for (double v : ch)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite sample in audio");

  const auto channels = static_cast<std::uint16_t>(series.num_channels());
  const auto rate = static_cast<std::uint32_t>(std::llround(series.sample_rate));
  const std::size_t frames = series.length();
  const std::uint32_t data_len = static_cast<std::uint32_t>(frames * channels * 2);

  std::vector<unsigned char> buf;
  buf.reserve(44 + data_len);
  buf.insert(buf.end(), {'R', 'I', 'F', 'F'});
  append_le<std::uint32_t>(buf, 36 + data_len);
  buf.insert(buf.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  append_le<std::uint32_t>(buf, 16);
  append_le<std::uint16_t>(buf, 1);  // PCM
  append_le<std::uint16_t>(buf, channels);
  append_le<std::uint32_t>(buf, rate);
  append_le<std::uint32_t>(buf, rate * channels * 2);
  append_le<std::uint16_t>(buf, static_cast<std::uint16_t>(channels * 2));
  append_le<std::uint16_t>(buf, 16);
  buf.insert(buf.end(), {'d', 'a', 't', 'a'});
  append_le<std::uint32_t>(buf, data_len);

  std::size_t clipped = 0;
  for (std::size_t k = 0; k < frames; ++k) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      double v = series.channels[ch][k];
      if (v > 1.0 || v < -1.0) {
        v = std::clamp(v, -1.0, 1.0);
        ++clipped;
      }
      const auto s = static_cast<std::int16_t>(
          std::clamp<long>(std::lround(v * 32768.0), -32768, 32767));
      append_le<std::int16_t>(buf, s);
    }
  }
  if (clipped > 0)
    std::cerr << "write_wav: clipped " << clipped << " samples to [-1, 1] in " << path << "\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

TimeSeries convolve_mix(const TimeSeries& sources, const MixingFilters& filters,
                        std::optional<double> noise_snr_db, std::uint64_t seed) {
  sources.validate();
  filters.validate();
  if (sources.num_channels() != filters.n)
    throw std::invalid_argument("source channel count does not match the filters");
  const std::size_t len = sources.length();
  if (len < filters.filter_len)
    throw std::invalid_argument("sources shorter than the mixing filters");

  TimeSeries out;
  out.sample_rate = sources.sample_rate;
  out.channels.assign(filters.n, std::vector<double>(len, 0.0));
  for (std::size_t i = 0; i < filters.n; ++i) {
    auto& dst = out.channels[i];
    for (std::size_t j = 0; j < filters.n; ++j) {
      const auto& h = filters.tap(i, j);
      const auto& s = sources.channels[j];
      for (std::size_t k = 0; k < len; ++k) {
        double acc = 0.0;
        const std::size_t p_max = std::min(k + 1, filters.filter_len);
        for (std::size_t p = 0; p < p_max; ++p) acc += h[p] * s[k - p];
        dst[k] += acc;
      }
    }
  }

  if (noise_snr_db) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& ch : out.channels) {
      double power = 0.0;
      for (double v : ch) power += v * v;
      power /= static_cast<double>(len);
      const double noise_std = std::sqrt(power / std::pow(10.0, *noise_snr_db / 10.0));
      for (auto& v : ch) v += noise_std * gauss(rng);
    }
  }
  return out;
}

MixConfig load_mix_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read mixing config from " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  MixConfig cfg;
  cfg.filters.n = doc.at("n").get<std::size_t>();
  cfg.filters.filter_len = doc.at("P").get<std::size_t>();
  cfg.filters.taps = doc.at("taps").get<std::vector<std::vector<double>>>();
  if (doc.contains("noise_snr_db") && !doc["noise_snr_db"].is_null())
    cfg.noise_snr_db = doc["noise_snr_db"].get<double>();
  if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
  cfg.filters.validate();
  return cfg;
}

void save_mix_config(const MixConfig& config, const std::string& path) {
  config.filters.validate();
  nlohmann::json doc;
  doc["n"] = config.filters.n;
  doc["P"] = config.filters.filter_len;
  doc["taps"] = config.filters.taps;
  doc["noise_snr_db"] = config.noise_snr_db ? nlohmann::json(*config.noise_snr_db)
                                            : nlohmann::json(nullptr);
  doc["seed"] = config.seed;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write mixing config to " + path);
  out << doc.dump(2) << '\n';
}

MixingFilters default_demo_filters() {
  MixingFilters f;
  f.n = 2;
  f.filter_len = 48;
  f.taps.assign(4, std::vector<double>(48, 0.0));
  auto place = [&](std::size_t i, std::size_t j,
                   std::initializer_list<std::pair<std::size_t, double>> entries) {
    for (const auto& [p, v] : entries) f.taps[i * 2 + j][p] = v;
  };
  // direct paths: unit impulse plus three decaying echoes
  place(0, 0, {{0, 1.0}, {11, 0.22}, {23, -0.11}, {37, 0.05}});
  place(1, 1, {{0, 1.0}, {13, -0.20}, {27, 0.10}, {41, -0.05}});
  // cross talk: delayed decaying echo trains, peak 6 dB down
  place(0, 1, {{5, 0.55}, {18, -0.12}, {29, 0.06}});
  place(1, 0, {{7, 0.55}, {16, 0.12}, {31, -0.06}});
  return f;
}

namespace {

// Piecewise bursty gain curve: active stretches with raised-cosine edges
// separated by near-silent gaps.
std::vector<double> burst_envelope(std::size_t len, double rate, std::mt19937_64& rng,
                                   double min_on, double max_on, double min_off, double max_off,
                                   double floor_gain) {
  std::uniform_real_distribution<double> on_len(min_on, max_on);
  std::uniform_real_distribution<double> off_len(min_off, max_off);
  std::uniform_real_distribution<double> level(0.4, 1.0);
  std::vector<double> env(len, floor_gain);
  std::size_t pos = 0;
  const double edge = 0.02;  // seconds of raised-cosine ramp
  const auto edge_n = static_cast<std::size_t>(edge * rate);
  while (pos < len) {
    const auto on_n = static_cast<std::size_t>(on_len(rng) * rate);
    const double amp = level(rng);
    for (std::size_t k = 0; k < on_n && pos + k < len; ++k) {
      double g = 1.0;
      if (k < edge_n)
        g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(k) / static_cast<double>(edge_n));
      else if (on_n - k <= edge_n)
        g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(on_n - k) / static_cast<double>(edge_n));
      env[pos + k] = std::max(floor_gain, amp * g);
    }
    pos += on_n;
    pos += static_cast<std::size_t>(off_len(rng) * rate);
  }
  return env;
}

void normalize_rms(std::vector<double>& v, double target) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  const double rms = std::sqrt(acc / static_cast<double>(v.size()));
  if (rms > 0.0)
    for (double& x : v) x *= target / rms;
}

std::vector<double> sinc_lowpass(double cutoff_norm, std::size_t taps) {
  std::vector<double> h(taps);
  const double center = (static_cast<double>(taps) - 1.0) / 2.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < taps; ++k) {
    const double t = static_cast<double>(k) - center;
    const double x = 2.0 * cutoff_norm * t;
    const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double hamming = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                                                  (static_cast<double>(taps) - 1.0));
    h[k] = 2.0 * cutoff_norm * sinc * hamming;
    sum += h[k];
  }
  for (auto& v : h) v /= sum;
  return h;
}

std::vector<double> fir_filter(const std::vector<double>& x, const std::vector<double>& h) {
  std::vector<double> y(x.size(), 0.0);
  const std::size_t delay = (h.size() - 1) / 2;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) {
      const std::size_t src = i + delay;
      if (src < k || src - k >= x.size()) continue;
      acc += h[k] * x[src - k];
    }
    y[i] = acc;
  }
  return y;
}

}  // namespace

TimeSeries synth_speech_like(double seconds, double sample_rate, std::uint64_t seed) {
  if (seconds <= 0.0 || sample_rate <= 0.0)
    throw std::invalid_argument("duration and sample rate must be positive");
  const auto len = static_cast<std::size_t>(seconds * sample_rate);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> noise(len);
  for (auto& v : noise) v = gauss(rng);
  // band-limit to a voice-ish range
  const auto lp_hi = sinc_lowpass(std::min(3400.0, 0.42 * sample_rate) / sample_rate, 255);
  const auto lp_lo = sinc_lowpass(150.0 / sample_rate, 255);
  auto band = fir_filter(noise, lp_hi);
  const auto low = fir_filter(noise, lp_lo);
  for (std::size_t i = 0; i < len; ++i) band[i] -= low[i];

  // syllabic modulation riding on a sustained floor: strongly non-Gaussian
  // per bin without ever going fully silent
  auto env = burst_envelope(len, sample_rate, rng, 0.03, 0.1, 0.02, 0.07, 0.12);
  std::uniform_real_distribution<double> jitter_freq(2.5, 5.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double fj = jitter_freq(rng);
  const double pj = phase(rng);
  double band_rms = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    band[i] *= env[i] * (1.0 + 0.3 * std::sin(2.0 * std::numbers::pi * fj * t + pj));
    band_rms += band[i] * band[i];
  }
  band_rms = std::sqrt(band_rms / static_cast<double>(len));
  // full-band breath floor keeps every bin carrying real signal instead of
  // leakage from the band edges
  for (std::size_t i = 0; i < len; ++i)
    band[i] += 0.06 * band_rms * (0.5 + env[i]) * gauss(rng);
  normalize_rms(band, 0.1);
  return TimeSeries{{band}, sample_rate};
}

TimeSeries synth_harmonic(double seconds, double sample_rate, std::uint64_t seed) {
  if (seconds <= 0.0 || sample_rate <= 0.0)
    throw std::invalid_argument("duration and sample rate must be positive");
  const auto len = static_cast<std::size_t>(seconds * sample_rate);
  std::mt19937_64 rng(seed);
  const double scale[] = {1.0, 9.0 / 8.0, 5.0 / 4.0, 3.0 / 2.0, 5.0 / 3.0, 2.0};
  std::uniform_int_distribution<int> pick_note(0, 5);
  std::uniform_real_distribution<double> note_len(0.1, 0.28);
  std::uniform_real_distribution<double> rest_len(0.03, 0.1);
  std::uniform_real_distribution<double> rest_chance(0.0, 1.0);
  std::uniform_real_distribution<double> note_amp(0.5, 1.0);

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> out(len, 0.0);
  std::vector<double> breath_gain(len, 0.0);
  constexpr int kPartials = 24;
  std::size_t pos = 0;
  while (pos < len) {
    if (rest_chance(rng) < 0.05) {
      pos += static_cast<std::size_t>(rest_len(rng) * sample_rate);
      continue;
    }
    const double base = 220.0 * scale[pick_note(rng)];
    const auto n_note = static_cast<std::size_t>(note_len(rng) * sample_rate);
    const double amp = note_amp(rng);
    const auto attack = static_cast<std::size_t>(0.015 * sample_rate);
    const auto release = static_cast<std::size_t>(0.06 * sample_rate);
    double phase[kPartials] = {};
    for (std::size_t k = 0; k < n_note && pos + k < len; ++k) {
      const double t = static_cast<double>(k) / sample_rate;
      const double vibrato = 1.0 + 0.004 * std::sin(2.0 * std::numbers::pi * 5.3 * t);
      double g = amp * (0.3 + 0.7 * std::exp(-t / 0.12));
      if (k < attack) g *= static_cast<double>(k) / static_cast<double>(attack);
      if (n_note - k <= release)
        g *= static_cast<double>(n_note - k) / static_cast<double>(release);
      double v = 0.0;
      double partial_amp = 1.0;
      for (int h = 1; h <= kPartials; ++h) {
        partial_amp *= 0.9;
        const double f = base * static_cast<double>(h) * vibrato;
        if (f < 0.46 * sample_rate) {
          phase[h - 1] += 2.0 * std::numbers::pi * f / sample_rate;
          v += partial_amp * std::sin(phase[h - 1]);
        }
      }
      out[pos + k] += g * v;
      breath_gain[pos + k] = g;
    }
    pos += n_note;
  }
  // note-modulated breath noise keeps every band carrying the note envelope
  std::vector<double> breath(len);
  for (auto& v : breath) v = gauss(rng);
  double note_rms = 0.0;
  for (double v : out) note_rms += v * v;
  note_rms = std::sqrt(note_rms / static_cast<double>(len));
  for (std::size_t i = 0; i < len; ++i)
    out[i] += 0.35 * note_rms * (0.15 + breath_gain[i]) * breath[i];
  normalize_rms(out, 0.1);
  return TimeSeries{{out}, sample_rate};
}

TimeSeries synth_babble_noise(double seconds, double sample_rate, std::uint64_t seed) {
  if (seconds <= 0.0 || sample_rate <= 0.0)
    throw std::invalid_argument("duration and sample rate must be positive");
  const auto len = static_cast<std::size_t>(seconds * sample_rate);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> ctrl(0.25, 1.0);

  std::vector<double> out(len);
  const double alpha = 1.0 - std::exp(-2.0 * std::numbers::pi * 2200.0 / sample_rate);
  double state = 0.0;
  for (auto& v : out) {
    state += alpha * (gauss(rng) - state);
    v = state;
  }
  // slow random amplitude modulation, cosine-interpolated control points
  const auto step = static_cast<std::size_t>(0.15 * sample_rate);
  std::vector<double> points(len / step + 2);
  for (auto& p : points) p = ctrl(rng);
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t seg = i / step;
    const double frac = static_cast<double>(i % step) / static_cast<double>(step);
    const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * frac);
    out[i] *= points[seg] * (1.0 - w) + points[seg + 1] * w;
  }
  {
    std::mt19937_64 floor_rng(seed + 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> floor_gauss(0.0, 1.0);
    double body = 0.0;
    for (double v : out) body += v * v;
    body = std::sqrt(body / static_cast<double>(len));
    for (auto& v : out) v += 0.08 * body * floor_gauss(floor_rng);
  }
  normalize_rms(out, 0.1);
  return TimeSeries{{out}, sample_rate};
}

}  // namespace unmix
