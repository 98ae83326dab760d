// Python bindings for the separation library: audio I/O, synthetic mixing,
// the dynamic/batch separators, and the evaluation metrics.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>
#include <optional>
#include <string>

#include "unmix/metrics.hpp"
#include "unmix/pipeline.hpp"
#include "unmix/signal_io.hpp"
#include "unmix/stats.hpp"

namespace py = pybind11;
using namespace unmix;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

TimeSeries to_series(const DoubleArray& arr, double sample_rate) {
  TimeSeries out;
  out.sample_rate = sample_rate;
  if (arr.ndim() == 1) {
    out.channels.assign(1, std::vector<double>(arr.data(), arr.data() + arr.shape(0)));
  } else if (arr.ndim() == 2) {
    const auto channels = static_cast<std::size_t>(arr.shape(0));
    const auto len = static_cast<std::size_t>(arr.shape(1));
    out.channels.resize(channels);
    for (std::size_t ch = 0; ch < channels; ++ch)
      out.channels[ch].assign(arr.data() + ch * len, arr.data() + (ch + 1) * len);
  } else {
    throw std::invalid_argument("audio arrays must be 1-D or (channels, samples)");
  }
  return out;
}

py::array_t<double> to_array(const TimeSeries& series) {
  const auto channels = series.num_channels();
  const auto len = series.length();
  py::array_t<double> arr({channels, len});
  auto view = arr.mutable_unchecked<2>();
  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t k = 0; k < len; ++k)
      view(static_cast<py::ssize_t>(ch), static_cast<py::ssize_t>(k)) = series.channels[ch][k];
  return arr;
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

MixingFilters filters_from_taps(const std::vector<std::vector<double>>& taps) {
  MixingFilters f;
  const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(taps.size()))));
  f.n = n;
  f.taps = taps;
  f.filter_len = taps.empty() ? 0 : taps.front().size();
  f.validate();
  return f;
}

py::dict result_to_dict(const SeparationResult& res) {
  py::dict out;
  out["output"] = to_array(res.output);
  out["sample_rate"] = res.output.sample_rate;
  py::list diag;
  for (const auto& d : res.log) diag.append(json_to_py(diagnostics_to_json(d)));
  out["diagnostics"] = diag;
  py::list taps;
  for (const auto& h : res.bank.taps) taps.append(py::cast(h));
  out["filter_taps"] = taps;
  out["tail_energy_fraction"] = py::cast(res.bank.tail_energy_fraction);
  return out;
}

py::dict report_to_dict(const EvalReport& rep) {
  return py::dict(json_to_py(report_to_json(rep)));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Blind separation of convolutive stereo mixtures";

  py::enum_<ReferenceMode>(m, "ReferenceMode")
      .value("search", ReferenceMode::search)
      .value("fixed_low_bin", ReferenceMode::fixed_low_bin);

  py::enum_<LagAggregate>(m, "LagAggregate")
      .value("max_abs", LagAggregate::max_abs)
      .value("sum_abs", LagAggregate::sum_abs);

  py::class_<SeparationConfig>(m, "SeparationConfig")
      .def(py::init<>())
      .def_readwrite("frame_len", &SeparationConfig::frame_len)
      .def_readwrite("overlap", &SeparationConfig::overlap)
      .def_readwrite("init_frames", &SeparationConfig::init_frames)
      .def_readwrite("update_frames", &SeparationConfig::update_frames)
      .def_readwrite("align_frames", &SeparationConfig::align_frames)
      .def_readwrite("batch_frames", &SeparationConfig::batch_frames)
      .def_readwrite("sort_max_lag", &SeparationConfig::sort_max_lag)
      .def_readwrite("align_max_lag", &SeparationConfig::align_max_lag)
      .def_readwrite("eval_max_lag", &SeparationConfig::eval_max_lag)
      .def_readwrite("weight_base", &SeparationConfig::weight_base)
      .def_readwrite("support_start", &SeparationConfig::support_start)
      .def_readwrite("gain_prior", &SeparationConfig::gain_prior)
      .def_readwrite("reference", &SeparationConfig::reference)
      .def_readwrite("search_lo", &SeparationConfig::search_lo)
      .def_readwrite("search_hi", &SeparationConfig::search_hi)
      .def_readwrite("lag_aggregate", &SeparationConfig::lag_aggregate)
      .def_readwrite("seed", &SeparationConfig::seed);

  m.def("preset_case1", &preset_case1);
  m.def("preset_case2", &preset_case2);
  m.def("preset_case3", &preset_case3);

  m.def(
      "read_wav",
      [](const std::string& path) {
        const TimeSeries s = read_wav(path);
        return py::make_tuple(to_array(s), s.sample_rate);
      },
      py::arg("path"), "Read a WAV file; returns (samples[ch, n], sample_rate).");

  m.def(
      "write_wav",
      [](const std::string& path, const DoubleArray& samples, double sample_rate) {
        write_wav(path, to_series(samples, sample_rate));
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate"));

  m.def("default_filter_taps", [] { return default_demo_filters().taps; },
        "Built-in 2x2 demo mixing filters, row-major tap sequences.");

  m.def(
      "mix",
      [](const DoubleArray& sources, double sample_rate,
         std::optional<std::vector<std::vector<double>>> taps, std::optional<double> noise_snr_db,
         std::uint64_t seed) {
        const MixingFilters f =
            taps ? filters_from_taps(*taps) : default_demo_filters();
        return to_array(convolve_mix(to_series(sources, sample_rate), f, noise_snr_db, seed));
      },
      py::arg("sources"), py::arg("sample_rate"), py::arg("taps") = py::none(),
      py::arg("noise_snr_db") = py::none(), py::arg("seed") = 0,
      "Convolutive mixture of the source channels.");

  m.def(
      "speech_like",
      [](double seconds, double sample_rate, std::uint64_t seed) {
        return to_array(synth_speech_like(seconds, sample_rate, seed));
      },
      py::arg("seconds"), py::arg("sample_rate") = 16000.0, py::arg("seed") = 0);
  m.def(
      "harmonic",
      [](double seconds, double sample_rate, std::uint64_t seed) {
        return to_array(synth_harmonic(seconds, sample_rate, seed));
      },
      py::arg("seconds"), py::arg("sample_rate") = 16000.0, py::arg("seed") = 0);
  m.def(
      "babble_noise",
      [](double seconds, double sample_rate, std::uint64_t seed) {
        return to_array(synth_babble_noise(seconds, sample_rate, seed));
      },
      py::arg("seconds"), py::arg("sample_rate") = 16000.0, py::arg("seed") = 0);

  m.def(
      "separate_dynamic",
      [](const DoubleArray& mixture, double sample_rate, const SeparationConfig& cfg) {
        return result_to_dict(separate_dynamic(to_series(mixture, sample_rate), cfg));
      },
      py::arg("mixture"), py::arg("sample_rate"), py::arg("config") = preset_case2(),
      "Sliding-window separation; returns a dict with output, diagnostics and filters.");

  m.def(
      "separate_batch",
      [](const DoubleArray& mixture, double sample_rate, const SeparationConfig& cfg) {
        return result_to_dict(separate_batch(to_series(mixture, sample_rate), cfg));
      },
      py::arg("mixture"), py::arg("sample_rate"), py::arg("config") = preset_case2(),
      "Single-window separation over the whole signal.");

  m.def(
      "evaluate",
      [](const DoubleArray& separated, const DoubleArray& mixtures, py::object sources,
         int max_lag, double sample_rate) {
        std::optional<TimeSeries> src;
        if (!sources.is_none()) src = to_series(sources.cast<DoubleArray>(), sample_rate);
        return report_to_dict(evaluate(to_series(separated, sample_rate),
                                       to_series(mixtures, sample_rate),
                                       src ? &*src : nullptr, max_lag));
      },
      py::arg("separated"), py::arg("mixtures"), py::arg("sources") = py::none(),
      py::arg("max_lag") = 20, py::arg("sample_rate") = 16000.0,
      "Lagged-correlation separation metrics as a dict.");

  m.def(
      "rho_maxlag",
      [](const DoubleArray& a, const DoubleArray& b, int max_lag) {
        const std::vector<double> va(a.data(), a.data() + a.size());
        const std::vector<double> vb(b.data(), b.data() + b.size());
        return rho_maxlag(va, vb, max_lag);
      },
      py::arg("a"), py::arg("b"), py::arg("max_lag") = 20,
      "max over |k| <= max_lag of |rho(a(t), b(t+k))|.");

  m.def(
      "display_envelope",
      [](const DoubleArray& x, double sample_rate) {
        const std::vector<double> v(x.data(), x.data() + x.size());
        return py::cast(display_envelope(v, sample_rate));
      },
      py::arg("x"), py::arg("sample_rate"),
      "Peak-normalized lowpass envelope of |x| for plotting.");
}
