// Command-line entry points: synthetic mixing, separation, evaluation, and
// end-to-end reproduction of the synthetic demo cases.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "unmix/metrics.hpp"
#include "unmix/pipeline.hpp"
#include "unmix/rescale.hpp"
#include "unmix/signal_io.hpp"

namespace {

using namespace unmix;

// All file outputs are staged with a .partial suffix and renamed on success,
// so an interrupted run never leaves a final-named partial file.
std::string partial(const std::string& path) { return path + ".partial"; }

void finalize(const std::string& path) {
  std::filesystem::rename(partial(path), path);
}

void write_wav_atomic(const std::string& path, const TimeSeries& series) {
  write_wav(partial(path), series);
  finalize(path);
}

struct SeparationFlags {
  std::string preset;
  std::optional<std::size_t> frame_len, init_frames, update_frames, align_frames, batch_frames;
  std::optional<std::size_t> support_start, search_lo, search_hi;
  std::optional<double> overlap, weight_base;
  std::optional<int> k0, k1, k2;
  std::optional<std::uint64_t> seed;
  std::string reference = "A";
  std::string lag_aggregate = "max";
};

void add_separation_flags(CLI::App* cmd, SeparationFlags& f) {
  cmd->add_option("--preset", f.preset, "parameter preset: case1, case2 or case3")
      ->check(CLI::IsMember({"case1", "case2", "case3"}));
  cmd->add_option("--T", f.frame_len, "frame length (power of two)");
  cmd->add_option("--overlap", f.overlap, "frame overlap fraction in [0,1)");
  cmd->add_option("--nT", f.init_frames, "statistics window, frames");
  cmd->add_option("--dnT", f.update_frames, "window advance per update, frames");
  cmd->add_option("--DnT", f.align_frames, "alignment overlap, frames");
  cmd->add_option("--nT-batch", f.batch_frames, "batch-mode statistics window, frames");
  cmd->add_option("--K0", f.k0, "frequency-sorting lag bound");
  cmd->add_option("--K1", f.k1, "time-alignment lag bound");
  cmd->add_option("--K2", f.k2, "evaluation lag bound");
  cmd->add_option("--beta", f.weight_base, "exponential weight base of the scaling solve");
  cmd->add_option("--q", f.support_start, "first filter tap pushed toward zero");
  cmd->add_option("--ref", f.reference, "reference-bin choice: A (search) or B (bin 4)")
      ->check(CLI::IsMember({"A", "B"}));
  cmd->add_option("--lag-agg", f.lag_aggregate, "lag aggregation: max or sum")
      ->check(CLI::IsMember({"max", "sum"}));
  cmd->add_option("--search-lo", f.search_lo, "lowest reference-search bin");
  cmd->add_option("--search-hi", f.search_hi, "highest reference-search bin");
  cmd->add_option("--seed", f.seed, "seed echoed into reports");
}

SeparationConfig resolve_config(const SeparationFlags& f) {
  SeparationConfig cfg = preset_case2();
  if (f.preset == "case1") cfg = preset_case1();
  if (f.preset == "case3") cfg = preset_case3();
  if (f.frame_len) cfg.frame_len = *f.frame_len;
  if (f.overlap) cfg.overlap = *f.overlap;
  if (f.init_frames) cfg.init_frames = *f.init_frames;
  if (f.update_frames) cfg.update_frames = *f.update_frames;
  if (f.align_frames) cfg.align_frames = *f.align_frames;
  if (f.batch_frames) cfg.batch_frames = *f.batch_frames;
  if (f.k0) cfg.sort_max_lag = *f.k0;
  if (f.k1) cfg.align_max_lag = *f.k1;
  if (f.k2) cfg.eval_max_lag = *f.k2;
  if (f.weight_base) cfg.weight_base = *f.weight_base;
  if (f.support_start) cfg.support_start = *f.support_start;
  if (f.search_lo) cfg.search_lo = *f.search_lo;
  if (f.search_hi) cfg.search_hi = *f.search_hi;
  if (f.seed) cfg.seed = *f.seed;
  cfg.reference = f.reference == "B" ? ReferenceMode::fixed_low_bin : ReferenceMode::search;
  cfg.lag_aggregate = f.lag_aggregate == "sum" ? LagAggregate::sum_abs : LagAggregate::max_abs;
  return cfg;
}

TimeSeries load_sources(const std::vector<std::string>& paths) {
  if (paths.size() == 1) return read_wav(paths.front());
  TimeSeries out;
  for (const auto& p : paths) {
    TimeSeries one = read_wav(p);
    if (one.num_channels() != 1)
      throw std::runtime_error(p + ": expected a mono file when passing several inputs");
    if (out.channels.empty())
      out.sample_rate = one.sample_rate;
    else if (one.sample_rate != out.sample_rate)
      throw std::runtime_error("input sample rates differ");
    out.channels.push_back(std::move(one.channels.front()));
  }
  const std::size_t len = out.length();
  for (auto& ch : out.channels) ch.resize(std::min(len, ch.size()));
  return out;
}

int run_mix(const std::string& filters_path, const std::vector<std::string>& inputs,
            const std::string& output, std::optional<double> noise_snr_db,
            std::optional<std::uint64_t> seed) {
  MixConfig cfg;
  if (filters_path.empty()) {
    cfg.filters = default_demo_filters();
  } else {
    cfg = load_mix_config(filters_path);
  }
  if (noise_snr_db) cfg.noise_snr_db = noise_snr_db;
  if (seed) cfg.seed = *seed;

  TimeSeries sources = load_sources(inputs);
  TimeSeries mixture = convolve_mix(sources, cfg.filters, cfg.noise_snr_db, cfg.seed);
  write_wav_atomic(output, mixture);
  std::cout << "wrote " << output << " (" << mixture.num_channels() << " ch, "
            << mixture.length() << " samples)\n";
  return 0;
}

int run_separate(const SeparationConfig& cfg, const std::string& mode, const std::string& input,
                 const std::string& out1, const std::string& out2,
                 const std::string& diagnostics_path, const std::string& filters_out) {
  const TimeSeries mix = read_wav(input);
  if (mix.num_channels() != 2) throw std::runtime_error(input + ": need 2 channels");

  const SeparationResult res =
      mode == "batch" ? separate_batch(mix, cfg) : separate_dynamic(mix, cfg);

  write_wav_atomic(out1, TimeSeries{{res.output.channels[0]}, res.output.sample_rate});
  write_wav_atomic(out2, TimeSeries{{res.output.channels[1]}, res.output.sample_rate});
  if (!diagnostics_path.empty()) {
    write_diagnostics_jsonl(res.log, partial(diagnostics_path));
    finalize(diagnostics_path);
  }
  if (!filters_out.empty()) {
    save_filter_bank(res.bank, partial(filters_out));
    finalize(filters_out);
  }
  std::cout << "separated " << input << " -> " << out1 << ", " << out2 << " ("
            << res.log.size() << " update records)\n";
  return 0;
}

int run_eval(const std::string& separated_path, const std::string& mixtures_path,
             const std::string& sources_path, int k2, const std::string& report_path) {
  const TimeSeries separated = read_wav(separated_path);
  const TimeSeries mixtures = read_wav(mixtures_path);
  std::optional<TimeSeries> sources;
  if (!sources_path.empty()) sources = read_wav(sources_path);

  const EvalReport rep = evaluate(separated, mixtures, sources ? &*sources : nullptr, k2);
  write_report(rep, partial(report_path));
  finalize(report_path);
  const auto dot = report_path.find_last_of('.');
  finalize((dot == std::string::npos ? report_path : report_path.substr(0, dot)) + ".json");

  std::printf("rho_bar(mixtures)  = %.6f\n", rep.rho_bar_mixtures);
  std::printf("rho_bar(separated) = %.6f\n", rep.rho_bar_separated);
  if (rep.rho_bar_sources) std::printf("rho_bar(sources)   = %.6f\n", *rep.rho_bar_sources);
  if (rep.ratio_1) std::printf("ratio_1 = %.6f, ratio_2 = %.6f\n", *rep.ratio_1, *rep.ratio_2);
  return 0;
}

int run_repro(int case_id, std::uint64_t seed, const std::string& outdir,
              const std::string& reference, double duration) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  const double rate = 16000.0;

  TimeSeries s1 = synth_speech_like(duration, rate, seed);
  TimeSeries s2 = case_id == 3 ? synth_babble_noise(duration, rate, seed + 1)
                               : synth_harmonic(duration, rate, seed + 1);
  TimeSeries sources{{s1.channels[0], s2.channels[0]}, rate};

  const MixingFilters filters = default_demo_filters();
  const TimeSeries mixture = convolve_mix(sources, filters, std::nullopt, seed);

  SeparationConfig cfg = case_id == 3 ? preset_case3() : preset_case2();
  cfg.reference = reference == "B" ? ReferenceMode::fixed_low_bin : ReferenceMode::search;
  cfg.seed = seed;

  const SeparationResult dyn = separate_dynamic(mixture, cfg);
  const SeparationResult bat = separate_batch(mixture, cfg);

  write_wav_atomic(outdir + "/sources.wav", sources);
  write_wav_atomic(outdir + "/mixture.wav", mixture);
  write_wav_atomic(outdir + "/dynamic.wav", dyn.output);
  write_wav_atomic(outdir + "/batch.wav", bat.output);
  write_diagnostics_jsonl(dyn.log, partial(outdir + "/dynamic_diagnostics.jsonl"));
  finalize(outdir + "/dynamic_diagnostics.jsonl");

  const EvalReport dyn_rep = evaluate(dyn.output, mixture, &sources, cfg.eval_max_lag);
  const EvalReport bat_rep = evaluate(bat.output, mixture, &sources, cfg.eval_max_lag);
  write_report(dyn_rep, partial(outdir + "/dynamic_report.csv"));
  finalize(outdir + "/dynamic_report.csv");
  finalize(outdir + "/dynamic_report.json");
  write_report(bat_rep, partial(outdir + "/batch_report.csv"));
  finalize(outdir + "/batch_report.csv");
  finalize(outdir + "/batch_report.json");

  // side-by-side with the published reference rows for this case
  const std::string ref_label = "(" + std::to_string(case_id) + ")-" + reference;
  const ReferenceCorrelations* ref_row = nullptr;
  for (const auto& row : reference_correlations())
    if (ref_label == row.label) ref_row = &row;

  std::printf("case (%d) analogue, seed %llu, reference mode %s\n", case_id,
              static_cast<unsigned long long>(seed), reference.c_str());
  std::printf("%-22s %12s %26s\n", "rho_bar", "this run", ("published " + ref_label).c_str());
  auto line = [&](const char* name, double mine, double ref) {
    std::printf("%-22s %12.4f %26.4f\n", name, mine, ref);
  };
  line("mixtures", dyn_rep.rho_bar_mixtures, ref_row ? ref_row->mixture : 0.0);
  line("dynamic separation", dyn_rep.rho_bar_separated, ref_row ? ref_row->dynamic_sep : 0.0);
  line("batch separation", bat_rep.rho_bar_separated, ref_row ? ref_row->batch_sep : 0.0);
  line("sources", dyn_rep.rho_bar_sources.value_or(0.0), ref_row ? ref_row->sources : 0.0);

  auto ratio_ref = [&](const std::string& label) {
    for (const auto& row : reference_ratios())
      if (label == row.label) return case_id == 3 ? row.case3 : row.case2;
    return 0.0;
  };
  std::printf("ratios closeness-to-sources (this run | published):\n");
  std::printf("  dyn: s1 %.4f  s2 %.4f | %.4f / %.4f\n", dyn_rep.ratio_1.value_or(0.0),
              dyn_rep.ratio_2.value_or(0.0), ratio_ref("dyn. s1 (" + reference + ")"),
              ratio_ref("dyn. s2 (" + reference + ")"));
  std::printf("  bat: s1 %.4f  s2 %.4f | %.4f / %.4f\n", bat_rep.ratio_1.value_or(0.0),
              bat_rep.ratio_2.value_or(0.0), ratio_ref("bat. s1 (" + reference + ")"),
              ratio_ref("bat. s2 (" + reference + ")"));
  std::printf(
      "note: the published columns come from the original recordings and mixing\n"
      "filters, which are not distributed; they give context and are not\n"
      "reproducible from this synthetic run.\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blind separation of convolutive stereo mixtures"};
  app.require_subcommand(1);

  // mix
  auto* mix_cmd = app.add_subcommand("mix", "convolve sources through a mixing filter bank");
  std::string mix_filters, mix_dump;
  std::vector<std::string> mix_inputs;
  std::optional<double> mix_snr;
  std::optional<std::uint64_t> mix_seed;
  mix_cmd->add_option("--filters", mix_filters, "mixing filter JSON config");
  mix_cmd->add_option("--noise-snr-db", mix_snr, "add white Gaussian noise at this SNR");
  mix_cmd->add_option("--seed", mix_seed, "noise generator seed");
  mix_cmd->add_option("--dump-default-filters", mix_dump,
                      "write the built-in demo filter config to this path and exit");
  mix_cmd->add_option("files", mix_inputs,
                      "source WAVs (one multichannel or n mono) followed by the output WAV");

  // separate
  auto* sep_cmd = app.add_subcommand("separate", "separate a 2-channel convolutive mixture");
  SeparationFlags sep_flags;
  std::string sep_mode = "dynamic", sep_in, sep_out1, sep_out2, sep_diag, sep_bank;
  sep_cmd->add_option("--mode", sep_mode, "dynamic or batch")
      ->check(CLI::IsMember({"dynamic", "batch"}));
  add_separation_flags(sep_cmd, sep_flags);
  sep_cmd->add_option("--diagnostics", sep_diag, "write per-update diagnostics (JSON lines)");
  sep_cmd->add_option("--filters-out", sep_bank, "write the final demixing filter bank (JSON)");
  sep_cmd->add_option("input", sep_in, "2-channel mixture WAV")->required();
  sep_cmd->add_option("output1", sep_out1, "first separated channel WAV")->required();
  sep_cmd->add_option("output2", sep_out2, "second separated channel WAV")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "lagged-correlation evaluation of a separation");
  std::string eval_sep, eval_mix, eval_src, eval_report = "eval_report.csv";
  int eval_k2 = 20;
  eval_cmd->add_option("--sources", eval_src, "reference source WAV (2 channels)");
  eval_cmd->add_option("--K2", eval_k2, "evaluation lag bound");
  eval_cmd->add_option("--report", eval_report, "CSV report path (JSON twin written alongside)");
  eval_cmd->add_option("separated", eval_sep, "separated WAV (2 channels)")->required();
  eval_cmd->add_option("mixtures", eval_mix, "mixture WAV (2 channels)")->required();

  // repro
  auto* repro_cmd = app.add_subcommand("repro", "run a synthetic demo case end to end");
  int repro_case = 2;
  std::uint64_t repro_seed = 1;
  std::string repro_outdir = "repro_out", repro_ref = "A";
  double repro_duration = 6.0;
  repro_cmd->add_option("--case", repro_case, "demo case: 2 (speech+music) or 3 (speech+noise)")
      ->check(CLI::IsMember({2, 3}));
  repro_cmd->add_option("--seed", repro_seed, "generator seed");
  repro_cmd->add_option("--outdir", repro_outdir, "output directory");
  repro_cmd->add_option("--ref", repro_ref, "reference-bin choice: A or B")
      ->check(CLI::IsMember({"A", "B"}));
  repro_cmd->add_option("--duration", repro_duration, "source duration, seconds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (mix_cmd->parsed()) {
      if (!mix_dump.empty()) {
        MixConfig cfg;
        cfg.filters = default_demo_filters();
        cfg.seed = mix_seed.value_or(0);
        cfg.noise_snr_db = mix_snr;
        save_mix_config(cfg, partial(mix_dump));
        finalize(mix_dump);
        std::cout << "wrote " << mix_dump << "\n";
        return 0;
      }
      if (mix_inputs.size() < 2)
        throw std::runtime_error("mix needs input WAV(s) and an output path");
      const std::string output = mix_inputs.back();
      mix_inputs.pop_back();
      return run_mix(mix_filters, mix_inputs, output, mix_snr, mix_seed);
    }
    if (sep_cmd->parsed())
      return run_separate(resolve_config(sep_flags), sep_mode, sep_in, sep_out1, sep_out2,
                          sep_diag, sep_bank);
    if (eval_cmd->parsed()) return run_eval(eval_sep, eval_mix, eval_src, eval_k2, eval_report);
    if (repro_cmd->parsed())
      return run_repro(repro_case, repro_seed, repro_outdir, repro_ref, repro_duration);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
