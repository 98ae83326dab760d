#include "unmix/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "unmix/jade.hpp"
#include "unmix/parallel.hpp"

namespace unmix {

void SeparationConfig::validate() const {
  if (!detail::is_pow2(frame_len)) throw std::invalid_argument("frame length must be a power of two");
  if (overlap < 0.0 || overlap >= 1.0) throw std::invalid_argument("overlap must be in [0, 1)");
  if (init_frames < 4) throw std::invalid_argument("need at least 4 window frames");
  if (update_frames == 0 || update_frames >= init_frames)
    throw std::invalid_argument("update stride must be positive and below the window length");
  if (align_frames == 0 || align_frames > init_frames - update_frames)
    throw std::invalid_argument("alignment overlap must be in [1, window - stride]");
  if (batch_frames < 4) throw std::invalid_argument("batch window too short");
  if (sort_max_lag < 0 || align_max_lag < 0 || eval_max_lag < 0)
    throw std::invalid_argument("lag bounds must be nonnegative");
  if (init_frames <= 2 * static_cast<std::size_t>(sort_max_lag))
    throw std::invalid_argument("window too short for the sorting lag bound");
  if (batch_frames <= 2 * static_cast<std::size_t>(sort_max_lag))
    throw std::invalid_argument("batch window too short for the sorting lag bound");
  if (!(weight_base > 1.0)) throw std::invalid_argument("weight base must exceed 1");
  if (gain_prior < 0.0) throw std::invalid_argument("gain prior must be nonnegative");
  if (support_start < 1 || support_start >= frame_len)
    throw std::invalid_argument("support start must be in [1, T)");
  if (reference == ReferenceMode::fixed_low_bin && frame_len < 16)
    throw std::invalid_argument("fixed low-frequency reference needs T >= 16");
  const double hop = static_cast<double>(frame_len) * (1.0 - overlap);
  if (static_cast<double>(align_frames) * hop <= 2.0 * static_cast<double>(align_max_lag))
    throw std::invalid_argument("alignment overlap too short for the alignment lag bound");
}

SeparationConfig preset_case1() {
  SeparationConfig c;
  c.frame_len = 512;
  c.overlap = 0.0;
  c.init_frames = 100;
  c.update_frames = 20;
  c.align_frames = 30;
  c.batch_frames = 200;
  c.sort_max_lag = 4;
  c.align_max_lag = 10;
  return c;
}

SeparationConfig preset_case2() {
  SeparationConfig c;
  c.frame_len = 256;
  c.overlap = 0.5;
  c.init_frames = 100;
  c.update_frames = 20;
  c.align_frames = 40;
  c.batch_frames = 160;
  c.sort_max_lag = 15;
  c.align_max_lag = 20;
  return c;
}

SeparationConfig preset_case3() {
  SeparationConfig c = preset_case2();
  c.sort_max_lag = 10;
  return c;
}

namespace {

// Spectra of frames [f0, f1), one length-T spectrum per channel per frame.
std::vector<std::array<std::vector<cplx>, 2>> frame_spectra(const TimeSeries& mix,
                                                            const FrameGrid& grid, std::size_t f0,
                                                            std::size_t f1) {
  std::vector<std::array<std::vector<cplx>, 2>> out(f1 - f0);
  parallel_for(f1 - f0, [&](std::size_t idx) {
    const std::size_t t = f0 + idx;
    for (std::size_t ch = 0; ch < 2; ++ch) {
      std::vector<double> frame(mix.channels[ch].begin() + static_cast<long>(grid.frame_start(t)),
                                mix.channels[ch].begin() +
                                    static_cast<long>(grid.frame_start(t) + grid.frame_len));
      out[idx][ch] = forward_spectrum(frame);
    }
  });
  return out;
}

std::vector<Sample2> bin_samples(const std::vector<std::array<std::vector<cplx>, 2>>& specs,
                                 std::size_t bin) {
  std::vector<Sample2> out(specs.size());
  for (std::size_t t = 0; t < specs.size(); ++t) out[t] = {specs[t][0][bin], specs[t][1][bin]};
  return out;
}

struct BinEstimates {
  std::vector<Eigen::MatrixXcd> inverse_half;
  std::vector<bool> degenerate;
};

BinEstimates estimate_bins(const std::vector<MomentSums>& bin_sums,
                           const std::vector<Eigen::Matrix2cd>* previous_demixers) {
  const std::size_t bins = bin_sums.size();
  BinEstimates est;
  est.inverse_half.assign(bins, Eigen::MatrixXcd::Identity(2, 2));
  est.degenerate.assign(bins, false);
  // the scale anchor lambda(0) = 1 cannot mute the DC bin later, and zero-mean
  // audio leaves only frame leakage there, so it keeps the identity demixer
  est.degenerate[0] = true;
  parallel_for(bins, [&](std::size_t b) {
    if (b == 0) return;
    try {
      const CumulantSet cums = cumulants(bin_sums[b]);
      Eigen::Matrix2cd prev_mixing;
      const Eigen::Matrix2cd* seed = nullptr;
      if (previous_demixers != nullptr) {
        prev_mixing = (*previous_demixers)[b].inverse();
        seed = &prev_mixing;
      }
      const MixingEstimate me = estimate_mixing(cums, cums.covariance, seed);
      // bounded inversion: when one estimated column nearly vanishes (a
      // source absent at this bin), flooring the small singular value keeps
      // the demixer gain finite instead of amplifying noise
      Eigen::JacobiSVD<Eigen::Matrix2cd> svd(me.mixing,
                                             Eigen::ComputeFullU | Eigen::ComputeFullV);
      const double s_max = svd.singularValues()(0);
      if (!(s_max > 0.0)) {
        est.degenerate[b] = true;
        return;
      }
      Eigen::Vector2d sv = svd.singularValues();
      for (int i = 0; i < 2; ++i) sv(i) = std::max(sv(i), 0.1 * s_max);
      Eigen::MatrixXcd inv = svd.matrixV() * sv.cwiseInverse().asDiagonal() *
                             svd.matrixU().adjoint();
      if (b == 0 || b == bins - 1) inv = inv.real().cast<cplx>();  // real-spectrum bins
      est.inverse_half[b] = inv;
    } catch (const RankError&) {
      est.degenerate[b] = true;
    }
  });
  return est;
}

std::vector<BinAmplitudes> window_amplitudes(
    const std::vector<std::array<std::vector<cplx>, 2>>& specs,
    const std::vector<Eigen::MatrixXcd>& inverse_half) {
  const std::size_t bins = inverse_half.size();
  const std::size_t frames = specs.size();
  std::vector<BinAmplitudes> amp(bins);
  parallel_for(bins, [&](std::size_t b) {
    amp[b].assign(2, std::vector<double>(frames));
    const auto& inv = inverse_half[b];
    for (std::size_t t = 0; t < frames; ++t) {
      const cplx x0 = specs[t][0][b];
      const cplx x1 = specs[t][1][b];
      amp[b][0][t] = std::abs(inv(0, 0) * x0 + inv(0, 1) * x1);
      amp[b][1][t] = std::abs(inv(1, 0) * x0 + inv(1, 1) * x1);
    }
  });
  return amp;
}

struct WindowBuild {
  DemixFilterBank bank;
  PermutationPlan plan;
  std::vector<Eigen::Matrix2cd> sorted_demixers;  // rows in output order
  double wls_residual = 0.0;
  double wls_baseline = 0.0;
  std::size_t degenerate_count = 0;
  std::size_t unsortable_count = 0;
};

// Steps II and III for one statistics window: per-bin mixing estimates,
// permutation sorting against the reference bin, scaling, filter bank.
WindowBuild build_window_bank(const std::vector<MomentSums>& bin_sums,
                              const std::vector<std::array<std::vector<cplx>, 2>>& window_specs,
                              const SeparationConfig& cfg,
                              const std::vector<Eigen::Matrix2cd>* previous_demixers = nullptr) {
  BinEstimates est = estimate_bins(bin_sums, previous_demixers);
  const std::vector<BinAmplitudes> amp = window_amplitudes(window_specs, est.inverse_half);

  // bins far below the strongest carry no sortable signal: they keep their
  // demixers but inherit the permutation of a live neighbor, and the quality
  // minimum that picks the reference only considers bins with real content
  const std::size_t bins = bin_sums.size();
  std::vector<double> energy(bins, 0.0);
  double peak_energy = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    for (const auto& frame : window_specs) energy[b] += std::norm(frame[0][b]) + std::norm(frame[1][b]);
    peak_energy = std::max(peak_energy, energy[b]);
  }
  std::vector<bool> reference_excluded(bins, false);
  for (std::size_t b = 0; b < bins; ++b) {
    if (energy[b] < 1e-4 * peak_energy) {
      // silence band: an estimated demixer there is noise with a huge
      // inverse; keep the identity and the unit scale instead
      est.degenerate[b] = true;
      est.inverse_half[b] = Eigen::MatrixXcd::Identity(2, 2);
    }
    if (energy[b] < 1e-2 * peak_energy) reference_excluded[b] = true;
  }
  const std::vector<bool>& excluded = est.degenerate;

  AlignOptions opts;
  opts.mode = cfg.reference;
  opts.max_lag = cfg.sort_max_lag;
  opts.aggregate = cfg.lag_aggregate;
  opts.search_lo = cfg.search_lo;
  opts.search_hi = cfg.search_hi;
  opts.excluded = excluded;
  opts.reference_excluded = reference_excluded;
  if (previous_demixers != nullptr) {
    // seeded estimates arrive in the emitted order; only strong evidence
    // may overrule it
    opts.prefer_incumbent = true;
    opts.min_margin = 0.3;
  }

  WindowBuild wb;
  wb.plan = plan_permutations(amp, opts);

  for (std::size_t b = 0; b < bins; ++b) {
    const auto& perm = wb.plan.perms[b];
    if (perm == std::vector<int>{0, 1}) continue;
    Eigen::MatrixXcd permuted(2, 2);
    for (int i = 0; i < 2; ++i) permuted.row(i) = est.inverse_half[b].row(perm[static_cast<std::size_t>(i)]);
    est.inverse_half[b] = permuted;
  }

  // unit-norm rows per bin: the estimate's source-whitening scale would
  // otherwise color the outputs with per-bin sample noise; the scaling solve
  // owns this freedom anyway and now starts from the smooth choice
  for (std::size_t b = 0; b < bins; ++b) {
    if (est.degenerate[b]) continue;
    for (Eigen::Index i = 0; i < 2; ++i) {
      const double norm = est.inverse_half[b].row(i).norm();
      if (norm > 0.0) est.inverse_half[b].row(i) /= norm;
    }
  }

  std::vector<std::size_t> fixed_bins;
  for (std::size_t b = 0; b < bins; ++b)
    if (est.degenerate[b]) fixed_bins.push_back(b);
  wb.degenerate_count = fixed_bins.size();
  for (std::size_t b = 0; b < bins; ++b)
    if (wb.plan.inherited[b]) ++wb.unsortable_count;

  ScalingSolution scaling;
  scaling.rows.resize(2);
  parallel_for(2, [&](std::size_t i) {
    DemixerRow row(2, std::vector<cplx>(bins));
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t b = 0; b < bins; ++b)
        row[j][b] = est.inverse_half[b](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    scaling.rows[i] =
        solve_scaling(row, cfg.weight_base, cfg.support_start, fixed_bins, cfg.gain_prior);
  });
  for (const auto& r : scaling.rows) {
    wb.wls_residual += r.residual;
    wb.wls_baseline += r.baseline;
  }

  wb.bank = build_filter_bank(est.inverse_half, scaling);
  wb.sorted_demixers.reserve(bins);
  for (const auto& m : est.inverse_half) wb.sorted_demixers.push_back(m);
  return wb;
}

// Steady-state demixed output on samples [s0, s1): the convolution is primed
// with up to T-1 samples of history before s0.
std::vector<std::vector<double>> demix_span(const TimeSeries& mix, const DemixFilterBank& bank,
                                            std::size_t s0, std::size_t s1) {
  const std::size_t lead = std::min(s0, bank.filter_len - 1);
  TimeSeries seg;
  seg.sample_rate = mix.sample_rate;
  seg.channels.resize(mix.num_channels());
  for (std::size_t ch = 0; ch < mix.num_channels(); ++ch)
    seg.channels[ch].assign(mix.channels[ch].begin() + static_cast<long>(s0 - lead),
                            mix.channels[ch].begin() + static_cast<long>(s1));
  const TimeSeries full = apply_demix(seg, bank);
  std::vector<std::vector<double>> out(full.num_channels());
  for (std::size_t ch = 0; ch < full.num_channels(); ++ch)
    out[ch].assign(full.channels[ch].begin() + static_cast<long>(lead), full.channels[ch].end());
  return out;
}

UpdateDiagnostics make_record(const WindowBuild& wb, std::size_t k, std::size_t window_start,
                              std::size_t emitted) {
  UpdateDiagnostics d;
  d.update_index = k;
  d.window_start_frame = window_start;
  d.reference_bin = wb.plan.reference_bin;
  d.reference_quality = wb.plan.quality[wb.plan.reference_bin].value;
  double margin_sum = 0.0;
  double margin_min = 0.0;
  std::size_t counted = 0;
  for (std::size_t b = 0; b < wb.plan.margins.size(); ++b) {
    if (b == wb.plan.reference_bin || wb.plan.inherited[b]) continue;
    const double m = wb.plan.margins[b];
    margin_sum += m;
    margin_min = counted == 0 ? m : std::min(margin_min, m);
    ++counted;
  }
  d.sort_margin_min = counted > 0 ? margin_min : 0.0;
  d.sort_margin_mean = counted > 0 ? margin_sum / static_cast<double>(counted) : 0.0;
  d.unsortable_bins = wb.unsortable_count;
  d.degenerate_bins = wb.degenerate_count;
  d.wls_residual = wb.wls_residual;
  d.wls_baseline = wb.wls_baseline;
  d.tail_energy_fraction = wb.bank.tail_energy_fraction;
  d.perm_parity.reserve(wb.plan.perms.size());
  for (const auto& p : wb.plan.perms) d.perm_parity.push_back(p == std::vector<int>{0, 1} ? 0 : 1);
  d.emitted_samples = emitted;
  return d;
}

}  // namespace

SeparationState init_state(const TimeSeries& mix, const SeparationConfig& cfg) {
  cfg.validate();
  mix.validate();
  if (mix.num_channels() != 2) throw std::invalid_argument("separation needs exactly 2 channels");

  SeparationState state;
  state.cfg = cfg;
  state.grid = make_grid(mix.length(), cfg.frame_len, cfg.overlap);
  if (state.grid.num_frames < cfg.init_frames)
    throw std::invalid_argument("input shorter than the initialization window");

  const auto specs = frame_spectra(mix, state.grid, 0, cfg.init_frames);
  const std::size_t bins = cfg.frame_len / 2 + 1;
  state.bin_sums.resize(bins);
  parallel_for(bins, [&](std::size_t b) {
    const auto samples = bin_samples(specs, b);
    state.bin_sums[b] = accumulate(samples);
  });

  WindowBuild wb = build_window_bank(state.bin_sums, specs, cfg);
  const std::size_t emit_end = state.grid.span_end(cfg.init_frames - 1);
  state.log.push_back(make_record(wb, 0, 0, emit_end));
  state.bank = std::move(wb.bank);
  state.bin_demixers = std::move(wb.sorted_demixers);

  auto out = demix_span(mix, state.bank, 0, emit_end);
  state.emitted.sample_rate = mix.sample_rate;
  state.emitted.channels = std::move(out);
  state.window_start = 0;
  state.update_count = 0;
  return state;
}

void step_update(SeparationState& state, const TimeSeries& mix, const SeparationConfig& cfg) {
  if (cfg.frame_len != state.cfg.frame_len || cfg.overlap != state.cfg.overlap)
    throw std::invalid_argument("frame layout cannot change between updates");
  const FrameGrid& grid = state.grid;
  const std::size_t ws = state.window_start;
  const std::size_t n_t = cfg.init_frames;
  const std::size_t stride = cfg.update_frames;

  if (ws + stride + n_t > grid.num_frames)
    throw std::invalid_argument("insufficient new data for an update");

  const auto removed = frame_spectra(mix, grid, ws, ws + stride);
  const auto added = frame_spectra(mix, grid, ws + n_t, ws + n_t + stride);
  parallel_for(state.bin_sums.size(), [&](std::size_t b) {
    state.bin_sums[b] =
        slide_update(state.bin_sums[b], bin_samples(removed, b), bin_samples(added, b));
  });

  const std::size_t new_start = ws + stride;
  const auto window_specs = frame_spectra(mix, grid, new_start, new_start + n_t);
  WindowBuild wb = build_window_bank(state.bin_sums, window_specs, cfg, &state.bin_demixers);

  const std::size_t emitted_before = state.emitted.length();
  const std::size_t overlap_len = cfg.align_frames * grid.hop;
  const std::size_t new_len = stride * grid.hop;

  const auto cand_overlap =
      demix_span(mix, wb.bank, emitted_before - overlap_len, emitted_before);
  std::vector<std::vector<double>> prev_overlap(2);
  for (std::size_t ch = 0; ch < 2; ++ch)
    prev_overlap[ch].assign(state.emitted.channels[ch].end() - static_cast<long>(overlap_len),
                            state.emitted.channels[ch].end());

  const TimeAlignment ta =
      time_permutation(prev_overlap, cand_overlap, cfg.align_max_lag, cfg.lag_aggregate);

  DemixFilterBank permuted = wb.bank;
  if (ta.perm != std::vector<int>{0, 1}) {
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        permuted.taps[i * 2 + j] = wb.bank.taps[static_cast<std::size_t>(ta.perm[i]) * 2 + j];
    std::swap(permuted.tail_energy_fraction[0], permuted.tail_energy_fraction[1]);
  }
  state.bank = continuity_normalize(permuted, state.bank, ta.signs);

  // keep the carried per-bin demixers in the emitted row order and polarity
  state.bin_demixers = std::move(wb.sorted_demixers);
  for (auto& m : state.bin_demixers) {
    Eigen::Matrix2cd adjusted;
    for (int i = 0; i < 2; ++i)
      adjusted.row(i) = ta.signs[static_cast<std::size_t>(i)] *
                        m.row(ta.perm[static_cast<std::size_t>(i)]);
    m = adjusted;
  }

  const auto fresh = demix_span(mix, state.bank, emitted_before, emitted_before + new_len);
  for (std::size_t ch = 0; ch < 2; ++ch)
    state.emitted.channels[ch].insert(state.emitted.channels[ch].end(), fresh[ch].begin(),
                                      fresh[ch].end());

  state.window_start = new_start;
  state.update_count += 1;

  UpdateDiagnostics d = make_record(wb, state.update_count, new_start, state.emitted.length());
  d.time_perm = ta.perm;
  d.time_signs = ta.signs;
  d.time_match = ta.match;
  d.time_margin = ta.margin;
  d.time_confident = ta.confident;
  d.tail_energy_fraction = state.bank.tail_energy_fraction;
  state.log.push_back(std::move(d));
}

SeparationResult separate_batch(const TimeSeries& mix, const SeparationConfig& cfg) {
  cfg.validate();
  mix.validate();
  if (mix.num_channels() != 2) throw std::invalid_argument("separation needs exactly 2 channels");
  const FrameGrid grid = make_grid(mix.length(), cfg.frame_len, cfg.overlap);
  if (grid.num_frames < cfg.batch_frames)
    throw std::invalid_argument("input shorter than the batch statistics window");

  const auto specs = frame_spectra(mix, grid, 0, cfg.batch_frames);
  const std::size_t bins = cfg.frame_len / 2 + 1;
  std::vector<MomentSums> sums(bins);
  parallel_for(bins, [&](std::size_t b) { sums[b] = accumulate(bin_samples(specs, b)); });

  WindowBuild wb = build_window_bank(sums, specs, cfg);
  SeparationResult res;
  res.output = apply_demix(mix, wb.bank);
  res.log.push_back(make_record(wb, 0, 0, res.output.length()));
  res.bank = std::move(wb.bank);
  return res;
}

SeparationResult separate_dynamic(const TimeSeries& mix, const SeparationConfig& cfg) {
  SeparationState state = init_state(mix, cfg);
  while (state.window_start + cfg.update_frames + cfg.init_frames <= state.grid.num_frames)
    step_update(state, mix, cfg);
  SeparationResult res;
  res.output = std::move(state.emitted);
  res.log = std::move(state.log);
  res.bank = std::move(state.bank);
  return res;
}

nlohmann::json diagnostics_to_json(const UpdateDiagnostics& d) {
  nlohmann::json j;
  j["update"] = d.update_index;
  j["window_start_frame"] = d.window_start_frame;
  j["reference_bin"] = d.reference_bin;
  j["reference_quality"] = d.reference_quality;
  j["sort_margin_min"] = d.sort_margin_min;
  j["sort_margin_mean"] = d.sort_margin_mean;
  j["unsortable_bins"] = d.unsortable_bins;
  j["degenerate_bins"] = d.degenerate_bins;
  j["wls_residual"] = d.wls_residual;
  j["wls_baseline"] = d.wls_baseline;
  j["tail_energy_fraction"] = d.tail_energy_fraction;
  j["perm_parity"] = d.perm_parity;
  j["time_perm"] = d.time_perm;
  j["time_signs"] = d.time_signs;
  j["time_match"] = d.time_match;
  j["time_margin"] = d.time_margin;
  j["time_confident"] = d.time_confident;
  j["emitted_samples"] = d.emitted_samples;
  return j;
}

void write_diagnostics_jsonl(const std::vector<UpdateDiagnostics>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write diagnostics to " + path);
  for (const auto& d : log) out << diagnostics_to_json(d).dump() << '\n';
}

}  // namespace unmix
