#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "unmix/align.hpp"
#include "unmix/rescale.hpp"
#include "unmix/spectral.hpp"
#include "unmix/stats.hpp"
#include "unmix/types.hpp"

namespace unmix {

struct SeparationConfig {
  std::size_t frame_len = 256;  // T, power of two
  double overlap = 0.5;
  std::size_t init_frames = 100;    // statistics window length, frames
  std::size_t update_frames = 20;   // window advance per update
  std::size_t align_frames = 40;    // shared interval used for order/sign alignment
  std::size_t batch_frames = 160;   // statistics window of the batch mode
  int sort_max_lag = 15;            // K0
  int align_max_lag = 20;           // K1
  int eval_max_lag = 20;            // K2
  double weight_base = 1.04;        // beta
  std::size_t support_start = 2;    // q
  // strength of the pull toward unit per-bin gain inside the scaling solve
  double gain_prior = 0.5;
  ReferenceMode reference = ReferenceMode::search;
  std::size_t search_lo = 0;
  std::size_t search_hi = 0;  // 0 -> T/2
  LagAggregate lag_aggregate = LagAggregate::max_abs;
  std::uint64_t seed = 0;  // echoed into diagnostics/reports

  void validate() const;
};

// Table-row presets for the three published evaluation cases.
SeparationConfig preset_case1();
SeparationConfig preset_case2();
SeparationConfig preset_case3();

struct UpdateDiagnostics {
  std::size_t update_index = 0;
  std::size_t window_start_frame = 0;
  std::size_t reference_bin = 0;
  double reference_quality = 0.0;  // C at the reference bin
  double sort_margin_min = 0.0;
  double sort_margin_mean = 0.0;
  std::size_t unsortable_bins = 0;
  std::size_t degenerate_bins = 0;
  double wls_residual = 0.0;  // summed over rows
  double wls_baseline = 0.0;
  std::vector<double> tail_energy_fraction;
  // 0 = identity, 1 = swapped, per bin 0..T/2; order is relative to the
  // reference bin of this window
  std::vector<int> perm_parity;
  std::vector<int> time_perm;
  std::vector<double> time_signs;
  // per output channel, |rho| against the previous output at the chosen
  // pairing's best lag
  std::vector<double> time_match;
  double time_margin = 0.0;
  bool time_confident = true;
  std::size_t emitted_samples = 0;
};

nlohmann::json diagnostics_to_json(const UpdateDiagnostics& d);
void write_diagnostics_jsonl(const std::vector<UpdateDiagnostics>& log, const std::string& path);

struct SeparationState {
  SeparationConfig cfg;
  FrameGrid grid;                    // over the full input
  std::size_t window_start = 0;      // first frame of the current window
  std::size_t update_count = 0;      // k
  std::vector<MomentSums> bin_sums;  // bins 0..T/2
  // per-bin inverse mixing estimates, rows aligned with the emitted channels;
  // they seed the next window's rotations so estimates deform continuously
  std::vector<Eigen::Matrix2cd> bin_demixers;
  DemixFilterBank bank;  // h^{(k)}
  TimeSeries emitted;
  std::vector<UpdateDiagnostics> log;
};

// Step I-III over the first init_frames frames: per-bin statistics, mixing
// estimates, permutation sorting, scaling, filter bank, and the initial
// separated output.
SeparationState init_state(const TimeSeries& mix, const SeparationConfig& cfg);

// Step IV: advance the statistics window by update_frames frames, rebuild the
// demixing bank, align order/sign against the already emitted output on the
// shared interval, enforce the diagonal-peak continuity rule, and append only
// the new samples.
void step_update(SeparationState& state, const TimeSeries& mix, const SeparationConfig& cfg);

struct SeparationResult {
  TimeSeries output;
  std::vector<UpdateDiagnostics> log;
  DemixFilterBank bank;
};

// Steps I-III once, statistics from the first batch_frames frames, demixing
// applied over the whole signal.
SeparationResult separate_batch(const TimeSeries& mix, const SeparationConfig& cfg);

// init_state followed by updates until the input is exhausted.
SeparationResult separate_dynamic(const TimeSeries& mix, const SeparationConfig& cfg);

}  // namespace unmix
