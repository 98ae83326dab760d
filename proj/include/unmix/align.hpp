#pragma once

#include <cstddef>
#include <vector>

#include "unmix/types.hpp"

namespace unmix {

// Per-channel amplitude sequences |s_i(t)| at one frequency bin.
using BinAmplitudes = std::vector<std::vector<double>>;

// Reference-bin selection: search the quality table (choice A) or fix the
// low-frequency bin 4/T (choice B).
enum class ReferenceMode { search, fixed_low_bin };

// Lag aggregation inside the sorting objectives: max_k |rho| (default) or
// sum_k |rho|.
enum class LagAggregate { max_abs, sum_abs };

struct BinQuality {
  double value = 0.0;    // sum over ordered channel pairs of the lagged |rho| aggregate
  bool sortable = true;  // false when a channel amplitude has no variance
};

// Residual cross-channel similarity per bin; low values mean well-separated.
std::vector<BinQuality> separation_quality(const std::vector<BinAmplitudes>& bins,
                                           int max_lag,
                                           LagAggregate agg = LagAggregate::max_abs);

// Choice A: argmin of quality over sortable bins in [lo_bin, hi_bin], ties to
// the lowest bin. Choice B: bin 4 without consulting the table.
std::size_t select_reference(const std::vector<BinQuality>& quality, ReferenceMode mode,
                             std::size_t lo_bin, std::size_t hi_bin);

struct PermutationChoice {
  std::vector<int> perm;   // output slot i takes candidate channel perm[i]
  double objective = 0.0;
  double margin = 0.0;     // best minus second-best objective
  bool sortable = true;    // false -> identity returned with zero margin
};

// Best pairing of candidate channels onto reference channels under the
// summed lagged-|rho| objective.
PermutationChoice frequency_permutation(const BinAmplitudes& reference,
                                        const BinAmplitudes& candidate, int max_lag,
                                        LagAggregate agg = LagAggregate::max_abs);

struct TimeAlignment {
  std::vector<int> perm;
  std::vector<double> signs;  // +-1 per output slot, from rho at the best lag
  std::vector<double> match;  // per slot, the aggregated |rho| of the pairing
  double objective = 0.0;
  double margin = 0.0;
  bool confident = true;
};

// Order/sign alignment of a candidate segment against previously emitted
// output on their shared interval.
TimeAlignment time_permutation(const std::vector<std::vector<double>>& previous,
                               const std::vector<std::vector<double>>& candidate,
                               int max_lag, LagAggregate agg = LagAggregate::max_abs);

struct PermutationPlan {
  std::size_t reference_bin = 0;
  std::vector<std::vector<int>> perms;  // per bin
  std::vector<double> margins;
  std::vector<BinQuality> quality;
  std::vector<bool> inherited;  // sigma copied from the nearest lower sorted bin
};

struct AlignOptions {
  ReferenceMode mode = ReferenceMode::search;
  int max_lag = 15;  // K0
  LagAggregate aggregate = LagAggregate::max_abs;
  std::size_t search_lo = 0;
  std::size_t search_hi = 0;  // 0 -> last bin
  // Bins forced out of sorting (degenerate demixers); they inherit sigma.
  std::vector<bool> excluded;
  // Bins sorted normally but barred from being the reference (weak content
  // makes their quality value meaninglessly small).
  std::vector<bool> reference_excluded;
  // When the incoming channel order is already trustworthy (sliding updates
  // seeded from the previous window), keep it unless the sorting margin
  // clears min_margin; unsortable bins then also keep the incoming order.
  bool prefer_incumbent = false;
  double min_margin = 0.0;
};

// Full frequency-domain sort: pick the reference bin, align every other bin
// directly against it in increasing bin order, and let unsortable bins
// inherit the nearest lower sorted permutation.
PermutationPlan plan_permutations(const std::vector<BinAmplitudes>& bins,
                                  const AlignOptions& opts);

}  // namespace unmix
