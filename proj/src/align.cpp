#include "unmix/align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "unmix/stats.hpp"

namespace unmix {

namespace {

struct LagScore {
  double value = 0.0;
  double sign_at_best = 1.0;
};

// Aggregated |rho| over lags in [-max_lag, max_lag], plus the rho sign at the
// strongest lag. nullopt when a stretch has no variance to correlate.
std::optional<LagScore> lag_score(std::span<const double> a, std::span<const double> b,
                                  int max_lag, LagAggregate agg) {
  LagScore out;
  double best_abs = -1.0;
  try {
    for (long k = -max_lag; k <= max_lag; ++k) {
      const double r = rho_at_lag(a, b, k);
      const double mag = std::abs(r);
      if (mag > best_abs) {
        best_abs = mag;
        out.sign_at_best = r >= 0.0 ? 1.0 : -1.0;
      }
      if (agg == LagAggregate::sum_abs)
        out.value += mag;
      else
        out.value = std::max(out.value, mag);
    }
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
  return out;
}

void check_channel_shape(const std::vector<std::vector<double>>& channels, int max_lag) {
  if (channels.empty()) throw std::invalid_argument("need at least one channel");
  const std::size_t frames = channels.front().size();
  for (const auto& ch : channels)
    if (ch.size() != frames) throw std::invalid_argument("channel lengths differ");
  if (frames <= 2 * static_cast<std::size_t>(std::max(0, max_lag)))
    throw std::invalid_argument("need more than 2*max_lag frames");
}

std::vector<std::vector<int>> all_permutations(int n) {
  std::vector<int> base(static_cast<std::size_t>(n));
  std::iota(base.begin(), base.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(base);
  } while (std::next_permutation(base.begin(), base.end()));
  return out;
}

}  // namespace

std::vector<BinQuality> separation_quality(const std::vector<BinAmplitudes>& bins, int max_lag,
                                           LagAggregate agg) {
  std::vector<BinQuality> out(bins.size());
  for (std::size_t b = 0; b < bins.size(); ++b) {
    check_channel_shape(bins[b], max_lag);
    const auto n = bins[b].size();
    BinQuality q;
    q.sortable = true;
    for (std::size_t i = 0; i < n && q.sortable; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const auto score = lag_score(bins[b][i], bins[b][j], max_lag, agg);
        if (!score) {
          q.sortable = false;
          q.value = 0.0;
          break;
        }
        q.value += score->value;
      }
    }
    out[b] = q;
  }
  return out;
}

std::size_t select_reference(const std::vector<BinQuality>& quality, ReferenceMode mode,
                             std::size_t lo_bin, std::size_t hi_bin) {
  if (mode == ReferenceMode::fixed_low_bin) {
    if (!quality.empty() && quality.size() <= 4)
      throw std::invalid_argument("too few bins for the fixed low-frequency reference");
    return 4;
  }
  if (quality.empty()) throw std::invalid_argument("empty quality table");
  hi_bin = std::min(hi_bin, quality.size() - 1);
  if (lo_bin > hi_bin) throw std::invalid_argument("empty reference search range");
  bool found = false;
  std::size_t best = lo_bin;
  for (std::size_t b = lo_bin; b <= hi_bin; ++b) {
    if (!quality[b].sortable) continue;
    if (!found || quality[b].value < quality[best].value) {
      best = b;
      found = true;
    }
  }
  if (!found) throw std::runtime_error("no sortable bin in the reference search range");
  return best;
}

PermutationChoice frequency_permutation(const BinAmplitudes& reference,
                                        const BinAmplitudes& candidate, int max_lag,
                                        LagAggregate agg) {
  check_channel_shape(reference, max_lag);
  check_channel_shape(candidate, max_lag);
  if (reference.size() != candidate.size())
    throw std::invalid_argument("channel counts differ");
  if (reference.front().size() != candidate.front().size())
    throw std::invalid_argument("frame counts differ");
  const auto n = static_cast<int>(reference.size());

  PermutationChoice out;
  out.perm.resize(static_cast<std::size_t>(n));
  std::iota(out.perm.begin(), out.perm.end(), 0);

  std::vector<std::vector<double>> score(static_cast<std::size_t>(n),
                                         std::vector<double>(static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto s = lag_score(reference[static_cast<std::size_t>(i)],
                               candidate[static_cast<std::size_t>(j)], max_lag, agg);
      if (!s) {
        out.sortable = false;
        return out;  // identity with zero margin
      }
      score[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = s->value;
    }
  }

  double best = -1.0, second = -1.0;
  for (const auto& perm : all_permutations(n)) {
    double obj = 0.0;
    for (int i = 0; i < n; ++i)
      obj += score[static_cast<std::size_t>(i)][static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    if (obj > best) {
      second = best;
      best = obj;
      out.perm = perm;
    } else if (obj > second) {
      second = obj;
    }
  }
  out.objective = best;
  out.margin = second < 0.0 ? best : best - second;
  out.sortable = true;
  return out;
}

TimeAlignment time_permutation(const std::vector<std::vector<double>>& previous,
                               const std::vector<std::vector<double>>& candidate, int max_lag,
                               LagAggregate agg) {
  check_channel_shape(previous, max_lag);
  check_channel_shape(candidate, max_lag);
  if (previous.size() != candidate.size()) throw std::invalid_argument("channel counts differ");
  if (previous.front().size() != candidate.front().size())
    throw std::invalid_argument("overlap lengths differ");
  const auto n = static_cast<int>(previous.size());

  TimeAlignment out;
  out.perm.resize(static_cast<std::size_t>(n));
  std::iota(out.perm.begin(), out.perm.end(), 0);
  out.signs.assign(static_cast<std::size_t>(n), 1.0);
  out.match.assign(static_cast<std::size_t>(n), 0.0);

  std::vector<std::vector<LagScore>> score(static_cast<std::size_t>(n),
                                           std::vector<LagScore>(static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto s = lag_score(previous[static_cast<std::size_t>(i)],
                               candidate[static_cast<std::size_t>(j)], max_lag, agg);
      if (!s) {
        out.confident = false;
        return out;  // identity, positive signs
      }
      score[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = *s;
    }
  }

  double best = -1.0, second = -1.0;
  for (const auto& perm : all_permutations(n)) {
    double obj = 0.0;
    for (int i = 0; i < n; ++i)
      obj += score[static_cast<std::size_t>(i)][static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])].value;
    if (obj > best) {
      second = best;
      best = obj;
      out.perm = perm;
    } else if (obj > second) {
      second = obj;
    }
  }
  for (int i = 0; i < n; ++i) {
    const auto& chosen =
        score[static_cast<std::size_t>(i)][static_cast<std::size_t>(out.perm[static_cast<std::size_t>(i)])];
    out.signs[static_cast<std::size_t>(i)] = chosen.sign_at_best;
    out.match[static_cast<std::size_t>(i)] = chosen.value;
  }
  out.objective = best;
  out.margin = second < 0.0 ? best : best - second;
  out.confident = out.margin > 0.0;
  return out;
}

PermutationPlan plan_permutations(const std::vector<BinAmplitudes>& bins,
                                  const AlignOptions& opts) {
  if (bins.empty()) throw std::invalid_argument("no bins to sort");
  const std::size_t num_bins = bins.size();
  const auto n = static_cast<int>(bins.front().size());
  std::vector<bool> excluded = opts.excluded;
  excluded.resize(num_bins, false);

  PermutationPlan plan;
  plan.quality.assign(num_bins, BinQuality{0.0, false});
  plan.perms.assign(num_bins, {});
  plan.margins.assign(num_bins, 0.0);
  plan.inherited.assign(num_bins, false);

  const std::size_t hi = opts.search_hi == 0 ? num_bins - 1 : std::min(opts.search_hi, num_bins - 1);
  const std::size_t lo = std::min(opts.search_lo, hi);

  if (opts.mode == ReferenceMode::search) {
    // quality over the search range only; excluded bins stay unsortable
    std::vector<BinAmplitudes> ranged(bins.begin() + static_cast<long>(lo),
                                      bins.begin() + static_cast<long>(hi) + 1);
    const auto q = separation_quality(ranged, opts.max_lag, opts.aggregate);
    for (std::size_t b = lo; b <= hi; ++b)
      plan.quality[b] = excluded[b] ? BinQuality{0.0, false} : q[b - lo];
    std::vector<BinQuality> selectable = plan.quality;
    for (std::size_t b = 0; b < num_bins && b < opts.reference_excluded.size(); ++b)
      if (opts.reference_excluded[b]) selectable[b].sortable = false;
    plan.reference_bin = select_reference(selectable, opts.mode, lo, hi);
  } else {
    plan.reference_bin = select_reference({}, opts.mode, lo, hi);
    if (plan.reference_bin >= num_bins)
      throw std::invalid_argument("too few bins for the fixed low-frequency reference");
    if (!excluded[plan.reference_bin]) {
      const auto q = separation_quality({bins[plan.reference_bin]}, opts.max_lag, opts.aggregate);
      plan.quality[plan.reference_bin] = q.front();
    }
  }

  std::vector<int> identity(static_cast<std::size_t>(n));
  std::iota(identity.begin(), identity.end(), 0);
  std::vector<int> last_sorted = identity;

  for (std::size_t b = 0; b < num_bins; ++b) {
    if (b == plan.reference_bin) {
      plan.perms[b] = identity;
      last_sorted = identity;
      continue;
    }
    if (excluded[b]) {
      plan.perms[b] = opts.prefer_incumbent ? identity : last_sorted;
      plan.inherited[b] = true;
      continue;
    }
    const auto choice =
        frequency_permutation(bins[plan.reference_bin], bins[b], opts.max_lag, opts.aggregate);
    if (choice.sortable && choice.margin >= opts.min_margin) {
      plan.perms[b] = choice.perm;
      plan.margins[b] = choice.margin;
      last_sorted = choice.perm;
    } else {
      plan.perms[b] = opts.prefer_incumbent ? identity : last_sorted;
      plan.inherited[b] = true;
    }
  }
  return plan;
}

}  // namespace unmix
