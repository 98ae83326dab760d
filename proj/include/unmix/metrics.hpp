#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "unmix/types.hpp"

namespace unmix {

struct EvalReport {
  double rho_bar_mixtures = 0.0;
  double rho_bar_separated = 0.0;
  std::optional<double> rho_bar_sources;
  // Per separated channel x matched to source i: rho_bar(x, s1) / rho_bar(x, s2).
  std::optional<double> ratio_1;
  std::optional<double> ratio_2;
  std::array<int, 2> source_match{0, 1};  // separated channel paired with each source
  int max_lag = 20;                       // K2
  std::size_t compared_samples = 0;
  std::string metadata_json;  // config echo: lengths, trimming, matching
};

// Lagged-correlation evaluation of a separation run. All series are trimmed
// from the end to the shortest length. Separated channels are matched to
// sources by maximizing rho_bar, so the report is permutation-agnostic.
EvalReport evaluate(const TimeSeries& separated, const TimeSeries& mixtures,
                    const TimeSeries* sources = nullptr, int max_lag = 20);

// CSV row plus a JSON twin (same path with .json extension) carrying the full
// metadata.
void write_report(const EvalReport& report, const std::string& csv_path);

nlohmann::json report_to_json(const EvalReport& report);

// Published reference results for the two synthetic evaluation cases, shown
// alongside fresh runs for context. The recordings and mixing filters behind
// them are not distributed, so these numbers are not reproducible here.
struct ReferenceCorrelations {
  const char* label;
  double mixture;
  double dynamic_sep;
  double batch_sep;
  double sources;
};

struct ReferenceRatios {
  const char* label;
  double case2;
  double case3;
};

std::span<const ReferenceCorrelations> reference_correlations();
std::span<const ReferenceRatios> reference_ratios();

}  // namespace unmix
