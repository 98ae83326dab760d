#include "unmix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "unmix/stats.hpp"

namespace unmix {

namespace {

std::span<const double> head(const std::vector<double>& v, std::size_t len) {
  return {v.data(), len};
}

std::string sibling_json_path(const std::string& csv_path) {
  // a trailing .partial staging suffix stays on the twin so callers can
  // finalize both files atomically
  std::string path = csv_path;
  std::string staging;
  const std::string partial = ".partial";
  if (path.size() > partial.size() &&
      path.compare(path.size() - partial.size(), partial.size(), partial) == 0) {
    staging = partial;
    path.resize(path.size() - partial.size());
  }
  const auto dot = path.find_last_of('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return path + ".json" + staging;
  return path.substr(0, dot) + ".json" + staging;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.8g", v);
  return buf;
}

}  // namespace

EvalReport evaluate(const TimeSeries& separated, const TimeSeries& mixtures,
                    const TimeSeries* sources, int max_lag) {
  separated.validate();
  mixtures.validate();
  if (separated.num_channels() != 2 || mixtures.num_channels() != 2)
    throw std::invalid_argument("evaluation needs 2-channel separated and mixture pairs");
  if (sources) {
    sources->validate();
    if (sources->num_channels() != 2)
      throw std::invalid_argument("evaluation needs a 2-channel source pair");
  }

  std::size_t len = std::min(separated.length(), mixtures.length());
  if (sources) len = std::min(len, sources->length());
  if (len <= 2 * static_cast<std::size_t>(max_lag))
    throw std::invalid_argument("signals too short for the lag bound");

  EvalReport rep;
  rep.max_lag = max_lag;
  rep.compared_samples = len;
  rep.rho_bar_mixtures =
      rho_maxlag(head(mixtures.channels[0], len), head(mixtures.channels[1], len), max_lag);
  rep.rho_bar_separated =
      rho_maxlag(head(separated.channels[0], len), head(separated.channels[1], len), max_lag);

  nlohmann::json meta;
  meta["K2"] = max_lag;
  meta["compared_samples"] = len;
  meta["separated_length"] = separated.length();
  meta["mixtures_length"] = mixtures.length();

  if (sources) {
    rep.rho_bar_sources =
        rho_maxlag(head(sources->channels[0], len), head(sources->channels[1], len), max_lag);
    double r[2][2];
    for (int x = 0; x < 2; ++x)
      for (int s = 0; s < 2; ++s)
        r[x][s] = rho_maxlag(head(separated.channels[static_cast<std::size_t>(x)], len),
                             head(sources->channels[static_cast<std::size_t>(s)], len), max_lag);
    // permutation-agnostic matching of separated channels to sources
    if (r[0][0] + r[1][1] >= r[0][1] + r[1][0])
      rep.source_match = {0, 1};
    else
      rep.source_match = {1, 0};
    const int x1 = rep.source_match[0];
    const int x2 = rep.source_match[1];
    rep.ratio_1 = r[x1][0] / r[x1][1];
    rep.ratio_2 = r[x2][0] / r[x2][1];
    meta["sources_length"] = sources->length();
    meta["source_match"] = rep.source_match;
    meta["rho_bar_vs_sources"] = {{r[0][0], r[0][1]}, {r[1][0], r[1][1]}};
  }
  rep.metadata_json = meta.dump();
  return rep;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["rho_bar_mixtures"] = report.rho_bar_mixtures;
  j["rho_bar_separated"] = report.rho_bar_separated;
  if (report.rho_bar_sources) j["rho_bar_sources"] = *report.rho_bar_sources;
  if (report.ratio_1) j["ratio_1"] = *report.ratio_1;
  if (report.ratio_2) j["ratio_2"] = *report.ratio_2;
  j["K2"] = report.max_lag;
  j["compared_samples"] = report.compared_samples;
  j["metadata"] = nlohmann::json::parse(report.metadata_json.empty() ? "{}" : report.metadata_json);
  return j;
}

void write_report(const EvalReport& report, const std::string& csv_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write report to " + csv_path);
  csv << "rho_bar_mixtures,rho_bar_separated,rho_bar_sources,ratio_1,ratio_2,K2\n";
  csv << fmt(report.rho_bar_mixtures) << ',' << fmt(report.rho_bar_separated) << ',';
  if (report.rho_bar_sources) csv << fmt(*report.rho_bar_sources);
  csv << ',';
  if (report.ratio_1) csv << fmt(*report.ratio_1);
  csv << ',';
  if (report.ratio_2) csv << fmt(*report.ratio_2);
  csv << ',' << report.max_lag << '\n';
  if (!csv) throw std::runtime_error("short write to " + csv_path);

  const std::string json_path = sibling_json_path(csv_path);
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("cannot write report to " + json_path);
  js << report_to_json(report).dump(2) << '\n';
}

std::span<const ReferenceCorrelations> reference_correlations() {
  static const ReferenceCorrelations rows[] = {
      {"(2)-A", 0.6240, 0.0503, 0.0673, 0.0201},
      {"(2)-B", 0.6240, 0.0182, 0.0600, 0.0201},
      {"(3)-A", 0.4613, 0.0351, 0.0378, 0.0243},
      {"(3)-B", 0.4613, 0.0267, 0.0677, 0.0243},
  };
  return rows;
}

std::span<const ReferenceRatios> reference_ratios() {
  static const ReferenceRatios rows[] = {
      {"dyn. s1 (A)", 4.5899, 4.5096},   {"dyn. s2 (A)", 0.1086, 0.2852},
      {"dyn. s1 (B)", 5.3083, 5.8411},   {"dyn. s2 (B)", 0.0494, 0.2799},
      {"bat. s1 (A)", 15.0912, 1.4632},  {"bat. s2 (A)", 0.0760, 0.1665},
      {"bat. s1 (B)", 6.2227, 25.8122},  {"bat. s2 (B)", 0.0636, 0.1719},
  };
  return rows;
}

}  // namespace unmix
