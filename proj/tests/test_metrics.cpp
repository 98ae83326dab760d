#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "test_support.hpp"
#include "unmix/metrics.hpp"
#include "unmix/signal_io.hpp"

using namespace unmix;

namespace {

TimeSeries two_channel(std::vector<double> a, std::vector<double> b) {
  return TimeSeries{{std::move(a), std::move(b)}, 16000.0};
}

}  // namespace

TEST_CASE("evaluation of a perfect separation") {
  auto g = testsup::rng(101);
  const auto s1 = testsup::random_real(g, 4000);
  const auto s2 = testsup::random_real(g, 4000);
  const TimeSeries sources = two_channel(s1, s2);
  // mixtures share content, separated equals the sources exactly
  std::vector<double> m1(4000), m2(4000);
  for (std::size_t k = 0; k < 4000; ++k) {
    m1[k] = s1[k] + 0.6 * s2[k];
    m2[k] = 0.5 * s1[k] + s2[k];
  }
  const TimeSeries mixtures = two_channel(m1, m2);
  const EvalReport rep = evaluate(sources, mixtures, &sources, 20);
  CHECK(rep.rho_bar_separated == doctest::Approx(*rep.rho_bar_sources));
  CHECK(rep.rho_bar_mixtures > 0.5);
  REQUIRE(rep.ratio_1);
  REQUIRE(rep.ratio_2);
  CHECK(*rep.ratio_1 > 1.0);
  CHECK(*rep.ratio_2 < 1.0);
  CHECK(rep.source_match == std::array<int, 2>{0, 1});
}

TEST_CASE("matching is permutation agnostic") {
  auto g = testsup::rng(102);
  const auto s1 = testsup::random_real(g, 4000);
  const auto s2 = testsup::random_real(g, 4000);
  const TimeSeries sources = two_channel(s1, s2);
  const TimeSeries swapped = two_channel(s2, s1);
  std::vector<double> m1(4000), m2(4000);
  for (std::size_t k = 0; k < 4000; ++k) {
    m1[k] = s1[k] + 0.6 * s2[k];
    m2[k] = 0.5 * s1[k] + s2[k];
  }
  const TimeSeries mixtures = two_channel(m1, m2);
  const EvalReport rep = evaluate(swapped, mixtures, &sources, 20);
  CHECK(rep.source_match == std::array<int, 2>{1, 0});
  CHECK(*rep.ratio_1 > 1.0);
  CHECK(*rep.ratio_2 < 1.0);
}

TEST_CASE("rho_bar symmetry and scale invariance") {
  auto g = testsup::rng(103);
  const auto a = testsup::random_real(g, 3000);
  const auto b = testsup::random_real(g, 3000);
  // correlate them a bit
  auto c = b;
  for (std::size_t k = 0; k < c.size(); ++k) c[k] += 0.5 * a[k];
  CHECK(std::abs(rho_maxlag(a, c, 20) - rho_maxlag(c, a, 20)) < 1e-12);
  auto scaled = c;
  for (auto& v : scaled) v *= 123.0;
  CHECK(std::abs(rho_maxlag(a, scaled, 20) - rho_maxlag(a, c, 20)) < 1e-12);
}

TEST_CASE("length trimming and determinism") {
  auto g = testsup::rng(104);
  const auto s1 = testsup::random_real(g, 5000);
  const auto s2 = testsup::random_real(g, 5000);
  TimeSeries separated = two_channel(s1, s2);
  for (auto& ch : separated.channels) ch.resize(4200);  // shorter than the rest
  std::vector<double> m1(5000), m2(5000);
  for (std::size_t k = 0; k < 5000; ++k) {
    m1[k] = s1[k] + 0.5 * s2[k];
    m2[k] = 0.4 * s1[k] + s2[k];
  }
  const TimeSeries mixtures = two_channel(m1, m2);
  const TimeSeries sources = two_channel(s1, s2);
  const EvalReport rep1 = evaluate(separated, mixtures, &sources, 20);
  const EvalReport rep2 = evaluate(separated, mixtures, &sources, 20);
  CHECK(rep1.compared_samples == 4200);
  CHECK(rep1.rho_bar_mixtures == rep2.rho_bar_mixtures);
  CHECK(rep1.metadata_json == rep2.metadata_json);
}

TEST_CASE("report files") {
  auto g = testsup::rng(105);
  const auto s1 = testsup::random_real(g, 3000);
  const auto s2 = testsup::random_real(g, 3000);
  const TimeSeries sources = two_channel(s1, s2);
  std::vector<double> m1(3000), m2(3000);
  for (std::size_t k = 0; k < 3000; ++k) {
    m1[k] = s1[k] + 0.6 * s2[k];
    m2[k] = 0.5 * s1[k] + s2[k];
  }
  const EvalReport rep = evaluate(sources, two_channel(m1, m2), &sources, 20);

  const auto dir = std::filesystem::temp_directory_path();
  const std::string csv_path = (dir / "unmix_report.csv").string();
  write_report(rep, csv_path);

  SUBCASE("csv has a header and one data row") {
    std::ifstream in(csv_path);
    std::string header, row, extra;
    REQUIRE(std::getline(in, header));
    REQUIRE(std::getline(in, row));
    CHECK(!std::getline(in, extra));
    CHECK(header == "rho_bar_mixtures,rho_bar_separated,rho_bar_sources,ratio_1,ratio_2,K2");
    // six comma-separated fields
    CHECK(std::count(row.begin(), row.end(), ',') == 5);
  }
  SUBCASE("json twin round-trips the values") {
    std::ifstream in((dir / "unmix_report.json").string());
    REQUIRE(in.good());
    const nlohmann::json j = nlohmann::json::parse(in);
    CHECK(j.at("rho_bar_mixtures").get<double>() == doctest::Approx(rep.rho_bar_mixtures));
    CHECK(j.at("ratio_1").get<double>() == doctest::Approx(*rep.ratio_1));
    CHECK(j.at("K2").get<int>() == 20);
    CHECK(j.contains("metadata"));
  }
  SUBCASE("values carry at least six significant digits") {
    std::ifstream in(csv_path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    std::stringstream ss(row);
    std::string field;
    std::getline(ss, field, ',');
    double parsed = std::stod(field);
    CHECK(std::abs(parsed - rep.rho_bar_mixtures) <= 1e-6 * std::abs(rep.rho_bar_mixtures));
  }
  std::filesystem::remove(csv_path);
  std::filesystem::remove(dir / "unmix_report.json");
}

TEST_CASE("evaluation without sources") {
  auto g = testsup::rng(106);
  const TimeSeries pair = two_channel(testsup::random_real(g, 2000), testsup::random_real(g, 2000));
  const EvalReport rep = evaluate(pair, pair, nullptr, 20);
  CHECK_FALSE(rep.rho_bar_sources);
  CHECK_FALSE(rep.ratio_1);
  const std::string csv_path =
      (std::filesystem::temp_directory_path() / "unmix_nosrc.csv").string();
  write_report(rep, csv_path);
  std::ifstream in(csv_path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(row.find(",,,") != std::string::npos);  // empty optional fields
  std::filesystem::remove(csv_path);
  std::filesystem::remove(std::filesystem::temp_directory_path() / "unmix_nosrc.json");
}

TEST_CASE("published reference tables") {
  const auto corr = reference_correlations();
  REQUIRE(corr.size() == 4);
  bool found = false;
  for (const auto& row : corr)
    if (std::string(row.label) == "(2)-A") {
      found = true;
      CHECK(row.mixture == doctest::Approx(0.6240));
      CHECK(row.dynamic_sep == doctest::Approx(0.0503));
      CHECK(row.batch_sep == doctest::Approx(0.0673));
      CHECK(row.sources == doctest::Approx(0.0201));
    }
  CHECK(found);
  const auto ratios = reference_ratios();
  REQUIRE(ratios.size() == 8);
  CHECK(ratios[0].case2 == doctest::Approx(4.5899));
  CHECK(ratios[1].case2 == doctest::Approx(0.1086));
}

TEST_CASE("input validation") {
  auto g = testsup::rng(107);
  const TimeSeries pair = two_channel(testsup::random_real(g, 500), testsup::random_real(g, 500));
  const TimeSeries mono{{testsup::random_real(g, 500)}, 16000.0};
  CHECK_THROWS_AS(static_cast<void>(evaluate(mono, pair, nullptr, 20)), std::invalid_argument);
  CHECK_THROWS_AS(static_cast<void>(evaluate(pair, mono, nullptr, 20)), std::invalid_argument);
  CHECK_THROWS_AS(static_cast<void>(evaluate(pair, pair, &mono, 20)), std::invalid_argument);
  const TimeSeries tiny = two_channel(testsup::random_real(g, 30), testsup::random_real(g, 30));
  CHECK_THROWS_AS(static_cast<void>(evaluate(tiny, tiny, nullptr, 20)), std::invalid_argument);
}
