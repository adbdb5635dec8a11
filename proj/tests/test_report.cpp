// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "loom/report.hpp"

using namespace loom;

namespace {

json load_table() {
  std::ifstream in(std::string(LOOM_TEST_DATA_DIR) + "/reference_leaderboard.json");
  REQUIRE(in);
  return json::parse(in);
}

std::map<std::string, double> row_scores(const json& table, const json& row) {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < table["benchmarks"].size(); ++i)
    out[table["benchmarks"][i].get<std::string>()] = row["scores"][i].get<double>();
  return out;
}

MetricResult result(double score, bool failed = false) {
  MetricResult r;
  r.instance_id = "i";
  r.metric_kind = "exact";
  r.score = score;
  if (failed) r.detail = "backend_failure: timeout";
  return r;
}

}  // namespace

TEST_CASE("fixed-point helpers") {
  CHECK(to_micro(0.1234565) == 123457);
  CHECK(mean_centi({1'000'000, 2'000'000}) == 150);
  CHECK(mean_centi({5000}) == 1);   // 0.005 rounds half up
  CHECK(mean_centi({4999}) == 0);
  CHECK(format_centi(5154) == "51.54");
  CHECK(format_centi(10000) == "100.00");
  CHECK(format_centi(-5) == "-0.05");
  CHECK(round2(2.675) == 2.68);
  CHECK(round2(1.005) == 1.01);
}

TEST_CASE("aggregate_benchmark: mean, failures and empty input") {
  const auto s = aggregate_benchmark("B", {result(1), result(1), result(0.5), result(0)});
  CHECK(s.mean_score == 62.5);
  CHECK(s.instance_count == 4);
  CHECK(s.failure_count == 0);

  const auto f = aggregate_benchmark("B", {result(1), result(1, true)});
  CHECK(f.mean_score == 50.0);
  CHECK(f.failure_count == 1);
  CHECK_THROWS_AS(aggregate_benchmark("B", {}), std::invalid_argument);

  CHECK(benchmark_score_from_json(to_json(s)) == s);
}

TEST_CASE("reference leaderboard: every row reproduces its average") {
  const auto table = load_table();
  REQUIRE(table["rows"].size() == 14);
  for (const auto& row : table["rows"]) {
    CAPTURE(row["model_id"].get<std::string>());
    const auto scores = row_scores(table, row);
    CHECK(overall_score(scores, default_taxonomy()) == row["avg"].get<double>());
  }
}

TEST_CASE("reference leaderboard: capability means and ranking") {
  const auto table = load_table();
  std::vector<CapabilityReport> reports;
  for (const auto& row : table["rows"])
    reports.push_back(capability_scores(row["model_id"], row_scores(table, row), default_taxonomy()));

  const auto& qwen = reports.front();
  CHECK(qwen.model_id == "Qwen3-14B");
  CHECK(qwen.overall == 51.54);
  CHECK(qwen.capability.at(Capability::General) == 54.75);
  CHECK(qwen.capability.at(Capability::Faithfulness) == 35.64);
  CHECK(qwen.capability.size() == 6);

  const auto board = build_leaderboard(reports);
  REQUIRE(board.size() == table["rows"].size());
  for (std::size_t i = 0; i < board.size(); ++i) {
    CHECK(board[i].rank == table["rows"][i]["rank"].get<int>());
    CHECK(board[i].report->model_id == table["rows"][i]["model_id"].get<std::string>());
  }

  std::mt19937_64 rng(6);
  auto shuffled = reports;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto again = build_leaderboard(shuffled);
  for (std::size_t i = 0; i < board.size(); ++i) CHECK(again[i].report->model_id == board[i].report->model_id);
}

TEST_CASE("overall_score: missing benchmarks and singleton capabilities") {
  std::map<std::string, double> scores{{"L_CiteEval", 40.0}};
  try {
    overall_score(scores, default_taxonomy());
    FAIL("expected MissingBenchmarksError");
  } catch (const MissingBenchmarksError& e) {
    CHECK(e.missing().size() == 11);
    CHECK(std::find(e.missing().begin(), e.missing().end(), "NIAH") != e.missing().end());
  }
  CapabilityTaxonomy one{{{Capability::Retrieval, {"NIAH"}}}};
  const auto r = capability_scores("m", std::map<std::string, double>{{"NIAH", 87.125}}, one);
  CHECK(r.capability.at(Capability::Retrieval) == 87.13);
  CHECK(r.overall == 87.13);
  CHECK(r.capability.count(Capability::General) == 0);
}

TEST_CASE("build_leaderboard: ties break by model id") {
  std::vector<CapabilityReport> reports(3);
  reports[0].model_id = "zeta";
  reports[0].overall = 50.0;
  reports[1].model_id = "alpha";
  reports[1].overall = 50.0;
  reports[2].model_id = "mid";
  reports[2].overall = 70.0;
  const auto board = build_leaderboard(reports);
  CHECK(board[0].report->model_id == "mid");
  CHECK(board[1].report->model_id == "alpha");
  CHECK(board[2].report->model_id == "zeta");
  CHECK(board[2].rank == 3);
}

TEST_CASE("timing_summary and format_hms") {
  const auto t = timing_summary({{"A", 0, 1500}, {"B", 1500, 4000}, {"A", 5000, 5500}});
  CHECK(t.total_ms == 4500);
  REQUIRE(t.durations_ms.size() == 2);
  CHECK(t.durations_ms[0] == std::pair<std::string, std::int64_t>{"A", 2000});
  CHECK(t.durations_ms[1] == std::pair<std::string, std::int64_t>{"B", 2500});
  CHECK_THROWS_AS(timing_summary({{"A", 10, 5}}), std::invalid_argument);
  CHECK(format_hms(0) == "0:00:00");
  CHECK(format_hms(3'725'999) == "1:02:05");
  CHECK(format_hms(100LL * 3600 * 1000) == "100:00:00");
  CHECK(to_json(t)["total_ms"] == 4500);
}

TEST_CASE("emit_report: formats and JSON round-trip") {
  const auto table = load_table();
  ReportBundle bundle{default_taxonomy(), {}};
  for (const auto& row : table["rows"])
    bundle.reports.push_back(capability_scores(row["model_id"], row_scores(table, row), default_taxonomy()));

  const auto text = emit_report(bundle, ReportFormat::Json);
  CHECK(text == emit_report(bundle, ReportFormat::Json));
  const auto back = report_bundle_from_json(json::parse(text));
  CHECK(back.reports == bundle.reports);
  CHECK(back.taxonomy.members == bundle.taxonomy.members);

  const auto csv = emit_report(bundle, ReportFormat::Csv);
  CHECK(csv.rfind("model_id,overall,L_CiteEval,LEval,", 0) == 0);
  CHECK(csv.find("Qwen3-14B,51.54,35.64,") != std::string::npos);

  const auto md = emit_report(bundle, ReportFormat::Markdown);
  CHECK(md.find("| 1 | Qwen3-14B |") != std::string::npos);
  CHECK(md.find("51.54") != std::string::npos);

  const auto radar = json::parse(emit_report(bundle, ReportFormat::RadarJson));
  CHECK(radar["axes"].size() == 6);
  CHECK(radar["models"].size() == 14);
  CHECK(radar["models"][0]["values"][1] == 54.75);

  CHECK(parse_report_format("md") == ReportFormat::Markdown);
  CHECK(parse_report_format("radar") == ReportFormat::RadarJson);
  CHECK_FALSE(parse_report_format("xml").has_value());
}
