// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Score rollup (instance -> benchmark -> capability -> overall), leaderboards,
// radar data and timing summaries.
//
// All averaging is done on integer micro-units so that half-way cases round
// up deterministically; 2-decimal values are then exact in their printed form.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "loom/core.hpp"
#include "loom/evaluator.hpp"

namespace loom {

/// Thrown when a rollup is asked for benchmarks it has no score for.
class MissingBenchmarksError : public std::runtime_error {
 public:
  explicit MissingBenchmarksError(std::vector<std::string> missing);
  const std::vector<std::string>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::string> missing_;
};

/// x rounded to the nearest micro-unit (1e-6).
std::int64_t to_micro(double x);
/// Mean of micro-unit values, rounded half-up to hundredths, in hundredths.
std::int64_t mean_centi(const std::vector<std::int64_t>& micros);
/// "51.54", "-0.05", "100.00".
std::string format_centi(std::int64_t centi);
/// Half-up rounding of x to 2 decimals.
double round2(double x);

struct BenchmarkScore {
  std::string benchmark_id;
  double mean_score = 0.0;  // 0..100, micro-unit precision
  std::size_t instance_count = 0;
  std::size_t failure_count = 0;

  bool operator==(const BenchmarkScore&) const = default;
};

json to_json(const BenchmarkScore& s);
BenchmarkScore benchmark_score_from_json(const json& j);

/// 100 x mean of instance scores; failures count as 0. Throws
/// std::invalid_argument on empty input.
BenchmarkScore aggregate_benchmark(std::string benchmark_id, const std::vector<MetricResult>& results);

/// Flat mean over every benchmark in `order`, 2 decimals. Throws
/// MissingBenchmarksError when `scores` lacks any of them.
double overall_score(const std::map<std::string, double>& scores, const std::vector<std::string>& order);
double overall_score(const std::map<std::string, double>& scores, const CapabilityTaxonomy& taxonomy);

struct CapabilityReport {
  std::string model_id;
  std::map<Capability, double> capability;  // only capabilities with members
  double overall = 0.0;
  std::vector<BenchmarkScore> benchmarks;  // taxonomy order

  bool operator==(const CapabilityReport&) const = default;
};

/// Per-capability mean of member scores plus the flat overall, all at 2
/// decimals. Throws MissingBenchmarksError as overall_score does.
CapabilityReport capability_scores(std::string model_id, const std::map<std::string, double>& scores,
                                   const CapabilityTaxonomy& taxonomy);
/// Same, keeping instance and failure counts from full BenchmarkScores.
CapabilityReport capability_scores(std::string model_id, const std::vector<BenchmarkScore>& scores,
                                   const CapabilityTaxonomy& taxonomy);

struct LeaderboardRow {
  int rank = 0;
  const CapabilityReport* report = nullptr;
};

/// Descending overall, ties by model_id ascending; ranks are 1-based positions.
std::vector<LeaderboardRow> build_leaderboard(const std::vector<CapabilityReport>& reports);

struct StageStamp {
  std::string benchmark_id;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
};

struct TimingSummary {
  std::vector<std::pair<std::string, std::int64_t>> durations_ms;
  std::int64_t total_ms = 0;
};

/// Per-benchmark durations in first-seen order; repeated stamps for one
/// benchmark add up. Throws std::invalid_argument when a stamp ends before it starts.
TimingSummary timing_summary(const std::vector<StageStamp>& log);
/// Whole seconds as H:MM:SS (hours are not wrapped).
std::string format_hms(std::int64_t ms);
json to_json(const TimingSummary& t);

enum class ReportFormat { Json, Csv, Markdown, RadarJson };
std::optional<ReportFormat> parse_report_format(std::string_view s);

/// A set of model reports over one taxonomy.
struct ReportBundle {
  CapabilityTaxonomy taxonomy;
  std::vector<CapabilityReport> reports;
};

/// Deterministic bytes for a given bundle.
std::string emit_report(const ReportBundle& bundle, ReportFormat format);
/// Inverse of the json format.
ReportBundle report_bundle_from_json(const json& j);

}  // namespace loom
