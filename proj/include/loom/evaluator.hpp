// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Discriminative and generative answer metrics.

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "loom/core.hpp"

namespace loom {

class Backend;

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricResult {
  std::string instance_id;
  std::string metric_kind;
  double score = 0.0;
  std::optional<std::pair<double, double>> components;  // (precision, recall)
  std::optional<std::string> detail;

  /// Backend or judge failures; these count toward a benchmark's failure_count.
  bool failed() const;
  bool operator==(const MetricResult&) const = default;
};

json to_json(const MetricResult& r);
MetricResult metric_result_from_json(const json& j);

std::string normalize_answer(std::string_view text, const NormalizationSet& rules = default_normalization());
std::vector<std::string> normalized_tokens(std::string_view text, const NormalizationSet& rules = default_normalization());

int exact_match(std::string_view pred, const std::vector<std::string>& gold,
                const NormalizationSet& rules = default_normalization());

/// 1 iff some normalized gold is a substring of the normalized prediction.
int contains_match(std::string_view pred, const std::vector<std::string>& gold,
                   const NormalizationSet& rules = default_normalization());

/// First label occurring as a standalone character in `pred`.
std::optional<std::string> choice_extract(std::string_view pred, const std::vector<std::string>& labels);

PRF token_prf(std::string_view pred, std::string_view gold, const NormalizationSet& rules = default_normalization());
PRF rouge_l(std::string_view pred, std::string_view gold, const NormalizationSet& rules = default_normalization());

/// Longest common subsequence length of two token sequences.
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Unbiased pass@k estimate 1 - C(n-c, k) / C(n, k). Throws std::invalid_argument
/// unless 0 <= c <= n and 1 <= k <= n.
double pass_at_k(std::int64_t n, std::int64_t c, std::int64_t k);

/// Citation markers [i] found in `pred`.
std::set<std::int64_t> extract_citations(std::string_view pred);
PRF citation_prf(std::string_view pred, const std::set<std::int64_t>& gold);

/// Fraction of gold values found (after normalization) inside the normalized prediction.
double needle_recall(std::string_view pred, const std::vector<std::string>& gold,
                     const NormalizationSet& rules = default_normalization());

/// First integer in [1, 5] found in `reply`.
std::optional<int> parse_judge_verdict(std::string_view reply);

struct JudgeOutcome {
  std::optional<double> score;  // (verdict - 1) / 4
  int calls = 0;
  std::string reply;
};

/// Renders the rubric ({prediction}, {gold}, {question} placeholders), queries
/// the judge, and re-asks up to policy.max_retries times on unparseable replies.
JudgeOutcome llm_judge(const TaskInstance& instance, const Prediction& prediction, std::string_view rubric,
                       Backend& judge, const BackendConfig& judge_config, const RetryPolicy& policy);

/// Built-in rubric templates by id.
std::optional<std::string> builtin_rubric(std::string_view rubric_id);

struct ScoringContext {
  Backend* judge = nullptr;
  const BackendConfig* judge_config = nullptr;
  RetryPolicy judge_policy;
};

/// Dispatches to the metric named by `spec`. Failed predictions score 0 with
/// detail "backend_failure".
MetricResult score_instance(const TaskInstance& instance, const Prediction& prediction, const MetricSpec& spec,
                            const ScoringContext& ctx = {});

}  // namespace loom
