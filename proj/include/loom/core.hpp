// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared value types, validation and configuration fingerprinting.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace loom {

using json = nlohmann::json;

/// Raised when a value violates one or more invariants. Carries every
/// violation, not just the first.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

/// Six-way capability taxonomy, in leaderboard column order.
enum class Capability { Faithfulness, General, Reasoning, Retrieval, Generation, Specialization };

inline constexpr Capability kCapabilityOrder[] = {
    Capability::Faithfulness, Capability::General,    Capability::Reasoning,
    Capability::Retrieval,    Capability::Generation, Capability::Specialization};

std::string_view to_string(Capability c);
std::optional<Capability> parse_capability(std::string_view s);

enum class MetricKind {
  Exact,
  Contains,
  Choice,
  TokenF1,
  RougeL,
  PassAtK,
  CitationPrf,
  NeedleRecall,
  Judge,
};

std::string_view to_string(MetricKind k);
std::optional<MetricKind> parse_metric_kind(std::string_view s);

/// Answer normalization steps. Applied in enum order, whatever the set order.
enum class NormalizationRule {
  Lowercase,
  StripPunctuation,
  RemoveArticles,
  CollapseWhitespace,
  NumbersOnly,  // keep only all-digit tokens
};

std::string_view to_string(NormalizationRule r);
std::optional<NormalizationRule> parse_normalization_rule(std::string_view s);

using NormalizationSet = std::set<NormalizationRule>;

/// lowercase, strip punctuation, remove articles, collapse whitespace.
NormalizationSet default_normalization();

// ---------------------------------------------------------------------------
// Metric and cost model
// ---------------------------------------------------------------------------

struct MetricSpec {
  MetricKind kind = MetricKind::Exact;
  NormalizationSet normalization = default_normalization();
  int k = 1;              // pass_at_k only
  std::string rubric_id;  // judge only

  bool operator==(const MetricSpec&) const = default;
};

struct CostModel {
  enum class Mode { ByteHeuristic, Whitespace };
  Mode mode = Mode::ByteHeuristic;
  double bytes_per_token = 4.0;

  bool operator==(const CostModel&) const = default;
};

// ---------------------------------------------------------------------------
// Benchmarks and instances
// ---------------------------------------------------------------------------

struct SourceDescriptor {
  enum class Kind { Local, Http, Synthetic };
  Kind kind = Kind::Local;
  std::string uri;        // local path or http(s) URL
  std::string generator;  // synthetic only
  json params = json::object();

  bool operator==(const SourceDescriptor&) const = default;
};

struct BenchmarkSpec {
  std::string id;
  Capability capability = Capability::General;
  SourceDescriptor source;
  std::map<std::string, std::string> field_map;  // raw key -> canonical field
  std::string template_id;
  MetricSpec metric;
  std::pair<std::uint64_t, std::uint64_t> declared_length_range{0, 0};
  std::optional<std::uint64_t> limit;  // optional instance cap applied during ingest

  bool operator==(const BenchmarkSpec&) const = default;
};

struct Choice {
  std::string label;
  std::string text;

  bool operator==(const Choice&) const = default;
};

struct TaskInstance {
  std::string instance_id;
  std::string benchmark_id;
  std::string task_id;
  std::string context;
  std::string question;
  std::vector<std::string> gold;
  std::vector<Choice> choices;
  MetricSpec metric;
  std::uint64_t est_tokens = 0;

  bool operator==(const TaskInstance&) const = default;
};

struct Prediction {
  std::string instance_id;
  std::string output_text;
  std::string backend_id;
  std::uint64_t latency_ms = 0;
  int attempts = 1;
  std::string prompt_fingerprint;
  std::vector<std::string> samples;  // extra completions for pass_at_k; empty otherwise
  std::optional<std::string> failure;  // set when every attempt failed

  bool ok() const { return !failure.has_value(); }
  bool operator==(const Prediction&) const = default;
};

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct BackendConfig {
  enum class Kind { WireApi, MockOracle, Scripted, Echo };
  std::string backend_id = "default";
  Kind kind = Kind::Echo;
  std::string endpoint_url;
  std::string api_key_env;
  std::string model_name;
  int max_output_tokens = 512;
  double temperature = 0.0;
  double oracle_accuracy = 1.0;
  std::string script_path;

  bool operator==(const BackendConfig&) const = default;
};

std::string_view to_string(BackendConfig::Kind k);
std::optional<BackendConfig::Kind> parse_backend_kind(std::string_view s);

struct RetryPolicy {
  int max_retries = 2;
  int timeout_ms = 60000;
  int backoff_base_ms = 500;

  bool operator==(const RetryPolicy&) const = default;
};

struct AugmentationConfig {
  enum class Strategy { Bm25, SelfRoute };
  Strategy strategy = Strategy::Bm25;
  std::uint64_t chunk_tokens = 16000;
  int top_k = 4;
  std::string separator = "\n\n";

  bool operator==(const AugmentationConfig&) const = default;
};

struct RunConfig {
  std::string model_id;
  BackendConfig backend;
  std::vector<std::string> benchmark_ids;
  std::optional<std::string> template_id;
  int worker_count = 1;
  std::optional<AugmentationConfig> augmentation;
  std::string save_tag;
  std::uint64_t seed = 0;
  bool eval_enabled = true;
  RetryPolicy retry;
  std::optional<BackendConfig> judge;
  std::string device;  // recorded only; inert for wire backends

  bool operator==(const RunConfig&) const = default;
};

/// Capability -> ordered benchmark ids.
struct CapabilityTaxonomy {
  std::map<Capability, std::vector<std::string>> members;

  std::optional<Capability> capability_of(std::string_view benchmark_id) const;
  /// All benchmark ids in capability order, then member order.
  std::vector<std::string> benchmark_order() const;
};

/// The twelve-benchmark grouping used by the reference leaderboard.
const CapabilityTaxonomy& default_taxonomy();

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Every violated invariant of `spec`; empty when valid.
std::vector<std::string> validate_spec(const BenchmarkSpec& spec);
std::vector<std::string> validate_config(const RunConfig& config);
std::vector<std::string> validate_backend(const BackendConfig& backend, std::string_view prefix = "backend");

/// SHA-256 over the canonical serialization, excluding save_tag and device.
std::string config_fingerprint(const RunConfig& config);

/// Dotted paths of fields that differ between two configs (fingerprinted fields only).
std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b);

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// True for nonempty strings of [A-Za-z0-9_-].
bool is_filesystem_safe(std::string_view s);

// ---------------------------------------------------------------------------
// Canonical record serialization
// ---------------------------------------------------------------------------

json to_json(const MetricSpec& m);
MetricSpec metric_spec_from_json(const json& j);
json to_json(const TaskInstance& t);
TaskInstance task_instance_from_json(const json& j);
json to_json(const Prediction& p);
Prediction prediction_from_json(const json& j);
json to_json(const BackendConfig& b);
BackendConfig backend_config_from_json(const json& j);
json to_json(const RetryPolicy& r);
RetryPolicy retry_policy_from_json(const json& j);
json to_json(const AugmentationConfig& a);
AugmentationConfig augmentation_from_json(const json& j);
json to_json(const RunConfig& c);
/// Structural errors (wrong types, unknown enum names) raise ValidationError
/// with every problem found; value invariants are left to validate_config.
RunConfig run_config_from_json(const json& j);

/// One compact JSON object per line.
template <typename T>
std::string to_jsonl(const std::vector<T>& items) {
  std::string out;
  for (const auto& item : items) {
    out += to_json(item).dump();
    out += '\n';
  }
  return out;
}

}  // namespace loom
