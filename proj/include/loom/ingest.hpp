// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Benchmark manifests, prompt templates, cost estimation, ingestion of local
// and remote JSON-lines sources, and seeded synthetic task generators.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "loom/core.hpp"

namespace loom {

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

struct PromptTemplate {
  std::string template_id;
  std::string body;  // {context}, {question}, optionally {choices}
  std::string system_preamble;

  bool operator==(const PromptTemplate&) const = default;
};

class TemplateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> validate_template(const PromptTemplate& t);

/// Single-pass placeholder substitution; substituted text is never re-expanded.
/// Throws TemplateError when the body references {choices} and the instance has none.
std::string apply_template(const PromptTemplate& t, const TaskInstance& inst);

/// "LABEL. text" lines joined with '\n'.
std::string render_choices(const std::vector<Choice>& choices);

/// Built-in templates plus any loaded from files.
class TemplateRegistry {
 public:
  TemplateRegistry();  // populated with the built-ins

  void add(PromptTemplate t);  // throws ValidationError on invalid templates
  const PromptTemplate* find(std::string_view id) const;
  const PromptTemplate& at(std::string_view id) const;  // throws std::out_of_range
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

/// Reads a YAML/JSON document with keys template_id, body, system_preamble.
PromptTemplate load_template_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Cost estimation
// ---------------------------------------------------------------------------

std::uint64_t estimate_cost(std::string_view text, const CostModel& model = {});

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses a manifest document; relative local source paths resolve against
/// the manifest's directory. Throws ManifestError on malformed documents and
/// ValidationError (with every violation) on invalid specs.
BenchmarkSpec load_manifest(const std::filesystem::path& path);
BenchmarkSpec manifest_from_json(const json& doc, const std::filesystem::path& base_dir = {});
json to_json(const BenchmarkSpec& spec);

/// Converts a YAML document (a JSON superset) into JSON. Plain scalars are typed
/// as null/bool/int/float when they parse as such; quoted scalars stay strings.
json yaml_file_to_json(const std::filesystem::path& path);

/// Manifests (*.manifest, *.yaml, *.yml, *.json) found directly inside each directory.
/// Later directories do not override earlier ids.
std::map<std::string, std::filesystem::path> discover_manifests(const std::vector<std::filesystem::path>& dirs);

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

struct SyntheticParams {
  enum class Generator { Niah, MultiQueryNiah, VariableTracking, Counting };
  Generator generator = Generator::Niah;
  std::uint64_t context_tokens = 8000;
  std::vector<double> depth_fractions{0.0, 0.25, 0.5, 0.75, 1.0};
  int needle_count = 1;
  int chain_length = 1;
  int instances = 1;
  std::uint64_t seed = 0;
};

class GeneratorError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

SyntheticParams synthetic_params_from_json(std::string_view generator, const json& params);
std::vector<std::string> validate_params(const SyntheticParams& p);

/// One needle "The secret code for KEY is VALUE." per instance; instance i
/// uses depth_fractions[i % depths]. Context length is measured with the
/// default cost model.
std::vector<TaskInstance> gen_niah(const SyntheticParams& p, std::string_view benchmark_id = "niah");
std::vector<TaskInstance> gen_multi_query_niah(const SyntheticParams& p,
                                               std::string_view benchmark_id = "multi_query_niah");
std::vector<TaskInstance> gen_variable_tracking(const SyntheticParams& p,
                                                std::string_view benchmark_id = "variable_tracking");
std::vector<TaskInstance> gen_counting(const SyntheticParams& p, std::string_view benchmark_id = "counting");
std::vector<TaskInstance> generate(const SyntheticParams& p, std::string_view benchmark_id);

/// Content-derived id over (benchmark_id, task_id, raw record).
std::string derive_instance_id(std::string_view benchmark_id, std::string_view task_id, const json& raw_record);

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

class SourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IngestOptions {
  std::optional<std::uint64_t> limit;           // overrides spec.limit
  std::optional<std::uint64_t> subsample_seed;  // seeded uniform subset instead of truncation
  std::optional<PromptTemplate> prompt_template;  // defaults to the built-in for spec.template_id
  CostModel cost_model;
};

struct SkipRecord {
  std::size_t record_index = 0;
  std::string reason;
};

struct IngestResult {
  std::vector<TaskInstance> instances;
  std::vector<SkipRecord> skipped;
};

/// Normalizes every source record into TaskInstances. Malformed records are
/// skipped and reported; an unreachable source raises SourceError.
IngestResult ingest(const BenchmarkSpec& spec, const IngestOptions& options = {});

}  // namespace loom
