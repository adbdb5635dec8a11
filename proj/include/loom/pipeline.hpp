// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// The evaluation workflow (ingest -> schedule -> infer -> score -> report)
// over a resumable run directory:
//
//   runs/<save_tag>/config.json          fingerprinted config snapshot
//                   plan.json            worker assignment
//                   data/<bench>.jsonl   normalized instances
//                   predictions/<bench>.jsonl
//                   metrics/<bench>.json
//                   report.json report.md radar.json timing.json

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "loom/core.hpp"
#include "loom/gateway.hpp"
#include "loom/ingest.hpp"
#include "loom/report.hpp"

namespace loom {

enum class Phase { Queued, Ingesting, Scheduling, Inferring, Scoring, Complete, Failed };
std::string_view to_string(Phase p);
std::optional<Phase> parse_phase(std::string_view s);

struct RunState {
  std::string run_id;
  Phase phase = Phase::Queued;
  std::uint64_t done_instances = 0;
  std::uint64_t total_instances = 0;
  std::optional<std::int64_t> started_ms;  // unix epoch milliseconds
  std::optional<std::int64_t> finished_ms;
  std::optional<std::string> error;
  std::map<std::string, std::string> benchmark_status;  // benchmark id -> phase name
};

json to_json(const RunState& s);
RunState run_state_from_json(const json& j);

/// A fatal run error (unresolvable manifest, unreachable backend, ...).
class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The run directory holds a snapshot whose fingerprint differs from the config.
class ResumeRefused : public PipelineError {
 public:
  explicit ResumeRefused(std::vector<std::string> changed);
  const std::vector<std::string>& changed_fields() const noexcept { return changed_; }

 private:
  std::vector<std::string> changed_;
};

struct PipelineOptions {
  std::filesystem::path runs_root = "runs";
  /// Manifest files or directories searched for benchmark ids, in priority order.
  std::vector<std::filesystem::path> manifest_paths;
  /// Replaces the backend built from config.backend (tests, embedding).
  std::shared_ptr<Backend> backend;
  std::shared_ptr<Backend> judge_backend;
  /// Called on every phase change and completed instance; must be thread-safe.
  std::function<void(const RunState&)> on_progress;
};

/// Bundled manifests plus ./benchmarks when it exists.
std::vector<std::filesystem::path> default_manifest_paths();

/// Resolves ids against `paths`; throws PipelineError naming every unresolved id.
std::vector<BenchmarkSpec> resolve_benchmarks(const std::vector<std::string>& ids,
                                              const std::vector<std::filesystem::path>& paths);

/// Every manifest reachable from `paths`, keyed by id. Invalid manifests are skipped.
std::map<std::string, BenchmarkSpec> available_benchmarks(const std::vector<std::filesystem::path>& paths);

/// The default grouping restricted to `specs`; benchmarks outside it go under
/// their manifest capability, after the default members.
CapabilityTaxonomy run_taxonomy(const std::vector<BenchmarkSpec>& specs);

struct PipelineResult {
  std::filesystem::path run_dir;
  std::optional<CapabilityReport> report;  // absent when evaluation is disabled
  RunState state;
  std::uint64_t new_predictions = 0;
  std::uint64_t quarantined_lines = 0;
};

/// Runs or resumes the workflow. Throws ValidationError for invalid configs,
/// ResumeRefused on fingerprint mismatch and PipelineError on fatal errors.
/// Per-instance backend failures are recorded and scored 0.
PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options = {});

}  // namespace loom
