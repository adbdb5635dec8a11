// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Model backends and the request gateway: retries, timeouts, bounded
// parallelism. Failures are returned as data, never thrown.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "loom/core.hpp"

namespace loom {

struct ChatRequest {
  std::string model;
  std::string system;  // empty when there is no preamble
  std::string user;
  double temperature = 0.0;
  int max_tokens = 512;
  int sample_index = 0;  // distinguishes repeated samples of one instance
};

/// The chat-completion request body for a wire backend.
json to_wire_json(const ChatRequest& req);
/// Extracts choices[0].message.content from a chat-completion response body.
std::optional<std::string> parse_wire_response(std::string_view body);

enum class FailureCause { Timeout, Connection, HttpStatus, ScriptedMiss, BadResponse };
std::string_view to_string(FailureCause c);

struct BackendReply {
  bool ok = false;
  std::string text;
  FailureCause cause = FailureCause::BadResponse;
  std::string message;

  static BackendReply success(std::string text) { return {true, std::move(text), FailureCause::BadResponse, {}}; }
  static BackendReply failure(FailureCause cause, std::string message) {
    return {false, {}, cause, std::move(message)};
  }
};

/// Implementations must be safe to call from several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;
  /// One attempt. Must give up (returning Timeout) once `timeout` elapses.
  virtual BackendReply send(const ChatRequest& req, const TaskInstance& instance,
                            std::chrono::milliseconds timeout) = 0;
};

class EchoBackend final : public Backend {
 public:
  BackendReply send(const ChatRequest& req, const TaskInstance&, std::chrono::milliseconds) override {
    return BackendReply::success(req.user);
  }
};

/// Emits the gold answer with probability `accuracy`, a same-shaped wrong answer otherwise.
class MockOracleBackend final : public Backend {
 public:
  MockOracleBackend(double accuracy, std::uint64_t seed) : accuracy_(accuracy), seed_(seed) {}
  BackendReply send(const ChatRequest& req, const TaskInstance& instance, std::chrono::milliseconds) override;

 private:
  double accuracy_;
  std::uint64_t seed_;
};

/// Replays a fixture of canned outputs keyed by instance id. The n-th call for
/// an id receives the n-th entry for that id (the last entry repeats).
///
/// Fixture lines: {"instance_id": ..., "output": ...} with optional
/// "delay_ms" (simulated latency) and "fail": "timeout" | "http_500".
class ScriptedBackend final : public Backend {
 public:
  struct Entry {
    std::string output;
    int delay_ms = 0;
    std::optional<FailureCause> fail;
  };

  struct Call {
    std::string instance_id;
    std::string prompt;
    std::chrono::steady_clock::time_point started;
  };

  ScriptedBackend() = default;
  explicit ScriptedBackend(const std::filesystem::path& fixture);

  /// Parses fixture text; throws std::runtime_error naming the bad line.
  static std::map<std::string, std::vector<Entry>> parse_fixture(std::string_view text);

  void add(const std::string& instance_id, Entry entry);
  void add(const std::string& instance_id, std::string output) { add(instance_id, Entry{std::move(output), 0, std::nullopt}); }

  BackendReply send(const ChatRequest& req, const TaskInstance& instance, std::chrono::milliseconds timeout) override;

  std::size_t call_count() const;
  std::vector<Call> calls() const;
  /// Highest number of simultaneously outstanding send() calls observed.
  int max_in_flight() const { return high_water_.load(); }
  void reset_log();

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::vector<Entry>> entries_;
  std::map<std::string, std::size_t> cursor_;
  std::vector<Call> calls_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> high_water_{0};
};

/// POSTs the chat-completion JSON to endpoint_url with a bearer token taken
/// from the api_key_env environment variable.
class WireApiBackend final : public Backend {
 public:
  explicit WireApiBackend(BackendConfig config);
  BackendReply send(const ChatRequest& req, const TaskInstance& instance, std::chrono::milliseconds timeout) override;

 private:
  BackendConfig config_;
  std::string origin_;
  std::string path_;
};

std::shared_ptr<Backend> make_backend(const BackendConfig& config, std::uint64_t seed);

/// Deterministic in (instance_id, seed, accuracy).
std::string mock_oracle_complete(const TaskInstance& instance, double accuracy, std::uint64_t seed);

struct Completion {
  Prediction prediction;
  std::optional<FailureCause> cause;  // set iff prediction.failure is set
};

/// Sends one prompt with up to policy.max_retries retries (exponential backoff).
Completion complete(Backend& backend, const BackendConfig& config, const std::string& prompt,
                    const TaskInstance& instance, const RetryPolicy& policy, const std::string& system_preamble = {},
                    int sample_index = 0);

/// Convenience overload constructing the backend from its config.
Completion complete(const BackendConfig& config, const std::string& prompt, const TaskInstance& instance,
                    const RetryPolicy& policy, std::uint64_t seed = 0);

struct WorkItem {
  std::string prompt;
  TaskInstance instance;
  std::string system_preamble;
};

/// At most `parallelism` requests in flight; results are positionally aligned
/// with `worklist`, and item failures never abort the batch.
std::vector<Completion> complete_batch(Backend& backend, const BackendConfig& config,
                                       const std::vector<WorkItem>& worklist, const RetryPolicy& policy,
                                       int parallelism);

std::string prompt_fingerprint(std::string_view system, std::string_view user);

}  // namespace loom
