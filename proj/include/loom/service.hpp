// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run registry and the REST control API.
//
//   POST /runs               RunConfig body -> 202 {"run_id"}; 400 {"violations"}; 409 if already active
//   GET  /runs               [RunState]
//   GET  /runs/{id}          RunState, 404 if unknown
//   GET  /runs/{id}/report   report.json, 404 until written
//   GET  /benchmarks         [BenchmarkSpec]

#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "loom/pipeline.hpp"

namespace loom {

/// The run id is already queued or running.
class RunConflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Executes submitted runs one at a time on a dedicated thread. All members
/// are safe to call concurrently.
class RunService {
 public:
  explicit RunService(PipelineOptions base);
  ~RunService();
  RunService(const RunService&) = delete;
  RunService& operator=(const RunService&) = delete;

  /// Validates and queues; returns the run id (the save_tag). Throws
  /// ValidationError or RunConflict.
  std::string submit(const json& body);
  std::string submit(RunConfig config);

  std::optional<RunState> state(const std::string& run_id) const;
  std::vector<RunState> list() const;
  /// report.json contents once the run has written it.
  std::optional<std::string> report(const std::string& run_id) const;
  json benchmarks() const;

  /// Blocks until the queue is empty and no run is executing.
  void wait_idle();

 private:
  void worker_loop(std::stop_token stop);
  void publish(const RunState& s);

  PipelineOptions base_;
  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  std::deque<RunConfig> queue_;
  std::map<std::string, RunState> states_;
  bool busy_ = false;
  std::jthread worker_;
};

/// HTTP front end over a RunService.
class ControlServer {
 public:
  explicit ControlServer(RunService& service);
  ~ControlServer();

  /// Returns false when the address cannot be bound (e.g. port in use).
  bool bind(const std::string& host, int port);
  /// Binds an ephemeral port and returns it, or -1.
  int bind_any(const std::string& host);
  /// Serves until stop(); returns false if serving failed.
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "HOST:PORT"; throws std::invalid_argument on bad input.
std::pair<std::string, int> parse_bind_address(const std::string& s);

}  // namespace loom
