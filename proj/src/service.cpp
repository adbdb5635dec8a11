// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "loom/service.hpp"

#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace loom {

namespace {

bool active(Phase p) { return p != Phase::Complete && p != Phase::Failed; }

std::optional<std::string> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

RunService::RunService(PipelineOptions base)
    : base_(std::move(base)), worker_([this](std::stop_token st) { worker_loop(st); }) {}

RunService::~RunService() {
  worker_.request_stop();
  cv_.notify_all();
}

std::string RunService::submit(const json& body) { return submit(run_config_from_json(body)); }

std::string RunService::submit(RunConfig config) {
  if (auto v = validate_config(config); !v.empty()) throw ValidationError(std::move(v));
  std::lock_guard lock(mu_);
  const auto id = config.save_tag;
  if (auto it = states_.find(id); it != states_.end() && active(it->second.phase))
    throw RunConflict("run '" + id + "' is already " + std::string(to_string(it->second.phase)));
  RunState s;
  s.run_id = id;
  s.phase = Phase::Queued;
  states_[id] = s;
  queue_.push_back(std::move(config));
  cv_.notify_all();
  return id;
}

void RunService::publish(const RunState& s) {
  std::lock_guard lock(mu_);
  auto& cur = states_[s.run_id];
  // Observers never see a phase go backwards; Failed may follow any phase.
  if (s.phase != Phase::Failed && static_cast<int>(s.phase) < static_cast<int>(cur.phase)) return;
  cur = s;
}

void RunService::worker_loop(std::stop_token stop) {
  while (!stop.stop_requested()) {
    RunConfig config;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, stop, [&] { return !queue_.empty(); });
      if (stop.stop_requested()) return;
      config = std::move(queue_.front());
      queue_.pop_front();
      busy_ = true;
    }
    PipelineOptions opts = base_;
    opts.on_progress = [this](const RunState& s) { publish(s); };
    try {
      run_pipeline(config, opts);
    } catch (const std::exception& e) {
      RunState failed;
      {
        std::lock_guard lock(mu_);
        failed = states_[config.save_tag];
      }
      failed.phase = Phase::Failed;
      if (!failed.error) failed.error = e.what();
      publish(failed);
      std::cerr << "run " << config.save_tag << " failed: " << e.what() << "\n";
    }
    {
      std::lock_guard lock(mu_);
      busy_ = false;
    }
    cv_.notify_all();
  }
}

std::optional<RunState> RunService::state(const std::string& run_id) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = states_.find(run_id); it != states_.end()) return it->second;
  }
  // Runs finished by an earlier process are served from disk.
  if (is_filesystem_safe(run_id) && fs::exists(base_.runs_root / run_id / "report.json")) {
    RunState s;
    s.run_id = run_id;
    s.phase = Phase::Complete;
    return s;
  }
  return std::nullopt;
}

std::vector<RunState> RunService::list() const {
  std::map<std::string, RunState> out;
  std::error_code ec;
  if (fs::is_directory(base_.runs_root, ec)) {
    for (const auto& entry : fs::directory_iterator(base_.runs_root, ec)) {
      const auto id = entry.path().filename().string();
      if (fs::exists(entry.path() / "report.json")) {
        RunState s;
        s.run_id = id;
        s.phase = Phase::Complete;
        out[id] = s;
      }
    }
  }
  std::lock_guard lock(mu_);
  for (const auto& [id, s] : states_) out[id] = s;
  std::vector<RunState> v;
  for (auto& [_, s] : out) v.push_back(std::move(s));
  return v;
}

std::optional<std::string> RunService::report(const std::string& run_id) const {
  if (!is_filesystem_safe(run_id)) return std::nullopt;
  {
    std::lock_guard lock(mu_);
    if (auto it = states_.find(run_id); it != states_.end() && active(it->second.phase)) return std::nullopt;
  }
  return slurp(base_.runs_root / run_id / "report.json");
}

json RunService::benchmarks() const {
  const auto paths = base_.manifest_paths.empty() ? default_manifest_paths() : base_.manifest_paths;
  json out = json::array();
  for (const auto& [id, spec] : available_benchmarks(paths)) out.push_back(to_json(spec));
  return out;
}

void RunService::wait_idle() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return queue_.empty() && !busy_; });
}

// ---------------------------------------------------------------------------

struct ControlServer::Impl {
  RunService& service;
  httplib::Server server;

  explicit Impl(RunService& s) : service(s) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

    auto send_json = [](httplib::Response& res, int status, const json& body) {
      res.status = status;
      res.set_content(body.dump(), "application/json");
    };

    server.Post("/runs", [this, send_json](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error& e) {
        send_json(res, 400, {{"violations", {std::string("body: malformed JSON: ") + e.what()}}});
        return;
      }
      try {
        send_json(res, 202, {{"run_id", service.submit(body)}});
      } catch (const ValidationError& e) {
        send_json(res, 400, {{"violations", e.violations()}});
      } catch (const RunConflict& e) {
        send_json(res, 409, {{"error", e.what()}});
      } catch (const std::exception& e) {
        send_json(res, 400, {{"violations", {e.what()}}});
      }
    });

    server.Get("/runs", [this, send_json](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& s : service.list()) out.push_back(to_json(s));
      send_json(res, 200, out);
    });

    server.Get(R"(/runs/([^/]+)/report)", [this, send_json](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (auto doc = service.report(id)) {
        res.status = 200;
        res.set_content(*doc, "application/json");
      } else {
        send_json(res, 404, {{"error", "no report for run '" + id + "'"}});
      }
    });

    server.Get(R"(/runs/([^/]+))", [this, send_json](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (auto s = service.state(id))
        send_json(res, 200, to_json(*s));
      else
        send_json(res, 404, {{"error", "unknown run '" + id + "'"}});
    });

    server.Get("/benchmarks", [this, send_json](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, service.benchmarks());
    });
  }
};

ControlServer::ControlServer(RunService& service) : impl_(std::make_unique<Impl>(service)) {}
ControlServer::~ControlServer() { stop(); }

bool ControlServer::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }
int ControlServer::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool ControlServer::listen() { return impl_->server.listen_after_bind(); }
void ControlServer::stop() {
  if (impl_) impl_->server.stop();
}
void ControlServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

std::pair<std::string, int> parse_bind_address(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0) throw std::invalid_argument("bind address must be HOST:PORT");
  const std::string host = s.substr(0, colon);
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(s.substr(colon + 1), &used);
    if (used != s.size() - colon - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw std::invalid_argument("bad port in bind address '" + s + "'");
  }
  if (port < 0 || port > 65535) throw std::invalid_argument("port out of range in '" + s + "'");
  return {host, port};
}

}  // namespace loom
