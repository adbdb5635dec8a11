// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "loom/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>

#include "loom/evaluator.hpp"
#include "loom/rng.hpp"

namespace loom {

std::string_view to_string(FailureCause c) {
  switch (c) {
    case FailureCause::Timeout: return "timeout";
    case FailureCause::Connection: return "connection";
    case FailureCause::HttpStatus: return "http_status";
    case FailureCause::ScriptedMiss: return "scripted_miss";
    case FailureCause::BadResponse: return "bad_response";
  }
  return "?";
}

json to_wire_json(const ChatRequest& req) {
  json messages = json::array();
  if (!req.system.empty()) messages.push_back({{"role", "system"}, {"content", req.system}});
  messages.push_back({{"role", "user"}, {"content", req.user}});
  return json{{"model", req.model}, {"messages", messages}, {"temperature", req.temperature},
              {"max_tokens", req.max_tokens}};
}

std::optional<std::string> parse_wire_response(std::string_view body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  try {
    const json& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) return std::nullopt;
    return content.get<std::string>();
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

std::string prompt_fingerprint(std::string_view system, std::string_view user) {
  std::string material(system);
  material += '\x1e';
  material += user;
  return sha256_hex(material);
}

// ---------------------------------------------------------------------------
// Mock oracle
// ---------------------------------------------------------------------------

namespace {

std::string perturb(std::string_view s, Rng& rng) {
  std::string out(s);
  for (auto& ch : out) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isdigit(c)) {
      ch = static_cast<char>('0' + (c - '0' + 1 + rng.below(9)) % 10);
    } else if (std::isalpha(c)) {
      const char base = std::isupper(c) ? 'A' : 'a';
      ch = static_cast<char>(base + (c - base + 1 + rng.below(25)) % 26);
    }
  }
  return out;
}

bool leaks_gold(std::string_view candidate, const std::vector<std::string>& gold) {
  return contains_match(candidate, gold) == 1;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string correct_answer(const TaskInstance& inst) {
  const auto& gold = inst.gold;
  switch (inst.metric.kind) {
    case MetricKind::Choice:
      return "The answer is (" + gold.front() + ").";
    case MetricKind::CitationPrf: {
      std::string out = "This is supported by the passages";
      for (const auto& g : gold) out += " [" + g + "]";
      return out + ".";
    }
    case MetricKind::Contains:
    case MetricKind::NeedleRecall:
      return "The answer is " + join(gold, ", ") + ".";
    default:
      return gold.front();
  }
}

std::string wrong_answer(const TaskInstance& inst, Rng& rng) {
  const auto& gold = inst.gold;
  switch (inst.metric.kind) {
    case MetricKind::Choice: {
      std::vector<std::string> labels;
      for (const auto& c : inst.choices)
        if (std::find(gold.begin(), gold.end(), c.label) == gold.end()) labels.push_back(c.label);
      if (labels.empty())
        for (const char* l : {"A", "B", "C", "D"})
          if (std::find(gold.begin(), gold.end(), l) == gold.end()) labels.emplace_back(l);
      return "The answer is (" + labels[rng.below(labels.size())] + ").";
    }
    case MetricKind::CitationPrf: {
      std::int64_t top = 0;
      for (const auto& g : gold) top = std::max<std::int64_t>(top, std::strtoll(g.c_str(), nullptr, 10));
      return "This is supported by the passages [" + std::to_string(top + 1 + static_cast<std::int64_t>(rng.below(5))) +
             "].";
    }
    default:
      break;
  }
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<std::string> parts;
    for (const auto& g : gold) parts.push_back(perturb(g, rng));
    std::string text = inst.metric.kind == MetricKind::Contains || inst.metric.kind == MetricKind::NeedleRecall
                           ? "The answer is " + join(parts, ", ") + "."
                           : join(parts, " ");
    if (!leaks_gold(text, gold)) return text;
  }
  return "I could not find the answer.";
}

}  // namespace

std::string mock_oracle_complete(const TaskInstance& instance, double accuracy, std::uint64_t seed) {
  Rng rng(mix_seed(fnv1a64(instance.instance_id), seed));
  const bool correct = rng.unit() < accuracy;
  if (instance.gold.empty()) return "No reference answer is available.";
  return correct ? correct_answer(instance) : wrong_answer(instance, rng);
}

BackendReply MockOracleBackend::send(const ChatRequest& req, const TaskInstance& instance, std::chrono::milliseconds) {
  return BackendReply::success(
      mock_oracle_complete(instance, accuracy_, mix_seed(seed_, static_cast<std::uint64_t>(req.sample_index))));
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(const std::filesystem::path& fixture) {
  std::ifstream in(fixture, std::ios::binary);
  if (!in) throw std::runtime_error("scripted backend: cannot open " + fixture.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  entries_ = parse_fixture(buf.str());
}

std::map<std::string, std::vector<ScriptedBackend::Entry>> ScriptedBackend::parse_fixture(std::string_view text) {
  std::map<std::string, std::vector<Entry>> out;
  std::istringstream lines{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("instance_id") || !j["instance_id"].is_string())
      throw std::runtime_error("scripted fixture line " + std::to_string(lineno) + ": expected {\"instance_id\",\"output\"}");
    Entry e;
    e.output = j.value("output", std::string{});
    e.delay_ms = j.value("delay_ms", 0);
    const std::string fail = j.value("fail", std::string{});
    if (fail == "timeout") e.fail = FailureCause::Timeout;
    else if (fail == "http_500") e.fail = FailureCause::HttpStatus;
    else if (!fail.empty())
      throw std::runtime_error("scripted fixture line " + std::to_string(lineno) + ": unknown fail mode '" + fail + "'");
    out[j["instance_id"].get<std::string>()].push_back(std::move(e));
  }
  return out;
}

void ScriptedBackend::add(const std::string& instance_id, Entry entry) {
  std::lock_guard lock(mu_);
  entries_[instance_id].push_back(std::move(entry));
}

BackendReply ScriptedBackend::send(const ChatRequest& req, const TaskInstance& instance,
                                   std::chrono::milliseconds timeout) {
  const int now = ++in_flight_;
  for (int seen = high_water_.load(); now > seen && !high_water_.compare_exchange_weak(seen, now);) {
  }
  struct Leave {
    std::atomic<int>& n;
    ~Leave() { --n; }
  } leave{in_flight_};

  std::optional<Entry> entry;
  {
    std::lock_guard lock(mu_);
    calls_.push_back({instance.instance_id, req.user, std::chrono::steady_clock::now()});
    auto it = entries_.find(instance.instance_id);
    if (it != entries_.end() && !it->second.empty()) {
      auto& pos = cursor_[instance.instance_id];
      entry = it->second[std::min(pos, it->second.size() - 1)];
      ++pos;
    }
  }
  if (!entry) return BackendReply::failure(FailureCause::ScriptedMiss, "no scripted entry for " + instance.instance_id);

  const auto delay = std::chrono::milliseconds(entry->delay_ms);
  if (entry->fail == FailureCause::Timeout || delay >= timeout) {
    std::this_thread::sleep_for(std::min(delay, timeout));
    return BackendReply::failure(FailureCause::Timeout, "timed out after " + std::to_string(timeout.count()) + " ms");
  }
  if (delay.count() > 0) std::this_thread::sleep_for(delay);
  if (entry->fail == FailureCause::HttpStatus) return BackendReply::failure(FailureCause::HttpStatus, "HTTP 500");
  return BackendReply::success(entry->output);
}

std::size_t ScriptedBackend::call_count() const {
  std::lock_guard lock(mu_);
  return calls_.size();
}

std::vector<ScriptedBackend::Call> ScriptedBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

void ScriptedBackend::reset_log() {
  std::lock_guard lock(mu_);
  calls_.clear();
  cursor_.clear();
  high_water_ = 0;
}

// ---------------------------------------------------------------------------
// Wire API backend
// ---------------------------------------------------------------------------

WireApiBackend::WireApiBackend(BackendConfig config) : config_(std::move(config)) {
  const auto& url = config_.endpoint_url;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("wire_api: malformed endpoint_url " + url);
  auto path_start = url.find('/', scheme_end + 3);
  origin_ = path_start == std::string::npos ? url : url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/v1/chat/completions" : url.substr(path_start);
}

BackendReply WireApiBackend::send(const ChatRequest& req, const TaskInstance&, std::chrono::milliseconds timeout) {
  httplib::Client client(origin_);
  const auto secs = timeout.count() / 1000;
  const auto usecs = (timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()))
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = client.Post(path_, headers, to_wire_json(req).dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const auto cause = err == httplib::Error::Read || err == httplib::Error::Write ? FailureCause::Timeout
                                                                                    : FailureCause::Connection;
    return BackendReply::failure(cause, httplib::to_string(err));
  }
  if (res->status != 200) return BackendReply::failure(FailureCause::HttpStatus, "HTTP " + std::to_string(res->status));
  auto content = parse_wire_response(res->body);
  if (!content) return BackendReply::failure(FailureCause::BadResponse, "response lacks choices[0].message.content");
  return BackendReply::success(std::move(*content));
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config, std::uint64_t seed) {
  switch (config.kind) {
    case BackendConfig::Kind::Echo: return std::make_shared<EchoBackend>();
    case BackendConfig::Kind::MockOracle: return std::make_shared<MockOracleBackend>(config.oracle_accuracy, seed);
    case BackendConfig::Kind::Scripted: return std::make_shared<ScriptedBackend>(config.script_path);
    case BackendConfig::Kind::WireApi: return std::make_shared<WireApiBackend>(config);
  }
  throw std::invalid_argument("unknown backend kind");
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

Completion complete(Backend& backend, const BackendConfig& config, const std::string& prompt,
                    const TaskInstance& instance, const RetryPolicy& policy, const std::string& system_preamble,
                    int sample_index) {
  ChatRequest req{config.model_name, system_preamble, prompt, config.temperature, config.max_output_tokens,
                  sample_index};
  Completion out;
  auto& p = out.prediction;
  p.instance_id = instance.instance_id;
  p.backend_id = config.backend_id;
  p.prompt_fingerprint = prompt_fingerprint(system_preamble, prompt);

  const auto started = std::chrono::steady_clock::now();
  const int max_attempts = policy.max_retries + 1;
  BackendReply reply;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    p.attempts = attempt;
    reply = backend.send(req, instance, std::chrono::milliseconds(policy.timeout_ms));
    if (reply.ok) break;
    if (attempt < max_attempts)
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<std::int64_t>(policy.backoff_base_ms)
                                                            << std::min(attempt - 1, 20)));
  }
  p.latency_ms = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count());
  if (reply.ok) {
    p.output_text = std::move(reply.text);
  } else {
    out.cause = reply.cause;
    p.failure = std::string(to_string(reply.cause)) + ": " + reply.message;
  }
  return out;
}

Completion complete(const BackendConfig& config, const std::string& prompt, const TaskInstance& instance,
                    const RetryPolicy& policy, std::uint64_t seed) {
  auto backend = make_backend(config, seed);
  return complete(*backend, config, prompt, instance, policy);
}

std::vector<Completion> complete_batch(Backend& backend, const BackendConfig& config,
                                       const std::vector<WorkItem>& worklist, const RetryPolicy& policy,
                                       int parallelism) {
  if (parallelism < 1) throw std::invalid_argument("complete_batch: parallelism must be >= 1");
  std::vector<Completion> results(worklist.size());
  std::atomic<std::size_t> next{0};
  auto lane = [&] {
    for (std::size_t i = next++; i < worklist.size(); i = next++) {
      const auto& item = worklist[i];
      results[i] = complete(backend, config, item.prompt, item.instance, policy, item.system_preamble);
    }
  };
  const auto lanes = std::min<std::size_t>(static_cast<std::size_t>(parallelism), worklist.size());
  std::vector<std::jthread> threads;
  threads.reserve(lanes);
  for (std::size_t t = 0; t < lanes; ++t) threads.emplace_back(lane);
  for (auto& t : threads) t.join();
  return results;
}

}  // namespace loom
