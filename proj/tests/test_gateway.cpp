// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "loom/evaluator.hpp"
#include "loom/gateway.hpp"
#include "support/oracles.hpp"

using namespace loom;
using namespace std::chrono_literals;

namespace {

TaskInstance make_instance(const std::string& id, MetricKind kind, std::vector<std::string> gold) {
  TaskInstance t;
  t.instance_id = id;
  t.benchmark_id = "B";
  t.task_id = id;
  t.context = "ctx";
  t.question = "q";
  t.gold = std::move(gold);
  t.metric.kind = kind;
  return t;
}

const RetryPolicy kFast{2, 1000, 1};

}  // namespace

TEST_CASE("echo backend returns the rendered prompt") {
  BackendConfig cfg;
  const auto inst = make_instance("e1", MetricKind::Exact, {"x"});
  const auto c = complete(cfg, "hello prompt", inst, kFast);
  CHECK(c.prediction.ok());
  CHECK(c.prediction.output_text == "hello prompt");
  CHECK(c.prediction.attempts == 1);
  CHECK(c.prediction.prompt_fingerprint == prompt_fingerprint("", "hello prompt"));
  CHECK(prompt_fingerprint("", "ab") != prompt_fingerprint("a", "b"));
}

TEST_CASE("mock oracle: accuracy 1.0, 0.0 and 0.5") {
  const std::vector<std::pair<MetricKind, std::vector<std::string>>> shapes{
      {MetricKind::NeedleRecall, {"7538914"}},
      {MetricKind::Exact, {"Paris"}},
      {MetricKind::Contains, {"48213"}},
      {MetricKind::Choice, {"C"}},
      {MetricKind::CitationPrf, {"2", "4"}},
      {MetricKind::NeedleRecall, {"111", "222", "333"}},
  };
  for (const auto& [kind, gold] : shapes) {
    for (int i = 0; i < 200; ++i) {
      auto inst = make_instance("m" + std::to_string(i), kind, gold);
      if (kind == MetricKind::Choice) inst.choices = {{"A", "a"}, {"B", "b"}, {"C", "c"}, {"D", "d"}};
      Prediction right, wrong;
      right.instance_id = wrong.instance_id = inst.instance_id;
      right.output_text = mock_oracle_complete(inst, 1.0, 5);
      wrong.output_text = mock_oracle_complete(inst, 0.0, 5);
      REQUIRE(score_instance(inst, right, inst.metric).score == 1.0);
      REQUIRE(score_instance(inst, wrong, inst.metric).score == 0.0);
    }
  }

  int correct = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto inst = make_instance("h" + std::to_string(i), MetricKind::NeedleRecall, {"4412"});
    Prediction p;
    p.output_text = mock_oracle_complete(inst, 0.5, 99);
    correct += score_instance(inst, p, inst.metric).score == 1.0;
  }
  // Binomial(10000, 0.5) has sd 50; 0.02 is four standard deviations.
  CHECK(std::abs(correct / static_cast<double>(n) - 0.5) <= 0.02);

  const auto inst = make_instance("d", MetricKind::Exact, {"Paris"});
  CHECK(mock_oracle_complete(inst, 0.5, 1) == mock_oracle_complete(inst, 0.5, 1));
}

TEST_CASE("scripted backend: fixture replay, sequencing and misses") {
  testing_support::TempDir dir("scripted");
  const auto path = dir.path() / "fixture.jsonl";
  std::ofstream(path) << R"({"instance_id": "a", "output": "first"})" "\n"
                      << R"({"instance_id": "a", "output": "second"})" "\n\n"
                      << R"({"instance_id": "b", "output": "", "fail": "http_500"})" "\n";
  ScriptedBackend backend(path);
  BackendConfig cfg;
  const RetryPolicy once{0, 1000, 1};
  const auto a = make_instance("a", MetricKind::Exact, {"x"});
  CHECK(complete(backend, cfg, "p", a, once).prediction.output_text == "first");
  CHECK(complete(backend, cfg, "p", a, once).prediction.output_text == "second");
  CHECK(complete(backend, cfg, "p", a, once).prediction.output_text == "second");
  const auto b = complete(backend, cfg, "p", make_instance("b", MetricKind::Exact, {"x"}), once);
  CHECK(b.cause == FailureCause::HttpStatus);
  const auto miss = complete(backend, cfg, "p", make_instance("zz", MetricKind::Exact, {"x"}), once);
  CHECK(miss.cause == FailureCause::ScriptedMiss);
  CHECK_FALSE(miss.prediction.ok());
  CHECK(backend.call_count() == 5);

  CHECK_THROWS_WITH_AS(ScriptedBackend::parse_fixture("{\"instance_id\": \"a\"}\nnot json\n"),
                       doctest::Contains("line 2"), std::runtime_error);
  CHECK_THROWS(ScriptedBackend::parse_fixture(R"({"instance_id": "a", "fail": "explode"})"));
}

TEST_CASE("retry accounting: failures then success, exhaustion, timeout") {
  BackendConfig cfg;
  const auto inst = make_instance("r", MetricKind::Exact, {"x"});

  ScriptedBackend flaky;
  flaky.add("r", ScriptedBackend::Entry{"", 0, FailureCause::HttpStatus});
  flaky.add("r", ScriptedBackend::Entry{"", 0, FailureCause::HttpStatus});
  flaky.add("r", "finally");
  const auto ok = complete(flaky, cfg, "p", inst, kFast);
  CHECK(ok.prediction.ok());
  CHECK(ok.prediction.output_text == "finally");
  CHECK(ok.prediction.attempts == 3);
  CHECK(flaky.call_count() == 3);

  flaky.reset_log();
  const auto exhausted = complete(flaky, cfg, "p", inst, RetryPolicy{1, 1000, 1});
  CHECK_FALSE(exhausted.prediction.ok());
  CHECK(exhausted.prediction.attempts == 2);
  CHECK(exhausted.cause == FailureCause::HttpStatus);
  CHECK(exhausted.prediction.failure->rfind("http_status", 0) == 0);

  ScriptedBackend slow;
  slow.add("r", ScriptedBackend::Entry{"late", 500, std::nullopt});
  const auto t0 = std::chrono::steady_clock::now();
  const auto timed_out = complete(slow, cfg, "p", inst, RetryPolicy{0, 50, 1});
  CHECK(timed_out.cause == FailureCause::Timeout);
  CHECK(std::chrono::steady_clock::now() - t0 < 400ms);
}

TEST_CASE("complete_batch: alignment, bounded parallelism, failures isolated") {
  BackendConfig cfg;
  ScriptedBackend backend;
  std::vector<WorkItem> work;
  for (int i = 0; i < 12; ++i) {
    const auto id = "w" + std::to_string(i);
    if (i != 5) backend.add(id, ScriptedBackend::Entry{"out-" + id, 20, std::nullopt});
    work.push_back({"prompt " + id, make_instance(id, MetricKind::Exact, {"x"}), ""});
  }
  const auto results = complete_batch(backend, cfg, work, RetryPolicy{0, 1000, 1}, 4);
  REQUIRE(results.size() == 12);
  for (int i = 0; i < 12; ++i) {
    const auto id = "w" + std::to_string(i);
    CHECK(results[i].prediction.instance_id == id);
    if (i == 5) {
      CHECK(results[i].cause == FailureCause::ScriptedMiss);
    } else {
      CHECK(results[i].prediction.output_text == "out-" + id);
    }
  }
  CHECK(backend.max_in_flight() <= 4);
  CHECK(backend.max_in_flight() >= 2);

  ScriptedBackend three;
  three.add("x0", "ok0");
  three.add("x2", "ok2");
  std::vector<WorkItem> w3;
  for (int i = 0; i < 3; ++i) w3.push_back({"p", make_instance("x" + std::to_string(i), MetricKind::Exact, {"x"}), ""});
  const auto r3 = complete_batch(three, cfg, w3, RetryPolicy{0, 1000, 1}, 1);
  CHECK(r3[0].prediction.ok());
  CHECK_FALSE(r3[1].prediction.ok());
  CHECK(r3[2].prediction.ok());
  CHECK(three.max_in_flight() == 1);
  CHECK_THROWS_AS(complete_batch(three, cfg, w3, kFast, 0), std::invalid_argument);
}

TEST_CASE("wire format: request body and response parsing") {
  const auto j = to_wire_json(ChatRequest{"m1", "be brief", "question?", 0.0, 64, 0});
  CHECK(j["model"] == "m1");
  REQUIRE(j["messages"].size() == 2);
  CHECK(j["messages"][0]["role"] == "system");
  CHECK(j["messages"][1]["content"] == "question?");
  CHECK(j["max_tokens"] == 64);
  CHECK(to_wire_json(ChatRequest{"m1", "", "q", 0.0, 8, 0})["messages"].size() == 1);

  CHECK(parse_wire_response(R"({"choices":[{"message":{"role":"assistant","content":"hi"}}]})") == "hi");
  CHECK_FALSE(parse_wire_response(R"({"choices":[]})").has_value());
  CHECK_FALSE(parse_wire_response("not json").has_value());
}

TEST_CASE("wire backend against a local chat-completion server") {
  httplib::Server server;
  std::string seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    const auto body = json::parse(req.body);
    const std::string user = body["messages"].back()["content"];
    if (user == "fail") {
      res.status = 500;
      return;
    }
    json reply{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", "re: " + user}}}}})}};
    res.set_content(reply.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("LOOM_TEST_API_KEY", "sekret", 1);
  BackendConfig cfg;
  cfg.kind = BackendConfig::Kind::WireApi;
  cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.api_key_env = "LOOM_TEST_API_KEY";
  cfg.model_name = "m";
  const auto inst = make_instance("w", MetricKind::Exact, {"x"});
  const RetryPolicy once{0, 2000, 1};

  const auto ok = complete(cfg, "ping", inst, once);
  CHECK(ok.prediction.output_text == "re: ping");
  CHECK(seen_auth == "Bearer sekret");
  CHECK(complete(cfg, "fail", inst, once).cause == FailureCause::HttpStatus);

  server.stop();
  th.join();
  CHECK(complete(cfg, "ping", inst, once).cause == FailureCause::Connection);
}
