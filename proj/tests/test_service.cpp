// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <thread>

#include <httplib.h>

#include "loom/gateway.hpp"
#include "loom/service.hpp"
#include "support/oracles.hpp"

using namespace loom;
using namespace std::chrono_literals;

namespace {

json run_body(const std::string& tag, int workers = 2) {
  return json{{"model_id", "svc-model"},
              {"backend", {{"kind", "mock_oracle"}, {"oracle_accuracy", 1.0}}},
              {"benchmark_ids", {"NIAH"}},
              {"worker_count", workers},
              {"save_tag", tag},
              {"seed", 3}};
}

/// Answers correctly after a fixed delay.
class SlowOracle final : public Backend {
 public:
  BackendReply send(const ChatRequest&, const TaskInstance& instance, std::chrono::milliseconds) override {
    std::this_thread::sleep_for(20ms);
    return BackendReply::success(mock_oracle_complete(instance, 1.0, 0));
  }
};

struct Harness {
  testing_support::TempDir dir{"svc"};
  RunService service;
  ControlServer server{service};
  int port = -1;
  std::thread thread;
  std::unique_ptr<httplib::Client> http;

  explicit Harness(std::shared_ptr<Backend> backend = nullptr) : service(make_options(dir.path(), backend)) {
    port = server.bind_any("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen(); });
    server.wait_until_ready();
    http = std::make_unique<httplib::Client>("127.0.0.1", port);
  }
  ~Harness() {
    server.stop();
    thread.join();
  }

  static PipelineOptions make_options(const std::filesystem::path& root, std::shared_ptr<Backend> backend = nullptr) {
    PipelineOptions o;
    o.runs_root = root;
    o.manifest_paths = {LOOM_BENCHMARKS_DIR};
    o.backend = std::move(backend);
    return o;
  }

  json wait_for(const std::string& id, Phase phase) {
    for (int i = 0; i < 600; ++i) {
      auto res = http->Get(("/runs/" + id).c_str());
      if (res && res->status == 200) {
        auto j = json::parse(res->body);
        if (j["phase"] == to_string(phase) || j["phase"] == "failed") return j;
      }
      std::this_thread::sleep_for(50ms);
    }
    FAIL("run did not reach phase " << to_string(phase));
    return {};
  }
};

}  // namespace

TEST_CASE("POST /runs queues a run that completes with a report") {
  Harness h;
  auto res = h.http->Post("/runs", run_body("svc1").dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 202);
  const std::string id = json::parse(res->body)["run_id"];
  CHECK(id == "svc1");

  const auto state = h.wait_for(id, Phase::Complete);
  CHECK(state["phase"] == "complete");
  CHECK(state["progress"]["done"] == 50);
  CHECK(state["progress"]["total"] == 50);

  auto report = h.http->Get("/runs/svc1/report");
  REQUIRE(report);
  CHECK(report->status == 200);
  const auto body = json::parse(report->body);
  CHECK(body["models"][0]["overall"] == 100.0);

  auto listing = h.http->Get("/runs");
  REQUIRE(listing);
  CHECK(json::parse(listing->body).size() == 1);
}

TEST_CASE("unknown runs give 404") {
  Harness h;
  auto res = h.http->Get("/runs/nope");
  REQUIRE(res);
  CHECK(res->status == 404);
  auto rep = h.http->Get("/runs/nope/report");
  REQUIRE(rep);
  CHECK(rep->status == 404);
}

TEST_CASE("invalid configs give 400 with every violation") {
  Harness h;
  auto body = run_body("bad", 0);
  body["save_tag"] = "bad tag/..";
  auto res = h.http->Post("/runs", body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  const auto violations = json::parse(res->body)["violations"];
  CHECK(violations.size() >= 2);
  CHECK(violations.dump().find("worker_count") != std::string::npos);

  auto junk = h.http->Post("/runs", "{not json", "application/json");
  REQUIRE(junk);
  CHECK(junk->status == 400);
}

TEST_CASE("a second submit of an active run gives 409") {
  Harness h(std::make_shared<SlowOracle>());
  auto first = h.http->Post("/runs", run_body("dup").dump(), "application/json");
  auto second = h.http->Post("/runs", run_body("dup").dump(), "application/json");
  REQUIRE(first);
  REQUIRE(second);
  CHECK(first->status == 202);
  CHECK(second->status == 409);
  CHECK_THROWS_AS(h.service.submit(run_body("dup")), RunConflict);
  h.wait_for("dup", Phase::Complete);
  h.service.wait_idle();

  // Once finished, the same id may be resubmitted and resumes with nothing to do.
  auto again = h.http->Post("/runs", run_body("dup").dump(), "application/json");
  REQUIRE(again);
  CHECK(again->status == 202);
  h.service.wait_idle();
  CHECK(h.service.state("dup")->phase == Phase::Complete);
}

TEST_CASE("GET /benchmarks lists the bundled manifests") {
  Harness h;
  auto res = h.http->Get("/benchmarks");
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto list = json::parse(res->body);
  CHECK(list.size() == 5);
  bool found = false;
  for (const auto& b : list) found = found || b["id"] == "NIAH";
  CHECK(found);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
}

TEST_CASE("parse_bind_address") {
  CHECK(parse_bind_address("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
  CHECK_THROWS_AS(parse_bind_address("nohost"), std::invalid_argument);
  CHECK_THROWS_AS(parse_bind_address("h:99999"), std::invalid_argument);
}
