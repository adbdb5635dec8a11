// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <functional>
#include <random>

#include "loom/core.hpp"
#include "loom/ingest.hpp"

using namespace loom;

namespace {

json niah_manifest() {
  return json::parse(R"({
    "id": "NIAH", "capability": "Retrieval",
    "source": {"kind": "synthetic", "generator": "niah", "params": {"context_tokens": 2000, "instances": 5}},
    "template_id": "niah", "metric": {"kind": "needle_recall"}, "length_range": [0, 2000]})");
}

json local_manifest() {
  return json::parse(R"({
    "id": "qa", "capability": "General",
    "source": {"kind": "local", "uri": "/tmp/qa.jsonl"},
    "field_map": {"input": "context", "q": "question", "answers": "gold"},
    "template_id": "default_qa", "metric": {"kind": "token_f1"}})");
}

RunConfig random_config(std::mt19937_64& rng) {
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  RunConfig c;
  c.model_id = "model-" + std::to_string(pick(1000));
  c.backend.kind = static_cast<BackendConfig::Kind>(pick(4));
  c.backend.backend_id = "b" + std::to_string(pick(10));
  c.backend.endpoint_url = "http://localhost:" + std::to_string(8000 + pick(100)) + "/v1/chat/completions";
  c.backend.api_key_env = "KEY_" + std::to_string(pick(5));
  c.backend.model_name = "m" + std::to_string(pick(50));
  c.backend.max_output_tokens = 1 + pick(2048);
  c.backend.temperature = pick(10) / 10.0;
  c.backend.oracle_accuracy = pick(11) / 10.0;
  c.backend.script_path = "/tmp/script" + std::to_string(pick(9)) + ".jsonl";
  const int nb = 1 + pick(4);
  for (int i = 0; i < nb; ++i) c.benchmark_ids.push_back("bench" + std::to_string(i * 7 + pick(7)));
  if (pick(2)) c.template_id = "t" + std::to_string(pick(4));
  c.worker_count = 1 + pick(8);
  if (pick(2)) {
    AugmentationConfig a;
    a.strategy = static_cast<AugmentationConfig::Strategy>(pick(2));
    a.chunk_tokens = 1 + static_cast<std::uint64_t>(pick(32000));
    a.top_k = 1 + pick(8);
    c.augmentation = a;
  }
  c.save_tag = "run_" + std::to_string(pick(100000));
  c.seed = rng();
  c.eval_enabled = pick(2) == 1;
  c.retry.max_retries = pick(5);
  c.retry.timeout_ms = 1 + pick(100000);
  c.retry.backoff_base_ms = 1 + pick(1000);
  if (pick(3) == 0) {
    BackendConfig j;
    j.kind = BackendConfig::Kind::Echo;
    j.backend_id = "judge";
    c.judge = j;
  }
  c.device = "cuda:" + std::to_string(pick(8));
  return c;
}

// One mutation per fingerprinted field; each must change the fingerprint.
std::vector<std::pair<std::string, std::function<void(RunConfig&)>>> perturbations() {
  return {
      {"model_id", [](RunConfig& c) { c.model_id += "x"; }},
      {"backend.backend_id", [](RunConfig& c) { c.backend.backend_id += "x"; }},
      {"backend.kind",
       [](RunConfig& c) { c.backend.kind = static_cast<BackendConfig::Kind>((static_cast<int>(c.backend.kind) + 1) % 4); }},
      {"backend.endpoint_url", [](RunConfig& c) { c.backend.endpoint_url += "x"; }},
      {"backend.api_key_env", [](RunConfig& c) { c.backend.api_key_env += "X"; }},
      {"backend.model_name", [](RunConfig& c) { c.backend.model_name += "x"; }},
      {"backend.max_output_tokens", [](RunConfig& c) { c.backend.max_output_tokens += 1; }},
      {"backend.temperature", [](RunConfig& c) { c.backend.temperature += 0.05; }},
      {"backend.oracle_accuracy", [](RunConfig& c) { c.backend.oracle_accuracy = c.backend.oracle_accuracy > 0.5 ? 0.25 : 0.75; }},
      {"backend.script_path", [](RunConfig& c) { c.backend.script_path += "x"; }},
      {"benchmark_ids", [](RunConfig& c) { c.benchmark_ids.push_back("extra"); }},
      {"template_id", [](RunConfig& c) { c.template_id = c.template_id ? std::optional<std::string>{} : "tx"; }},
      {"worker_count", [](RunConfig& c) { c.worker_count += 1; }},
      {"augmentation",
       [](RunConfig& c) { c.augmentation = c.augmentation ? std::optional<AugmentationConfig>{} : AugmentationConfig{}; }},
      {"seed", [](RunConfig& c) { c.seed += 1; }},
      {"eval_enabled", [](RunConfig& c) { c.eval_enabled = !c.eval_enabled; }},
      {"retry.max_retries", [](RunConfig& c) { c.retry.max_retries += 1; }},
      {"retry.timeout_ms", [](RunConfig& c) { c.retry.timeout_ms += 1; }},
      {"retry.backoff_base_ms", [](RunConfig& c) { c.retry.backoff_base_ms += 1; }},
      {"judge", [](RunConfig& c) { c.judge = c.judge ? std::optional<BackendConfig>{} : BackendConfig{}; }},
  };
}

}  // namespace

TEST_CASE("validate_spec: well-formed synthetic NIAH spec has no violations") {
  CHECK(validate_spec(manifest_from_json(niah_manifest())).empty());
}

TEST_CASE("validate_spec: unknown metric kind yields exactly one violation naming the metric") {
  auto doc = niah_manifest();
  doc["metric"]["kind"] = "bleu9";
  try {
    manifest_from_json(doc);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    REQUIRE(e.violations().size() == 1);
    CHECK(e.violations()[0].find("metric.kind") != std::string::npos);
    CHECK(e.violations()[0].find("bleu9") != std::string::npos);
  }
}

TEST_CASE("validate_spec: field_map without gold names field_map.gold") {
  auto spec = manifest_from_json(local_manifest());
  spec.field_map.erase("answers");
  const auto v = validate_spec(spec);
  REQUIRE(v.size() == 1);
  CHECK(v[0].rfind("field_map.gold", 0) == 0);
}

TEST_CASE("validate_spec: reports every violation, not just the first") {
  auto spec = manifest_from_json(local_manifest());
  spec.field_map.clear();
  spec.template_id.clear();
  spec.source.uri.clear();
  spec.metric.kind = MetricKind::PassAtK;
  spec.metric.k = 0;
  const auto v = validate_spec(spec);
  CHECK(v.size() == 6);  // context, question, gold, template_id, source.uri, metric.k
  CHECK(validate_spec(spec) == v);
}

TEST_CASE("validate_config: invariants") {
  RunConfig c;
  c.model_id = "m";
  c.benchmark_ids = {"NIAH"};
  c.save_tag = "ok_tag-1";
  CHECK(validate_config(c).empty());

  c.worker_count = 0;
  c.save_tag = "bad/tag";
  c.benchmark_ids = {"a", "a"};
  const auto v = validate_config(c);
  REQUIRE(v.size() == 3);
  CHECK(v[0].rfind("worker_count", 0) == 0);
  CHECK(v[1].rfind("save_tag", 0) == 0);
  CHECK(v[2].rfind("benchmark_ids", 0) == 0);

  RunConfig empty_ids = c;
  empty_ids.benchmark_ids.clear();
  empty_ids.worker_count = 1;
  empty_ids.save_tag = "x";
  CHECK(validate_config(empty_ids).size() == 1);

  RunConfig backend = empty_ids;
  backend.benchmark_ids = {"x"};
  backend.backend.temperature = -1;
  backend.backend.oracle_accuracy = 1.5;
  CHECK(validate_config(backend).size() == 2);
}

TEST_CASE("config_fingerprint: examples") {
  std::mt19937_64 rng(7);
  auto c = random_config(rng);
  c.seed = 7;
  const auto fp = config_fingerprint(c);
  CHECK(fp.size() == 64);
  CHECK(fp.find_first_not_of("0123456789abcdef") == std::string::npos);

  const auto text = to_json(c).dump();
  CHECK(config_fingerprint(run_config_from_json(json::parse(text))) == fp);

  auto seeded = c;
  seeded.seed = 8;
  CHECK(config_fingerprint(seeded) != fp);
  CHECK(config_diff(c, seeded) == std::vector<std::string>{"seed"});

  auto renamed = c;
  renamed.save_tag = "another_name";
  renamed.device = "cpu";
  CHECK(config_fingerprint(renamed) == fp);
  CHECK(config_diff(c, renamed).empty());
}

TEST_CASE("config_fingerprint: independent of key order in the serialized source") {
  const auto a = R"({"model_id":"m","benchmark_ids":["NIAH"],"save_tag":"t","seed":3,
                     "backend":{"kind":"echo","model_name":"x"},"worker_count":2})";
  const auto b = R"({"worker_count":2,"backend":{"model_name":"x","kind":"echo"},"seed":3,
                     "save_tag":"t","benchmark_ids":["NIAH"],"model_id":"m"})";
  CHECK(config_fingerprint(run_config_from_json(json::parse(a))) ==
        config_fingerprint(run_config_from_json(json::parse(b))));
}

TEST_CASE("config_fingerprint: round-trip stability over 1,000 random configs") {
  std::mt19937_64 rng(2026);
  for (int i = 0; i < 1000; ++i) {
    const auto c = random_config(rng);
    const auto back = run_config_from_json(json::parse(to_json(c).dump()));
    REQUIRE(back == c);
    REQUIRE(config_fingerprint(back) == config_fingerprint(c));
  }
}

TEST_CASE("config_fingerprint: every single-field perturbation changes it (100 random configs)") {
  std::mt19937_64 rng(99);
  const auto perturb = perturbations();
  for (int i = 0; i < 100; ++i) {
    const auto c = random_config(rng);
    const auto fp = config_fingerprint(c);
    for (const auto& [field, mutate] : perturb) {
      auto d = c;
      mutate(d);
      INFO("field " << field);
      REQUIRE(config_fingerprint(d) != fp);
      const auto diff = config_diff(c, d);
      REQUIRE(!diff.empty());
      CHECK(diff[0].rfind(field, 0) == 0);
    }
  }
}

TEST_CASE("run_config_from_json: structural errors list every problem") {
  const auto doc = json::parse(R"({"model_id": 5, "benchmark_ids": "NIAH", "backend": {"kind": "grpc"}})");
  try {
    run_config_from_json(doc);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.violations().size() >= 4);  // model_id, benchmark_ids, backend.kind, save_tag
  }
}

TEST_CASE("default taxonomy matches the twelve-benchmark grouping") {
  const auto& t = default_taxonomy();
  CHECK(t.benchmark_order() ==
        std::vector<std::string>{"L_CiteEval", "LEval", "RULER", "LongBench", "BABILong", "Counting-Stars", "LVEval",
                                 "LongBench_v2", "NIAH", "InfiniteBench", "LongWriter", "LIBRA"});
  CHECK(t.capability_of("NIAH") == Capability::Retrieval);
  CHECK(t.capability_of("LIBRA") == Capability::Specialization);
  CHECK_FALSE(t.capability_of("nope").has_value());
  std::set<std::string> seen;
  for (const auto& id : t.benchmark_order()) CHECK(seen.insert(id).second);
}

TEST_CASE("canonical records round-trip through JSON") {
  TaskInstance t;
  t.instance_id = "abc";
  t.benchmark_id = "b";
  t.task_id = "t";
  t.context = "ctx {question}";
  t.question = "q";
  t.gold = {"1", "2"};
  t.choices = {{"A", "yes"}, {"B", "no"}};
  t.metric.kind = MetricKind::PassAtK;
  t.metric.k = 3;
  t.est_tokens = 17;
  CHECK(task_instance_from_json(json::parse(to_json(t).dump())) == t);

  Prediction p;
  p.instance_id = "abc";
  p.output_text = "out";
  p.backend_id = "be";
  p.latency_ms = 12;
  p.attempts = 2;
  p.prompt_fingerprint = "ff";
  CHECK(prediction_from_json(json::parse(to_json(p).dump())) == p);
  p.failure = "timeout: slow";
  p.samples = {"a", "b"};
  CHECK(prediction_from_json(json::parse(to_json(p).dump())) == p);
  CHECK(to_jsonl(std::vector<Prediction>{p, p}).find('\n') != std::string::npos);
}

TEST_CASE("sha256_hex and is_filesystem_safe") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(is_filesystem_safe("run_1-a"));
  CHECK_FALSE(is_filesystem_safe(""));
  CHECK_FALSE(is_filesystem_safe("../x"));
  CHECK_FALSE(is_filesystem_safe("a b"));
}
