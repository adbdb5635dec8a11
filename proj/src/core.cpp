// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "loom/core.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>

#include <openssl/evp.h>

namespace loom {

ValidationError::ValidationError(std::vector<std::string> violations)
    : std::runtime_error([&] {
        std::string msg = "validation failed:";
        for (const auto& v : violations) msg += "\n  - " + v;
        return msg;
      }()),
      violations_(std::move(violations)) {}

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s) {
  for (const auto& [e, name] : table)
    if (name == s) return e;
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E e) {
  for (const auto& [v, name] : table)
    if (v == e) return name;
  return "?";
}

constexpr std::array<std::pair<Capability, std::string_view>, 6> kCapabilityNames{{
    {Capability::Faithfulness, "Faithfulness"},
    {Capability::General, "General"},
    {Capability::Reasoning, "Reasoning"},
    {Capability::Retrieval, "Retrieval"},
    {Capability::Generation, "Generation"},
    {Capability::Specialization, "Specialization"},
}};

constexpr std::array<std::pair<MetricKind, std::string_view>, 9> kMetricNames{{
    {MetricKind::Exact, "exact"},
    {MetricKind::Contains, "contains"},
    {MetricKind::Choice, "choice"},
    {MetricKind::TokenF1, "token_f1"},
    {MetricKind::RougeL, "rouge_l"},
    {MetricKind::PassAtK, "pass_at_k"},
    {MetricKind::CitationPrf, "citation_prf"},
    {MetricKind::NeedleRecall, "needle_recall"},
    {MetricKind::Judge, "judge"},
}};

constexpr std::array<std::pair<NormalizationRule, std::string_view>, 5> kRuleNames{{
    {NormalizationRule::Lowercase, "lowercase"},
    {NormalizationRule::StripPunctuation, "strip_punctuation"},
    {NormalizationRule::RemoveArticles, "remove_articles"},
    {NormalizationRule::CollapseWhitespace, "collapse_whitespace"},
    {NormalizationRule::NumbersOnly, "numbers_only"},
}};

constexpr std::array<std::pair<BackendConfig::Kind, std::string_view>, 4> kBackendNames{{
    {BackendConfig::Kind::WireApi, "wire_api"},
    {BackendConfig::Kind::MockOracle, "mock_oracle"},
    {BackendConfig::Kind::Scripted, "scripted"},
    {BackendConfig::Kind::Echo, "echo"},
}};

constexpr std::array<std::pair<AugmentationConfig::Strategy, std::string_view>, 2> kStrategyNames{{
    {AugmentationConfig::Strategy::Bm25, "bm25"},
    {AugmentationConfig::Strategy::SelfRoute, "self_route"},
}};

}  // namespace

std::string_view to_string(Capability c) { return name_of(kCapabilityNames, c); }
std::optional<Capability> parse_capability(std::string_view s) { return lookup(kCapabilityNames, s); }
std::string_view to_string(MetricKind k) { return name_of(kMetricNames, k); }
std::optional<MetricKind> parse_metric_kind(std::string_view s) { return lookup(kMetricNames, s); }
std::string_view to_string(NormalizationRule r) { return name_of(kRuleNames, r); }
std::optional<NormalizationRule> parse_normalization_rule(std::string_view s) { return lookup(kRuleNames, s); }
std::string_view to_string(BackendConfig::Kind k) { return name_of(kBackendNames, k); }
std::optional<BackendConfig::Kind> parse_backend_kind(std::string_view s) { return lookup(kBackendNames, s); }

NormalizationSet default_normalization() {
  return {NormalizationRule::Lowercase, NormalizationRule::StripPunctuation, NormalizationRule::RemoveArticles,
          NormalizationRule::CollapseWhitespace};
}

// ---------------------------------------------------------------------------
// Taxonomy
// ---------------------------------------------------------------------------

std::optional<Capability> CapabilityTaxonomy::capability_of(std::string_view benchmark_id) const {
  for (const auto& [cap, ids] : members)
    if (std::find(ids.begin(), ids.end(), benchmark_id) != ids.end()) return cap;
  return std::nullopt;
}

std::vector<std::string> CapabilityTaxonomy::benchmark_order() const {
  std::vector<std::string> out;
  for (Capability cap : kCapabilityOrder) {
    auto it = members.find(cap);
    if (it == members.end()) continue;
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

const CapabilityTaxonomy& default_taxonomy() {
  static const CapabilityTaxonomy taxonomy{{
      {Capability::Faithfulness, {"L_CiteEval"}},
      {Capability::General, {"LEval", "RULER", "LongBench"}},
      {Capability::Reasoning, {"BABILong", "Counting-Stars", "LVEval", "LongBench_v2"}},
      {Capability::Retrieval, {"NIAH", "InfiniteBench"}},
      {Capability::Generation, {"LongWriter"}},
      {Capability::Specialization, {"LIBRA"}},
  }};
  return taxonomy;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

bool is_filesystem_safe(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '-' || c == '_'; });
}

std::vector<std::string> validate_spec(const BenchmarkSpec& spec) {
  std::vector<std::string> v;
  if (spec.id.empty()) v.emplace_back("id: must be nonempty");
  if (spec.template_id.empty()) v.emplace_back("template_id: must be nonempty");

  // Synthetic generators emit canonical records, so only file sources need a mapping.
  std::set<std::string> canonical;
  for (const auto& [raw, canon] : spec.field_map) canonical.insert(canon);
  if (spec.source.kind != SourceDescriptor::Kind::Synthetic)
    for (const char* required : {"context", "question", "gold"})
      if (!canonical.count(required)) v.push_back(std::string("field_map.") + required + ": no raw key maps to it");
  static const std::set<std::string> known_fields{"context", "question", "gold", "choices", "task_id"};
  for (const auto& [raw, canon] : spec.field_map)
    if (!known_fields.count(canon))
      v.push_back("field_map." + raw + ": unknown canonical field '" + canon + "'");

  if (spec.metric.kind == MetricKind::PassAtK && spec.metric.k < 1) v.emplace_back("metric.k: must be >= 1 for pass_at_k");
  if (spec.metric.kind == MetricKind::Judge && spec.metric.rubric_id.empty())
    v.emplace_back("metric.rubric: judge metric needs a rubric id");

  switch (spec.source.kind) {
    case SourceDescriptor::Kind::Local:
    case SourceDescriptor::Kind::Http:
      if (spec.source.uri.empty()) v.emplace_back("source.uri: must be nonempty");
      break;
    case SourceDescriptor::Kind::Synthetic: {
      static const std::set<std::string> generators{"niah", "multi_query_niah", "variable_tracking", "counting"};
      if (!generators.count(spec.source.generator))
        v.push_back("source.generator: unknown generator '" + spec.source.generator + "'");
      break;
    }
  }
  if (spec.declared_length_range.first > spec.declared_length_range.second)
    v.emplace_back("length_range: lower bound exceeds upper bound");
  if (spec.limit && *spec.limit == 0) v.emplace_back("limit: must be positive");
  return v;
}

std::vector<std::string> validate_backend(const BackendConfig& b, std::string_view prefix) {
  std::vector<std::string> v;
  const std::string p(prefix);
  if (b.backend_id.empty()) v.push_back(p + ".backend_id: must be nonempty");
  if (!(b.temperature >= 0.0)) v.push_back(p + ".temperature: must be >= 0");
  if (!(b.oracle_accuracy >= 0.0 && b.oracle_accuracy <= 1.0)) v.push_back(p + ".oracle_accuracy: must lie in [0,1]");
  if (b.max_output_tokens < 1) v.push_back(p + ".max_output_tokens: must be >= 1");
  if (b.kind == BackendConfig::Kind::WireApi && b.endpoint_url.empty())
    v.push_back(p + ".endpoint_url: required for wire_api");
  if (b.kind == BackendConfig::Kind::Scripted && b.script_path.empty())
    v.push_back(p + ".script_path: required for scripted");
  return v;
}

std::vector<std::string> validate_config(const RunConfig& c) {
  std::vector<std::string> v;
  if (c.model_id.empty()) v.emplace_back("model_id: must be nonempty");
  if (c.worker_count < 1) v.emplace_back("worker_count: must be >= 1");
  if (!is_filesystem_safe(c.save_tag)) v.emplace_back("save_tag: must be nonempty and use only [A-Za-z0-9_-]");
  if (c.benchmark_ids.empty()) v.emplace_back("benchmark_ids: must be nonempty");
  std::set<std::string> seen;
  for (const auto& id : c.benchmark_ids)
    if (!seen.insert(id).second) v.push_back("benchmark_ids: duplicate id '" + id + "'");
  auto backend = validate_backend(c.backend, "backend");
  v.insert(v.end(), backend.begin(), backend.end());
  if (c.judge) {
    auto judge = validate_backend(*c.judge, "judge");
    v.insert(v.end(), judge.begin(), judge.end());
  }
  if (c.retry.max_retries < 0) v.emplace_back("retry.max_retries: must be >= 0");
  if (c.retry.timeout_ms < 1) v.emplace_back("retry.timeout_ms: must be >= 1");
  if (c.retry.backoff_base_ms < 1) v.emplace_back("retry.backoff_base_ms: must be >= 1");
  if (c.augmentation) {
    if (c.augmentation->chunk_tokens < 1) v.emplace_back("augmentation.chunk_tokens: must be >= 1");
    if (c.augmentation->top_k < 1) v.emplace_back("augmentation.top_k: must be >= 1");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Fingerprinting
// ---------------------------------------------------------------------------

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr);
  std::string hex;
  hex.reserve(len * 2);
  static constexpr char kHex[] = "0123456789abcdef";
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xF];
  }
  return hex;
}

namespace {

json fingerprint_view(const RunConfig& c) {
  json j = to_json(c);
  j.erase("save_tag");
  j.erase("device");
  return j;
}

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  if (j.is_object() && !j.empty()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else {
    out[prefix] = j;
  }
}

}  // namespace

std::string config_fingerprint(const RunConfig& config) {
  // nlohmann::json objects are key-sorted, so the dump is order independent.
  return sha256_hex(fingerprint_view(config).dump());
}

std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b) {
  std::map<std::string, json> fa, fb;
  flatten(fingerprint_view(a), "", fa);
  flatten(fingerprint_view(b), "", fb);
  std::set<std::string> keys;
  for (const auto& [k, _] : fa) keys.insert(k);
  for (const auto& [k, _] : fb) keys.insert(k);
  std::vector<std::string> out;
  for (const auto& k : keys) {
    auto ia = fa.find(k);
    auto ib = fb.find(k);
    if (ia == fa.end() || ib == fb.end() || ia->second != ib->second) out.push_back(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

/// Collects structural problems while reading a JSON document.
class Reader {
 public:
  explicit Reader(const json& j, std::string prefix = "") : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) problems_.push_back(where("") + "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out, bool required = false) {
    if (!j_.is_object()) return;
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) {
      if (required) problems_.push_back(where(key) + "missing");
      return;
    }
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      problems_.push_back(where(key) + "wrong type");
    }
  }

  const json* child(const char* key) const {
    if (!j_.is_object()) return nullptr;
    auto it = j_.find(key);
    return (it == j_.end() || it->is_null()) ? nullptr : &*it;
  }

  void fail(const std::string& key, const std::string& what) { problems_.push_back(where(key) + what); }
  void absorb(const std::vector<std::string>& more) { problems_.insert(problems_.end(), more.begin(), more.end()); }
  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
  std::vector<std::string>& problems() { return problems_; }

  void throw_if_any() const {
    if (!problems_.empty()) throw ValidationError(problems_);
  }

 private:
  std::string where(const std::string& key) const { return path(key) + ": "; }

  const json& j_;
  std::string prefix_;
  std::vector<std::string> problems_;
};

BackendConfig read_backend(const json& j, const std::string& prefix, std::vector<std::string>& problems) {
  Reader r(j, prefix);
  BackendConfig b;
  std::string kind;
  r.get("backend_id", b.backend_id);
  r.get("kind", kind, true);
  if (!kind.empty()) {
    if (auto k = parse_backend_kind(kind))
      b.kind = *k;
    else
      r.fail("kind", "unknown backend kind '" + kind + "'");
  }
  r.get("endpoint_url", b.endpoint_url);
  r.get("api_key_env", b.api_key_env);
  r.get("model_name", b.model_name);
  r.get("max_output_tokens", b.max_output_tokens);
  r.get("temperature", b.temperature);
  r.get("oracle_accuracy", b.oracle_accuracy);
  r.get("script_path", b.script_path);
  problems.insert(problems.end(), r.problems().begin(), r.problems().end());
  return b;
}

RetryPolicy read_retry(const json& j, const std::string& prefix, std::vector<std::string>& problems) {
  Reader r(j, prefix);
  RetryPolicy p;
  r.get("max_retries", p.max_retries);
  r.get("timeout_ms", p.timeout_ms);
  r.get("backoff_base_ms", p.backoff_base_ms);
  problems.insert(problems.end(), r.problems().begin(), r.problems().end());
  return p;
}

AugmentationConfig read_augmentation(const json& j, const std::string& prefix, std::vector<std::string>& problems) {
  Reader r(j, prefix);
  AugmentationConfig a;
  std::string strategy = "bm25";
  r.get("strategy", strategy);
  if (auto s = lookup(kStrategyNames, strategy))
    a.strategy = *s;
  else
    r.fail("strategy", "unknown strategy '" + strategy + "'");
  r.get("chunk_tokens", a.chunk_tokens);
  r.get("top_k", a.top_k);
  r.get("separator", a.separator);
  problems.insert(problems.end(), r.problems().begin(), r.problems().end());
  return a;
}

}  // namespace

json to_json(const MetricSpec& m) {
  json rules = json::array();
  for (auto rule : m.normalization) rules.push_back(std::string(to_string(rule)));
  json j{{"kind", std::string(to_string(m.kind))}, {"normalization", rules}};
  if (m.kind == MetricKind::PassAtK) j["k"] = m.k;
  if (m.kind == MetricKind::Judge) j["rubric_id"] = m.rubric_id;
  return j;
}

MetricSpec metric_spec_from_json(const json& j) {
  Reader r(j, "metric");
  MetricSpec m;
  std::string kind;
  r.get("kind", kind, true);
  if (!kind.empty()) {
    if (auto k = parse_metric_kind(kind))
      m.kind = *k;
    else
      r.fail("kind", "unknown metric kind '" + kind + "'");
  }
  if (const json* rules = r.child("normalization")) {
    m.normalization.clear();
    if (!rules->is_array()) {
      r.fail("normalization", "expected a list");
    } else {
      for (const auto& rule : *rules) {
        auto parsed = rule.is_string() ? parse_normalization_rule(rule.get<std::string>()) : std::nullopt;
        if (parsed)
          m.normalization.insert(*parsed);
        else
          r.fail("normalization", "unknown rule " + rule.dump());
      }
    }
  }
  r.get("k", m.k);
  r.get("rubric_id", m.rubric_id);
  r.throw_if_any();
  return m;
}

json to_json(const TaskInstance& t) {
  json choices = json::array();
  for (const auto& c : t.choices) choices.push_back({{"label", c.label}, {"text", c.text}});
  return json{{"instance_id", t.instance_id}, {"benchmark_id", t.benchmark_id}, {"task_id", t.task_id},
              {"context", t.context},         {"question", t.question},         {"gold", t.gold},
              {"choices", choices},           {"metric", to_json(t.metric)},    {"est_tokens", t.est_tokens}};
}

TaskInstance task_instance_from_json(const json& j) {
  Reader r(j, "instance");
  TaskInstance t;
  r.get("instance_id", t.instance_id, true);
  r.get("benchmark_id", t.benchmark_id, true);
  r.get("task_id", t.task_id);
  r.get("context", t.context, true);
  r.get("question", t.question, true);
  r.get("gold", t.gold);
  r.get("est_tokens", t.est_tokens);
  if (const json* choices = r.child("choices")) {
    if (!choices->is_array()) r.fail("choices", "expected a list");
    else
      for (const auto& c : *choices) {
        if (c.is_object() && c.contains("label") && c.contains("text") && c["label"].is_string() && c["text"].is_string())
          t.choices.push_back({c["label"].get<std::string>(), c["text"].get<std::string>()});
        else
          r.fail("choices", "entries need string label and text");
      }
  }
  if (const json* metric = r.child("metric")) {
    try {
      t.metric = metric_spec_from_json(*metric);
    } catch (const ValidationError& e) {
      r.absorb(e.violations());
    }
  } else {
    r.fail("metric", "missing");
  }
  r.throw_if_any();
  return t;
}

json to_json(const Prediction& p) {
  json j{{"instance_id", p.instance_id}, {"output_text", p.output_text},
         {"backend_id", p.backend_id},   {"latency_ms", p.latency_ms},
         {"attempts", p.attempts},       {"prompt_fingerprint", p.prompt_fingerprint}};
  if (!p.samples.empty()) j["samples"] = p.samples;
  if (p.failure) j["failure"] = *p.failure;
  return j;
}

Prediction prediction_from_json(const json& j) {
  Reader r(j, "prediction");
  Prediction p;
  r.get("instance_id", p.instance_id, true);
  r.get("output_text", p.output_text, true);
  r.get("backend_id", p.backend_id, true);
  r.get("latency_ms", p.latency_ms);
  r.get("attempts", p.attempts, true);
  r.get("prompt_fingerprint", p.prompt_fingerprint, true);
  r.get("samples", p.samples);
  std::string failure;
  r.get("failure", failure);
  if (r.child("failure")) p.failure = failure;
  if (p.attempts < 1) r.fail("attempts", "must be >= 1");
  r.throw_if_any();
  return p;
}

json to_json(const BackendConfig& b) {
  return json{{"backend_id", b.backend_id},
              {"kind", std::string(to_string(b.kind))},
              {"endpoint_url", b.endpoint_url},
              {"api_key_env", b.api_key_env},
              {"model_name", b.model_name},
              {"max_output_tokens", b.max_output_tokens},
              {"temperature", b.temperature},
              {"oracle_accuracy", b.oracle_accuracy},
              {"script_path", b.script_path}};
}

BackendConfig backend_config_from_json(const json& j) {
  std::vector<std::string> problems;
  auto b = read_backend(j, "backend", problems);
  if (!problems.empty()) throw ValidationError(problems);
  return b;
}

json to_json(const RetryPolicy& r) {
  return json{{"max_retries", r.max_retries}, {"timeout_ms", r.timeout_ms}, {"backoff_base_ms", r.backoff_base_ms}};
}

RetryPolicy retry_policy_from_json(const json& j) {
  std::vector<std::string> problems;
  auto r = read_retry(j, "retry", problems);
  if (!problems.empty()) throw ValidationError(problems);
  return r;
}

json to_json(const AugmentationConfig& a) {
  return json{{"strategy", std::string(name_of(kStrategyNames, a.strategy))},
              {"chunk_tokens", a.chunk_tokens},
              {"top_k", a.top_k},
              {"separator", a.separator}};
}

AugmentationConfig augmentation_from_json(const json& j) {
  std::vector<std::string> problems;
  auto a = read_augmentation(j, "augmentation", problems);
  if (!problems.empty()) throw ValidationError(problems);
  return a;
}

json to_json(const RunConfig& c) {
  return json{{"model_id", c.model_id},
              {"backend", to_json(c.backend)},
              {"benchmark_ids", c.benchmark_ids},
              {"template_id", c.template_id ? json(*c.template_id) : json(nullptr)},
              {"worker_count", c.worker_count},
              {"augmentation", c.augmentation ? to_json(*c.augmentation) : json(nullptr)},
              {"save_tag", c.save_tag},
              {"seed", c.seed},
              {"eval_enabled", c.eval_enabled},
              {"retry", to_json(c.retry)},
              {"judge", c.judge ? to_json(*c.judge) : json(nullptr)},
              {"device", c.device}};
}

RunConfig run_config_from_json(const json& j) {
  Reader r(j);
  RunConfig c;
  r.get("model_id", c.model_id, true);
  r.get("benchmark_ids", c.benchmark_ids, true);
  std::string template_id;
  r.get("template_id", template_id);
  if (r.child("template_id")) c.template_id = template_id;
  r.get("worker_count", c.worker_count);
  r.get("save_tag", c.save_tag, true);
  r.get("seed", c.seed);
  r.get("eval_enabled", c.eval_enabled);
  r.get("device", c.device);
  if (const json* b = r.child("backend"))
    c.backend = read_backend(*b, "backend", r.problems());
  else
    r.fail("backend", "missing");
  if (const json* a = r.child("augmentation")) c.augmentation = read_augmentation(*a, "augmentation", r.problems());
  if (const json* p = r.child("retry")) c.retry = read_retry(*p, "retry", r.problems());
  if (const json* b = r.child("judge")) c.judge = read_backend(*b, "judge", r.problems());
  r.throw_if_any();
  return c;
}

}  // namespace loom
