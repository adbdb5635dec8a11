// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "loom/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>

#include "loom/gateway.hpp"

namespace loom {

bool MetricResult::failed() const {
  return detail && (detail->rfind("backend_failure", 0) == 0 || detail->rfind("judge_failure", 0) == 0);
}

json to_json(const MetricResult& r) {
  json j{{"instance_id", r.instance_id}, {"metric_kind", r.metric_kind}, {"score", r.score}};
  j["components"] = r.components ? json{{"precision", r.components->first}, {"recall", r.components->second}}
                                 : json(nullptr);
  j["detail"] = r.detail ? json(*r.detail) : json(nullptr);
  return j;
}

MetricResult metric_result_from_json(const json& j) {
  MetricResult r;
  r.instance_id = j.at("instance_id").get<std::string>();
  r.metric_kind = j.at("metric_kind").get<std::string>();
  r.score = j.at("score").get<double>();
  if (auto it = j.find("components"); it != j.end() && !it->is_null())
    r.components = std::pair{it->at("precision").get<double>(), it->at("recall").get<double>()};
  if (auto it = j.find("detail"); it != j.end() && !it->is_null()) r.detail = it->get<std::string>();
  return r;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool is_article(std::string_view w) { return w == "a" || w == "an" || w == "the"; }

bool all_digits(std::string_view w) {
  return !w.empty() && std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace

std::string normalize_answer(std::string_view text, const NormalizationSet& rules) {
  std::string s(text);
  if (rules.count(NormalizationRule::Lowercase))
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (rules.count(NormalizationRule::StripPunctuation))
    s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return c < 0x80 && std::ispunct(c); }), s.end());
  if (rules.count(NormalizationRule::RemoveArticles)) {
    // Blank out article tokens in place; whitespace is left for the collapse step.
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
      std::size_t j = i;
      while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j > i && is_article(std::string_view(s).substr(i, j - i))) s.erase(i, j - i), j = i;
      i = j;
    }
  }
  if (rules.count(NormalizationRule::CollapseWhitespace)) s = join_tokens(split_ws(s));
  if (rules.count(NormalizationRule::NumbersOnly)) {
    auto tokens = split_ws(s);
    std::erase_if(tokens, [](const std::string& t) { return !all_digits(t); });
    s = join_tokens(tokens);
  }
  return s;
}

std::vector<std::string> normalized_tokens(std::string_view text, const NormalizationSet& rules) {
  return split_ws(normalize_answer(text, rules));
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

int exact_match(std::string_view pred, const std::vector<std::string>& gold, const NormalizationSet& rules) {
  const auto p = normalize_answer(pred, rules);
  for (const auto& g : gold)
    if (normalize_answer(g, rules) == p) return 1;
  return 0;
}

int contains_match(std::string_view pred, const std::vector<std::string>& gold, const NormalizationSet& rules) {
  const auto p = normalize_answer(pred, rules);
  for (const auto& g : gold) {
    const auto ng = normalize_answer(g, rules);
    if (!ng.empty() && p.find(ng) != std::string::npos) return 1;
  }
  return 0;
}

std::optional<std::string> choice_extract(std::string_view pred, const std::vector<std::string>& labels) {
  auto is_word = [](unsigned char c) { return std::isalnum(c) || c == '_'; };
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::string_view ch = pred.substr(i, 1);
    if (std::find(labels.begin(), labels.end(), ch) == labels.end()) continue;
    const bool left = i == 0 || !is_word(static_cast<unsigned char>(pred[i - 1]));
    const bool right = i + 1 == pred.size() || !is_word(static_cast<unsigned char>(pred[i + 1]));
    if (left && right) return std::string(ch);
  }
  return std::nullopt;
}

namespace {

PRF from_counts(std::size_t overlap, std::size_t pred_len, std::size_t gold_len) {
  if (pred_len == 0 && gold_len == 0) return {1.0, 1.0, 1.0};
  if (pred_len == 0 || gold_len == 0 || overlap == 0) return {0.0, 0.0, 0.0};
  PRF r;
  r.precision = static_cast<double>(overlap) / static_cast<double>(pred_len);
  r.recall = static_cast<double>(overlap) / static_cast<double>(gold_len);
  r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

}  // namespace

PRF token_prf(std::string_view pred, std::string_view gold, const NormalizationSet& rules) {
  const auto p = normalized_tokens(pred, rules);
  const auto g = normalized_tokens(gold, rules);
  std::map<std::string_view, std::size_t> gold_counts;
  for (const auto& t : g) ++gold_counts[t];
  std::size_t overlap = 0;
  for (const auto& t : p) {
    auto it = gold_counts.find(t);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  return from_counts(overlap, p.size(), g.size());
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

PRF rouge_l(std::string_view pred, std::string_view gold, const NormalizationSet& rules) {
  const auto p = normalized_tokens(pred, rules);
  const auto g = normalized_tokens(gold, rules);
  return from_counts(lcs_length(p, g), p.size(), g.size());
}

double pass_at_k(std::int64_t n, std::int64_t c, std::int64_t k) {
  if (c < 0 || c > n || k < 1 || k > n)
    throw std::invalid_argument("pass_at_k requires 0 <= c <= n and 1 <= k <= n (got n=" + std::to_string(n) +
                                ", c=" + std::to_string(c) + ", k=" + std::to_string(k) + ")");
  if (n - c < k) return 1.0;
  // C(n-c, k) / C(n, k) = prod_{i<k} (n-c-i) / (n-i); every factor is in [0, 1].
  long double ratio = 1.0L;
  for (std::int64_t i = 0; i < k; ++i)
    ratio *= static_cast<long double>(n - c - i) / static_cast<long double>(n - i);
  return static_cast<double>(1.0L - ratio);
}

std::set<std::int64_t> extract_citations(std::string_view pred) {
  std::set<std::int64_t> out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] != '[') continue;
    std::size_t j = i + 1;
    while (j < pred.size() && std::isdigit(static_cast<unsigned char>(pred[j]))) ++j;
    if (j > i + 1 && j < pred.size() && pred[j] == ']' && j - i - 1 <= 18)
      out.insert(std::stoll(std::string(pred.substr(i + 1, j - i - 1))));
  }
  return out;
}

PRF citation_prf(std::string_view pred, const std::set<std::int64_t>& gold) {
  const auto cited = extract_citations(pred);
  std::size_t overlap = 0;
  for (auto id : cited) overlap += gold.count(id);
  return from_counts(overlap, cited.size(), gold.size());
}

double needle_recall(std::string_view pred, const std::vector<std::string>& gold, const NormalizationSet& rules) {
  if (gold.empty()) throw std::invalid_argument("needle_recall requires a nonempty gold set");
  const auto p = normalize_answer(pred, rules);
  std::size_t found = 0;
  for (const auto& g : gold) {
    const auto ng = normalize_answer(g, rules);
    if (!ng.empty() && p.find(ng) != std::string::npos) ++found;
  }
  return static_cast<double>(found) / static_cast<double>(gold.size());
}

// ---------------------------------------------------------------------------
// LLM judge
// ---------------------------------------------------------------------------

std::optional<int> parse_judge_verdict(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size()) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    if (j - i == 1 && reply[i] >= '1' && reply[i] <= '5') return reply[i] - '0';
    i = j;
  }
  return std::nullopt;
}

std::optional<std::string> builtin_rubric(std::string_view rubric_id) {
  if (rubric_id == "longform_quality")
    return "You are grading a long-form response.\n\nInstruction:\n{question}\n\nReference notes:\n{gold}\n\n"
           "Response:\n{prediction}\n\nRate the response for relevance, coherence and completeness. Reply with a "
           "single integer from 1 (poor) to 5 (excellent).";
  if (rubric_id == "answer_correctness")
    return "Question: {question}\nReference answer: {gold}\nCandidate answer: {prediction}\n\nHow well does the "
           "candidate agree with the reference? Reply with a single integer from 1 (wrong) to 5 (fully correct).";
  return std::nullopt;
}

namespace {

std::string render_rubric(std::string_view rubric, const TaskInstance& inst, const Prediction& pred) {
  std::string gold;
  for (std::size_t i = 0; i < inst.gold.size(); ++i) gold += (i ? " | " : "") + inst.gold[i];
  const std::pair<std::string_view, const std::string*> slots[] = {
      {"{prediction}", &pred.output_text}, {"{gold}", &gold}, {"{question}", &inst.question}};
  std::string out;
  std::size_t i = 0;
  while (i < rubric.size()) {
    bool replaced = false;
    for (const auto& [tag, value] : slots) {
      if (rubric.substr(i, tag.size()) == tag) {
        out += *value;
        i += tag.size();
        replaced = true;
        break;
      }
    }
    if (!replaced) out += rubric[i++];
  }
  return out;
}

}  // namespace

JudgeOutcome llm_judge(const TaskInstance& instance, const Prediction& prediction, std::string_view rubric,
                       Backend& judge, const BackendConfig& judge_config, const RetryPolicy& policy) {
  const std::string prompt = render_rubric(rubric, instance, prediction);
  RetryPolicy single = policy;
  single.max_retries = 0;
  JudgeOutcome out;
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    auto c = complete(judge, judge_config, prompt, instance, single, {}, attempt);
    ++out.calls;
    if (!c.prediction.ok()) {
      out.reply = *c.prediction.failure;
      continue;
    }
    out.reply = c.prediction.output_text;
    if (auto v = parse_judge_verdict(out.reply)) {
      out.score = (*v - 1) / 4.0;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

namespace {

void best_prf(MetricResult& r, const std::vector<std::string>& gold, std::string_view pred,
              PRF (*fn)(std::string_view, std::string_view, const NormalizationSet&), const NormalizationSet& rules) {
  PRF best;
  bool any = false;
  for (const auto& g : gold) {
    auto prf = fn(pred, g, rules);
    if (!any || prf.f1 > best.f1) best = prf;
    any = true;
  }
  r.score = best.f1;
  r.components = std::pair{best.precision, best.recall};
}

}  // namespace

MetricResult score_instance(const TaskInstance& instance, const Prediction& prediction, const MetricSpec& spec,
                            const ScoringContext& ctx) {
  MetricResult r;
  r.instance_id = instance.instance_id;
  r.metric_kind = std::string(to_string(spec.kind));
  if (!prediction.ok()) {
    r.detail = "backend_failure: " + *prediction.failure;
    return r;
  }
  const auto& pred = prediction.output_text;
  const auto& rules = spec.normalization;
  if (instance.gold.empty() && spec.kind != MetricKind::Judge) {
    r.detail = "no gold answer";
    return r;
  }
  switch (spec.kind) {
    case MetricKind::Exact:
      r.score = exact_match(pred, instance.gold, rules);
      break;
    case MetricKind::Contains:
      r.score = contains_match(pred, instance.gold, rules);
      break;
    case MetricKind::Choice: {
      std::vector<std::string> labels;
      for (const auto& c : instance.choices) labels.push_back(c.label);
      if (labels.empty()) labels = {"A", "B", "C", "D"};
      auto label = choice_extract(pred, labels);
      r.score = label ? exact_match(*label, instance.gold, rules) : 0;
      r.detail = label ? "extracted " + *label : "no choice label found";
      break;
    }
    case MetricKind::TokenF1:
      best_prf(r, instance.gold, pred, &token_prf, rules);
      break;
    case MetricKind::RougeL:
      best_prf(r, instance.gold, pred, &rouge_l, rules);
      break;
    case MetricKind::PassAtK: {
      const auto& samples = prediction.samples.empty() ? std::vector<std::string>{pred} : prediction.samples;
      std::int64_t correct = 0;
      for (const auto& s : samples) correct += exact_match(s, instance.gold, rules);
      const auto n = static_cast<std::int64_t>(samples.size());
      if (spec.k > n) {
        r.detail = "pass_at_k: k=" + std::to_string(spec.k) + " exceeds " + std::to_string(n) + " samples";
        break;
      }
      r.score = pass_at_k(n, correct, spec.k);
      break;
    }
    case MetricKind::CitationPrf: {
      std::set<std::int64_t> gold;
      for (const auto& g : instance.gold) {
        try {
          gold.insert(std::stoll(g));
        } catch (const std::exception&) {
          r.detail = "gold citation '" + g + "' is not an integer";
          return r;
        }
      }
      auto prf = citation_prf(pred, gold);
      r.score = prf.f1;
      r.components = std::pair{prf.precision, prf.recall};
      break;
    }
    case MetricKind::NeedleRecall:
      r.score = needle_recall(pred, instance.gold, rules);
      break;
    case MetricKind::Judge: {
      if (!ctx.judge || !ctx.judge_config) {
        r.detail = "judge_failure: no judge backend configured";
        break;
      }
      std::string rubric;
      if (auto builtin = builtin_rubric(spec.rubric_id)) rubric = *builtin;
      else if (spec.rubric_id.find("{prediction}") != std::string::npos) rubric = spec.rubric_id;
      else {
        r.detail = "judge_failure: unknown rubric '" + spec.rubric_id + "'";
        break;
      }
      auto verdict = llm_judge(instance, prediction, rubric, *ctx.judge, *ctx.judge_config, ctx.judge_policy);
      if (verdict.score) r.score = *verdict.score;
      else r.detail = "judge_failure: no verdict in reply '" + verdict.reply.substr(0, 80) + "'";
      break;
    }
  }
  return r;
}

}  // namespace loom
