// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "loom/rag.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace loom {

std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t start = 0;
  std::size_t i = 0;
  auto is_space = [&](std::size_t k) { return std::isspace(static_cast<unsigned char>(text[k])) != 0; };
  while (i < text.size()) {
    const char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i + 1;
      while (j < text.size() && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
      if (j == text.size() || is_space(j)) {
        while (j < text.size() && is_space(j)) ++j;
        spans.emplace_back(start, j);
        start = i = j;
        continue;
      }
      i = j;
      continue;
    }
    ++i;
  }
  if (start < text.size()) spans.emplace_back(start, text.size());
  return spans;
}

std::vector<Chunk> chunk_text(std::string_view text, std::uint64_t chunk_tokens, const CostModel& model) {
  if (chunk_tokens < 1) throw std::invalid_argument("chunk_text: chunk_tokens must be >= 1");
  std::vector<Chunk> chunks;
  auto flush = [&](std::size_t begin, std::size_t end) {
    Chunk c;
    c.chunk_index = chunks.size();
    c.text = std::string(text.substr(begin, end - begin));
    c.est_tokens = estimate_cost(c.text, model);
    c.span = {begin, end};
    chunks.push_back(std::move(c));
  };

  // Sentences carry their trailing whitespace, so both cost modes are additive
  // over consecutive sentences (bytes add; whitespace units do not merge).
  auto units = [&](std::pair<std::size_t, std::size_t> s) -> std::uint64_t {
    if (model.mode == CostModel::Mode::ByteHeuristic) return s.second - s.first;
    return estimate_cost(text.substr(s.first, s.second - s.first), model);
  };
  auto to_tokens = [&](std::uint64_t u) -> std::uint64_t {
    if (model.mode == CostModel::Mode::Whitespace || u == 0) return u;
    return static_cast<std::uint64_t>(std::ceil(static_cast<double>(u) / model.bytes_per_token));
  };

  std::size_t begin = 0, end = 0;
  std::uint64_t acc = 0;
  bool open = false;
  for (const auto& s : sentence_spans(text)) {
    const auto u = units(s);
    if (open && to_tokens(acc + u) > chunk_tokens) {
      flush(begin, end);
      open = false;
    }
    if (!open) {
      begin = s.first;
      acc = 0;
      open = true;
    }
    end = s.second;
    acc += u;
  }
  if (open) flush(begin, end);
  return chunks;
}

std::vector<std::string> bm25_terms(std::string_view text) {
  std::vector<std::string> terms;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      terms.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) terms.push_back(std::move(cur));
  return terms;
}

std::size_t Bm25Index::doc_freq(const std::string& term) const {
  auto it = df_.find(term);
  return it == df_.end() ? 0 : it->second;
}

std::size_t Bm25Index::term_freq(std::size_t chunk, const std::string& term) const {
  const auto& tf = tf_.at(chunk);
  auto it = tf.find(term);
  return it == tf.end() ? 0 : it->second;
}

double Bm25Index::idf(const std::string& term) const {
  const auto n = static_cast<double>(doc_count());
  const auto df = static_cast<double>(doc_freq(term));
  return std::max(0.0, std::log((n - df + 0.5) / (df + 0.5) + 1.0));
}

Bm25Index build_index(const std::vector<Chunk>& chunks, Bm25Params params) {
  if (chunks.empty()) throw std::invalid_argument("build_index: no chunks to index");
  Bm25Index index;
  index.params_ = params;
  std::size_t total = 0;
  for (const auto& chunk : chunks) {
    auto& tf = index.tf_.emplace_back();
    const auto terms = bm25_terms(chunk.text);
    for (const auto& t : terms) ++tf[t];
    for (const auto& [t, _] : tf) ++index.df_[t];
    index.doc_len_.push_back(terms.size());
    total += terms.size();
  }
  index.avg_doc_len_ = static_cast<double>(total) / static_cast<double>(chunks.size());
  return index;
}

double score_bm25(const Bm25Index& index, std::string_view query, std::size_t chunk_index) {
  if (chunk_index >= index.doc_count()) throw std::out_of_range("score_bm25: chunk index out of range");
  const auto terms = bm25_terms(query);
  const std::set<std::string> unique(terms.begin(), terms.end());
  const auto& p = index.params();
  const double len = static_cast<double>(index.doc_len(chunk_index));
  const double norm = index.avg_doc_len() > 0.0 ? 1.0 - p.b + p.b * len / index.avg_doc_len() : 1.0;
  double score = 0.0;
  for (const auto& t : unique) {
    const auto tf = static_cast<double>(index.term_freq(chunk_index, t));
    if (tf == 0.0) continue;
    score += index.idf(t) * tf * (p.k1 + 1.0) / (tf + p.k1 * norm);
  }
  return score;
}

std::vector<std::size_t> retrieve_topk(const Bm25Index& index, std::string_view query, std::size_t k) {
  if (k < 1) throw std::invalid_argument("retrieve_topk: k must be >= 1");
  const std::size_t n = index.doc_count();
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = score_bm25(index, query, i);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(k, n));
  std::sort(order.begin(), order.end());
  return order;
}

std::string assemble_context(const std::vector<Chunk>& selected, std::string_view separator) {
  std::string out;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (i) {
      if (selected[i].chunk_index <= selected[i - 1].chunk_index)
        throw std::invalid_argument("assemble_context: chunks must be in document order");
      out += separator;
    }
    out += selected[i].text;
  }
  return out;
}

RagParams rag_params_from(const AugmentationConfig& a) {
  RagParams p;
  p.chunk_tokens = a.chunk_tokens;
  p.top_k = static_cast<std::size_t>(std::max(1, a.top_k));
  p.separator = a.separator;
  return p;
}

TaskInstance retrieve_context(const TaskInstance& instance, const RagParams& params) {
  TaskInstance out = instance;
  const auto chunks = chunk_text(instance.context, params.chunk_tokens, params.cost_model);
  if (chunks.empty()) return out;
  const auto index = build_index(chunks);
  std::vector<Chunk> selected;
  for (auto i : retrieve_topk(index, instance.question, params.top_k)) selected.push_back(chunks[i]);
  out.context = assemble_context(selected, params.separator);
  return out;
}

std::string self_route_instruction() {
  return "If the passages above do not contain the information needed to answer, reply with exactly " +
         std::string(kUnanswerable) + " and nothing else.";
}

std::string_view to_string(Route r) { return r == Route::Retrieved ? "retrieved" : "full_context"; }

SelfRouteOutcome self_route(const TaskInstance& instance, Backend& backend, const BackendConfig& config,
                            const RetryPolicy& policy, const RagParams& params, const PromptTemplate& tmpl,
                            int sample_index) {
  SelfRouteOutcome out;
  const auto retrieved = retrieve_context(instance, params);
  const std::string first_prompt = apply_template(tmpl, retrieved) + "\n\n" + self_route_instruction();
  out.completion = complete(backend, config, first_prompt, instance, policy, tmpl.system_preamble, sample_index);
  out.backend_calls = 1;
  out.route = Route::Retrieved;
  if (!out.completion.prediction.ok()) return out;
  if (out.completion.prediction.output_text.find(kUnanswerable) == std::string::npos) return out;

  auto second = complete(backend, config, apply_template(tmpl, instance), instance, policy, tmpl.system_preamble,
                         sample_index);
  second.prediction.latency_ms += out.completion.prediction.latency_ms;
  out.completion = std::move(second);
  out.backend_calls = 2;
  out.route = Route::FullContext;
  return out;
}

}  // namespace loom
