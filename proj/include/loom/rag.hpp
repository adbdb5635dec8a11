// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Retrieval augmentation: sentence-aligned chunking, Okapi BM25 ranking,
// context reassembly and two-pass Self-Route answering.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "loom/core.hpp"
#include "loom/gateway.hpp"
#include "loom/ingest.hpp"

namespace loom {

struct Chunk {
  std::size_t chunk_index = 0;
  std::string text;
  std::uint64_t est_tokens = 0;
  std::pair<std::size_t, std::size_t> span{0, 0};  // [start, end) byte offsets in the source

  bool operator==(const Chunk&) const = default;
};

/// Sentence spans ending after [.!?] and the whitespace that follows; the
/// spans cover the whole text.
std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(std::string_view text);

/// Greedy fill by whole sentences up to chunk_tokens; an over-long sentence
/// becomes its own chunk. Chunk texts concatenate to `text` exactly.
std::vector<Chunk> chunk_text(std::string_view text, std::uint64_t chunk_tokens, const CostModel& model = {});

/// Lowercased alphanumeric runs.
std::vector<std::string> bm25_terms(std::string_view text);

struct Bm25Params {
  double k1 = 1.5;
  double b = 0.75;
};

class Bm25Index {
 public:
  std::size_t doc_count() const { return doc_len_.size(); }
  double avg_doc_len() const { return avg_doc_len_; }
  std::size_t doc_freq(const std::string& term) const;
  std::size_t term_freq(std::size_t chunk, const std::string& term) const;
  std::size_t doc_len(std::size_t chunk) const { return doc_len_.at(chunk); }
  const Bm25Params& params() const { return params_; }

  /// ln((N - df + 0.5) / (df + 0.5) + 1), floored at 0.
  double idf(const std::string& term) const;

 private:
  friend Bm25Index build_index(const std::vector<Chunk>& chunks, Bm25Params params);

  Bm25Params params_;
  double avg_doc_len_ = 0.0;
  std::vector<std::size_t> doc_len_;
  std::unordered_map<std::string, std::size_t> df_;
  std::vector<std::unordered_map<std::string, std::size_t>> tf_;
};

/// Throws std::invalid_argument on an empty chunk list.
Bm25Index build_index(const std::vector<Chunk>& chunks, Bm25Params params = {});

/// Sum over distinct query terms of idf * tf (k1 + 1) / (tf + k1 (1 - b + b len / avg_len)).
double score_bm25(const Bm25Index& index, std::string_view query, std::size_t chunk_index);

/// Top-k chunk indices by score (ties to the lower index), returned in document order.
std::vector<std::size_t> retrieve_topk(const Bm25Index& index, std::string_view query, std::size_t k);

/// Joins chunks with `separator`. Throws std::invalid_argument unless the
/// chunks are in strictly ascending document order.
std::string assemble_context(const std::vector<Chunk>& selected, std::string_view separator);

struct RagParams {
  std::uint64_t chunk_tokens = 16000;
  std::size_t top_k = 4;
  std::string separator = "\n\n";
  CostModel cost_model;
};

RagParams rag_params_from(const AugmentationConfig& a);

/// The instance with its context replaced by the top-k chunks for its question.
TaskInstance retrieve_context(const TaskInstance& instance, const RagParams& params);

inline constexpr std::string_view kUnanswerable = "UNANSWERABLE";

/// Appended to pass-1 prompts of Self-Route.
std::string self_route_instruction();

enum class Route { Retrieved, FullContext };
std::string_view to_string(Route r);

struct SelfRouteOutcome {
  Completion completion;
  Route route = Route::Retrieved;
  int backend_calls = 0;
};

/// Pass 1 asks with retrieved context and an UNANSWERABLE escape; if the reply
/// contains the sentinel, pass 2 asks again with the full context.
SelfRouteOutcome self_route(const TaskInstance& instance, Backend& backend, const BackendConfig& config,
                            const RetryPolicy& policy, const RagParams& params, const PromptTemplate& tmpl,
                            int sample_index = 0);

}  // namespace loom
