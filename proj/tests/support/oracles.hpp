// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference implementations used only by tests. Each one is written the slow,
// obvious way and shares no code with the library it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

namespace oracle {

/// Top-down memoized LCS.
inline std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::vector<int>> memo(a.size() + 1, std::vector<int>(b.size() + 1, -1));
  std::function<int(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> int {
    if (i == a.size() || j == b.size()) return 0;
    int& m = memo[i][j];
    if (m >= 0) return m;
    if (a[i] == b[j]) return m = 1 + go(i + 1, j + 1);
    return m = std::max(go(i + 1, j), go(i, j + 1));
  };
  return static_cast<std::size_t>(go(0, 0));
}

/// Multiset intersection size by sorting both sides and walking them together.
inline std::size_t multiset_overlap(std::vector<std::string> a, std::vector<std::string> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0, n = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++n, ++i, ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return n;
}

struct Prf {
  double p, r, f;
};

inline Prf prf_from_counts(std::size_t overlap, std::size_t pred_len, std::size_t gold_len) {
  if (pred_len == 0 && gold_len == 0) return {1, 1, 1};
  if (pred_len == 0 || gold_len == 0 || overlap == 0) return {0, 0, 0};
  const double p = static_cast<double>(overlap) / static_cast<double>(pred_len);
  const double r = static_cast<double>(overlap) / static_cast<double>(gold_len);
  return {p, r, 2 * p * r / (p + r)};
}

/// Fraction of `draws` random k-subsets of n attempts (c of them correct)
/// that contain at least one correct attempt.
inline double monte_carlo_pass_at_k(int n, int c, int k, int draws, std::mt19937_64& rng) {
  std::vector<int> pool(n);
  int hits = 0;
  for (int d = 0; d < draws; ++d) {
    for (int i = 0; i < n; ++i) pool[i] = i < c ? 1 : 0;
    bool hit = false;
    for (int i = 0; i < k; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(pool[i], pool[pick(rng)]);
      hit = hit || pool[i] == 1;
    }
    hits += hit;
  }
  return static_cast<double>(hits) / draws;
}

/// Exact pass@k by enumerating all k-subsets (small n only).
inline double enumerate_pass_at_k(int n, int c, int k) {
  int total = 0, hit = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    ++total;
    bool any = false;
    for (int i = 0; i < c; ++i) any = any || (mask >> i & 1u);
    hit += any;
  }
  return static_cast<double>(hit) / total;
}

/// Okapi BM25 straight from the formula over pre-tokenized documents.
inline double bm25(const std::vector<std::vector<std::string>>& docs, const std::vector<std::string>& query,
                   std::size_t doc, double k1 = 1.5, double b = 0.75) {
  const double n = static_cast<double>(docs.size());
  double total_len = 0;
  for (const auto& d : docs) total_len += static_cast<double>(d.size());
  const double avg = total_len / n;
  std::set<std::string> terms(query.begin(), query.end());
  double score = 0;
  for (const auto& t : terms) {
    double df = 0;
    for (const auto& d : docs) df += std::find(d.begin(), d.end(), t) != d.end() ? 1 : 0;
    const double tf = static_cast<double>(std::count(docs[doc].begin(), docs[doc].end(), t));
    if (tf == 0) continue;
    const double idf = std::max(0.0, std::log((n - df + 0.5) / (df + 0.5) + 1.0));
    const double len = static_cast<double>(docs[doc].size());
    const double norm = avg > 0 ? (1 - b + b * len / avg) : 1.0;
    score += idf * tf * (k1 + 1) / (tf + k1 * norm);
  }
  return score;
}

/// Indices ranked by score descending, ties to the lower index, top k, then ascending.
inline std::vector<std::size_t> rank_topk(const std::vector<double>& scores, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> v;
  for (std::size_t i = 0; i < scores.size(); ++i) v.emplace_back(-scores[i], i);
  std::sort(v.begin(), v.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, v.size()); ++i) out.push_back(v[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

/// Optimal makespan by trying every assignment of n items to m workers.
inline std::uint64_t optimal_makespan(const std::vector<std::uint64_t>& costs, int m) {
  const std::size_t n = costs.size();
  std::uint64_t best = UINT64_MAX;
  std::vector<std::uint64_t> loads(static_cast<std::size_t>(m));
  std::function<void(std::size_t)> go = [&](std::size_t i) {
    if (i == n) {
      best = std::min(best, *std::max_element(loads.begin(), loads.end()));
      return;
    }
    for (int w = 0; w < m; ++w) {
      loads[w] += costs[i];
      if (loads[w] < best) go(i + 1);
      loads[w] -= costs[i];
    }
  };
  go(0);
  return n == 0 ? 0 : best;
}

/// Resolves `var` in a context containing "VAR X = 123." / "VAR Y = VAR X."
/// statements by repeated substitution.
inline std::optional<std::string> resolve_variable(const std::string& context, const std::string& var) {
  static const std::regex stmt(R"(VAR (\S+) = (VAR (\S+)|(\d+))\.)");
  std::map<std::string, std::string> literal, alias;
  for (auto it = std::sregex_iterator(context.begin(), context.end(), stmt); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    if (m[3].matched)
      alias[m[1]] = m[3];
    else
      literal[m[1]] = m[4];
  }
  std::string cur = var;
  for (std::size_t steps = 0; steps <= alias.size() + 1; ++steps) {
    if (auto l = literal.find(cur); l != literal.end()) return l->second;
    auto a = alias.find(cur);
    if (a == alias.end()) return std::nullopt;
    cur = a->second;
  }
  return std::nullopt;
}

}  // namespace oracle

namespace testing_support {

/// A fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("loomeval-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
