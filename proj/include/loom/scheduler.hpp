// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Cost-balanced partitioning of instances across inference workers.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loom/core.hpp"

namespace loom {

struct CostItem {
  std::string instance_id;
  std::uint64_t cost = 0;
};

struct Assignment {
  std::vector<std::vector<std::string>> worker_loads;  // per worker, in assignment order
  std::vector<std::uint64_t> load_totals;

  bool operator==(const Assignment&) const = default;
};

struct BalanceReport {
  std::uint64_t max_load = 0;
  std::uint64_t min_load = 0;
  std::uint64_t spread = 0;
  std::vector<std::size_t> counts;
};

/// Longest-processing-time greedy: items sorted by cost descending (ties by
/// id ascending), each placed on the least-loaded worker (ties to the lowest
/// index). The result does not depend on input order.
Assignment plan_lpt(std::vector<CostItem> items, int workers);

BalanceReport balance_report(const Assignment& a);

json to_json(const Assignment& a);
Assignment assignment_from_json(const json& j);

}  // namespace loom
