// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "loom/scheduler.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace loom {

Assignment plan_lpt(std::vector<CostItem> items, int workers) {
  if (workers < 1) throw std::invalid_argument("plan_lpt: workers must be >= 1");
  std::sort(items.begin(), items.end(), [](const CostItem& a, const CostItem& b) {
    return std::tie(b.cost, a.instance_id) < std::tie(a.cost, b.instance_id);
  });

  const auto m = static_cast<std::size_t>(workers);
  Assignment plan;
  plan.worker_loads.resize(m);
  plan.load_totals.assign(m, 0);

  // (load, worker index); min-heap gives the least-loaded, lowest-index worker.
  using Slot = std::pair<std::uint64_t, std::size_t>;
  std::priority_queue<Slot, std::vector<Slot>, std::greater<>> heap;
  for (std::size_t w = 0; w < m; ++w) heap.emplace(0, w);

  for (auto& item : items) {
    auto [load, w] = heap.top();
    heap.pop();
    plan.worker_loads[w].push_back(std::move(item.instance_id));
    plan.load_totals[w] = load + item.cost;
    heap.emplace(plan.load_totals[w], w);
  }
  return plan;
}

BalanceReport balance_report(const Assignment& a) {
  BalanceReport r;
  if (a.load_totals.empty()) return r;
  auto [lo, hi] = std::minmax_element(a.load_totals.begin(), a.load_totals.end());
  r.max_load = *hi;
  r.min_load = *lo;
  r.spread = *hi - *lo;
  for (const auto& ids : a.worker_loads) r.counts.push_back(ids.size());
  return r;
}

json to_json(const Assignment& a) {
  const auto report = balance_report(a);
  return json{{"worker_loads", a.worker_loads},
              {"load_totals", a.load_totals},
              {"balance",
               {{"max_load", report.max_load},
                {"min_load", report.min_load},
                {"spread", report.spread},
                {"counts", report.counts}}}};
}

Assignment assignment_from_json(const json& j) {
  Assignment a;
  a.worker_loads = j.at("worker_loads").get<std::vector<std::vector<std::string>>>();
  a.load_totals = j.at("load_totals").get<std::vector<std::uint64_t>>();
  if (a.worker_loads.size() != a.load_totals.size())
    throw std::invalid_argument("assignment: worker_loads and load_totals differ in length");
  return a;
}

}  // namespace loom
