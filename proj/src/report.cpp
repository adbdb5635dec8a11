// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "loom/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace loom {

namespace {

std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

// floor(a / b) for b > 0.
std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && (a < 0)) --q;
  return q;
}

double centi_to_double(std::int64_t centi) { return static_cast<double>(centi) / 100.0; }
double micro_to_double(std::int64_t micro) { return static_cast<double>(micro) / 1e6; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

MissingBenchmarksError::MissingBenchmarksError(std::vector<std::string> missing)
    : std::runtime_error("missing scores for benchmarks: " + join(missing, ", ")), missing_(std::move(missing)) {}

std::int64_t to_micro(double x) { return std::llround(x * 1e6); }

std::int64_t mean_centi(const std::vector<std::int64_t>& micros) {
  if (micros.empty()) throw std::invalid_argument("mean_centi: empty input");
  std::int64_t sum = 0;
  for (auto m : micros) sum += m;
  const auto n = static_cast<std::int64_t>(micros.size());
  // round_half_up(sum / (n * 1e4)) == floor((2 sum + n 1e4) / (2 n 1e4))
  return floor_div(2 * sum + n * 10000, 2 * n * 10000);
}

std::string format_centi(std::int64_t centi) {
  const bool neg = centi < 0;
  const std::int64_t a = neg ? -centi : centi;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%lld.%02lld", neg ? "-" : "", static_cast<long long>(a / 100),
                static_cast<long long>(a % 100));
  return buf;
}

double round2(double x) { return centi_to_double(mean_centi({to_micro(x)})); }

json to_json(const BenchmarkScore& s) {
  return json{{"benchmark_id", s.benchmark_id},
              {"mean_score", s.mean_score},
              {"instance_count", s.instance_count},
              {"failure_count", s.failure_count}};
}

BenchmarkScore benchmark_score_from_json(const json& j) {
  BenchmarkScore s;
  s.benchmark_id = j.at("benchmark_id").get<std::string>();
  s.mean_score = j.at("mean_score").get<double>();
  s.instance_count = j.at("instance_count").get<std::size_t>();
  s.failure_count = j.at("failure_count").get<std::size_t>();
  return s;
}

BenchmarkScore aggregate_benchmark(std::string benchmark_id, const std::vector<MetricResult>& results) {
  if (results.empty()) throw std::invalid_argument("aggregate_benchmark: no results for " + benchmark_id);
  std::int64_t sum = 0;
  BenchmarkScore out;
  out.benchmark_id = std::move(benchmark_id);
  out.instance_count = results.size();
  for (const auto& r : results) {
    if (r.failed()) {
      ++out.failure_count;
      continue;
    }
    sum += to_micro(r.score);
  }
  const auto n = static_cast<std::int64_t>(results.size());
  out.mean_score = micro_to_double(floor_div(200 * sum + n, 2 * n));
  return out;
}

double overall_score(const std::map<std::string, double>& scores, const std::vector<std::string>& order) {
  std::vector<std::string> missing;
  std::vector<std::int64_t> micros;
  for (const auto& id : order) {
    auto it = scores.find(id);
    if (it == scores.end()) {
      missing.push_back(id);
      continue;
    }
    micros.push_back(to_micro(it->second));
  }
  if (!missing.empty()) throw MissingBenchmarksError(std::move(missing));
  if (micros.empty()) throw std::invalid_argument("overall_score: taxonomy has no benchmarks");
  return centi_to_double(mean_centi(micros));
}

double overall_score(const std::map<std::string, double>& scores, const CapabilityTaxonomy& taxonomy) {
  return overall_score(scores, taxonomy.benchmark_order());
}

CapabilityReport capability_scores(std::string model_id, const std::map<std::string, double>& scores,
                                   const CapabilityTaxonomy& taxonomy) {
  std::vector<BenchmarkScore> full;
  for (const auto& [id, s] : scores) full.push_back(BenchmarkScore{id, s, 0, 0});
  return capability_scores(std::move(model_id), full, taxonomy);
}

CapabilityReport capability_scores(std::string model_id, const std::vector<BenchmarkScore>& scores,
                                   const CapabilityTaxonomy& taxonomy) {
  std::map<std::string, const BenchmarkScore*> by_id;
  for (const auto& s : scores) by_id[s.benchmark_id] = &s;
  std::map<std::string, double> flat;
  for (const auto& s : scores) flat[s.benchmark_id] = s.mean_score;

  CapabilityReport out;
  out.model_id = std::move(model_id);
  out.overall = overall_score(flat, taxonomy);
  for (auto cap : kCapabilityOrder) {
    auto it = taxonomy.members.find(cap);
    if (it == taxonomy.members.end() || it->second.empty()) continue;
    std::vector<std::int64_t> micros;
    for (const auto& id : it->second) {
      micros.push_back(to_micro(by_id.at(id)->mean_score));
      out.benchmarks.push_back(*by_id.at(id));
    }
    out.capability[cap] = centi_to_double(mean_centi(micros));
  }
  return out;
}

std::vector<LeaderboardRow> build_leaderboard(const std::vector<CapabilityReport>& reports) {
  std::vector<const CapabilityReport*> order;
  for (const auto& r : reports) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const CapabilityReport* a, const CapabilityReport* b) {
    const auto oa = to_micro(a->overall), ob = to_micro(b->overall);
    if (oa != ob) return oa > ob;
    return a->model_id < b->model_id;
  });
  std::vector<LeaderboardRow> rows;
  for (std::size_t i = 0; i < order.size(); ++i) rows.push_back({static_cast<int>(i + 1), order[i]});
  return rows;
}

TimingSummary timing_summary(const std::vector<StageStamp>& log) {
  TimingSummary out;
  for (const auto& s : log) {
    if (s.end_ms < s.start_ms)
      throw std::invalid_argument("timing_summary: " + s.benchmark_id + " ends before it starts");
    const auto d = s.end_ms - s.start_ms;
    auto it = std::find_if(out.durations_ms.begin(), out.durations_ms.end(),
                           [&](const auto& e) { return e.first == s.benchmark_id; });
    if (it == out.durations_ms.end()) out.durations_ms.emplace_back(s.benchmark_id, d);
    else it->second += d;
    out.total_ms += d;
  }
  return out;
}

std::string format_hms(std::int64_t ms) {
  const std::int64_t secs = std::max<std::int64_t>(0, ms) / 1000;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%lld:%02lld:%02lld", static_cast<long long>(secs / 3600),
                static_cast<long long>(secs / 60 % 60), static_cast<long long>(secs % 60));
  return buf;
}

json to_json(const TimingSummary& t) {
  json items = json::array();
  for (const auto& [id, ms] : t.durations_ms)
    items.push_back({{"benchmark_id", id}, {"duration_ms", ms}, {"duration", format_hms(ms)}});
  return json{{"benchmarks", items}, {"total_ms", t.total_ms}, {"total", format_hms(t.total_ms)}};
}

std::optional<ReportFormat> parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  if (s == "radar_json" || s == "radar") return ReportFormat::RadarJson;
  return std::nullopt;
}

namespace {

json taxonomy_json(const CapabilityTaxonomy& t) {
  json out = json::array();
  for (auto cap : kCapabilityOrder) {
    auto it = t.members.find(cap);
    if (it == t.members.end() || it->second.empty()) continue;
    out.push_back({{"capability", std::string(to_string(cap))}, {"benchmarks", it->second}});
  }
  return out;
}

json report_json(const ReportBundle& b) {
  json models = json::array();
  for (const auto& row : build_leaderboard(b.reports)) {
    const auto& r = *row.report;
    json caps = json::object();
    for (const auto& [cap, v] : r.capability) caps[std::string(to_string(cap))] = v;
    json benches = json::array();
    for (const auto& s : r.benchmarks) benches.push_back(to_json(s));
    models.push_back(
        {{"rank", row.rank}, {"model_id", r.model_id}, {"overall", r.overall}, {"capabilities", caps},
         {"benchmarks", benches}});
  }
  return json{{"taxonomy", taxonomy_json(b.taxonomy)},
              {"models", models},
              {"statistics",
               {{"overall", "flat_mean_of_benchmarks"},
                {"capability", "mean_of_member_benchmarks"},
                {"rounding", "half_up_2_decimals"}}}};
}

std::string score_text(double v) { return format_centi(mean_centi({to_micro(v)})); }

}  // namespace

std::string emit_report(const ReportBundle& b, ReportFormat format) {
  const auto order = b.taxonomy.benchmark_order();
  switch (format) {
    case ReportFormat::Json:
      return report_json(b).dump(2) + "\n";

    case ReportFormat::Csv: {
      std::string out = "model_id,overall";
      for (const auto& id : order) out += "," + csv_field(id);
      out += "\n";
      for (const auto& row : build_leaderboard(b.reports)) {
        const auto& r = *row.report;
        out += csv_field(r.model_id) + "," + score_text(r.overall);
        for (const auto& s : r.benchmarks) out += "," + score_text(s.mean_score);
        out += "\n";
      }
      return out;
    }

    case ReportFormat::Markdown: {
      std::ostringstream md;
      md << "| Rank | Model |";
      for (const auto& id : order) md << ' ' << id << " |";
      md << " Avg |\n|---:|---|";
      for (std::size_t i = 0; i < order.size(); ++i) md << "---:|";
      md << "---:|\n";
      for (const auto& row : build_leaderboard(b.reports)) {
        const auto& r = *row.report;
        md << "| " << row.rank << " | " << r.model_id << " |";
        for (const auto& s : r.benchmarks) md << ' ' << score_text(s.mean_score) << " |";
        md << ' ' << score_text(r.overall) << " |\n";
      }
      md << "\n| Model |";
      for (auto cap : kCapabilityOrder) md << ' ' << to_string(cap) << " |";
      md << "\n|---|";
      for (std::size_t i = 0; i < std::size(kCapabilityOrder); ++i) md << "---:|";
      md << "\n";
      for (const auto& row : build_leaderboard(b.reports)) {
        md << "| " << row.report->model_id << " |";
        for (auto cap : kCapabilityOrder) {
          auto it = row.report->capability.find(cap);
          md << ' ' << (it == row.report->capability.end() ? std::string("-") : score_text(it->second)) << " |";
        }
        md << "\n";
      }
      return md.str();
    }

    case ReportFormat::RadarJson: {
      json axes = json::array();
      for (auto cap : kCapabilityOrder) axes.push_back(std::string(to_string(cap)));
      json models = json::array();
      for (const auto& row : build_leaderboard(b.reports)) {
        json values = json::array();
        for (auto cap : kCapabilityOrder) {
          auto it = row.report->capability.find(cap);
          values.push_back(it == row.report->capability.end() ? json(nullptr) : json(it->second));
        }
        models.push_back({{"model_id", row.report->model_id}, {"values", values}});
      }
      return json{{"axes", axes},
                  {"statistic", "mean_of_member_benchmarks"},
                  {"scale", {{"min", 0}, {"max", 100}}},
                  {"models", models}}
                 .dump(2) +
             "\n";
    }
  }
  throw std::invalid_argument("emit_report: unknown format");
}

ReportBundle report_bundle_from_json(const json& j) {
  ReportBundle b;
  for (const auto& group : j.at("taxonomy")) {
    auto cap = parse_capability(group.at("capability").get<std::string>());
    if (!cap) throw std::invalid_argument("report: unknown capability " + group.at("capability").dump());
    b.taxonomy.members[*cap] = group.at("benchmarks").get<std::vector<std::string>>();
  }
  for (const auto& m : j.at("models")) {
    CapabilityReport r;
    r.model_id = m.at("model_id").get<std::string>();
    r.overall = m.at("overall").get<double>();
    for (const auto& [name, v] : m.at("capabilities").items()) {
      auto cap = parse_capability(name);
      if (!cap) throw std::invalid_argument("report: unknown capability " + name);
      r.capability[*cap] = v.get<double>();
    }
    for (const auto& s : m.at("benchmarks")) r.benchmarks.push_back(benchmark_score_from_json(s));
    b.reports.push_back(std::move(r));
  }
  return b;
}

}  // namespace loom
