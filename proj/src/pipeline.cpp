// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "loom/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "loom/evaluator.hpp"
#include "loom/rag.hpp"
#include "loom/scheduler.hpp"

#ifndef LOOM_BUNDLED_BENCHMARKS_DIR
#define LOOM_BUNDLED_BENCHMARKS_DIR ""
#endif

namespace fs = std::filesystem;

namespace loom {

namespace {

constexpr std::string_view kPhaseNames[] = {"queued", "ingesting", "scheduling", "inferring",
                                            "scoring", "complete", "failed"};

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw PipelineError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Whole-file replacement: write a sibling temp file, then rename over the target.
void write_atomic(const fs::path& p, std::string_view content) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw PipelineError("short write to " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

PromptTemplate resolve_template(const std::string& id) {
  static const TemplateRegistry registry;
  if (const auto* t = registry.find(id)) return *t;
  if (fs::is_regular_file(id)) return load_template_file(id);
  throw PipelineError("unknown template '" + id + "'");
}

// Serializes state updates and forwards snapshots to the observer.
class Progress {
 public:
  Progress(std::string run_id, std::function<void(const RunState&)> cb) : cb_(std::move(cb)) {
    state_.run_id = std::move(run_id);
    state_.started_ms = now_ms();
  }

  void phase(Phase p) {
    std::lock_guard lock(mu_);
    state_.phase = p;
    if (p == Phase::Complete || p == Phase::Failed) state_.finished_ms = now_ms();
    notify();
  }
  void bench(const std::string& id, Phase p) {
    std::lock_guard lock(mu_);
    state_.benchmark_status[id] = std::string(to_string(p));
    notify();
  }
  void totals(std::uint64_t done, std::uint64_t total) {
    std::lock_guard lock(mu_);
    state_.done_instances = done;
    state_.total_instances = total;
    notify();
  }
  void tick() {
    std::lock_guard lock(mu_);
    ++state_.done_instances;
    notify();
  }
  void fail(std::string error) {
    std::lock_guard lock(mu_);
    state_.error = std::move(error);
    state_.phase = Phase::Failed;
    state_.finished_ms = now_ms();
    notify();
  }
  RunState snapshot() const {
    std::lock_guard lock(mu_);
    return state_;
  }

 private:
  void notify() {
    if (cb_) cb_(state_);
  }

  mutable std::mutex mu_;
  RunState state_;
  std::function<void(const RunState&)> cb_;
};

// Append-only JSONL sink: each record is one line, written and flushed whole.
class PredictionLog {
 public:
  explicit PredictionLog(const fs::path& p) : out_(p, std::ios::binary | std::ios::app) {
    if (!out_) throw PipelineError("cannot open " + p.string());
  }
  void append(const Prediction& pred) {
    const std::string line = to_json(pred).dump() + "\n";
    std::lock_guard lock(mu_);
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

struct BenchmarkWork {
  BenchmarkSpec spec;
  PromptTemplate tmpl;
  std::vector<TaskInstance> instances;
  std::map<std::string, Prediction> predictions;  // by instance id
  std::unique_ptr<PredictionLog> log;
  std::atomic<std::int64_t> first_start{0};
  std::atomic<std::int64_t> last_end{0};
};

// Loads prior records. Unparseable lines go to <file>.quarantine and failed
// records are dropped so that both are re-run; the file is rewritten to the
// records that are kept.
std::uint64_t load_predictions(const fs::path& path, const std::set<std::string>& known,
                               std::map<std::string, Prediction>& out) {
  if (!fs::exists(path)) return 0;
  std::istringstream in(read_file(path));
  std::string line, kept, bad;
  std::uint64_t quarantined = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto pred = prediction_from_json(json::parse(line));
      if (!known.count(pred.instance_id) || !pred.ok() || out.count(pred.instance_id)) continue;
      kept += line + "\n";
      out.emplace(pred.instance_id, std::move(pred));
    } catch (const std::exception&) {
      bad += line + "\n";
      ++quarantined;
    }
  }
  if (quarantined) {
    std::cerr << "warning: " << quarantined << " corrupt prediction line(s) in " << path.string()
              << " moved to quarantine; those instances will be re-run\n";
    std::ofstream q(path.string() + ".quarantine", std::ios::binary | std::ios::app);
    q << bad;
  }
  write_atomic(path, kept);
  return quarantined;
}

Completion predict(const TaskInstance& inst, BenchmarkWork& w, Backend& backend, const RunConfig& cfg,
                   int sample_index) {
  if (cfg.augmentation) {
    const auto params = rag_params_from(*cfg.augmentation);
    if (cfg.augmentation->strategy == AugmentationConfig::Strategy::SelfRoute)
      return self_route(inst, backend, cfg.backend, cfg.retry, params, w.tmpl, sample_index).completion;
    const auto retrieved = retrieve_context(inst, params);
    return complete(backend, cfg.backend, apply_template(w.tmpl, retrieved), inst, cfg.retry,
                    w.tmpl.system_preamble, sample_index);
  }
  return complete(backend, cfg.backend, apply_template(w.tmpl, inst), inst, cfg.retry, w.tmpl.system_preamble,
                  sample_index);
}

// One prediction record, drawing k samples for pass@k metrics.
Completion predict_record(const TaskInstance& inst, BenchmarkWork& w, Backend& backend, const RunConfig& cfg) {
  const int samples = inst.metric.kind == MetricKind::PassAtK ? std::max(1, inst.metric.k) : 1;
  auto first = predict(inst, w, backend, cfg, 0);
  if (samples == 1 || !first.prediction.ok()) return first;
  first.prediction.samples.push_back(first.prediction.output_text);
  for (int s = 1; s < samples; ++s) {
    auto next = predict(inst, w, backend, cfg, s);
    if (!next.prediction.ok()) return next;
    first.prediction.samples.push_back(next.prediction.output_text);
    first.prediction.latency_ms += next.prediction.latency_ms;
  }
  return first;
}

}  // namespace

std::string_view to_string(Phase p) { return kPhaseNames[static_cast<int>(p)]; }

std::optional<Phase> parse_phase(std::string_view s) {
  for (int i = 0; i < 7; ++i)
    if (kPhaseNames[i] == s) return static_cast<Phase>(i);
  return std::nullopt;
}

json to_json(const RunState& s) {
  json j{{"run_id", s.run_id},
         {"phase", std::string(to_string(s.phase))},
         {"progress", {{"done", s.done_instances}, {"total", s.total_instances}}},
         {"benchmarks", s.benchmark_status}};
  j["started_ms"] = s.started_ms ? json(*s.started_ms) : json(nullptr);
  j["finished_ms"] = s.finished_ms ? json(*s.finished_ms) : json(nullptr);
  if (s.error) j["error"] = *s.error;
  return j;
}

RunState run_state_from_json(const json& j) {
  RunState s;
  s.run_id = j.at("run_id").get<std::string>();
  auto phase = parse_phase(j.at("phase").get<std::string>());
  if (!phase) throw std::invalid_argument("unknown phase " + j.at("phase").dump());
  s.phase = *phase;
  s.done_instances = j.at("progress").at("done").get<std::uint64_t>();
  s.total_instances = j.at("progress").at("total").get<std::uint64_t>();
  if (j.contains("benchmarks")) s.benchmark_status = j.at("benchmarks").get<std::map<std::string, std::string>>();
  if (j.contains("started_ms") && !j.at("started_ms").is_null()) s.started_ms = j.at("started_ms").get<std::int64_t>();
  if (j.contains("finished_ms") && !j.at("finished_ms").is_null())
    s.finished_ms = j.at("finished_ms").get<std::int64_t>();
  if (j.contains("error")) s.error = j.at("error").get<std::string>();
  return s;
}

ResumeRefused::ResumeRefused(std::vector<std::string> changed)
    : PipelineError("run directory was created with a different config; changed fields: " + join(changed, ", ")),
      changed_(std::move(changed)) {}

std::vector<fs::path> default_manifest_paths() {
  std::vector<fs::path> out;
  if (fs::is_directory("benchmarks")) out.emplace_back("benchmarks");
  const fs::path bundled = LOOM_BUNDLED_BENCHMARKS_DIR;
  if (!bundled.empty() && fs::is_directory(bundled)) {
    std::error_code ec;
    if (out.empty() || !fs::equivalent(out.front(), bundled, ec)) out.push_back(bundled);
  }
  return out;
}

std::map<std::string, BenchmarkSpec> available_benchmarks(const std::vector<fs::path>& paths) {
  std::map<std::string, BenchmarkSpec> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      for (const auto& [id, file] : discover_manifests({p})) {
        if (out.count(id)) continue;
        try {
          out.emplace(id, load_manifest(file));
        } catch (const std::exception& e) {
          std::cerr << "warning: skipping manifest " << file.string() << ": " << e.what() << "\n";
        }
      }
    } else if (fs::is_regular_file(p)) {
      try {
        auto spec = load_manifest(p);
        out.emplace(spec.id, std::move(spec));
      } catch (const std::exception& e) {
        std::cerr << "warning: skipping manifest " << p.string() << ": " << e.what() << "\n";
      }
    }
  }
  return out;
}

std::vector<BenchmarkSpec> resolve_benchmarks(const std::vector<std::string>& ids, const std::vector<fs::path>& paths) {
  const auto available = available_benchmarks(paths);
  std::vector<BenchmarkSpec> specs;
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    auto it = available.find(id);
    if (it == available.end())
      missing.push_back(id);
    else
      specs.push_back(it->second);
  }
  if (!missing.empty()) throw PipelineError("unresolvable benchmark manifest(s): " + join(missing, ", "));
  return specs;
}

CapabilityTaxonomy run_taxonomy(const std::vector<BenchmarkSpec>& specs) {
  std::set<std::string> ids;
  for (const auto& s : specs) ids.insert(s.id);
  CapabilityTaxonomy out;
  for (const auto& [cap, members] : default_taxonomy().members)
    for (const auto& id : members)
      if (ids.erase(id)) out.members[cap].push_back(id);
  for (const auto& s : specs)
    if (ids.count(s.id)) out.members[s.capability].push_back(s.id);
  return out;
}

PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options) {
  if (auto v = validate_config(config); !v.empty()) throw ValidationError(std::move(v));

  PipelineResult result;
  result.run_dir = options.runs_root / config.save_tag;
  const fs::path dir = result.run_dir;
  Progress progress(config.save_tag, options.on_progress);

  try {
    // Snapshot or resume check.
    const fs::path snapshot = dir / "config.json";
    if (fs::exists(snapshot)) {
      RunConfig previous;
      try {
        previous = run_config_from_json(json::parse(read_file(snapshot)));
      } catch (const std::exception& e) {
        throw PipelineError("unreadable config snapshot " + snapshot.string() + ": " + e.what());
      }
      if (config_fingerprint(previous) != config_fingerprint(config))
        throw ResumeRefused(config_diff(previous, config));
    } else {
      fs::create_directories(dir);
      write_atomic(snapshot, to_json(config).dump(2) + "\n");
    }

    // Ingest.
    progress.phase(Phase::Ingesting);
    const auto manifest_paths = options.manifest_paths.empty() ? default_manifest_paths() : options.manifest_paths;
    const auto specs = resolve_benchmarks(config.benchmark_ids, manifest_paths);
    std::vector<std::unique_ptr<BenchmarkWork>> work;
    std::map<std::string, BenchmarkWork*> by_instance;
    for (const auto& spec : specs) {
      auto w = std::make_unique<BenchmarkWork>();
      w->spec = spec;
      w->tmpl = resolve_template(config.template_id.value_or(spec.template_id));
      progress.bench(spec.id, Phase::Ingesting);
      IngestOptions io;
      io.prompt_template = w->tmpl;
      IngestResult ingested;
      try {
        ingested = ingest(spec, io);
      } catch (const std::exception& e) {
        throw PipelineError("ingesting " + spec.id + ": " + e.what());
      }
      if (!ingested.skipped.empty()) {
        json skipped = json::array();
        for (const auto& s : ingested.skipped) skipped.push_back({{"record_index", s.record_index}, {"reason", s.reason}});
        write_atomic(dir / "data" / (spec.id + ".skipped.json"), skipped.dump(2) + "\n");
        std::cerr << "warning: " << spec.id << ": skipped " << ingested.skipped.size() << " malformed record(s)\n";
      }
      w->instances = std::move(ingested.instances);
      write_atomic(dir / "data" / (spec.id + ".jsonl"), to_jsonl(w->instances));
      for (const auto& inst : w->instances) by_instance[inst.instance_id] = w.get();
      work.push_back(std::move(w));
    }

    // Schedule.
    progress.phase(Phase::Scheduling);
    std::vector<CostItem> items;
    std::map<std::string, const TaskInstance*> instance_of;
    for (const auto& w : work) {
      progress.bench(w->spec.id, Phase::Scheduling);
      for (const auto& inst : w->instances) {
        items.push_back({inst.instance_id, inst.est_tokens});
        instance_of[inst.instance_id] = &inst;
      }
    }
    const auto plan = plan_lpt(items, config.worker_count);
    write_atomic(dir / "plan.json", to_json(plan).dump(2) + "\n");

    // Infer.
    progress.phase(Phase::Inferring);
    fs::create_directories(dir / "predictions");
    std::uint64_t done = 0;
    for (auto& w : work) {
      std::set<std::string> known;
      for (const auto& inst : w->instances) known.insert(inst.instance_id);
      const auto path = dir / "predictions" / (w->spec.id + ".jsonl");
      result.quarantined_lines += load_predictions(path, known, w->predictions);
      done += w->predictions.size();
      w->log = std::make_unique<PredictionLog>(path);
      progress.bench(w->spec.id, Phase::Inferring);
    }
    progress.totals(done, items.size());

    std::shared_ptr<Backend> backend = options.backend ? options.backend : make_backend(config.backend, config.seed);

    std::vector<std::vector<const TaskInstance*>> lanes(plan.worker_loads.size());
    for (std::size_t l = 0; l < lanes.size(); ++l)
      for (const auto& id : plan.worker_loads[l])
        if (!by_instance.at(id)->predictions.count(id)) lanes[l].push_back(instance_of.at(id));

    std::mutex pred_mu;
    std::atomic<std::uint64_t> fresh{0};
    auto run_one = [&](const TaskInstance& inst) {
      auto& w = *by_instance.at(inst.instance_id);
      std::int64_t expected = 0;
      const auto t0 = now_ms();
      w.first_start.compare_exchange_strong(expected, t0);
      auto c = predict_record(inst, w, *backend, config);
      w.log->append(c.prediction);
      ++fresh;
      progress.tick();
      std::lock_guard lock(pred_mu);
      w.last_end.store(std::max(w.last_end.load(), now_ms()));
      w.predictions[inst.instance_id] = std::move(c.prediction);
      return c.cause;
    };

    // First contact is made synchronously so that an unreachable wire endpoint
    // fails the run instead of producing a file of connection failures.
    if (config.backend.kind == BackendConfig::Kind::WireApi && !options.backend) {
      for (auto& lane : lanes) {
        if (lane.empty()) continue;
        const TaskInstance* first = lane.front();
        lane.erase(lane.begin());
        if (run_one(*first) == FailureCause::Connection)
          throw PipelineError("backend unreachable at " + config.backend.endpoint_url);
        break;
      }
    }

    std::exception_ptr lane_error;
    std::mutex err_mu;
    std::atomic<bool> abort{false};
    {
      std::vector<std::jthread> threads;
      for (const auto& lane : lanes) {
        if (lane.empty()) continue;
        threads.emplace_back([&, lane_items = &lane] {
          for (const auto* inst : *lane_items) {
            if (abort) return;
            try {
              run_one(*inst);
            } catch (...) {
              std::lock_guard lock(err_mu);
              if (!lane_error) lane_error = std::current_exception();
              abort = true;
              return;
            }
          }
        });
      }
    }
    if (lane_error) std::rethrow_exception(lane_error);
    result.new_predictions = fresh.load();

    // Durations accumulate over resumed sessions.
    std::map<std::string, std::int64_t> earlier;
    if (fs::exists(dir / "timing.json")) {
      try {
        for (const auto& b : json::parse(read_file(dir / "timing.json")).at("benchmarks"))
          earlier[b.at("benchmark_id").get<std::string>()] = b.at("duration_ms").get<std::int64_t>();
      } catch (const std::exception&) {
        std::cerr << "warning: ignoring unreadable timing.json\n";
      }
    }
    std::vector<StageStamp> stamps;
    for (const auto& w : work) {
      const auto start = w->first_start.load();
      const auto end = std::max(start, w->last_end.load());
      stamps.push_back({w->spec.id, start - earlier[w->spec.id], end});
    }
    write_atomic(dir / "timing.json", to_json(timing_summary(stamps)).dump(2) + "\n");

    if (!config.eval_enabled) {
      for (const auto& w : work) progress.bench(w->spec.id, Phase::Complete);
      progress.phase(Phase::Complete);
      result.state = progress.snapshot();
      return result;
    }

    // Score.
    progress.phase(Phase::Scoring);
    std::shared_ptr<Backend> judge = options.judge_backend;
    if (!judge && config.judge) judge = make_backend(*config.judge, config.seed);
    ScoringContext ctx;
    ctx.judge = judge.get();
    ctx.judge_config = config.judge ? &*config.judge : &config.backend;
    ctx.judge_policy = config.retry;

    std::vector<BenchmarkScore> scores;
    for (const auto& w : work) {
      progress.bench(w->spec.id, Phase::Scoring);
      std::vector<MetricResult> results;
      for (const auto& inst : w->instances)
        results.push_back(score_instance(inst, w->predictions.at(inst.instance_id), inst.metric, ctx));
      if (results.empty()) throw PipelineError("benchmark " + w->spec.id + " produced no instances");
      auto score = aggregate_benchmark(w->spec.id, results);
      json doc{{"benchmark_id", w->spec.id}, {"score", to_json(score)}, {"instances", json::array()}};
      for (const auto& r : results) doc["instances"].push_back(to_json(r));
      write_atomic(dir / "metrics" / (w->spec.id + ".json"), doc.dump(2) + "\n");
      scores.push_back(std::move(score));
      progress.bench(w->spec.id, Phase::Complete);
    }

    // Report.
    ReportBundle bundle{run_taxonomy(specs), {}};
    bundle.reports.push_back(capability_scores(config.model_id, scores, bundle.taxonomy));
    write_atomic(dir / "report.json", emit_report(bundle, ReportFormat::Json));
    write_atomic(dir / "report.md", emit_report(bundle, ReportFormat::Markdown));
    write_atomic(dir / "radar.json", emit_report(bundle, ReportFormat::RadarJson));
    result.report = bundle.reports.front();
    progress.phase(Phase::Complete);
    result.state = progress.snapshot();
    return result;
  } catch (const std::exception& e) {
    progress.fail(e.what());
    throw;
  }
}

}  // namespace loom
