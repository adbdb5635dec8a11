// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point: run, list-benchmarks, report, serve.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "loom/core.hpp"
#include "loom/ingest.hpp"
#include "loom/pipeline.hpp"
#include "loom/report.hpp"
#include "loom/service.hpp"

namespace fs = std::filesystem;
using namespace loom;

namespace {

json load_doc(const fs::path& p) {
  if (p.extension() == ".json") {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    return json::parse(in);
  }
  return yaml_file_to_json(p);
}

std::string sanitize(std::string_view s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? "run" : out;
}

// A backend config file, or one of: echo | mock_oracle[:ACCURACY] | scripted:PATH | http(s)://URL
BackendConfig parse_server(const std::string& arg) {
  if (fs::is_regular_file(arg)) return backend_config_from_json(load_doc(arg));
  BackendConfig b;
  if (arg == "echo") {
    b.kind = BackendConfig::Kind::Echo;
  } else if (arg.rfind("mock_oracle", 0) == 0) {
    b.kind = BackendConfig::Kind::MockOracle;
    if (auto colon = arg.find(':'); colon != std::string::npos) b.oracle_accuracy = std::stod(arg.substr(colon + 1));
  } else if (arg.rfind("scripted:", 0) == 0) {
    b.kind = BackendConfig::Kind::Scripted;
    b.script_path = arg.substr(9);
  } else if (arg.rfind("http://", 0) == 0 || arg.rfind("https://", 0) == 0) {
    b.kind = BackendConfig::Kind::WireApi;
    b.endpoint_url = arg;
    b.api_key_env = "LOOM_API_KEY";
  } else {
    throw std::runtime_error("--server: not a file and not a known backend spec: " + arg);
  }
  return b;
}

// An augmentation config file, or bm25 | self_route.
AugmentationConfig parse_acceleration(const std::string& arg) {
  if (fs::is_regular_file(arg)) return augmentation_from_json(load_doc(arg));
  AugmentationConfig a;
  if (arg == "bm25" || arg == "rag") return a;
  if (arg == "self_route") {
    a.strategy = AugmentationConfig::Strategy::SelfRoute;
    return a;
  }
  throw std::runtime_error("--acceleration: not a file and not one of bm25, self_route: " + arg);
}

void print_violations(const ValidationError& e) {
  std::cerr << "invalid configuration:\n";
  for (const auto& v : e.violations()) std::cerr << "  - " << v << "\n";
}

fs::path find_report(const std::string& run, const fs::path& runs_root) {
  for (const fs::path& p : {fs::path(run) / "report.json", runs_root / run / "report.json", fs::path(run)})
    if (fs::is_regular_file(p)) return p;
  throw std::runtime_error("no report.json for run '" + run + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loomeval: long-context model evaluation runner"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Evaluate a model on one or more benchmarks");
  std::string config_file, model_path, template_id, device, server = "echo", acceleration, save_tag;
  std::vector<std::string> cfg_paths, bench_ids;
  int gp_num = 1;
  bool eval = false;
  std::uint64_t seed = 0;
  std::string runs_root = "runs";
  int retries = -1, timeout_ms = -1;
  run->add_option("--config", config_file, "Full RunConfig file (YAML or JSON) used as the base");
  run->add_option("--model_path", model_path, "Model identifier sent to the backend");
  run->add_option("--cfg_path", cfg_paths, "Benchmark manifest file or manifest directory (repeatable)");
  run->add_option("--benchmarks", bench_ids, "Benchmark ids to run (default: every available manifest)")->delimiter(',');
  run->add_option("--template", template_id, "Prompt template id or template file");
  run->add_option("--device", device, "Recorded in the run config; inert for remote backends");
  run->add_option("--gp_num", gp_num, "Number of parallel worker lanes")->check(CLI::PositiveNumber);
  run->add_option("--server", server,
                  "Backend config file, or echo | mock_oracle[:ACC] | scripted:PATH | http(s)://URL");
  run->add_option("--acceleration", acceleration, "Augmentation config file, or bm25 | self_route");
  run->add_flag("--eval", eval, "Score predictions and write the report");
  run->add_option("--save_tag", save_tag, "Run directory name under the runs root");
  run->add_option("--seed", seed, "Seed for mock backends");
  run->add_option("--runs_root", runs_root, "Directory holding run directories");
  run->add_option("--retries", retries, "Retries per request");
  run->add_option("--timeout_ms", timeout_ms, "Per-attempt timeout in milliseconds");

  // list-benchmarks
  auto* list = app.add_subcommand("list-benchmarks", "List available benchmark manifests");
  std::vector<std::string> list_paths;
  list->add_option("--cfg_path", list_paths, "Manifest file or directory (repeatable)");

  // report
  auto* rep = app.add_subcommand("report", "Render the report of one or more runs as a leaderboard");
  std::vector<std::string> report_runs;
  std::string format = "markdown", report_root = "runs";
  rep->add_option("run", report_runs, "Run directory or save tag (repeatable)")->required();
  rep->add_option("--format", format, "json | csv | markdown | radar_json");
  rep->add_option("--runs_root", report_root, "Directory holding run directories");

  // serve
  auto* srv = app.add_subcommand("serve", "Serve the REST control API");
  std::string bind = "127.0.0.1:8765", serve_root = "runs";
  std::vector<std::string> serve_paths;
  srv->add_option("--bind", bind, "HOST:PORT");
  srv->add_option("--runs_root", serve_root, "Directory holding run directories");
  srv->add_option("--cfg_path", serve_paths, "Manifest directory (repeatable)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      RunConfig cfg;
      if (!config_file.empty()) cfg = run_config_from_json(load_doc(config_file));
      if (!config_file.empty() && run->count("--server")) cfg.backend = parse_server(server);
      if (config_file.empty()) cfg.backend = parse_server(server);
      if (!model_path.empty()) {
        cfg.model_id = model_path;
        cfg.backend.model_name = model_path;
      }
      PipelineOptions opts;
      opts.runs_root = runs_root;
      for (const auto& p : cfg_paths) {
        opts.manifest_paths.emplace_back(p);
        if (fs::is_regular_file(p)) cfg.benchmark_ids.push_back(load_manifest(p).id);
      }
      if (!cfg_paths.empty())
        for (const auto& d : default_manifest_paths()) opts.manifest_paths.push_back(d);
      for (const auto& id : bench_ids) cfg.benchmark_ids.push_back(id);
      if (cfg.benchmark_ids.empty() && config_file.empty()) {
        const auto paths = opts.manifest_paths.empty() ? default_manifest_paths() : opts.manifest_paths;
        for (const auto& [id, spec] : available_benchmarks(paths)) cfg.benchmark_ids.push_back(id);
      }
      if (!template_id.empty()) cfg.template_id = template_id;
      if (!device.empty()) cfg.device = device;
      if (run->count("--gp_num")) cfg.worker_count = gp_num;
      if (!acceleration.empty()) cfg.augmentation = parse_acceleration(acceleration);
      if (eval) cfg.eval_enabled = true;
      else if (config_file.empty()) cfg.eval_enabled = false;
      if (run->count("--seed")) cfg.seed = seed;
      if (retries >= 0) cfg.retry.max_retries = retries;
      if (timeout_ms > 0) cfg.retry.timeout_ms = timeout_ms;
      if (!save_tag.empty()) cfg.save_tag = save_tag;
      if (cfg.save_tag.empty()) cfg.save_tag = sanitize(cfg.model_id);

      opts.on_progress = [last = std::string()](const RunState& s) mutable {
        const std::string phase(to_string(s.phase));
        if (phase != last) std::cerr << "[" << s.run_id << "] " << phase << "\n";
        last = phase;
      };
      const auto result = run_pipeline(cfg, opts);
      std::cout << "run directory: " << result.run_dir.string() << "\n";
      std::cout << "new predictions: " << result.new_predictions << "\n";
      if (result.report) {
        for (const auto& b : result.report->benchmarks)
          std::cout << b.benchmark_id << ": " << format_centi(mean_centi({to_micro(b.mean_score)})) << " ("
                    << b.instance_count << " instances, " << b.failure_count << " failed)\n";
        std::cout << "overall: " << format_centi(mean_centi({to_micro(result.report->overall)})) << "\n";
      }
      return 0;
    }

    if (*list) {
      std::vector<fs::path> paths(list_paths.begin(), list_paths.end());
      if (paths.empty()) paths = default_manifest_paths();
      for (const auto& [id, spec] : available_benchmarks(paths)) {
        std::cout << id << "\t" << to_string(spec.capability) << "\t" << to_string(spec.metric.kind) << "\t";
        if (spec.source.kind == SourceDescriptor::Kind::Synthetic)
          std::cout << "synthetic:" << spec.source.generator;
        else
          std::cout << spec.source.uri;
        std::cout << "\n";
      }
      return 0;
    }

    if (*rep) {
      auto fmt = parse_report_format(format);
      if (!fmt) throw std::runtime_error("unknown report format '" + format + "'");
      ReportBundle merged;
      for (std::size_t i = 0; i < report_runs.size(); ++i) {
        std::ifstream in(find_report(report_runs[i], report_root));
        auto bundle = report_bundle_from_json(json::parse(in));
        if (i == 0) merged.taxonomy = bundle.taxonomy;
        else if (bundle.taxonomy.members != merged.taxonomy.members)
          throw std::runtime_error("run '" + report_runs[i] + "' covers different benchmarks; cannot rank together");
        for (auto& r : bundle.reports) merged.reports.push_back(std::move(r));
      }
      std::cout << emit_report(merged, *fmt);
      return 0;
    }

    if (*srv) {
      const auto [host, port] = parse_bind_address(bind);
      PipelineOptions opts;
      opts.runs_root = serve_root;
      for (const auto& p : serve_paths) opts.manifest_paths.emplace_back(p);
      if (!opts.manifest_paths.empty())
        for (const auto& d : default_manifest_paths()) opts.manifest_paths.push_back(d);
      RunService service(opts);
      ControlServer server(service);
      if (!server.bind(host, port)) {
        std::cerr << "cannot bind " << bind << " (address in use?)\n";
        return 1;
      }
      std::cerr << "serving on " << bind << "\n";
      return server.listen() ? 0 : 1;
    }
  } catch (const ValidationError& e) {
    print_violations(e);
    return 2;
  } catch (const ResumeRefused& e) {
    std::cerr << "refusing to resume: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
