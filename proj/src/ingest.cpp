// Copyright (c) 2026, The loomeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "loom/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <variant>

#include <httplib.h>
#include <yaml-cpp/yaml.h>

#include "loom/rng.hpp"

namespace fs = std::filesystem;

namespace loom {

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kContextTag = "{context}";
constexpr std::string_view kQuestionTag = "{question}";
constexpr std::string_view kChoicesTag = "{choices}";

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + needle.size()))
    ++n;
  return n;
}

}  // namespace

std::vector<std::string> validate_template(const PromptTemplate& t) {
  std::vector<std::string> v;
  if (t.template_id.empty()) v.emplace_back("template_id: must be nonempty");
  if (count_occurrences(t.body, kContextTag) != 1) v.emplace_back("body: must contain {context} exactly once");
  if (count_occurrences(t.body, kQuestionTag) != 1) v.emplace_back("body: must contain {question} exactly once");
  return v;
}

std::string render_choices(const std::vector<Choice>& choices) {
  std::string out;
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (i) out += '\n';
    out += choices[i].label;
    out += ". ";
    out += choices[i].text;
  }
  return out;
}

std::string apply_template(const PromptTemplate& t, const TaskInstance& inst) {
  const std::string_view body = t.body;
  std::string out;
  out.reserve(body.size() + inst.context.size() + inst.question.size());
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '{') {
      if (body.substr(i, kContextTag.size()) == kContextTag) {
        out += inst.context;
        i += kContextTag.size();
        continue;
      }
      if (body.substr(i, kQuestionTag.size()) == kQuestionTag) {
        out += inst.question;
        i += kQuestionTag.size();
        continue;
      }
      if (body.substr(i, kChoicesTag.size()) == kChoicesTag) {
        if (inst.choices.empty())
          throw TemplateError("template '" + t.template_id + "' references {choices} but instance " +
                              inst.instance_id + " has none");
        out += render_choices(inst.choices);
        i += kChoicesTag.size();
        continue;
      }
    }
    out += body[i++];
  }
  return out;
}

TemplateRegistry::TemplateRegistry() {
  add({"default_qa", "{context}\n\nQuestion: {question}\nAnswer:", ""});
  add({"niah", "{context}\n\n{question}", ""});
  add({"multiple_choice",
       "{context}\n\nQuestion: {question}\n{choices}\nAnswer with the letter of the correct option.", ""});
  add({"citation",
       "Answer the question using the numbered passages below and cite supporting passages as [i].\n\n"
       "{context}\n\nQuestion: {question}\nAnswer:",
       ""});
  add({"generation", "{context}\n\n{question}", "You are a careful long-form writer."});
}

void TemplateRegistry::add(PromptTemplate t) {
  if (auto v = validate_template(t); !v.empty()) throw ValidationError(std::move(v));
  auto id = t.template_id;
  templates_.insert_or_assign(std::move(id), std::move(t));
}

const PromptTemplate* TemplateRegistry::find(std::string_view id) const {
  auto it = templates_.find(id);
  return it == templates_.end() ? nullptr : &it->second;
}

const PromptTemplate& TemplateRegistry::at(std::string_view id) const {
  if (const auto* t = find(id)) return *t;
  throw std::out_of_range("unknown template '" + std::string(id) + "'");
}

std::vector<std::string> TemplateRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : templates_) out.push_back(id);
  return out;
}

PromptTemplate load_template_file(const fs::path& path) {
  const json doc = yaml_file_to_json(path);
  if (!doc.is_object()) throw ManifestError(path.string() + ": template document must be a mapping");
  PromptTemplate t;
  try {
    t.template_id = doc.value("template_id", path.stem().string());
    t.body = doc.at("body").get<std::string>();
    t.system_preamble = doc.value("system_preamble", std::string{});
  } catch (const json::exception& e) {
    throw ManifestError(path.string() + ": " + e.what());
  }
  if (auto v = validate_template(t); !v.empty()) throw ValidationError(std::move(v));
  return t;
}

// ---------------------------------------------------------------------------
// Cost estimation
// ---------------------------------------------------------------------------

namespace {

std::uint64_t bytes_to_tokens(std::uint64_t bytes, double bytes_per_token) {
  if (bytes == 0) return 0;
  return static_cast<std::uint64_t>(std::ceil(static_cast<double>(bytes) / bytes_per_token));
}

}  // namespace

std::uint64_t estimate_cost(std::string_view text, const CostModel& model) {
  if (model.mode == CostModel::Mode::ByteHeuristic) return bytes_to_tokens(text.size(), model.bytes_per_token);
  std::uint64_t units = 0;
  bool in_unit = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c);
    if (!space && !in_unit) ++units;
    in_unit = !space;
  }
  return units;
}

// ---------------------------------------------------------------------------
// YAML / manifests
// ---------------------------------------------------------------------------

namespace {

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& child : node) arr.push_back(yaml_to_json(child));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
    case YAML::NodeType::Scalar: {
      const std::string& s = node.Scalar();
      if (node.Tag() == "!") return s;  // quoted
      if (s == "~" || s == "null" || s == "Null" || s == "NULL") return nullptr;
      if (s == "true" || s == "True" || s == "TRUE") return true;
      if (s == "false" || s == "False" || s == "FALSE") return false;
      if (!s.empty()) {
        char* end = nullptr;
        errno = 0;
        if (s[0] == '-') {
          long long v = std::strtoll(s.c_str(), &end, 10);
          if (*end == '\0' && errno == 0) return v;
        } else if (std::isdigit(static_cast<unsigned char>(s[0])) || s[0] == '+') {
          unsigned long long v = std::strtoull(s.c_str(), &end, 10);
          if (*end == '\0' && errno == 0) return v;
        }
        errno = 0;
        double d = std::strtod(s.c_str(), &end);
        if (*end == '\0' && errno == 0 && (std::isdigit(static_cast<unsigned char>(s[0])) || s[0] == '-' ||
                                           s[0] == '+' || s[0] == '.'))
          return d;
      }
      return s;
    }
  }
  return nullptr;
}

}  // namespace

json yaml_file_to_json(const fs::path& path) {
  if (!fs::exists(path)) throw ManifestError(path.string() + ": no such file");
  try {
    return yaml_to_json(YAML::LoadFile(path.string()));
  } catch (const YAML::Exception& e) {
    throw ManifestError(path.string() + ": " + e.what());
  }
}

BenchmarkSpec manifest_from_json(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ManifestError("manifest must be a mapping");
  BenchmarkSpec spec;
  std::vector<std::string> v;

  auto str = [&](const json& obj, const char* key, std::string& out, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return false;
    if (!it->is_string()) {
      v.push_back(path + ": expected a string");
      return false;
    }
    out = it->get<std::string>();
    return true;
  };

  if (!str(doc, "id", spec.id, "id")) v.emplace_back("id: missing");

  std::string capability;
  if (!str(doc, "capability", capability, "capability")) {
    v.emplace_back("capability: missing");
  } else if (auto c = parse_capability(capability)) {
    spec.capability = *c;
  } else {
    v.push_back("capability: '" + capability +
                "' is not one of Faithfulness, General, Reasoning, Retrieval, Generation, Specialization");
  }

  if (auto src = doc.find("source"); src != doc.end() && src->is_object()) {
    std::string kind;
    str(*src, "kind", kind, "source.kind");
    if (kind == "local" || kind == "http") {
      spec.source.kind = kind == "local" ? SourceDescriptor::Kind::Local : SourceDescriptor::Kind::Http;
      str(*src, "uri", spec.source.uri, "source.uri");
      if (kind == "local" && !spec.source.uri.empty() && !base_dir.empty() && fs::path(spec.source.uri).is_relative())
        spec.source.uri = (base_dir / spec.source.uri).lexically_normal().string();
    } else if (kind == "synthetic") {
      spec.source.kind = SourceDescriptor::Kind::Synthetic;
      str(*src, "generator", spec.source.generator, "source.generator");
      if (auto p = src->find("params"); p != src->end() && !p->is_null()) {
        if (p->is_object())
          spec.source.params = *p;
        else
          v.emplace_back("source.params: expected a mapping");
      }
    } else {
      v.push_back("source.kind: '" + kind + "' is not one of local, http, synthetic");
    }
  } else {
    v.emplace_back("source: missing or not a mapping");
  }

  if (auto fm = doc.find("field_map"); fm != doc.end() && fm->is_object()) {
    for (const auto& [raw, canon] : fm->items()) {
      if (canon.is_string())
        spec.field_map[raw] = canon.get<std::string>();
      else
        v.push_back("field_map." + raw + ": expected a string");
    }
  } else if (doc.contains("field_map")) {
    v.emplace_back("field_map: expected a mapping");
  }

  str(doc, "template_id", spec.template_id, "template_id");

  if (auto m = doc.find("metric"); m != doc.end() && m->is_object()) {
    std::string kind;
    str(*m, "kind", kind, "metric.kind");
    if (auto k = parse_metric_kind(kind))
      spec.metric.kind = *k;
    else
      v.push_back("metric.kind: unknown metric kind '" + kind + "'");
    if (auto n = m->find("normalization"); n != m->end() && !n->is_null()) {
      spec.metric.normalization.clear();
      if (!n->is_array()) v.emplace_back("metric.normalization: expected a list");
      else
        for (const auto& rule : *n) {
          auto parsed = rule.is_string() ? parse_normalization_rule(rule.get<std::string>()) : std::nullopt;
          if (parsed)
            spec.metric.normalization.insert(*parsed);
          else
            v.push_back("metric.normalization: unknown rule " + rule.dump());
        }
    }
    if (auto k = m->find("k"); k != m->end() && !k->is_null()) {
      if (k->is_number_integer())
        spec.metric.k = k->get<int>();
      else
        v.emplace_back("metric.k: expected an integer");
    }
    str(*m, "rubric", spec.metric.rubric_id, "metric.rubric");
  } else {
    v.emplace_back("metric: missing or not a mapping");
  }

  if (auto lr = doc.find("length_range"); lr != doc.end() && !lr->is_null()) {
    if (lr->is_array() && lr->size() == 2 && (*lr)[0].is_number_unsigned() && (*lr)[1].is_number_unsigned())
      spec.declared_length_range = {(*lr)[0].get<std::uint64_t>(), (*lr)[1].get<std::uint64_t>()};
    else
      v.emplace_back("length_range: expected [min_tokens, max_tokens]");
  }
  if (auto lim = doc.find("limit"); lim != doc.end() && !lim->is_null()) {
    if (lim->is_number_unsigned())
      spec.limit = lim->get<std::uint64_t>();
    else
      v.emplace_back("limit: expected a positive integer");
  }

  for (auto& violation : validate_spec(spec))
    if (std::find(v.begin(), v.end(), violation) == v.end()) v.push_back(std::move(violation));
  if (!v.empty()) throw ValidationError(std::move(v));
  return spec;
}

BenchmarkSpec load_manifest(const fs::path& path) {
  return manifest_from_json(yaml_file_to_json(path), path.parent_path());
}

json to_json(const BenchmarkSpec& spec) {
  json source;
  switch (spec.source.kind) {
    case SourceDescriptor::Kind::Local:
      source = {{"kind", "local"}, {"uri", spec.source.uri}};
      break;
    case SourceDescriptor::Kind::Http:
      source = {{"kind", "http"}, {"uri", spec.source.uri}};
      break;
    case SourceDescriptor::Kind::Synthetic:
      source = {{"kind", "synthetic"}, {"generator", spec.source.generator}, {"params", spec.source.params}};
      break;
  }
  json metric = to_json(spec.metric);
  if (metric.contains("rubric_id")) {
    metric["rubric"] = metric["rubric_id"];
    metric.erase("rubric_id");
  }
  json j{{"id", spec.id},
         {"capability", std::string(to_string(spec.capability))},
         {"source", source},
         {"field_map", spec.field_map},
         {"template_id", spec.template_id},
         {"metric", metric},
         {"length_range", {spec.declared_length_range.first, spec.declared_length_range.second}}};
  if (spec.limit) j["limit"] = *spec.limit;
  return j;
}

std::map<std::string, fs::path> discover_manifests(const std::vector<fs::path>& dirs) {
  static const std::set<std::string> exts{".manifest", ".yaml", ".yml", ".json"};
  std::map<std::string, fs::path> out;
  for (const auto& dir : dirs) {
    if (!fs::is_directory(dir)) continue;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && exts.count(entry.path().extension().string())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      try {
        auto spec = load_manifest(file);
        out.emplace(spec.id, file);
      } catch (const std::exception& e) {
        std::cerr << "warning: skipping manifest " << file.string() << ": " << e.what() << '\n';
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

namespace {

// Neutral filler prose. Contains no digits and none of the words used by
// needles, keys, variable names or counting markers.
constexpr std::string_view kFiller[] = {
    "The river bends slowly around the old mill before it widens into the valley.",
    "Gardeners often say that patience matters more than any particular tool.",
    "In the early morning the market fills with the smell of fresh bread and coffee.",
    "A good map shows not only roads but also the shape of the land beneath them.",
    "Many towns grew up where two trade routes happened to cross.",
    "The library keeps its oldest books in a quiet room with thick walls.",
    "Walking through a forest after rain feels different from walking through it in summer.",
    "Bridges are designed to carry loads far heavier than they usually bear.",
    "Some birds travel thousands of miles each year and return to the same hedge.",
    "A well written letter can carry warmth across a great distance.",
    "Farmers watch the sky closely during the weeks before harvest.",
    "The museum changed its lighting so that visitors could see the paintings more clearly.",
    "Learning a new language slowly changes the way a person hears familiar sounds.",
    "Stone walls in the hills mark boundaries that were agreed upon long ago.",
    "The baker rises before dawn to prepare dough for the day.",
    "Small ponds support a surprising variety of insects and plants.",
    "Travelers used to rely on inns spaced about a day apart along the road.",
    "A steady habit of reading widens the range of ideas one can draw upon.",
    "The wind over the plain carries dust and seeds from one field to the next.",
    "Carpenters measure twice because a board cut too short cannot be lengthened.",
    "Evening light tends to soften the edges of buildings and trees.",
    "Good conversation depends as much on listening as on speaking.",
    "The harbor town was quiet in winter and crowded in the warm months.",
    "Rain collected in barrels helped the village through dry spells.",
    "A patient teacher can explain the same idea in several different ways.",
    "The path up the hill was worn smooth by generations of walkers.",
    "Markets in the square open early and close when the afternoon grows hot.",
    "Musicians practice scales for years before the scales stop feeling like work.",
    "Clouds gathering in the west often signal a change in the weather.",
    "The orchard produced more fruit after the old branches were pruned.",
    "Careful notes make it easier to remember the details of a long journey.",
    "Village fairs brought together families who rarely saw one another.",
    "A sturdy table can outlast the house in which it was first built.",
    "The ferry crossed the lake twice a day when the water was calm.",
    "Woodsmoke drifted over the rooftops on the first cold evening of autumn.",
    "People often remember the kindness of strangers long after other details fade.",
};

constexpr std::string_view kKeyAdjectives[] = {"amber", "cobalt", "crimson", "silver",  "violet", "golden",
                                               "scarlet", "ivory", "emerald", "copper", "azure",  "onyx"};
constexpr std::string_view kKeyNouns[] = {"falcon", "harpoon", "lantern", "meadowlark", "orchid", "glacier",
                                          "comet",  "willow",  "canyon",  "beacon",     "thistle", "quartz"};

std::uint64_t planted_bytes(const std::vector<std::string>& planted) {
  std::uint64_t bytes = 0;
  for (const auto& s : planted) bytes += s.size();
  return bytes;
}

/// Draws filler sentences until the next one would push the joined context
/// (planted + filler) past the target under the default cost model.
std::vector<std::string_view> draw_filler(Rng& rng, std::uint64_t context_tokens,
                                          const std::vector<std::string>& planted) {
  const CostModel model;
  std::size_t shortest = kFiller[0].size();
  for (auto s : kFiller) shortest = std::min(shortest, s.size());
  const std::uint64_t base = planted_bytes(planted) + planted.size();  // sentences plus separators
  if (bytes_to_tokens(base + shortest, model.bytes_per_token) > context_tokens)
    throw GeneratorError("context_tokens=" + std::to_string(context_tokens) +
                         " is too small to hold the planted sentences plus one filler sentence");
  std::vector<std::string_view> filler;
  std::uint64_t bytes = base > 0 ? base - 1 : 0;
  while (bytes_to_tokens(bytes, model.bytes_per_token) < context_tokens) {
    auto s = kFiller[rng.below(std::size(kFiller))];
    const std::uint64_t next = bytes + s.size() + 1;
    if (!filler.empty() && bytes_to_tokens(next, model.bytes_per_token) > context_tokens) break;
    filler.push_back(s);
    bytes = next;
  }
  return filler;
}

/// Joins filler with planted sentences; planted[j] goes before filler[slots[j]]
/// (slot == filler.size() appends at the end). Slots must be sorted ascending.
std::string weave(const std::vector<std::string_view>& filler, const std::vector<std::string>& planted,
                  const std::vector<std::size_t>& slots) {
  std::string out;
  std::size_t next = 0;
  auto emit = [&](std::string_view s) {
    if (!out.empty()) out += ' ';
    out += s;
  };
  for (std::size_t i = 0; i <= filler.size(); ++i) {
    while (next < planted.size() && slots[next] == i) emit(planted[next++]);
    if (i < filler.size()) emit(filler[i]);
  }
  return out;
}

std::size_t depth_to_slot(double depth, std::size_t filler_count) {
  return static_cast<std::size_t>(std::llround(depth * static_cast<double>(filler_count)));
}

std::vector<std::size_t> distinct_slots(Rng& rng, std::size_t count, std::size_t filler_count) {
  const std::size_t available = filler_count + 1;
  if (count > available)
    throw GeneratorError("context too small: " + std::to_string(count) + " planted sentences need distinct slots but only " +
                         std::to_string(available) + " exist");
  std::vector<std::size_t> pool(available);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + rng.below(available - i)]);
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::string draw_key(Rng& rng) {
  return std::string(kKeyAdjectives[rng.below(std::size(kKeyAdjectives))]) + "-" +
         std::string(kKeyNouns[rng.below(std::size(kKeyNouns))]);
}

std::string draw_value(Rng& rng) { return std::to_string(1000000 + rng.below(9000000)); }

std::string draw_variable(Rng& rng) {
  std::string name(5, 'A');
  for (auto& c : name) c = static_cast<char>('A' + rng.below(26));
  return name;
}

std::string_view generator_name(SyntheticParams::Generator g) {
  switch (g) {
    case SyntheticParams::Generator::Niah: return "niah";
    case SyntheticParams::Generator::MultiQueryNiah: return "multi_query_niah";
    case SyntheticParams::Generator::VariableTracking: return "variable_tracking";
    case SyntheticParams::Generator::Counting: return "counting";
  }
  return "?";
}

json params_record(const SyntheticParams& p, int index) {
  return json{{"generator", std::string(generator_name(p.generator))},
              {"context_tokens", p.context_tokens},
              {"depth_fractions", p.depth_fractions},
              {"needle_count", p.needle_count},
              {"chain_length", p.chain_length},
              {"seed", p.seed},
              {"index", index}};
}

TaskInstance make_instance(std::string_view benchmark_id, std::string task_id, std::string context,
                           std::string question, std::vector<std::string> gold, MetricSpec metric, const json& raw) {
  TaskInstance t;
  t.benchmark_id = std::string(benchmark_id);
  t.task_id = std::move(task_id);
  t.context = std::move(context);
  t.question = std::move(question);
  t.gold = std::move(gold);
  t.metric = std::move(metric);
  t.instance_id = derive_instance_id(benchmark_id, t.task_id, raw);
  t.est_tokens = estimate_cost(t.context) + estimate_cost(t.question);
  return t;
}

void require_valid(const SyntheticParams& p, SyntheticParams::Generator expected) {
  if (p.generator != expected)
    throw GeneratorError("params are for generator '" + std::string(generator_name(p.generator)) + "', expected '" +
                         std::string(generator_name(expected)) + "'");
  if (auto v = validate_params(p); !v.empty()) {
    std::string msg = "invalid synthetic params:";
    for (const auto& s : v) msg += " " + s + ";";
    throw GeneratorError(msg);
  }
}

MetricSpec metric_of(MetricKind kind, NormalizationSet rules = default_normalization()) {
  MetricSpec m;
  m.kind = kind;
  m.normalization = std::move(rules);
  return m;
}

}  // namespace

std::string derive_instance_id(std::string_view benchmark_id, std::string_view task_id, const json& raw_record) {
  std::string material;
  material.append(benchmark_id).push_back('\x1f');
  material.append(task_id).push_back('\x1f');
  material += raw_record.dump();
  return sha256_hex(material).substr(0, 20);
}

SyntheticParams synthetic_params_from_json(std::string_view generator, const json& params) {
  SyntheticParams p;
  if (generator == "niah") p.generator = SyntheticParams::Generator::Niah;
  else if (generator == "multi_query_niah") p.generator = SyntheticParams::Generator::MultiQueryNiah;
  else if (generator == "variable_tracking") p.generator = SyntheticParams::Generator::VariableTracking;
  else if (generator == "counting") p.generator = SyntheticParams::Generator::Counting;
  else throw GeneratorError("unknown generator '" + std::string(generator) + "'");

  std::vector<std::string> problems;
  auto get = [&](const char* key, auto& out) {
    auto it = params.find(key);
    if (it == params.end() || it->is_null()) return;
    try {
      out = it->get<std::decay_t<decltype(out)>>();
    } catch (const json::exception&) {
      problems.push_back(std::string("source.params.") + key + ": wrong type");
    }
  };
  if (!params.is_null() && !params.is_object()) throw GeneratorError("source.params: expected a mapping");
  if (params.is_object()) {
    if (auto it = params.find("context_tokens"); it != params.end() && !it->is_number_unsigned())
      problems.emplace_back("source.params.context_tokens: expected a positive integer");
    else
      get("context_tokens", p.context_tokens);
    get("depth_fractions", p.depth_fractions);
    get("needle_count", p.needle_count);
    get("chain_length", p.chain_length);
    get("instances", p.instances);
    get("seed", p.seed);
  }
  if (!problems.empty()) throw ValidationError(problems);
  return p;
}

std::vector<std::string> validate_params(const SyntheticParams& p) {
  std::vector<std::string> v;
  if (p.context_tokens < 1) v.emplace_back("context_tokens must be >= 1");
  if (p.instances < 1) v.emplace_back("instances must be >= 1");
  if (p.needle_count < 1) v.emplace_back("needle_count must be >= 1");
  if (p.chain_length < 1) v.emplace_back("chain_length must be >= 1");
  if (!std::is_sorted(p.depth_fractions.begin(), p.depth_fractions.end()))
    v.emplace_back("depth_fractions must be sorted ascending");
  for (double d : p.depth_fractions)
    if (!(d >= 0.0 && d <= 1.0)) {
      v.emplace_back("depth_fractions must lie within [0,1]");
      break;
    }
  return v;
}

std::vector<TaskInstance> gen_niah(const SyntheticParams& p, std::string_view benchmark_id) {
  require_valid(p, SyntheticParams::Generator::Niah);
  if (p.depth_fractions.empty()) throw GeneratorError("niah needs at least one depth fraction");
  std::vector<TaskInstance> out;
  out.reserve(static_cast<std::size_t>(p.instances));
  for (int i = 0; i < p.instances; ++i) {
    Rng rng(mix_seed(p.seed, static_cast<std::uint64_t>(i)));
    const double depth = p.depth_fractions[static_cast<std::size_t>(i) % p.depth_fractions.size()];
    const std::string key = draw_key(rng);
    const std::string value = draw_value(rng);
    std::vector<std::string> planted{"The secret code for " + key + " is " + value + "."};
    auto filler = draw_filler(rng, p.context_tokens, planted);
    auto context = weave(filler, planted, {depth_to_slot(depth, filler.size())});
    const int repetition = i / static_cast<int>(p.depth_fractions.size());
    out.push_back(make_instance(benchmark_id, "niah_depth_" + json(depth).dump() + "_rep_" + std::to_string(repetition),
                                std::move(context), "What is the secret code for " + key + "? Reply with the code.",
                                {value}, metric_of(MetricKind::NeedleRecall), params_record(p, i)));
  }
  return out;
}

std::vector<TaskInstance> gen_multi_query_niah(const SyntheticParams& p, std::string_view benchmark_id) {
  require_valid(p, SyntheticParams::Generator::MultiQueryNiah);
  if (p.needle_count < 2) throw GeneratorError("multi_query_niah needs needle_count >= 2");
  const auto needles = static_cast<std::size_t>(p.needle_count);
  if (p.depth_fractions.size() < needles)
    throw GeneratorError("multi_query_niah needs one depth fraction per needle (" + std::to_string(needles) + ")");
  std::vector<double> depths(p.depth_fractions.begin(), p.depth_fractions.begin() + static_cast<long>(needles));
  if (std::adjacent_find(depths.begin(), depths.end()) != depths.end())
    throw GeneratorError("multi_query_niah requires distinct depth fractions");

  std::vector<TaskInstance> out;
  for (int i = 0; i < p.instances; ++i) {
    Rng rng(mix_seed(p.seed, static_cast<std::uint64_t>(i)));
    std::vector<std::string> keys, values, planted;
    std::set<std::string> used_keys, used_values;
    while (keys.size() < needles) {
      auto key = draw_key(rng);
      auto value = draw_value(rng);
      if (used_keys.count(key) || used_values.count(value)) continue;
      used_keys.insert(key);
      used_values.insert(value);
      planted.push_back("The secret code for " + key + " is " + value + ".");
      keys.push_back(std::move(key));
      values.push_back(std::move(value));
    }
    auto filler = draw_filler(rng, p.context_tokens, planted);
    std::vector<std::size_t> slots;
    for (double d : depths) slots.push_back(depth_to_slot(d, filler.size()));
    if (std::adjacent_find(slots.begin(), slots.end()) != slots.end())
      throw GeneratorError("needle_count exceeds the available insertion slots at these depths");
    auto context = weave(filler, planted, slots);
    std::string question = "What are the secret codes for ";
    for (std::size_t k = 0; k < keys.size(); ++k) {
      if (k) question += k + 1 == keys.size() ? " and " : ", ";
      question += keys[k];
    }
    question += "? List every code.";
    out.push_back(make_instance(benchmark_id, "multi_query_niah_" + std::to_string(needles),
                                std::move(context), std::move(question), values,
                                metric_of(MetricKind::NeedleRecall), params_record(p, i)));
  }
  return out;
}

std::vector<TaskInstance> gen_variable_tracking(const SyntheticParams& p, std::string_view benchmark_id) {
  require_valid(p, SyntheticParams::Generator::VariableTracking);
  const auto chain = static_cast<std::size_t>(p.chain_length);
  std::vector<TaskInstance> out;
  for (int i = 0; i < p.instances; ++i) {
    Rng rng(mix_seed(p.seed, static_cast<std::uint64_t>(i)));
    std::vector<std::string> names;
    std::set<std::string> used;
    while (names.size() < chain) {
      auto name = draw_variable(rng);
      if (used.insert(name).second) names.push_back(std::move(name));
    }
    const std::string value = std::to_string(10000 + rng.below(90000));
    std::vector<std::string> planted;
    planted.push_back("VAR " + names[0] + " = " + value + ".");
    for (std::size_t k = 1; k < chain; ++k) planted.push_back("VAR " + names[k] + " = VAR " + names[k - 1] + ".");
    auto filler = draw_filler(rng, p.context_tokens, planted);
    auto slots = distinct_slots(rng, chain, filler.size());
    auto context = weave(filler, planted, slots);
    out.push_back(make_instance(benchmark_id, "variable_tracking_" + std::to_string(chain), std::move(context),
                                "What is the value of variable " + names.back() +
                                    "? Follow the chain of assignments.",
                                {value}, metric_of(MetricKind::Contains), params_record(p, i)));
  }
  return out;
}

std::vector<TaskInstance> gen_counting(const SyntheticParams& p, std::string_view benchmark_id) {
  require_valid(p, SyntheticParams::Generator::Counting);
  const auto needles = static_cast<std::size_t>(p.needle_count);
  std::vector<TaskInstance> out;
  for (int i = 0; i < p.instances; ++i) {
    Rng rng(mix_seed(p.seed, static_cast<std::uint64_t>(i)));
    std::vector<std::string> numbers, planted;
    std::set<std::uint64_t> used;
    while (numbers.size() < needles) {
      const std::uint64_t n = 1 + rng.below(999);
      if (!used.insert(n).second) continue;
      numbers.push_back(std::to_string(n));
      planted.push_back("The little penguin counted " + numbers.back() + " stars.");
    }
    auto filler = draw_filler(rng, p.context_tokens, planted);
    auto slots = distinct_slots(rng, needles, filler.size());
    auto context = weave(filler, planted, slots);
    std::string gold;
    for (std::size_t k = 0; k < numbers.size(); ++k) gold += (k ? " " : "") + numbers[k];
    auto rules = default_normalization();
    rules.insert(NormalizationRule::NumbersOnly);
    out.push_back(make_instance(benchmark_id, "counting_" + std::to_string(needles), std::move(context),
                                "List, in order, every number of stars the little penguin counted.", {gold},
                                metric_of(MetricKind::TokenF1, rules), params_record(p, i)));
  }
  return out;
}

std::vector<TaskInstance> generate(const SyntheticParams& p, std::string_view benchmark_id) {
  switch (p.generator) {
    case SyntheticParams::Generator::Niah: return gen_niah(p, benchmark_id);
    case SyntheticParams::Generator::MultiQueryNiah: return gen_multi_query_niah(p, benchmark_id);
    case SyntheticParams::Generator::VariableTracking: return gen_variable_tracking(p, benchmark_id);
    case SyntheticParams::Generator::Counting: return gen_counting(p, benchmark_id);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

namespace {

std::string read_source_text(const SourceDescriptor& source) {
  if (source.kind == SourceDescriptor::Kind::Local) {
    std::ifstream in(source.uri, std::ios::binary);
    if (!in) throw SourceError("source unreachable: cannot open " + source.uri);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }
  // http(s)://host[:port]/path
  const std::string& uri = source.uri;
  auto scheme_end = uri.find("://");
  if (scheme_end == std::string::npos) throw SourceError("source unreachable: malformed URL " + uri);
  auto path_start = uri.find('/', scheme_end + 3);
  const std::string origin = path_start == std::string::npos ? uri : uri.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : uri.substr(path_start);
  httplib::Client client(origin);
  client.set_connection_timeout(10);
  client.set_read_timeout(60);
  client.set_follow_location(true);
  auto res = client.Get(path);
  if (!res) throw SourceError("source unreachable: " + uri + " (" + httplib::to_string(res.error()) + ")");
  if (res->status != 200)
    throw SourceError("source unreachable: " + uri + " returned HTTP " + std::to_string(res->status));
  return res->body;
}

std::optional<std::string> scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number() || v.is_boolean()) return v.dump();
  return std::nullopt;
}

/// Maps one raw record onto a TaskInstance; returns the failure reason otherwise.
std::variant<TaskInstance, std::string> normalize_record(const BenchmarkSpec& spec, const json& raw) {
  if (!raw.is_object()) return std::string("record is not a JSON object");
  TaskInstance t;
  t.benchmark_id = spec.id;
  t.task_id = spec.id;
  t.metric = spec.metric;
  for (const auto& [raw_key, canonical] : spec.field_map) {
    auto it = raw.find(raw_key);
    if (it == raw.end() || it->is_null()) return "missing mapped field '" + raw_key + "'";
    const json& v = *it;
    if (canonical == "context" || canonical == "question" || canonical == "task_id") {
      auto text = scalar_text(v);
      if (!text) return "field '" + raw_key + "' is not text";
      (canonical == "context" ? t.context : canonical == "question" ? t.question : t.task_id) = *text;
    } else if (canonical == "gold") {
      if (v.is_array()) {
        for (const auto& g : v) {
          auto text = scalar_text(g);
          if (!text) return "field '" + raw_key + "' has a non-text gold entry";
          t.gold.push_back(*text);
        }
      } else if (auto text = scalar_text(v)) {
        t.gold.push_back(*text);
      } else {
        return "field '" + raw_key + "' is not a gold answer or list of answers";
      }
    } else if (canonical == "choices") {
      if (v.is_object()) {
        for (const auto& [label, text] : v.items()) {
          auto s = scalar_text(text);
          if (!s) return "choice '" + label + "' is not text";
          t.choices.push_back({label, *s});
        }
      } else if (v.is_array()) {
        for (std::size_t k = 0; k < v.size(); ++k) {
          const json& c = v[k];
          if (c.is_object() && c.contains("label") && c.contains("text")) {
            auto label = scalar_text(c["label"]);
            auto text = scalar_text(c["text"]);
            if (!label || !text) return std::string("malformed choice entry");
            t.choices.push_back({*label, *text});
          } else if (auto text = scalar_text(c)) {
            if (k >= 26) return std::string("too many unlabeled choices");
            t.choices.push_back({std::string(1, static_cast<char>('A' + k)), *text});
          } else {
            return std::string("malformed choice entry");
          }
        }
      } else {
        return "field '" + raw_key + "' is not a list or mapping of choices";
      }
    }
  }
  if (t.gold.empty() && spec.metric.kind != MetricKind::Judge) return std::string("empty gold answer list");
  t.instance_id = derive_instance_id(spec.id, t.task_id, raw);
  return t;
}

}  // namespace

IngestResult ingest(const BenchmarkSpec& spec, const IngestOptions& options) {
  if (auto v = validate_spec(spec); !v.empty()) throw ValidationError(std::move(v));

  PromptTemplate tmpl;
  if (options.prompt_template) {
    tmpl = *options.prompt_template;
  } else {
    static const TemplateRegistry builtins;
    const auto* found = builtins.find(spec.template_id);
    if (!found) throw TemplateError("unknown template '" + spec.template_id + "' for benchmark " + spec.id);
    tmpl = *found;
  }

  IngestResult result;
  std::vector<TaskInstance> candidates;
  if (spec.source.kind == SourceDescriptor::Kind::Synthetic) {
    auto params = synthetic_params_from_json(spec.source.generator, spec.source.params);
    candidates = generate(params, spec.id);
    for (auto& inst : candidates) inst.metric = spec.metric;
  } else {
    const std::string text = read_source_text(spec.source);
    std::istringstream lines(text);
    std::string line;
    std::size_t index = 0;
    while (std::getline(lines, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      const std::size_t record = index++;
      json raw = json::parse(line, nullptr, false);
      if (raw.is_discarded()) {
        result.skipped.push_back({record, "malformed JSON"});
        continue;
      }
      auto normalized = normalize_record(spec, raw);
      if (auto* reason = std::get_if<std::string>(&normalized)) {
        result.skipped.push_back({record, *reason});
        continue;
      }
      candidates.push_back(std::move(std::get<TaskInstance>(normalized)));
    }
  }

  std::map<std::string, int> seen;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& inst = candidates[i];
    if (int n = seen[inst.instance_id]++; n > 0) inst.instance_id += "-dup" + std::to_string(n);
    try {
      inst.est_tokens = estimate_cost(apply_template(tmpl, inst), options.cost_model);
    } catch (const TemplateError& e) {
      result.skipped.push_back({i, e.what()});
      continue;
    }
    result.instances.push_back(std::move(inst));
  }

  const auto limit = options.limit ? options.limit : spec.limit;
  if (limit && result.instances.size() > *limit) {
    if (options.subsample_seed) {
      Rng rng(*options.subsample_seed);
      std::vector<std::size_t> idx(result.instances.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (std::size_t i = 0; i < *limit; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      idx.resize(*limit);
      std::sort(idx.begin(), idx.end());
      std::vector<TaskInstance> kept;
      for (auto i : idx) kept.push_back(std::move(result.instances[i]));
      result.instances = std::move(kept);
    } else {
      result.instances.resize(*limit);
    }
  }
  return result;
}

}  // namespace loom
