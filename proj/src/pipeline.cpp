// Copyright 2026 The TemplateSense Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "templatesense/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "templatesense/backend.hpp"
#include "templatesense/error.hpp"
#include "templatesense/hash.hpp"
#include "templatesense/metrics.hpp"
#include "pipeline_internal.hpp"

namespace templatesense {

namespace fs = std::filesystem;
using nlohmann::json;

// --- formatting --------------------------------------------------------------

std::string format_number(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("number formatting failed");
  return std::string(buf, end);
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, decimals);
  if (ec != std::errc()) throw Error("number formatting failed");
  std::string s(buf, end);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string format_percent_change(double pct) {
  const double mag = std::fabs(pct);
  // Decide on the rounded magnitude so 9.96 renders as "10%", not "10.0%".
  const double rounded = std::round(mag * 10.0) / 10.0;
  if (rounded == 0.0) return "0%";
  std::string s = format_fixed(mag, rounded >= 10.0 ? 0 : 1) + "%";
  s += pct > 0 ? "↑" : "↓";
  return s;
}

// --- config ------------------------------------------------------------------

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunConfig RunConfig::parse(std::string_view json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  auto str = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) {
      throw ConfigError(std::string("run config needs string field '") + key + "'");
    }
    return j[key].get<std::string>();
  };
  RunConfig c;
  const auto task = parse_task(str("task"));
  if (!task) throw ConfigError("unknown task '" + str("task") + "'");
  c.task = *task;
  c.templates = resolve(base_dir, str("templates"));
  c.lexicons = resolve(base_dir, str("lexicons"));
  c.output_dir = resolve(base_dir, str("output_dir"));
  c.backend = j.value("backend", std::string("synthetic:") + (base_dir / "planted.json").string());
  constexpr std::string_view kSynth = "synthetic:";
  if (c.backend.rfind(kSynth, 0) == 0) {
    c.backend = std::string(kSynth) + resolve(base_dir, c.backend.substr(kSynth.size())).string();
  }
  c.alpha = j.value("alpha", 0.05);
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (j.contains("cache") && !j["cache"].is_null()) c.cache = resolve(base_dir, str("cache"));
  c.concurrency = j.value("concurrency", std::size_t{4});
  c.batch_size = j.value("batch_size", std::size_t{256});
  if (c.concurrency == 0 || c.batch_size == 0) {
    throw ConfigError("concurrency and batch_size must be positive");
  }
  if (j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("remote_url") && !j["remote_url"].is_null()) c.remote_url = str("remote_url");

  if (!fs::exists(c.templates)) throw ConfigError("template file not found: " + c.templates.string());
  if (!fs::is_directory(c.lexicons)) {
    throw ConfigError("lexicon directory not found: " + c.lexicons.string());
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), fs::absolute(path).parent_path());
}

std::string RunConfig::to_json() const {
  json j = {{"task", std::string(templatesense::to_string(task))},
            {"templates", templates.string()},
            {"lexicons", lexicons.string()},
            {"backend", backend},
            {"alpha", alpha},
            {"output_dir", output_dir.string()},
            {"cache", cache_path().string()},
            {"concurrency", concurrency},
            {"batch_size", batch_size}};
  j["seed"] = seed ? json(*seed) : json(nullptr);
  if (remote_url) j["remote_url"] = *remote_url;
  return j.dump();
}

// --- shared plumbing ---------------------------------------------------------

namespace detail {

Workspace load_workspace(const RunConfig& config) {
  Workspace w;
  w.templates = load_templates(config.templates);
  for (const auto& t : w.templates) {
    if (t.task != config.task) {
      throw ConfigError(t.id + " belongs to task " + std::string(to_string(t.task)) +
                        ", config runs " + std::string(to_string(config.task)));
    }
  }
  w.families = group_families(w.templates);
  w.lexicons = load_lexicon_dir(config.lexicons);
  return w;
}

std::unique_ptr<Backend> build_backend(const RunConfig& config, const LexiconSet& lexicons) {
  constexpr std::string_view kSynth = "synthetic:";
  if (config.backend.rfind(kSynth, 0) == 0) {
    auto planted = PlantedBiasConfig::load(config.backend.substr(kSynth.size()));
    if (config.seed) planted.noise_seed = *config.seed;
    planted.add_lexicon_terms(lexicons);
    return std::make_unique<SyntheticBackend>(std::move(planted));
  }
  return make_backend(config.backend, lexicons, config.remote_url, config.concurrency);
}

std::string instance_id(const std::string& template_id, std::uint64_t index) {
  return template_id + "#" + std::to_string(index);
}

std::string decision_flags_text(double alpha, const std::string& backend_id) {
  return "alpha=" + format_number(alpha) +
         "; test=paired t-test, two-sided, significant iff p < alpha"
         "; decision=argmax, ties broken by fixed label order"
         "; aggregation=unweighted mean over modifications, pooled toxicity row micro-averaged"
         "; sd=sample (n-1), reported with >= 2 modification values"
         "; backend=" + backend_id;
}

json decision_flags_json(double alpha) {
  return {{"alpha", alpha},
          {"sidedness", "two-sided"},
          {"significance", "p < alpha"},
          {"threshold_rule", "argmax, ties by label order"},
          {"aggregation", "unweighted mean over modifications; toxicity pooled row micro"},
          {"sd", "sample (n-1), requires >= 2 values"}};
}

void update_manifest(const RunConfig& config, const std::string& stage,
                     const std::function<void(json&)>& edit) {
  json m = json::object();
  if (fs::exists(config.manifest_path())) {
    std::ifstream in(config.manifest_path());
    try {
      m = json::parse(in);
    } catch (const json::parse_error&) {
      m = json::object();
    }
  }
  m["schema"] = kSchemaVersion;
  m["tool_version"] = std::string(kToolVersion);
  m["config"] = json::parse(config.to_json());
  m["decision_flags"] = decision_flags_json(config.alpha);
  m["hashes"]["templates"] = sha256_file(config.templates);
  json lex = json::object();
  for (const auto& entry : fs::directory_iterator(config.lexicons)) {
    if (entry.path().extension() == ".tsv") {
      lex[entry.path().filename().string()] = sha256_file(entry.path());
    }
  }
  m["hashes"]["lexicons"] = lex;
  m["timestamps"][stage] = utc_now();
  edit(m);
  fs::create_directories(config.output_dir);
  const auto tmp = config.manifest_path().string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << m.dump(2) << '\n';
  }
  fs::rename(tmp, config.manifest_path());
}

}  // namespace detail

// --- expand ------------------------------------------------------------------

ExpandSummary cmd_expand(const RunConfig& config, bool dry_run, std::ostream& log) {
  const auto ws = detail::load_workspace(config);
  ExpandSummary summary;
  for (const auto& t : ws.templates) {
    (t.kind == TemplateKind::kOriginal ? summary.originals : summary.modifications)++;
  }

  if (dry_run) {
    for (const auto& t : ws.templates) {
      const auto n = expansion_size(t, ws.lexicons);
      summary.counts.emplace_back(t.id, n);
      summary.total += n;
    }
  } else {
    fs::create_directories(config.output_dir);
    const auto tmp = config.corpus_path().string() + ".tmp";
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    for (const auto& t : ws.templates) {
      std::uint64_t index = 0;
      for_each_instance(t, ws.lexicons, [&](Instance&& inst) {
        json rec;
        rec["schema"] = kSchemaVersion;
        rec["id"] = detail::instance_id(t.id, index++);
        rec["template_id"] = inst.template_id;
        rec["variant"] = inst.variant;
        rec["texts"] = inst.texts;
        json b = json::object();
        for (const auto& binding : inst.bindings) b[binding.slot] = binding.entry.surface;
        rec["bindings"] = b;
        rec["group"] = inst.group;
        rec["gold"] = inst.gold_label ? json(*inst.gold_label) : json(nullptr);
        rec["pair_key"] = inst.pair_key;
        if (t.task == Task::kMlm) {
          const auto* attr = inst.binding(kAttributeSlot);
          const auto* target = inst.binding(kTargetSlot);
          if (attr == nullptr || target == nullptr) {
            throw ValidationError(t.id + ": MLM templates need TARGET and ATTRIBUTE slots");
          }
          const auto q = mlm_queries(t, attr->entry);
          rec["target_query"] = q.target_query;
          rec["prior_query"] = q.prior_query;
          rec["candidate"] = target->entry.surface;
        }
        out << rec.dump() << '\n';
      });
      summary.counts.emplace_back(t.id, index);
      summary.total += index;
    }
    out.close();
    fs::rename(tmp, config.corpus_path());
  }

  for (const auto& [id, n] : summary.counts) log << id << '\t' << n << '\n';
  log << "templates: " << summary.originals << " original, " << summary.modifications
      << " modified; instances: " << summary.total << (dry_run ? " (dry run)" : "") << '\n';

  if (!dry_run) {
    detail::update_manifest(config, "expand", [&](json& m) {
      m["hashes"]["corpus"] = sha256_file(config.corpus_path());
      json counts = json::object();
      for (const auto& [id, n] : summary.counts) counts[id] = n;
      m["counts"] = counts;
    });
  }
  return summary;
}

// --- evaluate ----------------------------------------------------------------

namespace {

// Counts complete prediction records and truncates a partial trailing line.
std::vector<std::string> load_done_ids(const fs::path& path) {
  std::vector<std::string> ids;
  if (!fs::exists(path)) return ids;
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();
  std::size_t start = 0, valid_end = 0;
  while (start < content.size()) {
    const auto nl = content.find('\n', start);
    if (nl == std::string::npos) break;
    try {
      auto j = json::parse(content.substr(start, nl - start));
      ids.push_back(j.at("id").get<std::string>());
    } catch (const std::exception&) {
      break;
    }
    valid_end = nl + 1;
    start = nl + 1;
  }
  if (valid_end < content.size()) fs::resize_file(path, valid_end);
  return ids;
}

}  // namespace

EvaluateSummary cmd_evaluate(const RunConfig& config, std::ostream& log,
                             std::optional<std::uint64_t> limit) {
  if (!fs::exists(config.corpus_path())) {
    throw ConfigError("corpus not found at " + config.corpus_path().string() + "; run expand first");
  }
  const auto lexicons = load_lexicon_dir(config.lexicons);
  auto inner = detail::build_backend(config, lexicons);
  CachedBackend backend(*inner, config.cache_path());

  EvaluateSummary summary;
  summary.backend_id = backend.id();
  const auto done = load_done_ids(config.predictions_path());
  summary.resumed = done.size();

  std::ifstream corpus(config.corpus_path(), std::ios::binary);
  std::ofstream out(config.predictions_path(), std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot write " + config.predictions_path().string());

  std::vector<json> batch;
  auto flush_batch = [&] {
    if (batch.empty()) return;
    if (config.task == Task::kMlm) {
      for (const auto& rec : batch) {
        const std::vector<std::string> cand{rec.at("candidate").get<std::string>()};
        const auto tgt = backend.mlm_log_probs(rec.at("target_query").get<std::string>(), cand);
        const auto prior = backend.mlm_log_probs(rec.at("prior_query").get<std::string>(), cand);
        json p = {{"id", rec.at("id")},
                  {"target_log_prob", tgt.log_probs.at(cand[0])},
                  {"prior_log_prob", prior.log_probs.at(cand[0])}};
        out << p.dump() << '\n';
      }
    } else {
      std::vector<ClassifierInput> inputs;
      inputs.reserve(batch.size());
      for (const auto& rec : batch) {
        const auto& texts = rec.at("texts");
        ClassifierInput in{texts.at(0).get<std::string>(), std::nullopt};
        if (texts.size() > 1) in.hypothesis = texts.at(1).get<std::string>();
        inputs.push_back(std::move(in));
      }
      const auto outputs = backend.score_batch(config.task, inputs);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        json p = {{"id", batch[i].at("id")},
                  {"probs", outputs[i].probs},
                  {"pred", argmax_label(config.task, outputs[i])}};
        out << p.dump() << '\n';
      }
    }
    out.flush();
    summary.scored += batch.size();
    batch.clear();
  };

  std::string line;
  std::uint64_t index = 0;
  while (std::getline(corpus, line)) {
    if (line.empty()) continue;
    auto rec = json::parse(line);
    if (index < done.size()) {
      if (rec.at("id").get<std::string>() != done[index]) {
        throw ConfigError("prediction file does not match the corpus at record " +
                          std::to_string(index) + "; remove it to start over");
      }
      ++index;
      continue;
    }
    if (limit && summary.scored + batch.size() >= *limit) break;
    ++index;
    batch.push_back(std::move(rec));
    if (batch.size() >= config.batch_size) flush_batch();
  }
  flush_batch();
  summary.instances = index;
  if (done.size() > index) throw ConfigError("prediction file has more records than the corpus");

  backend.flush();
  summary.backend_calls = inner->call_count();
  summary.cache_hits = backend.hits();
  summary.cache_misses = backend.misses();
  log << "instances: " << summary.instances << "; resumed: " << summary.resumed
      << "; scored: " << summary.scored << "; backend calls: " << summary.backend_calls
      << "; cache hits: " << summary.cache_hits << '\n';

  detail::update_manifest(config, "evaluate", [&](json& m) {
    m["backend"] = summary.backend_id;
    m["hashes"]["corpus"] = sha256_file(config.corpus_path());
    m["hashes"]["predictions"] = sha256_file(config.predictions_path());
  });
  return summary;
}

}  // namespace templatesense
