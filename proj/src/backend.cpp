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

#include "templatesense/backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "templatesense/error.hpp"
#include "templatesense/hash.hpp"

namespace templatesense {
namespace {

using nlohmann::json;

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Standard normal draw that depends only on (seed, key).
double keyed_gaussian(std::uint64_t seed, std::string_view key) {
  std::mt19937_64 rng(fnv1a64(key, seed ^ 0x9e3779b97f4a7c15ULL));
  auto uniform = [&] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::map<std::string, double> number_map(const json& j, const std::string& where) {
  std::map<std::string, double> out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) throw ConfigError(where + "." + k + " must be a number");
    out[k] = v.get<double>();
  }
  return out;
}

std::map<std::string, std::vector<std::string>> term_map(const json& j, const std::string& where) {
  std::map<std::string, std::vector<std::string>> out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) out[k] = v.get<std::vector<std::string>>();
  return out;
}

void add_term(std::vector<std::string>& terms, const std::string& t) {
  if (std::find(terms.begin(), terms.end(), t) == terms.end()) terms.push_back(t);
}

}  // namespace

const std::vector<std::string>& task_labels(Task task) {
  static const std::vector<std::string> kSentiment{"positive", "negative"};
  static const std::vector<std::string> kToxicity{"toxic", "nontoxic"};
  static const std::vector<std::string> kNli{"entailment", "neutral", "contradiction"};
  static const std::vector<std::string> kNone{};
  switch (task) {
    case Task::kSentiment:
      return kSentiment;
    case Task::kToxicity:
      return kToxicity;
    case Task::kNli:
      return kNli;
    case Task::kMlm:
      break;
  }
  return kNone;
}

std::string argmax_label(Task task, const ClassifierOutput& out) {
  const auto& labels = task_labels(task);
  std::string best;
  double best_p = -1.0;
  for (const auto& label : labels) {
    auto it = out.probs.find(label);
    if (it == out.probs.end()) throw LabelSetMismatch("output lacks label '" + label + "'");
    if (it->second > best_p) {
      best_p = it->second;
      best = label;
    }
  }
  return best;
}

void validate_output(Task task, const ClassifierOutput& out) {
  const auto& labels = task_labels(task);
  if (out.probs.size() != labels.size()) {
    throw LabelSetMismatch("expected " + std::to_string(labels.size()) + " labels for task " +
                           std::string(to_string(task)));
  }
  double sum = 0.0;
  for (const auto& label : labels) {
    auto it = out.probs.find(label);
    if (it == out.probs.end()) throw LabelSetMismatch("output lacks label '" + label + "'");
    if (!std::isfinite(it->second) || it->second < 0.0 || it->second > 1.0) {
      throw ProtocolError("probability for '" + label + "' outside [0,1]");
    }
    sum += it->second;
  }
  if (std::fabs(sum - 1.0) > 1e-6) throw ProtocolError("probabilities do not sum to 1");
}

// --- TermMatcher -------------------------------------------------------------

TermMatcher::TermMatcher(const std::map<std::string, std::vector<std::string>>& classes) {
  for (const auto& [cls, terms] : classes) {
    for (const auto& t : terms) {
      if (!t.empty()) terms_.emplace_back(lower(t), cls);
    }
  }
  std::sort(terms_.begin(), terms_.end(), [](const auto& a, const auto& b) {
    if (a.first.size() != b.first.size()) return a.first.size() > b.first.size();
    return a < b;
  });
}

std::vector<std::string> TermMatcher::classes_in(std::string_view text) const {
  std::set<std::string> found;
  const std::string lowered = lower(text);
  const std::string_view s = lowered;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_word_char(s[i]) || (i > 0 && is_word_char(s[i - 1]))) {
      ++i;
      continue;
    }
    bool matched = false;
    for (const auto& [term, cls] : terms_) {
      if (term.front() != s[i] || s.compare(i, term.size(), term) != 0) continue;
      const std::size_t end = i + term.size();
      if (end < s.size() && is_word_char(s[end])) continue;
      found.insert(cls);
      i = end;
      matched = true;
      break;
    }
    if (!matched) ++i;
  }
  return {found.begin(), found.end()};
}

// --- PlantedBiasConfig -------------------------------------------------------

PlantedBiasConfig PlantedBiasConfig::parse(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("planted-bias config: ") + e.what());
  }
  PlantedBiasConfig c;
  c.noise_seed = j.value("noise_seed", std::uint64_t{0});
  c.noise_sd = j.value("noise_sd", 0.0);
  c.groups_from_lexicons = j.value("groups_from_lexicons", false);
  c.cues_from_lexicons = j.value("cues_from_lexicons", false);
  c.groups = term_map(j.value("groups", json()), "groups");
  c.cues = term_map(j.value("cues", json()), "cues");
  if (c.noise_sd < 0.0) throw ConfigError("noise_sd must be >= 0");

  const json tasks = j.value("tasks", json::object());
  for (const auto& [name, tj] : tasks.items()) {
    auto task = parse_task(name);
    if (!task || *task == Task::kMlm) throw ConfigError("unknown classification task '" + name + "'");
    PlantedTaskConfig t;
    t.base = number_map(tj.value("base", json()), name + ".base");
    t.label = tj.value("label", task_labels(*task).front());
    t.delta = number_map(tj.value("delta", json()), name + ".delta");
    t.cue_delta = number_map(tj.value("cue_delta", json()), name + ".cue_delta");
    if (t.base.empty()) {
      for (const auto& l : task_labels(*task)) t.base[l] = 1.0 / static_cast<double>(task_labels(*task).size());
    }
    validate_output(*task, ClassifierOutput{t.base});
    if (!t.base.count(t.label)) throw LabelSetMismatch(name + ": shift label '" + t.label + "' unknown");
    c.tasks[*task] = std::move(t);
  }

  if (j.contains("mlm")) {
    const auto& mj = j["mlm"];
    c.mlm.base = number_map(mj.value("base", json()), "mlm.base");
    c.mlm.default_prob = mj.value("default_prob", 0.1);
    c.mlm.noise_sd = mj.value("noise_sd", 0.0);
    c.mlm.delta = number_map(mj.value("delta", json()), "mlm.delta");
    const json cue_deltas = mj.value("cue_delta", json::object());
    for (const auto& [cue, m] : cue_deltas.items()) {
      c.mlm.cue_delta[cue] = number_map(m, "mlm.cue_delta." + cue);
    }
    auto valid = [](double p) { return p > 0.0 && p <= 1.0; };
    if (!valid(c.mlm.default_prob)) throw ConfigError("mlm.default_prob must be in (0,1]");
    for (const auto& [tok, p] : c.mlm.base) {
      if (!valid(p)) throw ConfigError("mlm.base." + tok + " must be in (0,1]");
    }
  }
  return c;
}

PlantedBiasConfig PlantedBiasConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open planted-bias config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string PlantedBiasConfig::to_json() const {
  json j;
  j["noise_seed"] = noise_seed;
  j["noise_sd"] = noise_sd;
  j["groups_from_lexicons"] = groups_from_lexicons;
  j["cues_from_lexicons"] = cues_from_lexicons;
  j["groups"] = groups;
  j["cues"] = cues;
  j["tasks"] = json::object();
  for (const auto& [task, t] : tasks) {
    j["tasks"][std::string(to_string(task))] = {
        {"base", t.base}, {"label", t.label}, {"delta", t.delta}, {"cue_delta", t.cue_delta}};
  }
  j["mlm"] = {{"base", mlm.base},
              {"default_prob", mlm.default_prob},
              {"noise_sd", mlm.noise_sd},
              {"delta", mlm.delta},
              {"cue_delta", mlm.cue_delta}};
  return j.dump();
}

void PlantedBiasConfig::add_lexicon_terms(const LexiconSet& lexicons) {
  for (const auto& [name, lex] : lexicons) {
    for (const auto& e : lex.entries()) {
      std::vector<std::string> surfaces{e.surface};
      if (e.possessive_form) surfaces.push_back(*e.possessive_form);
      for (const auto& [k, v] : e.forms) surfaces.push_back(v);

      if (groups_from_lexicons) {
        if (e.category == Category::kIdentity) {
          add_term(groups[e.surface], e.surface);
        } else if (e.gender != Gender::kNone) {
          for (const auto& s : surfaces) add_term(groups[std::string(to_string(e.gender))], s);
        }
      }
      if (cues_from_lexicons && e.polarity != Polarity::kNone) {
        for (const auto& s : surfaces) add_term(cues[std::string(to_string(e.polarity))], s);
      }
    }
  }
}

// --- SyntheticBackend --------------------------------------------------------

SyntheticBackend::SyntheticBackend(PlantedBiasConfig config)
    : config_(std::move(config)),
      groups_(config_.groups),
      cues_(config_.cues),
      id_("synthetic:" + sha256_hex(config_.to_json()).substr(0, 16)) {}

ClassifierOutput SyntheticBackend::score_one(Task task, const ClassifierInput& input) const {
  PlantedTaskConfig fallback;
  const PlantedTaskConfig* cfg = nullptr;
  if (auto it = config_.tasks.find(task); it != config_.tasks.end()) {
    cfg = &it->second;
  } else {
    const auto& labels = task_labels(task);
    for (const auto& l : labels) fallback.base[l] = 1.0 / static_cast<double>(labels.size());
    fallback.label = labels.front();
    cfg = &fallback;
  }

  std::string text = input.text;
  if (input.hypothesis) text += "\n" + *input.hypothesis;

  double shift = 0.0;
  for (const auto& g : groups_.classes_in(text)) {
    if (auto it = cfg->delta.find(g); it != cfg->delta.end()) shift += it->second;
  }
  for (const auto& c : cues_.classes_in(text)) {
    if (auto it = cfg->cue_delta.find(c); it != cfg->cue_delta.end()) shift += it->second;
  }
  if (config_.noise_sd > 0.0) {
    shift += config_.noise_sd *
             keyed_gaussian(config_.noise_seed, std::string(to_string(task)) + "\x1f" + text);
  }

  // Shift the designated label, then spread the remaining mass over the
  // other labels in proportion to their base probabilities.
  ClassifierOutput out;
  const double p = std::clamp(cfg->base.at(cfg->label) + shift, 0.0, 1.0);
  double other_base = 0.0;
  for (const auto& [l, b] : cfg->base) {
    if (l != cfg->label) other_base += b;
  }
  const auto others = static_cast<double>(cfg->base.size() - 1);
  for (const auto& [l, b] : cfg->base) {
    if (l == cfg->label) {
      out.probs[l] = p;
    } else {
      out.probs[l] = other_base > 0.0 ? (1.0 - p) * b / other_base : (1.0 - p) / others;
    }
  }
  return out;
}

std::vector<ClassifierOutput> SyntheticBackend::score_batch(Task task,
                                                            std::span<const ClassifierInput> inputs) {
  if (task == Task::kMlm) throw ProtocolError("score_batch does not serve the mlm task");
  if (inputs.empty()) throw EmptyInput("empty batch");
  count_call(inputs.size());
  std::vector<ClassifierOutput> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    if ((task == Task::kNli) != in.hypothesis.has_value()) {
      throw ProtocolError("NLI inputs need a hypothesis; other tasks must not have one");
    }
    out.push_back(score_one(task, in));
  }
  return out;
}

MlmOutput SyntheticBackend::mlm_log_probs(std::string_view text,
                                          std::span<const std::string> candidates) {
  if (count_occurrences(text, kMaskToken) != 1) {
    throw MaskCountError("text must contain exactly one " + std::string(kMaskToken));
  }
  if (candidates.empty()) throw EmptyInput("no candidates");
  for (const auto& c : candidates) {
    if (c.empty() || c.find_first_of(" \t\n") != std::string::npos) {
      throw MultiTokenCandidate("candidate '" + c + "' is not a single token");
    }
  }
  count_call();
  const bool prior = text.find(kContextMaskToken) != std::string_view::npos;
  const auto cues = prior ? std::vector<std::string>{} : cues_.classes_in(text);

  MlmOutput out;
  for (const auto& cand : candidates) {
    auto base = config_.mlm.base.find(cand);
    double lp = std::log(base == config_.mlm.base.end() ? config_.mlm.default_prob : base->second);
    if (!prior) {
      for (const auto& g : groups_.classes_in(cand)) {
        if (auto it = config_.mlm.delta.find(g); it != config_.mlm.delta.end()) lp += it->second;
        for (const auto& cue : cues) {
          auto ct = config_.mlm.cue_delta.find(cue);
          if (ct == config_.mlm.cue_delta.end()) continue;
          if (auto it = ct->second.find(g); it != ct->second.end()) lp += it->second;
        }
      }
    }
    if (config_.mlm.noise_sd > 0.0) {
      lp += config_.mlm.noise_sd * keyed_gaussian(config_.noise_seed,
                                                  std::string(text) + "\x1f" + cand);
    }
    out.log_probs[cand] = std::min(lp, 0.0);
  }
  return out;
}

std::unique_ptr<Backend> make_backend(std::string_view spec, const LexiconSet& lexicons,
                                      std::optional<std::string> remote_url,
                                      std::size_t concurrency) {
  constexpr std::string_view kSynthetic = "synthetic:";
  if (spec.substr(0, kSynthetic.size()) == kSynthetic) {
    auto config = PlantedBiasConfig::load(std::string(spec.substr(kSynthetic.size())));
    config.add_lexicon_terms(lexicons);
    return std::make_unique<SyntheticBackend>(std::move(config));
  }
  if (spec == "remote") {
    std::string url;
    if (remote_url && !remote_url->empty()) {
      url = *remote_url;
    } else if (const char* env = std::getenv("TEMPLATESENSE_BACKEND_URL")) {
      url = env;
    }
    if (url.empty()) throw ConfigError("remote backend needs TEMPLATESENSE_BACKEND_URL");
    RemoteConfig rc;
    rc.url = url;
    rc.concurrency = std::max<std::size_t>(1, concurrency);
    return std::make_unique<RemoteBackend>(rc);
  }
  throw ConfigError("unknown backend spec '" + std::string(spec) + "'");
}

}  // namespace templatesense
