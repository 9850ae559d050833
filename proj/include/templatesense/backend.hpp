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

// Model scoring backends.
//
// Wire protocol (HTTP, JSON bodies):
//   POST /v1/classify {task, texts:[...]}            -> {outputs:[{probs:{label:p}}]}
//     NLI sends texts:[{premise, hypothesis}, ...]
//   POST /v1/mlm {text, mask_token, candidates[, context_mask_token]}
//                                                    -> {log_probs:{token:lp}}
//   422 {error:"multi_token_candidate", candidate}  candidate is not one token
//
// `context_mask_token` is present only for prior queries; the server replaces
// it with its native mask token and reads the distribution at `mask_token`.

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "templatesense/lexicon.hpp"
#include "templatesense/template_engine.hpp"

namespace templatesense {

inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kContextMaskToken = "[CTX_MASK]";

struct ClassifierInput {
  std::string text;  // premise for NLI
  std::optional<std::string> hypothesis;
};

struct ClassifierOutput {
  std::map<std::string, double> probs;
  bool operator==(const ClassifierOutput&) const = default;
};

struct MlmOutput {
  std::map<std::string, double> log_probs;
  bool operator==(const MlmOutput&) const = default;
};

// Label set of a classification task, in tie-breaking order.
const std::vector<std::string>& task_labels(Task task);

// Label with the highest probability; ties go to the earliest label of
// task_labels(task).
std::string argmax_label(Task task, const ClassifierOutput& out);

// Throws LabelSetMismatch or ProtocolError.
void validate_output(Task task, const ClassifierOutput& out);

class Backend {
 public:
  virtual ~Backend() = default;

  // Stable identity used in cache keys and manifests.
  virtual std::string id() const = 0;

  // Outputs are aligned with `inputs`.
  virtual std::vector<ClassifierOutput> score_batch(Task task,
                                                    std::span<const ClassifierInput> inputs) = 0;

  // `text` holds exactly one kMaskToken; candidates must be single tokens.
  virtual MlmOutput mlm_log_probs(std::string_view text,
                                  std::span<const std::string> candidates) = 0;

  // Model invocations made so far (remote requests, synthetic evaluations).
  std::size_t call_count() const { return calls_.load(); }

 protected:
  void count_call(std::size_t n = 1) { calls_ += n; }

 private:
  std::atomic<std::size_t> calls_{0};
};

// Matches lexicon terms in text: case-insensitive, whole words, longest
// term first. Multi-word terms are allowed.
class TermMatcher {
 public:
  TermMatcher() = default;
  explicit TermMatcher(const std::map<std::string, std::vector<std::string>>& classes);

  // Classes of all terms found in `text`, sorted and unique.
  std::vector<std::string> classes_in(std::string_view text) const;

 private:
  std::vector<std::pair<std::string, std::string>> terms_;  // lower-cased term, class
};

struct PlantedTaskConfig {
  std::map<std::string, double> base;  // label -> probability
  std::string label;                   // label receiving all shifts
  std::map<std::string, double> delta;      // group -> additive shift
  std::map<std::string, double> cue_delta;  // cue class -> additive shift
};

struct PlantedMlmConfig {
  std::map<std::string, double> base;  // candidate -> probability
  double default_prob = 0.1;
  double noise_sd = 0.0;
  std::map<std::string, double> delta;  // candidate group -> log shift
  // cue class present in text -> candidate group -> log shift
  std::map<std::string, std::map<std::string, double>> cue_delta;
};

// Deterministic synthetic model with known, group-dependent shifts.
struct PlantedBiasConfig {
  std::uint64_t noise_seed = 0;
  double noise_sd = 0.0;
  std::map<Task, PlantedTaskConfig> tasks;
  PlantedMlmConfig mlm;
  std::map<std::string, std::vector<std::string>> groups;  // group -> terms
  std::map<std::string, std::vector<std::string>> cues;    // cue class -> terms
  bool groups_from_lexicons = false;
  bool cues_from_lexicons = false;

  static PlantedBiasConfig parse(std::string_view json_text);
  static PlantedBiasConfig load(const std::filesystem::path& path);
  std::string to_json() const;

  // Adds gendered entries (all surface forms) to groups "male"/"female",
  // identity entries to a group named by their surface, and entries with a
  // polarity to the cue class of that polarity, as enabled by the flags.
  void add_lexicon_terms(const LexiconSet& lexicons);
};

class SyntheticBackend : public Backend {
 public:
  explicit SyntheticBackend(PlantedBiasConfig config);

  std::string id() const override { return id_; }
  std::vector<ClassifierOutput> score_batch(Task task,
                                            std::span<const ClassifierInput> inputs) override;
  MlmOutput mlm_log_probs(std::string_view text, std::span<const std::string> candidates) override;

  const PlantedBiasConfig& config() const { return config_; }

 private:
  ClassifierOutput score_one(Task task, const ClassifierInput& input) const;

  PlantedBiasConfig config_;
  TermMatcher groups_;
  TermMatcher cues_;
  std::string id_;
};

struct RemoteConfig {
  std::string url;  // e.g. http://127.0.0.1:8080
  std::size_t max_batch = 64;
  std::size_t concurrency = 4;  // in-flight request limit
  int max_retries = 4;
  int backoff_initial_ms = 100;
  int backoff_max_ms = 2000;
  int timeout_s = 60;
};

class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig config);

  std::string id() const override { return "remote:" + config_.url; }
  std::vector<ClassifierOutput> score_batch(Task task,
                                            std::span<const ClassifierInput> inputs) override;
  MlmOutput mlm_log_probs(std::string_view text, std::span<const std::string> candidates) override;

 private:
  std::string post(const std::string& path, const std::string& body);

  RemoteConfig config_;
};

// Persistent prediction cache in front of another backend. Records are
// appended to a JSON-lines file, one per scored input:
//   {"key":..., "kind":"classify"|"mlm", "value":{...}, "created_at":...}
class CachedBackend : public Backend {
 public:
  // Loads existing records from `path` (a truncated last line is ignored).
  CachedBackend(Backend& inner, std::filesystem::path path);

  std::string id() const override { return inner_.id(); }
  std::vector<ClassifierOutput> score_batch(Task task,
                                            std::span<const ClassifierInput> inputs) override;
  MlmOutput mlm_log_probs(std::string_view text, std::span<const std::string> candidates) override;

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }
  std::size_t size() const;
  void flush();

  static std::string classify_key(std::string_view backend_id, Task task,
                                  const ClassifierInput& input);
  static std::string mlm_key(std::string_view backend_id, std::string_view text,
                             std::span<const std::string> candidates);

 private:
  void append(const std::string& key, const std::string& kind, const std::string& value_json);

  Backend& inner_;
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, ClassifierOutput> classify_;
  std::unordered_map<std::string, MlmOutput> mlm_;
  std::ofstream out_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

// "synthetic:<config-file>" or "remote" (URL from TEMPLATESENSE_BACKEND_URL
// unless `remote_url` is given).
std::unique_ptr<Backend> make_backend(std::string_view spec, const LexiconSet& lexicons,
                                      std::optional<std::string> remote_url = std::nullopt,
                                      std::size_t concurrency = 4);

}  // namespace templatesense
