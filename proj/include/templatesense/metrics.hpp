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

// Task-specific bias measures computed from scored instances.

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "templatesense/backend.hpp"
#include "templatesense/lexicon.hpp"
#include "templatesense/stats.hpp"
#include "templatesense/template_engine.hpp"

namespace templatesense {

enum class BiasCategory { kMaleGreater, kFemaleGreater, kInsignificant };

std::string_view to_string(BiasCategory c);   // "M_GT_F", "F_GT_M", "INSIGNIFICANT"
std::string_view display_name(BiasCategory c);  // "M>F", "F>M", "Insig"
std::optional<BiasCategory> parse_bias_category(std::string_view s);
BiasCategory swap_gender(BiasCategory c);

// Significance is strict: p == alpha is insignificant.
BiasCategory categorize(const stats::TTestResult& t, double alpha);

struct SentimentTemplateResult {
  std::string template_id;
  BiasCategory category = BiasCategory::kInsignificant;
  stats::TTestResult ttest;
  std::size_t n_pairs = 0;
};

struct GenderScores {
  double male = 0.0;
  double female = 0.0;
};

// `scores[i]` holds positive-class probabilities of the i-th male/female pair.
SentimentTemplateResult sentiment_bias(const std::string& template_id,
                                       std::span<const GenderScores> scores, double alpha);

// Looks up positive probabilities for each pair; outputs align with instances.
SentimentTemplateResult sentiment_bias(const std::string& template_id,
                                       std::span<const Instance> instances,
                                       std::span<const ClassifierOutput> outputs, double alpha);

struct GroupContrast {
  double male = 0.0;
  double female = 0.0;
  double diff = 0.0;  // female - male
};

struct NliDeviation {
  std::string template_id;
  GroupContrast s_n;  // mean neutral probability
  GroupContrast f_n;  // fraction predicted neutral
  std::size_t n_male = 0;
  std::size_t n_female = 0;
};

// Streaming form of nli_deviation for corpora too large to hold in memory.
class NliAccumulator {
 public:
  // `group` other than "male"/"female" is ignored.
  void add(std::string_view group, const ClassifierOutput& output);
  NliDeviation result(const std::string& template_id) const;  // throws EmptyGroup

 private:
  double prob_[2] = {0.0, 0.0};
  std::size_t neutral_[2] = {0, 0};
  std::size_t count_[2] = {0, 0};
};

// Instances whose group is neither "male" nor "female" are ignored.
// Throws EmptyGroup when either group has no instance.
NliDeviation nli_deviation(const std::string& template_id, std::span<const Instance> instances,
                           std::span<const ClassifierOutput> outputs);

// One toxicity decision: predicted label, gold label, identity term.
struct LabeledPrediction {
  std::string pred;
  std::string gold;
  std::string identity;
};

struct EqualityDifference {
  double value = 0.0;
  std::vector<std::string> excluded;  // identities with undefined rates
};

// Sum over identities of |FPR - FPR_i|. Throws UndefinedRate when the overall
// FPR is undefined; identities lacking gold negatives are excluded.
EqualityDifference fped(const stats::ConfusionRates& overall,
                        const std::map<std::string, stats::ConfusionRates>& per_identity);
EqualityDifference fned(const stats::ConfusionRates& overall,
                        const std::map<std::string, stats::ConfusionRates>& per_identity);

struct ToxicityResult {
  std::string id;
  std::size_t n = 0;
  stats::ConfusionRates overall;
  std::map<std::string, stats::ConfusionRates> per_identity;
  std::optional<EqualityDifference> fped;  // unset when the overall FPR is undefined
  std::optional<EqualityDifference> fned;
};

inline constexpr std::string_view kToxicLabel = "toxic";

ToxicityResult toxicity_from_triples(const std::string& id,
                                     std::span<const LabeledPrediction> triples);

// Argmax decisions against polarity-derived gold labels.
std::vector<LabeledPrediction> toxicity_triples(std::span<const Instance> instances,
                                                std::span<const ClassifierOutput> outputs,
                                                const std::string& identity_slot);

ToxicityResult toxicity_bias(const std::string& id, std::span<const Instance> instances,
                             std::span<const ClassifierOutput> outputs,
                             const std::string& identity_slot);

struct MlmAttributeScore {
  LexiconEntry attribute;
  std::string target_male;
  std::string target_female;
  double score_male = 0.0;
  double score_female = 0.0;
  double bias = 0.0;  // score_male - score_female
};

struct MlmProbabilities {
  double target = 0.0;  // attribute present, target masked
  double prior = 0.0;   // attribute also masked
};

// log(target) - log(prior) per gender. Throws NonPositiveProbability.
MlmAttributeScore mlm_score_from_probs(const LexiconEntry& attribute,
                                       const std::pair<std::string, std::string>& targets,
                                       MlmProbabilities male, MlmProbabilities female);

// Same from log-probabilities, which must be finite.
MlmAttributeScore mlm_score_from_log_probs(const LexiconEntry& attribute,
                                           const std::pair<std::string, std::string>& targets,
                                           MlmProbabilities male, MlmProbabilities female);

// The masked queries used for one attribute.
struct MlmQueries {
  std::string target_query;  // attribute filled, target masked
  std::string prior_query;   // attribute masked as well
};

inline constexpr std::string_view kTargetSlot = "TARGET";
inline constexpr std::string_view kAttributeSlot = "ATTRIBUTE";

MlmQueries mlm_queries(const Template& tmpl, const LexiconEntry& attribute);

MlmAttributeScore mlm_bias_score(const Template& tmpl, const LexiconEntry& attribute,
                                 const std::pair<LexiconEntry, LexiconEntry>& target_pair,
                                 Backend& backend);

struct MlmSummary {
  std::string template_id;
  std::optional<double> pct_positive_male;  // unset when no positive attribute
  std::optional<double> pct_negative_male;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
};

// A trait's bias is the mean over its target pairs; a trait counts as male
// associated when that mean is strictly positive. Throws EmptyPolaritySubset
// when neither polarity is present.
MlmSummary mlm_percentage(const std::string& template_id,
                          std::span<const MlmAttributeScore> scores);

}  // namespace templatesense
