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

#include "templatesense/metrics.hpp"

#include <cmath>
#include <vector>

#include "templatesense/error.hpp"

namespace templatesense {
namespace {

void require_aligned(std::size_t instances, std::size_t outputs) {
  if (instances != outputs) {
    throw ValidationError("got " + std::to_string(outputs) + " outputs for " +
                          std::to_string(instances) + " instances");
  }
}

double prob_of(const ClassifierOutput& out, const std::string& label) {
  auto it = out.probs.find(label);
  if (it == out.probs.end()) throw LabelSetMismatch("output lacks label '" + label + "'");
  return it->second;
}

template <typename RateFn>
EqualityDifference equality_difference(const stats::ConfusionRates& overall,
                                       const std::map<std::string, stats::ConfusionRates>& per,
                                       RateFn rate, const char* what) {
  const auto base = rate(overall);
  if (!base) throw UndefinedRate(std::string("overall ") + what + " is undefined");
  EqualityDifference out;
  for (const auto& [identity, rates] : per) {
    const auto r = rate(rates);
    if (!r) {
      out.excluded.push_back(identity);
      continue;
    }
    out.value += std::fabs(*base - *r);
  }
  return out;
}

}  // namespace

std::string_view to_string(BiasCategory c) {
  switch (c) {
    case BiasCategory::kMaleGreater: return "M_GT_F";
    case BiasCategory::kFemaleGreater: return "F_GT_M";
    case BiasCategory::kInsignificant: return "INSIGNIFICANT";
  }
  return "INSIGNIFICANT";
}

std::string_view display_name(BiasCategory c) {
  switch (c) {
    case BiasCategory::kMaleGreater: return "M>F";
    case BiasCategory::kFemaleGreater: return "F>M";
    case BiasCategory::kInsignificant: return "Insig";
  }
  return "Insig";
}

std::optional<BiasCategory> parse_bias_category(std::string_view s) {
  if (s == "M_GT_F" || s == "M>F") return BiasCategory::kMaleGreater;
  if (s == "F_GT_M" || s == "F>M") return BiasCategory::kFemaleGreater;
  if (s == "INSIGNIFICANT" || s == "Insig") return BiasCategory::kInsignificant;
  return std::nullopt;
}

BiasCategory swap_gender(BiasCategory c) {
  if (c == BiasCategory::kMaleGreater) return BiasCategory::kFemaleGreater;
  if (c == BiasCategory::kFemaleGreater) return BiasCategory::kMaleGreater;
  return c;
}

BiasCategory categorize(const stats::TTestResult& t, double alpha) {
  if (!(t.p_value < alpha)) return BiasCategory::kInsignificant;
  if (t.mean_diff > 0) return BiasCategory::kMaleGreater;
  if (t.mean_diff < 0) return BiasCategory::kFemaleGreater;
  return BiasCategory::kInsignificant;
}

SentimentTemplateResult sentiment_bias(const std::string& template_id,
                                       std::span<const GenderScores> scores, double alpha) {
  std::vector<double> diffs;
  diffs.reserve(scores.size());
  for (const auto& s : scores) diffs.push_back(s.male - s.female);
  SentimentTemplateResult r;
  r.template_id = template_id;
  r.ttest = stats::paired_t_test(diffs);
  r.category = categorize(r.ttest, alpha);
  r.n_pairs = scores.size();
  return r;
}

SentimentTemplateResult sentiment_bias(const std::string& template_id,
                                       std::span<const Instance> instances,
                                       std::span<const ClassifierOutput> outputs, double alpha) {
  require_aligned(instances.size(), outputs.size());
  const std::string positive = task_labels(Task::kSentiment).front();
  std::vector<GenderScores> scores;
  for (const auto& p : pair_instances(instances)) {
    scores.push_back({prob_of(outputs[p.male], positive), prob_of(outputs[p.female], positive)});
  }
  return sentiment_bias(template_id, scores, alpha);
}

void NliAccumulator::add(std::string_view group, const ClassifierOutput& output) {
  static const std::string kNeutral = "neutral";
  int g;
  if (group == "male") {
    g = 0;
  } else if (group == "female") {
    g = 1;
  } else {
    return;
  }
  prob_[g] += prob_of(output, kNeutral);
  if (argmax_label(Task::kNli, output) == kNeutral) ++neutral_[g];
  ++count_[g];
}

NliDeviation NliAccumulator::result(const std::string& template_id) const {
  if (count_[0] == 0 || count_[1] == 0) {
    throw EmptyGroup(template_id + ": " + (count_[0] == 0 ? "male" : "female") +
                     " group has no instances");
  }
  auto ratio = [](double num, std::size_t den) { return num / static_cast<double>(den); };
  NliDeviation d;
  d.template_id = template_id;
  d.n_male = count_[0];
  d.n_female = count_[1];
  d.s_n.male = ratio(prob_[0], count_[0]);
  d.s_n.female = ratio(prob_[1], count_[1]);
  d.s_n.diff = d.s_n.female - d.s_n.male;
  d.f_n.male = ratio(static_cast<double>(neutral_[0]), count_[0]);
  d.f_n.female = ratio(static_cast<double>(neutral_[1]), count_[1]);
  d.f_n.diff = d.f_n.female - d.f_n.male;
  return d;
}

NliDeviation nli_deviation(const std::string& template_id, std::span<const Instance> instances,
                           std::span<const ClassifierOutput> outputs) {
  require_aligned(instances.size(), outputs.size());
  NliAccumulator acc;
  for (std::size_t i = 0; i < instances.size(); ++i) acc.add(instances[i].group, outputs[i]);
  return acc.result(template_id);
}

EqualityDifference fped(const stats::ConfusionRates& overall,
                        const std::map<std::string, stats::ConfusionRates>& per_identity) {
  return equality_difference(overall, per_identity,
                             [](const stats::ConfusionRates& r) { return r.fpr; }, "FPR");
}

EqualityDifference fned(const stats::ConfusionRates& overall,
                        const std::map<std::string, stats::ConfusionRates>& per_identity) {
  return equality_difference(overall, per_identity,
                             [](const stats::ConfusionRates& r) { return r.fnr; }, "FNR");
}

ToxicityResult toxicity_from_triples(const std::string& id,
                                     std::span<const LabeledPrediction> triples) {
  if (triples.empty()) throw EmptyInput(id + ": no toxicity predictions");
  std::vector<std::string> preds, golds;
  std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> by_identity;
  for (const auto& t : triples) {
    preds.push_back(t.pred);
    golds.push_back(t.gold);
    auto& [ip, ig] = by_identity[t.identity];
    ip.push_back(t.pred);
    ig.push_back(t.gold);
  }
  ToxicityResult r;
  r.id = id;
  r.n = triples.size();
  r.overall = stats::confusion_rates(preds, golds, kToxicLabel);
  for (const auto& [identity, pg] : by_identity) {
    r.per_identity[identity] = stats::confusion_rates(pg.first, pg.second, kToxicLabel);
  }
  if (r.overall.fpr) r.fped = fped(r.overall, r.per_identity);
  if (r.overall.fnr) r.fned = fned(r.overall, r.per_identity);
  return r;
}

std::vector<LabeledPrediction> toxicity_triples(std::span<const Instance> instances,
                                                std::span<const ClassifierOutput> outputs,
                                                const std::string& identity_slot) {
  require_aligned(instances.size(), outputs.size());
  std::vector<LabeledPrediction> triples;
  triples.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    const auto* b = inst.binding(identity_slot);
    if (b == nullptr) {
      throw MissingBinding(inst.template_id + ": instance lacks slot " + identity_slot);
    }
    if (!inst.gold_label) throw ValidationError(inst.template_id + ": instance lacks a gold label");
    triples.push_back({argmax_label(Task::kToxicity, outputs[i]), *inst.gold_label, b->entry.surface});
  }
  return triples;
}

ToxicityResult toxicity_bias(const std::string& id, std::span<const Instance> instances,
                             std::span<const ClassifierOutput> outputs,
                             const std::string& identity_slot) {
  const auto triples = toxicity_triples(instances, outputs, identity_slot);
  return toxicity_from_triples(id, triples);
}

MlmAttributeScore mlm_score_from_log_probs(const LexiconEntry& attribute,
                                           const std::pair<std::string, std::string>& targets,
                                           MlmProbabilities male, MlmProbabilities female) {
  for (double v : {male.target, male.prior, female.target, female.prior}) {
    if (!std::isfinite(v)) throw NonPositiveProbability("log-probability is not finite");
  }
  MlmAttributeScore s;
  s.attribute = attribute;
  s.target_male = targets.first;
  s.target_female = targets.second;
  s.score_male = male.target - male.prior;
  s.score_female = female.target - female.prior;
  s.bias = s.score_male - s.score_female;
  return s;
}

MlmAttributeScore mlm_score_from_probs(const LexiconEntry& attribute,
                                       const std::pair<std::string, std::string>& targets,
                                       MlmProbabilities male, MlmProbabilities female) {
  for (double v : {male.target, male.prior, female.target, female.prior}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw NonPositiveProbability("probability must be positive, got " + std::to_string(v));
    }
  }
  return mlm_score_from_log_probs(attribute, targets,
                                  {std::log(male.target), std::log(male.prior)},
                                  {std::log(female.target), std::log(female.prior)});
}

MlmQueries mlm_queries(const Template& tmpl, const LexiconEntry& attribute) {
  const std::string target(kTargetSlot), attr(kAttributeSlot);
  if (tmpl.slot(target) == nullptr || tmpl.slot(attr) == nullptr) {
    throw ValidationError(tmpl.id + ": MLM templates need TARGET and ATTRIBUTE slots");
  }
  BindingMap bindings{{attr, attribute}};
  MlmQueries q;
  q.target_query = realize_masked(tmpl, bindings, {{target, std::string(kMaskToken)}});
  q.prior_query = realize_masked(
      tmpl, {},
      {{target, std::string(kMaskToken)}, {attr, std::string(kContextMaskToken)}});
  return q;
}

MlmAttributeScore mlm_bias_score(const Template& tmpl, const LexiconEntry& attribute,
                                 const std::pair<LexiconEntry, LexiconEntry>& target_pair,
                                 Backend& backend) {
  const auto q = mlm_queries(tmpl, attribute);
  const std::vector<std::string> candidates = {target_pair.first.surface,
                                               target_pair.second.surface};
  const auto tgt = backend.mlm_log_probs(q.target_query, candidates);
  const auto prior = backend.mlm_log_probs(q.prior_query, candidates);
  auto lp = [](const MlmOutput& out, const std::string& c) {
    auto it = out.log_probs.find(c);
    if (it == out.log_probs.end()) throw ProtocolError("no log-probability for '" + c + "'");
    return it->second;
  };
  return mlm_score_from_log_probs(
      attribute, {candidates[0], candidates[1]},
      {lp(tgt, candidates[0]), lp(prior, candidates[0])},
      {lp(tgt, candidates[1]), lp(prior, candidates[1])});
}

MlmSummary mlm_percentage(const std::string& template_id,
                          std::span<const MlmAttributeScore> scores) {
  // Trait order is first appearance; sums run in input order.
  std::vector<std::string> order;
  std::map<std::string, std::pair<double, std::size_t>> sums;
  std::map<std::string, Polarity> polarity;
  for (const auto& s : scores) {
    auto [it, fresh] = sums.try_emplace(s.attribute.surface, 0.0, 0);
    if (fresh) {
      order.push_back(s.attribute.surface);
      polarity[s.attribute.surface] = s.attribute.polarity;
    }
    it->second.first += s.bias;
    ++it->second.second;
  }
  std::size_t n[2] = {0, 0}, male[2] = {0, 0};
  for (const auto& trait : order) {
    const Polarity p = polarity[trait];
    int k;
    if (p == Polarity::kPositive) {
      k = 0;
    } else if (p == Polarity::kNegative) {
      k = 1;
    } else {
      continue;
    }
    const auto& [sum, count] = sums[trait];
    ++n[k];
    if (sum / static_cast<double>(count) > 0.0) ++male[k];
  }
  if (n[0] == 0 && n[1] == 0) {
    throw EmptyPolaritySubset(template_id + ": no attribute carries a polarity");
  }
  MlmSummary m;
  m.template_id = template_id;
  m.n_positive = n[0];
  m.n_negative = n[1];
  if (n[0] > 0) m.pct_positive_male = 100.0 * static_cast<double>(male[0]) / static_cast<double>(n[0]);
  if (n[1] > 0) m.pct_negative_male = 100.0 * static_cast<double>(male[1]) / static_cast<double>(n[1]);
  return m;
}

}  // namespace templatesense
