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

#include "templatesense/sensitivity.hpp"

#include <algorithm>

#include "templatesense/error.hpp"
#include "templatesense/stats.hpp"

namespace templatesense {

FamilyAggregate aggregate_family(const TemplateFamily& family, const std::string& metric,
                                 const std::map<std::string, std::optional<double>>& values) {
  auto lookup = [&](const std::string& id) -> const std::optional<double>& {
    auto it = values.find(id);
    if (it == values.end()) throw MissingMetric(id + " has no value for " + metric);
    return it->second;
  };

  FamilyAggregate agg;
  agg.family_id = family.original.id;
  agg.metric = metric;
  agg.orig_value = lookup(family.original.id);
  if (!agg.orig_value) agg.undefined.push_back(family.original.id);

  std::vector<double> defined;
  for (const auto& m : family.modifications) {
    const auto& v = lookup(m.id);
    if (!v) {
      agg.undefined.push_back(m.id);
      continue;
    }
    agg.mod_values.emplace_back(m.id, *v);
    defined.push_back(*v);
  }
  if (defined.empty()) return agg;

  std::sort(defined.begin(), defined.end());
  const auto s = stats::summarize(defined);
  agg.mod_mean = s.mean;
  agg.mod_sd = s.sd;
  if (agg.orig_value && *agg.orig_value != 0.0) {
    agg.pct_change = stats::percent_change(*agg.orig_value, s.mean);
  }
  return agg;
}

FlipSummary flip_table(std::span<const FlipInput> families) {
  FlipSummary out;
  for (const auto& f : families) {
    FlipFamily row;
    row.family_id = f.family_id;
    row.original = f.original;
    for (auto c : {BiasCategory::kMaleGreater, BiasCategory::kFemaleGreater,
                   BiasCategory::kInsignificant}) {
      row.counts[c] = 0;
    }
    for (auto c : f.modifications) {
      ++row.counts[c];
      ++row.total;
      if (c != f.original) {
        ++row.differing;
        ++out.transitions[{f.original, c}];
      }
    }
    out.differing += row.differing;
    out.total += row.total;
    out.families.push_back(std::move(row));
  }
  if (out.total > 0) {
    out.fraction = static_cast<double>(out.differing) / static_cast<double>(out.total);
  }
  return out;
}

std::vector<FlipInput> flip_inputs(std::span<const TemplateFamily> families,
                                   const std::map<std::string, SentimentTemplateResult>& results) {
  auto category = [&](const std::string& id) {
    auto it = results.find(id);
    if (it == results.end()) throw MissingMetric(id + " has no sentiment result");
    return it->second.category;
  };
  std::vector<FlipInput> inputs;
  for (const auto& fam : families) {
    FlipInput in;
    in.family_id = fam.original.id;
    in.original = category(fam.original.id);
    for (const auto& m : fam.modifications) in.modifications.push_back(category(m.id));
    inputs.push_back(std::move(in));
  }
  return inputs;
}

PooledToxicity pooled_toxicity_aggregate(
    std::span<const std::vector<LabeledPrediction>> originals,
    std::span<const std::vector<LabeledPrediction>> modifications) {
  auto pool = [](std::span<const std::vector<LabeledPrediction>> parts) {
    std::vector<LabeledPrediction> all;
    for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    return all;
  };
  const auto orig = pool(originals);
  const auto mod = pool(modifications);
  return {toxicity_from_triples("pooled_original", orig),
          toxicity_from_triples("pooled_modified", mod)};
}

}  // namespace templatesense
