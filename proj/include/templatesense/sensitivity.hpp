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

// Aggregation of metric values across template families.

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "templatesense/metrics.hpp"
#include "templatesense/template_engine.hpp"

namespace templatesense {

struct FamilyAggregate {
  std::string family_id;  // original template id
  std::string metric;
  std::optional<double> orig_value;
  std::vector<std::pair<std::string, double>> mod_values;  // modification order
  std::vector<std::string> undefined;  // members whose metric is undefined
  std::optional<double> mod_mean;
  std::optional<double> mod_sd;  // needs two defined modifications
  std::optional<double> pct_change;
};

// `values` maps every family member id to its metric, nullopt meaning the
// metric is undefined for that member. Throws MissingMetric when a member
// has no entry. Mean and SD are computed over sorted values, so the result
// does not depend on modification order.
FamilyAggregate aggregate_family(const TemplateFamily& family, const std::string& metric,
                                 const std::map<std::string, std::optional<double>>& values);

struct FlipInput {
  std::string family_id;
  BiasCategory original = BiasCategory::kInsignificant;
  std::vector<BiasCategory> modifications;
};

struct FlipFamily {
  std::string family_id;
  BiasCategory original = BiasCategory::kInsignificant;
  std::map<BiasCategory, std::size_t> counts;  // every category present, possibly 0
  std::size_t differing = 0;
  std::size_t total = 0;
};

struct FlipSummary {
  std::vector<FlipFamily> families;
  std::size_t differing = 0;
  std::size_t total = 0;
  double fraction = 0.0;
  // (original, modified) -> count, differing pairs only
  std::map<std::pair<BiasCategory, BiasCategory>, std::size_t> transitions;
};

FlipSummary flip_table(std::span<const FlipInput> families);

// Builds flip inputs from per-template sentiment results.
std::vector<FlipInput> flip_inputs(std::span<const TemplateFamily> families,
                                   const std::map<std::string, SentimentTemplateResult>& results);

struct PooledToxicity {
  ToxicityResult original;
  ToxicityResult modified;
};

// Micro aggregation: pools raw triples of all originals and of all
// modifications before computing rates.
PooledToxicity pooled_toxicity_aggregate(
    std::span<const std::vector<LabeledPrediction>> originals,
    std::span<const std::vector<LabeledPrediction>> modifications);

}  // namespace templatesense
