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

// Statistical kernel: Student-t tails, paired t-test, summaries, confusion
// rates and percent change.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace templatesense::stats {

struct TTestResult {
  double mean_diff = 0.0;
  double t_stat = 0.0;
  int df = 0;
  double p_value = 1.0;  // two-sided
  // Zero variance with a non-zero mean: t is infinite and p is 0.
  bool degenerate = false;
};

struct SummaryStats {
  std::size_t n = 0;
  double mean = 0.0;
  std::optional<double> sd;  // sample SD; unset when n < 2
};

struct ConfusionRates {
  std::optional<double> fpr;  // unset when there are no gold negatives
  std::optional<double> fnr;  // unset when there are no gold positives
  std::size_t negatives = 0;
  std::size_t positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double x, double a, double b);

// P(T > t) for Student's t with `df` degrees of freedom.
double student_t_sf(double t, double df);

// Throws TooFewPairs when diffs.size() < 2.
TTestResult paired_t_test(std::span<const double> diffs);

// Two-sided paired test on (a[i] - b[i]).
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

SummaryStats summarize(std::span<const double> values);

// 100 * (|modified| - |orig|) / |orig|. Throws UndefinedBaseline when orig == 0.
double percent_change(double orig, double modified);

// `preds[i]` and `golds[i]` compared against `positive_label`.
// Throws EmptyInput on empty or misaligned input.
ConfusionRates confusion_rates(std::span<const std::string> preds,
                               std::span<const std::string> golds,
                               std::string_view positive_label);

}  // namespace templatesense::stats
