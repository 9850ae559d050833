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

#include "templatesense/stats.hpp"

#include <cmath>
#include <limits>
#include <vector>
#include <algorithm>

#include "templatesense/error.hpp"

namespace templatesense::stats {
namespace {

// Continued fraction for I_x(a, b), modified Lentz. Converges quickly for
// x < (a + 1) / (a + b + 2).
double beta_continued_fraction(double x, double a, double b) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double x, double a, double b) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(x, a, b) / a;
  }
  return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double student_t_sf(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  if (t == 0.0) return 0.5;
  // P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
  const double x = df / (df + t * t);
  const double two_sided = incomplete_beta(x, 0.5 * df, 0.5);
  return t > 0 ? 0.5 * two_sided : 1.0 - 0.5 * two_sided;
}

TTestResult paired_t_test(std::span<const double> diffs) {
  if (diffs.size() < 2) throw TooFewPairs("paired t-test needs at least 2 pairs");
  const auto summary = summarize(diffs);
  const double n = static_cast<double>(diffs.size());

  TTestResult r;
  r.mean_diff = summary.mean;
  r.df = static_cast<int>(diffs.size()) - 1;
  const double sd = *summary.sd;
  if (sd == 0.0) {
    if (r.mean_diff == 0.0) {
      r.t_stat = 0.0;
      r.p_value = 1.0;
    } else {
      r.t_stat = std::copysign(std::numeric_limits<double>::infinity(), r.mean_diff);
      r.p_value = 0.0;
      r.degenerate = true;
    }
    return r;
  }
  r.t_stat = r.mean_diff / (sd / std::sqrt(n));
  r.p_value = std::min(1.0, 2.0 * student_t_sf(std::fabs(r.t_stat), r.df));
  return r;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw EmptyInput("paired samples differ in length");
  std::vector<double> diffs(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diffs[i] = a[i] - b[i];
  return paired_t_test(diffs);
}

SummaryStats summarize(std::span<const double> values) {
  SummaryStats s;
  s.n = values.size();
  if (values.empty()) return s;
  // Constant input: exact mean and zero spread, free of summation rounding.
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; })) {
    s.mean = values[0];
    if (s.n >= 2) s.sd = 0.0;
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  return s;
}

double percent_change(double orig, double modified) {
  if (orig == 0.0) throw UndefinedBaseline("percent change from a zero baseline");
  return 100.0 * (std::fabs(modified) - std::fabs(orig)) / std::fabs(orig);
}

ConfusionRates confusion_rates(std::span<const std::string> preds,
                               std::span<const std::string> golds,
                               std::string_view positive_label) {
  if (preds.empty() || preds.size() != golds.size()) {
    throw EmptyInput("confusion rates need equal-length, non-empty inputs");
  }
  ConfusionRates r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool gold_pos = golds[i] == positive_label;
    const bool pred_pos = preds[i] == positive_label;
    if (gold_pos) {
      ++r.positives;
      if (!pred_pos) ++r.false_negatives;
    } else {
      ++r.negatives;
      if (pred_pos) ++r.false_positives;
    }
  }
  if (r.negatives > 0) {
    r.fpr = static_cast<double>(r.false_positives) / static_cast<double>(r.negatives);
  }
  if (r.positives > 0) {
    r.fnr = static_cast<double>(r.false_negatives) / static_cast<double>(r.positives);
  }
  return r;
}

}  // namespace templatesense::stats
