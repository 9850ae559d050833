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

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's numerical code.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace oracle {

// Student-t density.
inline double t_density(double x, double df) {
  const double log_c = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) -
                       0.5 * std::log(df * M_PI);
  return std::exp(log_c - (df + 1.0) / 2.0 * std::log1p(x * x / df));
}

// Composite Simpson rule over [a, b] with `n` (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Upper tail P(T > t_k) on the grid t_k = k * step, k = 0..steps, by
// integrating the density cumulatively.
inline std::vector<double> t_upper_tail_grid(double df, double step, int steps,
                                             int panels_per_step = 64) {
  std::vector<double> tail(steps + 1);
  double cdf = 0.0;  // integral from 0
  tail[0] = 0.5;
  auto f = [df](double x) { return t_density(x, df); };
  for (int k = 1; k <= steps; ++k) {
    cdf += simpson(f, (k - 1) * step, k * step, panels_per_step);
    tail[k] = 0.5 - cdf;
  }
  return tail;
}

// Single-point tail with a fine fixed grid.
inline double t_upper_tail(double t, double df) {
  auto f = [df](double x) { return t_density(x, df); };
  const int panels = std::max(64, static_cast<int>(std::ceil(t * 2000.0)) & ~1);
  return 0.5 - simpson(f, 0.0, t, panels + (panels % 2));
}

struct Triple {
  std::string pred;
  std::string gold;
  std::string identity;
};

struct Rates {
  std::optional<double> fpr;
  std::optional<double> fnr;
};

// Tallies one subset by scanning every triple.
inline Rates tally(const std::vector<Triple>& triples, const std::string* identity,
                   const std::string& positive) {
  std::size_t neg = 0, pos = 0, fp = 0, fn = 0;
  for (const auto& t : triples) {
    if (identity != nullptr && t.identity != *identity) continue;
    const bool gold_pos = t.gold == positive;
    const bool pred_pos = t.pred == positive;
    if (gold_pos) {
      ++pos;
      if (!pred_pos) ++fn;
    } else {
      ++neg;
      if (pred_pos) ++fp;
    }
  }
  Rates r;
  if (neg > 0) r.fpr = static_cast<double>(fp) / static_cast<double>(neg);
  if (pos > 0) r.fnr = static_cast<double>(fn) / static_cast<double>(pos);
  return r;
}

struct EqualityDiffs {
  std::optional<double> fped;
  std::optional<double> fned;
};

// Sum over identities (sorted) of |overall - identity| rates; identities
// with an undefined rate are skipped.
inline EqualityDiffs brute_force_equality(const std::vector<Triple>& triples,
                                          const std::string& positive = "toxic") {
  std::set<std::string> identities;
  for (const auto& t : triples) identities.insert(t.identity);
  const Rates overall = tally(triples, nullptr, positive);
  EqualityDiffs out;
  if (overall.fpr) out.fped = 0.0;
  if (overall.fnr) out.fned = 0.0;
  for (const auto& id : identities) {
    const Rates r = tally(triples, &id, positive);
    if (out.fped && r.fpr) *out.fped += std::fabs(*overall.fpr - *r.fpr);
    if (out.fned && r.fnr) *out.fned += std::fabs(*overall.fnr - *r.fnr);
  }
  return out;
}

// All index tuples of a mixed-radix product, first position most significant.
inline std::vector<std::vector<std::size_t>> enumerate_product(const std::vector<std::size_t>& sizes) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  std::function<void(std::size_t)> rec = [&](std::size_t depth) {
    if (depth == sizes.size()) {
      out.push_back(cur);
      return;
    }
    for (std::size_t i = 0; i < sizes[depth]; ++i) {
      cur.push_back(i);
      rec(depth + 1);
      cur.pop_back();
    }
  };
  rec(0);
  return out;
}

// Mean of values in the given order, by a plain loop.
inline double mean_in_order(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace oracle
