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

// Run configuration, corpus and prediction files, manifests and the
// expand / evaluate / report commands.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "templatesense/template_engine.hpp"

namespace templatesense {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kToolVersion = "0.3.0";

struct RunConfig {
  Task task = Task::kSentiment;
  std::filesystem::path templates;
  std::filesystem::path lexicons;
  std::string backend;  // "synthetic:<file>" or "remote"
  double alpha = 0.05;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> cache;  // defaults to <output_dir>/cache.jsonl
  std::size_t concurrency = 4;
  std::size_t batch_size = 256;
  std::optional<std::uint64_t> seed;  // overrides the synthetic noise seed
  std::optional<std::string> remote_url;

  // Relative paths resolve against `base_dir`. Throws ConfigError.
  static RunConfig parse(std::string_view json_text, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  std::filesystem::path corpus_path() const { return output_dir / "corpus.jsonl"; }
  std::filesystem::path predictions_path() const { return output_dir / "predictions.jsonl"; }
  std::filesystem::path cache_path() const { return cache.value_or(output_dir / "cache.jsonl"); }
  std::filesystem::path manifest_path() const { return output_dir / "manifest.json"; }

  std::string to_json() const;
};

struct ExpandSummary {
  std::vector<std::pair<std::string, std::uint64_t>> counts;  // template id -> instances
  std::uint64_t total = 0;
  std::size_t originals = 0;
  std::size_t modifications = 0;
};

struct EvaluateSummary {
  std::uint64_t instances = 0;
  std::uint64_t resumed = 0;  // already present before this run
  std::uint64_t scored = 0;
  std::size_t backend_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::string backend_id;
};

enum class ReportFormat { kAll, kCsv, kJson, kMd };

struct ReportSummary {
  std::vector<std::filesystem::path> files;
  std::string markdown;
};

ExpandSummary cmd_expand(const RunConfig& config, bool dry_run, std::ostream& log);

// Stops after `limit` newly scored instances when set, leaving a resumable
// prediction file.
EvaluateSummary cmd_evaluate(const RunConfig& config, std::ostream& log,
                             std::optional<std::uint64_t> limit = std::nullopt);

ReportSummary cmd_report(const RunConfig& config, ReportFormat format, std::ostream& log);

// Quick internal consistency checks; returns the number of failures.
int cmd_selftest(const RunConfig& config, std::ostream& log);

// Shortest round-trip decimal.
std::string format_number(double v);
// Fixed decimals, no locale.
std::string format_fixed(double v, int decimals);
// Whole percent at or above 10, one decimal below, with an arrow:
// "81%↓", "4.9%↑", "0%". Changes that round to zero carry no arrow.
std::string format_percent_change(double pct);

}  // namespace templatesense
