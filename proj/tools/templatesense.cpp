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

// Command-line entry point.

#include <iostream>

#include "CLI11.hpp"
#include "templatesense/error.hpp"
#include "templatesense/pipeline.hpp"

int main(int argc, char** argv) {
  using namespace templatesense;
  CLI::App app{"Template sensitivity analysis for bias benchmarks"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<double> alpha;
  std::string backend;
  std::string format = "all";
  bool dry_run = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--backend", backend, "synthetic:<file> or remote");
  };
  auto* expand = app.add_subcommand("expand", "Expand templates into an instance corpus");
  add_common(expand);
  expand->add_flag("--dry-run", dry_run, "Print counts without writing the corpus");
  auto* evaluate = app.add_subcommand("evaluate", "Score the corpus with a backend");
  add_common(evaluate);
  auto* report = app.add_subcommand("report", "Compute metrics and write report tables");
  add_common(report);
  report->add_option("--format", format, "csv, json, md or all")
      ->check(CLI::IsMember({"all", "csv", "json", "md"}));
  auto* selftest = app.add_subcommand("selftest", "Run internal consistency checks");
  add_common(selftest);

  CLI11_PARSE(app, argc, argv);

  try {
    auto config = RunConfig::load(config_path);
    if (alpha) {
      if (!(*alpha > 0.0 && *alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
      config.alpha = *alpha;
    }
    if (!backend.empty()) {
      if (backend.rfind("synthetic:", 0) == 0) {
        backend = "synthetic:" + std::filesystem::absolute(backend.substr(10)).string();
      }
      config.backend = backend;
    }

    if (expand->parsed()) {
      cmd_expand(config, dry_run, std::cout);
    } else if (evaluate->parsed()) {
      cmd_evaluate(config, std::cout);
    } else if (report->parsed()) {
      const ReportFormat f = format == "csv"    ? ReportFormat::kCsv
                             : format == "json" ? ReportFormat::kJson
                             : format == "md"   ? ReportFormat::kMd
                                                : ReportFormat::kAll;
      const auto summary = cmd_report(config, f, std::cerr);
      std::cout << summary.markdown;
    } else if (selftest->parsed()) {
      return cmd_selftest(config, std::cout) == 0 ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
