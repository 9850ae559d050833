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

#include <atomic>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "httplib.h"
#include "json.hpp"
#include "templatesense/backend.hpp"
#include "templatesense/error.hpp"
#include "templatesense/pipeline.hpp"
#include "templatesense/stats.hpp"

using namespace templatesense;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json base_config(const std::string& task, const fs::path& out) {
  const auto src = fixtures::source_dir();
  return {{"task", task},
          {"templates", (src / "data/templates" / (task + ".json")).string()},
          {"lexicons", (src / "data/lexicons_desk").string()},
          {"backend", "synthetic:" + (src / "data/synthetic/planted.json").string()},
          {"alpha", 0.05},
          {"output_dir", out.string()},
          {"batch_size", 64}};
}

RunConfig config_for(const json& j) { return RunConfig::parse(j.dump(), fs::current_path()); }

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

void run_all(const RunConfig& c) {
  std::ostringstream log;
  cmd_expand(c, false, log);
  cmd_evaluate(c, log);
  cmd_report(c, ReportFormat::kAll, log);
}

}  // namespace

TEST_CASE("percent change rendering") {
  CHECK(format_percent_change(stats::percent_change(-0.037, 0.007)) == "81%↓");
  CHECK(format_percent_change(stats::percent_change(-0.114, 0.028)) == "75%↓");
  CHECK(format_percent_change(stats::percent_change(7.69, 5.78)) == "25%↓");
  CHECK(format_percent_change(stats::percent_change(1.22, 2.77)) == "127%↑");
  CHECK(format_percent_change(4.9) == "4.9%↑");
  CHECK(format_percent_change(-1.53) == "1.5%↓");
  CHECK(format_percent_change(0.0) == "0%");
  CHECK(format_percent_change(9.96) == "10%↑");
  CHECK(format_percent_change(-1e-14) == "0%");
  CHECK(format_percent_change(0.06) == "0.1%↑");
}

TEST_CASE("number formatting") {
  CHECK(format_fixed(-0.0001, 3) == "0.000");
  CHECK(format_fixed(-0.037, 3) == "-0.037");
  CHECK(format_fixed(21.745, 2).size() == 5);
  CHECK(std::stod(format_number(0.1 + 0.2)) == 0.1 + 0.2);
  CHECK(format_number(0.5) == "0.5");
}

TEST_CASE("run config resolves paths and validates") {
  fixtures::ScratchDir dir;
  fs::create_directories(dir / "cfg");
  auto j = base_config("sentiment", "out");
  fixtures::write_file(dir / "cfg/run.json", j.dump());
  const auto c = RunConfig::load(dir / "cfg/run.json");
  CHECK(c.output_dir == dir / "cfg/out");
  CHECK(c.cache_path() == dir / "cfg/out/cache.jsonl");
  CHECK(c.task == Task::kSentiment);

  j["alpha"] = 1.0;
  CHECK_THROWS_AS(config_for(j), ConfigError);
  j["alpha"] = 0.05;
  j["templates"] = (dir / "missing.json").string();
  CHECK_THROWS_AS(config_for(j), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("{", dir.path()), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"task": "poetry"})", dir.path()), ConfigError);
}

TEST_CASE("config with a mismatched task is rejected") {
  fixtures::ScratchDir dir;
  auto j = base_config("nli", dir / "out");
  j["templates"] = (fixtures::source_dir() / "data/templates/sentiment.json").string();
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_expand(config_for(j), true, log), ConfigError);
}

TEST_CASE("expand counts 47 sentiment templates and is deterministic") {
  fixtures::ScratchDir dir;
  const auto c = config_for(base_config("sentiment", dir / "out"));
  std::ostringstream log;
  const auto dry = cmd_expand(c, true, log);
  CHECK(dry.originals == 7);
  CHECK(dry.modifications == 40);
  CHECK(dry.counts.size() == 47);
  CHECK_FALSE(fs::exists(c.corpus_path()));

  const auto real = cmd_expand(c, false, log);
  CHECK(real.total == dry.total);
  const auto first = fixtures::read_file(c.corpus_path());
  std::size_t lines = 0;
  for (char ch : first) lines += ch == '\n';
  CHECK(lines == real.total);
  cmd_expand(c, false, log);
  CHECK(fixtures::read_file(c.corpus_path()) == first);
  const auto rec = json::parse(first.substr(0, first.find('\n')));
  CHECK(rec["id"] == "sentiment.feels#0");
  CHECK(rec["texts"].size() == 1);
}

TEST_CASE("evaluate is repeatable and resumable") {
  fixtures::ScratchDir dir;
  const auto a = config_for(base_config("toxicity", dir / "a"));
  const auto b = config_for(base_config("toxicity", dir / "b"));
  std::ostringstream log;
  cmd_expand(a, false, log);
  cmd_expand(b, false, log);

  const auto full = cmd_evaluate(a, log);
  CHECK(full.scored == full.instances);

  // b: interrupted after 300 instances, then a torn write, then resumed.
  const auto part = cmd_evaluate(b, log, 300);
  CHECK(part.scored == 300);
  fixtures::write_file(b.predictions_path(), fixtures::read_file(b.predictions_path()) + "{\"id\": \"tox");
  const auto rest = cmd_evaluate(b, log);
  CHECK(rest.resumed == 300);
  CHECK(rest.scored == full.instances - 300);
  CHECK(fixtures::read_file(a.predictions_path()) == fixtures::read_file(b.predictions_path()));

  const auto again = cmd_evaluate(a, log);
  CHECK(again.scored == 0);
  CHECK(again.backend_calls == 0);
}

TEST_CASE("a warm cache needs no backend calls") {
  fixtures::ScratchDir dir;
  auto ja = base_config("mlm", dir / "a");
  ja["cache"] = (dir / "shared.jsonl").string();
  auto jb = ja;
  jb["output_dir"] = (dir / "b").string();
  std::ostringstream log;
  const auto a = config_for(ja), b = config_for(jb);
  cmd_expand(a, false, log);
  cmd_expand(b, false, log);
  CHECK(cmd_evaluate(a, log).backend_calls > 0);
  const auto warm = cmd_evaluate(b, log);
  CHECK(warm.backend_calls == 0);
  CHECK(warm.cache_misses == 0);
  CHECK(fixtures::read_file(a.predictions_path()) == fixtures::read_file(b.predictions_path()));
}

TEST_CASE("remote evaluation with a warm cache makes zero network calls") {
  SyntheticBackend model(PlantedBiasConfig::load(fixtures::source_dir() / "data/synthetic/planted.json"));
  httplib::Server server;
  std::atomic<int> requests{0};
  server.Post("/v1/classify", [&](const httplib::Request& req, httplib::Response& res) {
    ++requests;
    const auto body = json::parse(req.body);
    std::vector<ClassifierInput> in;
    for (const auto& t : body["texts"]) in.push_back({t.get<std::string>(), std::nullopt});
    json outs = json::array();
    for (const auto& o : model.score_batch(*parse_task(body["task"].get<std::string>()), in)) {
      outs.push_back({{"probs", o.probs}});
    }
    res.set_content(json{{"outputs", outs}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  fixtures::ScratchDir dir;
  auto j = base_config("sentiment", dir / "a");
  j["backend"] = "remote";
  j["remote_url"] = "http://127.0.0.1:" + std::to_string(port);
  j["cache"] = (dir / "shared.jsonl").string();
  auto jb = j;
  jb["output_dir"] = (dir / "b").string();
  std::ostringstream log;
  const auto a = config_for(j), b = config_for(jb);
  cmd_expand(a, false, log);
  cmd_expand(b, false, log);
  cmd_evaluate(a, log);
  const int cold = requests.load();
  CHECK(cold > 0);
  const auto warm = cmd_evaluate(b, log);
  CHECK(requests.load() == cold);
  CHECK(warm.backend_calls == 0);
  server.stop();
  t.join();
}

TEST_CASE("reports are byte-identical across runs and round-trip") {
  fixtures::ScratchDir dir;
  for (const char* task : {"sentiment", "nli", "toxicity", "mlm"}) {
    CAPTURE(task);
    const auto a = config_for(base_config(task, dir / (std::string(task) + "_a")));
    const auto b = config_for(base_config(task, dir / (std::string(task) + "_b")));
    run_all(a);
    run_all(b);
    for (const char* suffix : {".csv", ".json", ".md", "_templates.csv"}) {
      const std::string name = "report_" + std::string(task) + suffix;
      REQUIRE(fs::exists(a.output_dir / name));
      CHECK(fixtures::read_file(a.output_dir / name) == fixtures::read_file(b.output_dir / name));
    }
    const auto csv = fixtures::read_file(a.output_dir / ("report_" + std::string(task) + ".csv"));
    CHECK(csv.find("# alpha=0.05") != std::string::npos);
    CHECK(fixtures::read_file(a.output_dir / ("report_" + std::string(task) + ".md")).find("Decision flags:") !=
          std::string::npos);
    if (std::string(task) == "sentiment") continue;

    // Recompute percent changes from the Orig and Modified columns.
    const auto rows = csv_rows(csv);
    REQUIRE(rows.size() > 1);
    const auto& head = rows[0];
    auto col = [&](const std::string& name) {
      return static_cast<std::size_t>(std::find(head.begin(), head.end(), name) - head.begin());
    };
    std::size_t checked = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row[col("pct_change")].empty()) continue;
      const double pct = stats::percent_change(std::stod(row[col("orig")]), std::stod(row[col("modified_mean")]));
      CHECK(pct == std::stod(row[col("pct_change")]));
      CHECK(format_percent_change(pct) == row[col("pct_display")]);
      ++checked;
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("report without predictions fails") {
  fixtures::ScratchDir dir;
  const auto c = config_for(base_config("nli", dir / "out"));
  std::ostringstream log;
  cmd_expand(c, false, log);
  CHECK_THROWS_AS(cmd_report(c, ReportFormat::kAll, log), MissingPredictions);
  cmd_evaluate(c, log, 10);
  CHECK_THROWS_AS(cmd_report(c, ReportFormat::kAll, log), MissingPredictions);
}

TEST_CASE("a family without modifications reports SD as unavailable") {
  fixtures::ScratchDir dir;
  fixtures::write_file(dir / "t.json", R"J({"task": "nli", "templates": [{"id": "solo", "kind": "original",
      "pattern": {"premise": "A/An [SUBJECT] [VERB] a/an [OBJECT].", "hypothesis": "A/An [GENDERED] [VERB] a/an [OBJECT]."},
      "slots": [{"name": "SUBJECT", "lexicon": "nli_subjects"}, {"name": "GENDERED", "lexicon": "nli_gendered"},
                {"name": "VERB", "lexicon": "nli_verbs"}, {"name": "OBJECT", "lexicon": "nli_objects"}],
      "label_rule": "always_neutral"}]})J");
  auto j = base_config("nli", dir / "out");
  j["templates"] = (dir / "t.json").string();
  const auto c = config_for(j);
  run_all(c);
  const auto rows = csv_rows(fixtures::read_file(c.output_dir / "report_nli.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][5].empty());
  const auto md = fixtures::read_file(c.output_dir / "report_nli.md");
  CHECK(md.find("| n/a | n/a | n/a |") != std::string::npos);
}

TEST_CASE("manifest records hashes, backend and decision flags") {
  fixtures::ScratchDir dir;
  const auto c = config_for(base_config("mlm", dir / "out"));
  run_all(c);
  const auto m = json::parse(fixtures::read_file(c.manifest_path()));
  CHECK(m["schema"] == kSchemaVersion);
  CHECK(m["hashes"]["templates"].get<std::string>().size() == 64);
  CHECK(m["hashes"]["lexicons"].size() == 13);
  CHECK(m["hashes"].contains("predictions"));
  CHECK(m["decision_flags"]["alpha"] == 0.05);
  CHECK(m["backend"].get<std::string>().rfind("synthetic:", 0) == 0);
}

TEST_CASE("selftest passes on a shipped config") {
  fixtures::ScratchDir dir;
  std::ostringstream log;
  CHECK(cmd_selftest(config_for(base_config("sentiment", dir / "out")), log) == 0);
  CHECK(log.str().find("FAIL") == std::string::npos);
}
