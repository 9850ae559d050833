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
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "httplib.h"
#include "json.hpp"
#include "templatesense/backend.hpp"
#include "templatesense/error.hpp"

using namespace templatesense;
using nlohmann::json;

namespace {

SyntheticBackend planted(const std::string& cfg) { return SyntheticBackend(PlantedBiasConfig::parse(cfg)); }

const char* kGendered = R"({
  "groups": {"male": ["he", "him"], "female": ["she", "her"]},
  "tasks": {"sentiment": {"base": {"positive": 0.5, "negative": 0.5}, "label": "positive",
                          "delta": {"male": 0.05}}},
  "mlm": {"base": {"he": 0.2, "she": 0.1}}
})";

std::vector<ClassifierInput> inputs(std::initializer_list<const char*> texts) {
  std::vector<ClassifierInput> out;
  for (const char* t : texts) out.push_back({t, std::nullopt});
  return out;
}

// Local HTTP server on an ephemeral port.
class TestServer {
 public:
  TestServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~TestServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

RemoteConfig fast(const std::string& url) {
  RemoteConfig c;
  c.url = url;
  c.max_retries = 2;
  c.backoff_initial_ms = 1;
  c.backoff_max_ms = 4;
  c.timeout_s = 5;
  return c;
}

json sentiment_outputs(std::size_t n) {
  json outs = json::array();
  for (std::size_t i = 0; i < n; ++i) outs.push_back({{"probs", {{"positive", 0.75}, {"negative", 0.25}}}});
  return outs;
}

}  // namespace

TEST_CASE("zero delta gives identical outputs for a gender pair") {
  auto b = planted(R"({"groups": {"male": ["he"], "female": ["she"]},
      "tasks": {"sentiment": {"base": {"positive": 0.6, "negative": 0.4}}}})");
  const auto out = b.score_batch(Task::kSentiment, inputs({"he feels sad.", "she feels sad."}));
  CHECK(out[0] == out[1]);
  CHECK(out[0].probs.at("positive") == doctest::Approx(0.6));
}

TEST_CASE("male shift of 0.05 on positive") {
  auto b = planted(kGendered);
  const auto out = b.score_batch(Task::kSentiment, inputs({"he feels sad.", "she feels sad."}));
  CHECK(out[0].probs.at("positive") - out[1].probs.at("positive") == doctest::Approx(0.05));
  CHECK(out[0].probs.at("positive") + out[0].probs.at("negative") == doctest::Approx(1.0));
  validate_output(Task::kSentiment, out[0]);
}

TEST_CASE("group matching is whole-word and case-insensitive") {
  auto b = planted(kGendered);
  const auto out = b.score_batch(Task::kSentiment, inputs({"He is here.", "the hero is here.", "there"}));
  CHECK(out[0].probs.at("positive") == doctest::Approx(0.55));
  CHECK(out[1].probs.at("positive") == doctest::Approx(0.5));
  CHECK(out[2].probs.at("positive") == doctest::Approx(0.5));
}

TEST_CASE("shifted outputs stay valid under extreme deltas") {
  auto b = planted(R"({"groups": {"male": ["he"]}, "noise_sd": 0.5, "noise_seed": 3,
      "tasks": {"nli": {"base": {"entailment": 0.2, "neutral": 0.5, "contradiction": 0.3},
                        "label": "neutral", "delta": {"male": 2.0}}}})");
  std::vector<ClassifierInput> in;
  for (int i = 0; i < 50; ++i) in.push_back({"he ate thing " + std::to_string(i), "x " + std::to_string(i)});
  for (const auto& o : b.score_batch(Task::kNli, in)) CHECK_NOTHROW(validate_output(Task::kNli, o));
}

TEST_CASE("synthetic backend is a pure function of config and input") {
  const std::string cfg = R"({"noise_seed": 7, "noise_sd": 0.1,
      "tasks": {"toxicity": {"base": {"toxic": 0.3, "nontoxic": 0.7}, "label": "toxic"}}})";
  auto a = planted(cfg), b = planted(cfg);
  const auto in = inputs({"one", "two", "three"});
  CHECK(a.score_batch(Task::kToxicity, in) == b.score_batch(Task::kToxicity, in));
  auto c = planted(R"({"noise_seed": 8, "noise_sd": 0.1,
      "tasks": {"toxicity": {"base": {"toxic": 0.3, "nontoxic": 0.7}, "label": "toxic"}}})");
  CHECK_FALSE(a.score_batch(Task::kToxicity, in) == c.score_batch(Task::kToxicity, in));
}

TEST_CASE("NLI inputs must carry a hypothesis") {
  auto b = planted("{}");
  CHECK_THROWS_AS(b.score_batch(Task::kNli, inputs({"a"})), ProtocolError);
  CHECK_THROWS_AS(b.score_batch(Task::kSentiment, std::vector<ClassifierInput>{}), EmptyInput);
}

TEST_CASE("uniform MLM distribution over two candidates") {
  auto b = planted(R"({"mlm": {"default_prob": 0.5}})");
  const std::vector<std::string> cands{"he", "she"};
  const auto out = b.mlm_log_probs("[MASK] is kind.", cands);
  CHECK(out.log_probs.at("he") == doctest::Approx(std::log(0.5)));
  CHECK(out.log_probs.at("she") == doctest::Approx(std::log(0.5)));
}

TEST_CASE("configured MLM probabilities") {
  auto b = planted(kGendered);
  const std::vector<std::string> cands{"he", "she"};
  const auto out = b.mlm_log_probs("[MASK] is kind.", cands);
  CHECK(out.log_probs.at("he") == doctest::Approx(std::log(0.2)));
  CHECK(out.log_probs.at("she") == doctest::Approx(std::log(0.1)));
}

TEST_CASE("MLM precondition errors") {
  auto b = planted(kGendered);
  const std::vector<std::string> two_piece{"my son"};
  const std::vector<std::string> ok{"he"};
  CHECK_THROWS_AS(b.mlm_log_probs("[MASK] is kind.", two_piece), MultiTokenCandidate);
  CHECK_THROWS_AS(b.mlm_log_probs("he is kind.", ok), MaskCountError);
  CHECK_THROWS_AS(b.mlm_log_probs("[MASK] [MASK]", ok), MaskCountError);
  CHECK_THROWS_AS(b.mlm_log_probs("[MASK] is kind.", std::vector<std::string>{}), EmptyInput);
}

TEST_CASE("argmax ties break by label order") {
  CHECK(argmax_label(Task::kToxicity, {{{"toxic", 0.5}, {"nontoxic", 0.5}}}) == task_labels(Task::kToxicity).front());
  CHECK(argmax_label(Task::kSentiment, {{{"positive", 0.2}, {"negative", 0.8}}}) == "negative");
}

TEST_CASE("validate_output rejects bad label sets and sums") {
  CHECK_THROWS_AS(validate_output(Task::kSentiment, {{{"toxic", 0.5}, {"nontoxic", 0.5}}}), LabelSetMismatch);
  CHECK_THROWS_AS(validate_output(Task::kSentiment, {{{"positive", 0.7}, {"negative", 0.7}}}), ProtocolError);
  CHECK_THROWS_AS(validate_output(Task::kSentiment, {{{"positive", 1.5}, {"negative", -0.5}}}), ProtocolError);
}

TEST_CASE("planted config validation") {
  CHECK_THROWS_AS(planted("{not json"), ConfigError);
  CHECK_THROWS_AS(planted(R"({"tasks": {"sentiment": {"base": {"positive": 0.9, "negative": 0.9}}}})"),
                  ProtocolError);
  CHECK_THROWS_AS(planted(R"({"tasks": {"sentiment": {"label": "toxic"}}})"), LabelSetMismatch);
}

TEST_CASE("repeated batch is served entirely from cache") {
  fixtures::ScratchDir dir;
  auto inner = planted(kGendered);
  CachedBackend cache(inner, dir / "cache.jsonl");
  const auto in = inputs({"he a", "she a", "he b", "she b"});
  const auto first = cache.score_batch(Task::kSentiment, in);
  const auto calls = inner.call_count();
  CHECK(calls == 4);
  const auto second = cache.score_batch(Task::kSentiment, in);
  CHECK(inner.call_count() == calls);
  CHECK(cache.hits() == in.size());
  CHECK(first == second);
}

TEST_CASE("duplicates within a batch are scored once") {
  fixtures::ScratchDir dir;
  auto inner = planted(kGendered);
  CachedBackend cache(inner, dir / "cache.jsonl");
  const auto out = cache.score_batch(Task::kSentiment, inputs({"he a", "he a", "she a"}));
  CHECK(inner.call_count() == 2);
  CHECK(out[0] == out[1]);
  CHECK(cache.size() == 2);
}

TEST_CASE("cache persists across instances and survives a torn tail") {
  fixtures::ScratchDir dir;
  const auto path = dir / "cache.jsonl";
  const auto in = inputs({"he a", "she a"});
  const std::vector<std::string> cands{"he", "she"};
  std::vector<ClassifierOutput> first;
  MlmOutput mlm_first;
  {
    auto inner = planted(kGendered);
    CachedBackend cache(inner, path);
    first = cache.score_batch(Task::kSentiment, in);
    mlm_first = cache.mlm_log_probs("[MASK] is kind.", cands);
  }
  const auto intact = fixtures::read_file(path);
  fixtures::write_file(path, intact + R"({"key": "abc", "kind": "classi)");
  {
    auto inner = planted(kGendered);
    CachedBackend cache(inner, path);
    CHECK(cache.size() == 3);
    CHECK(cache.score_batch(Task::kSentiment, in) == first);
    CHECK(cache.mlm_log_probs("[MASK] is kind.", cands) == mlm_first);
    CHECK(inner.call_count() == 0);
  }
  CHECK(fixtures::read_file(path) == intact);
}

TEST_CASE("a corrupt record before the tail is an error") {
  fixtures::ScratchDir dir;
  const auto path = dir / "cache.jsonl";
  fixtures::write_file(path, "garbage\n{\"key\":\"k\",\"kind\":\"mlm\",\"value\":{\"log_probs\":{}}}\n");
  auto inner = planted(kGendered);
  CHECK_THROWS_AS(CachedBackend(inner, path), ParseError);
}

TEST_CASE("cache keys separate backends, tasks and inputs") {
  const ClassifierInput a{"he a", std::nullopt}, b{"he a", std::string("x")};
  const auto k = CachedBackend::classify_key("s1", Task::kSentiment, a);
  CHECK(k.size() == 64);
  CHECK(k != CachedBackend::classify_key("s2", Task::kSentiment, a));
  CHECK(k != CachedBackend::classify_key("s1", Task::kToxicity, a));
  CHECK(k != CachedBackend::classify_key("s1", Task::kSentiment, b));
  const std::vector<std::string> c1{"he", "she"}, c2{"he she"};
  CHECK(CachedBackend::mlm_key("s", "t", c1) != CachedBackend::mlm_key("s", "t", c2));
}

TEST_CASE("remote classify round trip") {
  TestServer srv;
  json seen;
  srv.server().Post("/v1/classify", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(json{{"outputs", sentiment_outputs(seen["texts"].size())}}.dump(), "application/json");
  });
  RemoteBackend b(fast(srv.url()));
  const auto out = b.score_batch(Task::kSentiment, inputs({"a", "b", "c"}));
  CHECK(out.size() == 3);
  CHECK(out[2].probs.at("positive") == 0.75);
  CHECK(seen["task"] == "sentiment");
  CHECK(seen["texts"][1] == "b");
}

TEST_CASE("remote NLI sends premise and hypothesis") {
  TestServer srv;
  json seen;
  srv.server().Post("/v1/classify", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    json outs = json::array();
    outs.push_back({{"probs", {{"entailment", 0.2}, {"neutral", 0.7}, {"contradiction", 0.1}}}});
    res.set_content(json{{"outputs", outs}}.dump(), "application/json");
  });
  RemoteBackend b(fast(srv.url()));
  b.score_batch(Task::kNli, std::vector<ClassifierInput>{{"p", std::string("h")}});
  CHECK(seen["texts"][0]["premise"] == "p");
  CHECK(seen["texts"][0]["hypothesis"] == "h");
}

TEST_CASE("remote batches are split by max_batch") {
  TestServer srv;
  std::atomic<int> requests{0};
  srv.server().Post("/v1/classify", [&](const httplib::Request& req, httplib::Response& res) {
    ++requests;
    const auto n = json::parse(req.body)["texts"].size();
    res.set_content(json{{"outputs", sentiment_outputs(n)}}.dump(), "application/json");
  });
  auto cfg = fast(srv.url());
  cfg.max_batch = 4;
  cfg.concurrency = 3;
  RemoteBackend b(cfg);
  std::vector<ClassifierInput> in;
  for (int i = 0; i < 10; ++i) in.push_back({"t" + std::to_string(i), std::nullopt});
  CHECK(b.score_batch(Task::kSentiment, in).size() == 10);
  CHECK(requests == 3);
}

TEST_CASE("remote retries transient 5xx and 429") {
  for (int status : {500, 503, 429}) {
    TestServer srv;
    std::atomic<int> attempts{0};
    srv.server().Post("/v1/classify", [&](const httplib::Request& req, httplib::Response& res) {
      if (attempts++ < 2) {
        res.status = status;
        return;
      }
      res.set_content(json{{"outputs", sentiment_outputs(json::parse(req.body)["texts"].size())}}.dump(),
                      "application/json");
    });
    RemoteBackend b(fast(srv.url()));
    CAPTURE(status);
    CHECK(b.score_batch(Task::kSentiment, inputs({"a"})).size() == 1);
    CHECK(attempts == 3);
  }
}

TEST_CASE("remote gives up after bounded retries") {
  TestServer srv;
  std::atomic<int> attempts{0};
  srv.server().Post("/v1/classify", [&](const httplib::Request&, httplib::Response& res) {
    ++attempts;
    res.status = 502;
  });
  RemoteBackend b(fast(srv.url()));
  CHECK_THROWS_AS(b.score_batch(Task::kSentiment, inputs({"a"})), TransportError);
  CHECK(attempts == 3);
}

TEST_CASE("remote connection failure is a transport error") {
  std::string url;
  {
    TestServer srv;
    url = srv.url();
  }
  RemoteBackend b(fast(url));
  CHECK_THROWS_AS(b.score_batch(Task::kSentiment, inputs({"a"})), TransportError);
}

TEST_CASE("remote protocol violations") {
  TestServer srv;
  std::string body;
  srv.server().Post("/v1/classify", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(body, "application/json");
  });
  RemoteBackend b(fast(srv.url()));
  body = "not json";
  CHECK_THROWS_AS(b.score_batch(Task::kSentiment, inputs({"a"})), ProtocolError);
  body = json{{"outputs", sentiment_outputs(2)}}.dump();
  CHECK_THROWS_AS(b.score_batch(Task::kSentiment, inputs({"a"})), ProtocolError);
  body = R"({"outputs": [{"probs": {"toxic": 0.5, "nontoxic": 0.5}}]})";
  CHECK_THROWS_AS(b.score_batch(Task::kSentiment, inputs({"a"})), LabelSetMismatch);
  body = R"({"outputs": [{"probs": {"positive": "high", "negative": 0.5}}]})";
  CHECK_THROWS_AS(b.score_batch(Task::kSentiment, inputs({"a"})), ProtocolError);
}

TEST_CASE("remote MLM") {
  TestServer srv;
  json seen;
  srv.server().Post("/v1/mlm", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    for (const auto& c : seen["candidates"]) {
      if (c == "grandmother") {
        res.status = 422;
        res.set_content(json{{"error", "multi_token_candidate"}, {"candidate", c}}.dump(), "application/json");
        return;
      }
    }
    res.set_content(R"({"log_probs": {"he": -1.5, "she": -2.0}})", "application/json");
  });
  RemoteBackend b(fast(srv.url()));
  const std::vector<std::string> cands{"he", "she"};
  const auto out = b.mlm_log_probs("[MASK] is kind.", cands);
  CHECK(out.log_probs.at("he") == -1.5);
  CHECK_FALSE(seen.contains("context_mask_token"));
  b.mlm_log_probs("[MASK] is [CTX_MASK].", cands);
  CHECK(seen["context_mask_token"] == "[CTX_MASK]");
  CHECK(seen["mask_token"] == "[MASK]");
  const std::vector<std::string> bad{"grandmother"};
  CHECK_THROWS_AS(b.mlm_log_probs("[MASK] is kind.", bad), MultiTokenCandidate);
  const std::vector<std::string> missing{"it"};
  CHECK_THROWS_AS(b.mlm_log_probs("[MASK] is kind.", missing), ProtocolError);
  CHECK_THROWS_AS(b.mlm_log_probs("nothing masked", cands), MaskCountError);
}

TEST_CASE("make_backend") {
  fixtures::ScratchDir dir;
  fixtures::write_file(dir / "p.json", kGendered);
  LexiconSet none;
  auto b = make_backend("synthetic:" + (dir / "p.json").string(), none);
  CHECK(b->id().rfind("synthetic:", 0) == 0);
  auto r = make_backend("remote", none, std::string("http://127.0.0.1:9"));
  CHECK(r->id() == "remote:http://127.0.0.1:9");
  CHECK_THROWS_AS(make_backend("bogus", none), ConfigError);
}
