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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "templatesense/backend.hpp"
#include "templatesense/error.hpp"

namespace templatesense {
namespace {

using nlohmann::json;

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed response body: ") + e.what());
  }
}

ClassifierOutput parse_classifier_output(Task task, const json& j) {
  if (!j.is_object() || !j.contains("probs") || !j["probs"].is_object()) {
    throw ProtocolError("output lacks a probs object");
  }
  ClassifierOutput out;
  for (const auto& [label, p] : j["probs"].items()) {
    if (!p.is_number()) throw ProtocolError("probability for '" + label + "' is not a number");
    out.probs[label] = p.get<double>();
  }
  validate_output(task, out);
  return out;
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
  if (config_.url.empty()) throw ConfigError("remote backend URL is empty");
  config_.max_batch = std::max<std::size_t>(1, config_.max_batch);
  config_.concurrency = std::max<std::size_t>(1, config_.concurrency);
}

std::string RemoteBackend::post(const std::string& path, const std::string& body) {
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double delay = std::min<double>(config_.backoff_max_ms,
                                            config_.backoff_initial_ms * std::pow(2.0, attempt - 1));
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(delay)));
    }
    httplib::Client cli(config_.url);
    cli.set_connection_timeout(config_.timeout_s, 0);
    cli.set_read_timeout(config_.timeout_s, 0);
    count_call();
    auto res = cli.Post(path, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return res->body;
    if (res->status == 422) {
      auto j = parse_body(res->body);
      if (j.value("error", "") == "multi_token_candidate") {
        throw MultiTokenCandidate("candidate '" + j.value("candidate", "") +
                                  "' is not a single token");
      }
      throw ProtocolError("request rejected: " + res->body);
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    throw ProtocolError("unexpected HTTP status " + std::to_string(res->status) + " from " + path);
  }
  throw TransportError(path + " failed after " + std::to_string(config_.max_retries + 1) +
                       " attempts: " + last_error);
}

std::vector<ClassifierOutput> RemoteBackend::score_batch(Task task,
                                                         std::span<const ClassifierInput> inputs) {
  if (task == Task::kMlm) throw ProtocolError("score_batch does not serve the mlm task");
  if (inputs.empty()) throw EmptyInput("empty batch");

  const std::size_t chunks = (inputs.size() + config_.max_batch - 1) / config_.max_batch;
  std::vector<ClassifierOutput> out(inputs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&] {
    while (true) {
      const std::size_t c = next++;
      if (c >= chunks) return;
      {
        std::lock_guard lock(failure_mu);
        if (failure) return;
      }
      try {
        const std::size_t begin = c * config_.max_batch;
        const std::size_t end = std::min(inputs.size(), begin + config_.max_batch);
        json texts = json::array();
        for (std::size_t i = begin; i < end; ++i) {
          if (inputs[i].hypothesis) {
            texts.push_back({{"premise", inputs[i].text}, {"hypothesis", *inputs[i].hypothesis}});
          } else {
            texts.push_back(inputs[i].text);
          }
        }
        json req = {{"task", std::string(to_string(task))}, {"texts", texts}};
        auto resp = parse_body(post("/v1/classify", req.dump()));
        if (!resp.is_object() || !resp.contains("outputs") || !resp["outputs"].is_array() ||
            resp["outputs"].size() != end - begin) {
          throw ProtocolError("classify response does not align with the request");
        }
        for (std::size_t i = begin; i < end; ++i) {
          out[i] = parse_classifier_output(task, resp["outputs"][i - begin]);
        }
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t workers = std::min(config_.concurrency, chunks);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

MlmOutput RemoteBackend::mlm_log_probs(std::string_view text,
                                       std::span<const std::string> candidates) {
  std::size_t masks = 0;
  for (auto pos = text.find(kMaskToken); pos != std::string_view::npos;
       pos = text.find(kMaskToken, pos + kMaskToken.size())) {
    ++masks;
  }
  if (masks != 1) throw MaskCountError("text must contain exactly one " + std::string(kMaskToken));
  if (candidates.empty()) throw EmptyInput("no candidates");

  json req = {{"text", std::string(text)},
              {"mask_token", std::string(kMaskToken)},
              {"candidates", std::vector<std::string>(candidates.begin(), candidates.end())}};
  if (text.find(kContextMaskToken) != std::string_view::npos) {
    req["context_mask_token"] = std::string(kContextMaskToken);
  }
  auto resp = parse_body(post("/v1/mlm", req.dump()));
  if (!resp.is_object() || !resp.contains("log_probs") || !resp["log_probs"].is_object()) {
    throw ProtocolError("mlm response lacks log_probs");
  }
  MlmOutput out;
  for (const auto& c : candidates) {
    if (!resp["log_probs"].contains(c) || !resp["log_probs"][c].is_number()) {
      throw ProtocolError("mlm response lacks candidate '" + c + "'");
    }
    const double lp = resp["log_probs"][c].get<double>();
    if (!std::isfinite(lp) || lp > 0.0) {
      throw ProtocolError("log-probability for '" + c + "' is not finite and <= 0");
    }
    out.log_probs[c] = lp;
  }
  return out;
}

}  // namespace templatesense
