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

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "templatesense/backend.hpp"
#include "templatesense/error.hpp"
#include "templatesense/hash.hpp"

namespace templatesense {
namespace {

using nlohmann::json;

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::map<std::string, double> doubles(const json& j) {
  std::map<std::string, double> out;
  for (const auto& [k, v] : j.items()) out[k] = v.get<double>();
  return out;
}

}  // namespace

CachedBackend::CachedBackend(Backend& inner, std::filesystem::path path)
    : inner_(inner), path_(std::move(path)) {
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string content = ss.str();

    std::size_t start = 0;
    std::size_t valid_end = 0;
    std::size_t line_no = 0;
    while (start < content.size()) {
      const auto nl = content.find('\n', start);
      ++line_no;
      const bool last = nl == std::string::npos || nl + 1 >= content.size();
      const std::string line =
          content.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
      try {
        if (nl == std::string::npos) throw ProtocolError("unterminated record");
        if (!line.empty()) {
          auto j = json::parse(line);
          const auto key = j.at("key").get<std::string>();
          const auto kind = j.at("kind").get<std::string>();
          if (kind == "classify") {
            classify_.emplace(key, ClassifierOutput{doubles(j.at("value").at("probs"))});
          } else if (kind == "mlm") {
            mlm_.emplace(key, MlmOutput{doubles(j.at("value").at("log_probs"))});
          } else {
            throw ProtocolError("unknown record kind '" + kind + "'");
          }
        }
        valid_end = nl + 1;
      } catch (const std::exception& e) {
        if (!last) throw ParseError("cache " + path_.string() + ": " + e.what(), line_no);
        break;  // interrupted write; drop the partial record
      }
      if (nl == std::string::npos) break;
      start = nl + 1;
    }
    if (valid_end < content.size()) std::filesystem::resize_file(path_, valid_end);
  } else if (path_.has_parent_path()) {
    std::filesystem::create_directories(path_.parent_path());
  }
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw Error("cannot open cache file " + path_.string());
}

std::string CachedBackend::classify_key(std::string_view backend_id, Task task,
                                        const ClassifierInput& input) {
  std::string material(backend_id);
  material += "\x1f" "classify\x1f";
  material += to_string(task);
  material += '\x1f';
  material += input.text;
  material += '\x1f';
  material += input.hypothesis ? "1" + *input.hypothesis : "0";
  return sha256_hex(material);
}

std::string CachedBackend::mlm_key(std::string_view backend_id, std::string_view text,
                                   std::span<const std::string> candidates) {
  std::string material(backend_id);
  material += "\x1f" "mlm\x1f";
  material += text;
  for (const auto& c : candidates) {
    material += '\x1e';
    material += c;
  }
  return sha256_hex(material);
}

void CachedBackend::append(const std::string& key, const std::string& kind,
                           const std::string& value_json) {
  json rec = {{"key", key}, {"kind", kind}, {"value", json::parse(value_json)}, {"created_at", utc_now()}};
  out_ << rec.dump() << '\n';
}

std::vector<ClassifierOutput> CachedBackend::score_batch(Task task,
                                                         std::span<const ClassifierInput> inputs) {
  if (inputs.empty()) throw EmptyInput("empty batch");
  const std::string backend_id = inner_.id();
  std::vector<std::string> keys(inputs.size());
  std::vector<ClassifierOutput> out(inputs.size());
  std::vector<std::size_t> pending;  // indices to fetch
  std::vector<ClassifierInput> fetch;
  std::unordered_map<std::string, std::size_t> fetch_pos;
  {
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      keys[i] = classify_key(backend_id, task, inputs[i]);
      if (auto it = classify_.find(keys[i]); it != classify_.end()) {
        out[i] = it->second;
        ++hits_;
        continue;
      }
      ++misses_;
      pending.push_back(i);
      if (fetch_pos.emplace(keys[i], fetch.size()).second) fetch.push_back(inputs[i]);
    }
  }
  if (pending.empty()) return out;

  auto fetched = inner_.score_batch(task, fetch);
  if (fetched.size() != fetch.size()) throw ProtocolError("backend returned a misaligned batch");
  for (const auto& f : fetched) validate_output(task, f);

  std::lock_guard lock(mu_);
  for (const auto& [key, pos] : fetch_pos) {
    if (classify_.emplace(key, fetched[pos]).second) {
      append(key, "classify", json{{"probs", fetched[pos].probs}}.dump());
    }
  }
  for (std::size_t i : pending) out[i] = fetched[fetch_pos.at(keys[i])];
  out_.flush();
  return out;
}

MlmOutput CachedBackend::mlm_log_probs(std::string_view text,
                                       std::span<const std::string> candidates) {
  const auto key = mlm_key(inner_.id(), text, candidates);
  {
    std::lock_guard lock(mu_);
    if (auto it = mlm_.find(key); it != mlm_.end()) {
      ++hits_;
      return it->second;
    }
  }
  ++misses_;
  auto result = inner_.mlm_log_probs(text, candidates);
  std::lock_guard lock(mu_);
  if (mlm_.emplace(key, result).second) {
    append(key, "mlm", json{{"log_probs", result.log_probs}}.dump());
    out_.flush();
  }
  return result;
}

std::size_t CachedBackend::size() const {
  std::lock_guard lock(mu_);
  return classify_.size() + mlm_.size();
}

void CachedBackend::flush() {
  std::lock_guard lock(mu_);
  out_.flush();
}

}  // namespace templatesense
