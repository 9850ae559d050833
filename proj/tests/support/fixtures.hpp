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

// Small builders and scratch directories shared by the tests.

#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "templatesense/lexicon.hpp"

#ifndef TEMPLATESENSE_SOURCE_DIR
#define TEMPLATESENSE_SOURCE_DIR "."
#endif

namespace fixtures {

inline std::filesystem::path source_dir() { return TEMPLATESENSE_SOURCE_DIR; }

// Directory removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag = "ts") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline templatesense::LexiconEntry entry(std::string surface, templatesense::Category cat,
                                         templatesense::Gender g = templatesense::Gender::kNone,
                                         templatesense::Polarity p = templatesense::Polarity::kNone) {
  templatesense::LexiconEntry e;
  e.surface = std::move(surface);
  e.category = cat;
  e.gender = g;
  e.polarity = p;
  return e;
}

// Paired person lexicon: (male, female) surfaces cross-referenced.
inline templatesense::Lexicon person_lexicon(
    const std::string& name, const std::vector<std::pair<std::string, std::string>>& pairs,
    templatesense::Category cat = templatesense::Category::kPerson) {
  using namespace templatesense;
  std::vector<LexiconEntry> entries;
  for (const auto& [m, f] : pairs) {
    auto em = entry(m, cat, Gender::kMale);
    em.counterpart_id = f;
    em.possessive_form = m + "'s";
    auto ef = entry(f, cat, Gender::kFemale);
    ef.counterpart_id = m;
    ef.possessive_form = f + "'s";
    entries.push_back(em);
    entries.push_back(ef);
  }
  return Lexicon(name, entries);
}

}  // namespace fixtures
