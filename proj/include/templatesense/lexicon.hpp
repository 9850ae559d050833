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

// Fill-in-the-blank vocabularies.
//
// A lexicon is a UTF-8 TSV file with a header row:
//
//   surface  category  gender  polarity  article_override  possessive_form
//   counterpart_id  [forms]
//
// Empty cells mean "unset". `counterpart_id` names the surface of the paired
// entry of the opposite gender. The optional `forms` column holds inflected
// or case forms as `key=value;key=value` (e.g. `object=him;reflexive=himself`)
// that patterns reach through `[SLOT KEY]` sentinels.

#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace templatesense {

enum class Category {
  kPerson,
  kName,
  kEmotionState,
  kEmotionSituation,
  kIdentity,
  kAdjective,
  kSubject,
  kVerb,
  kObject,
  kTarget,
  kAttribute,
};

enum class Gender { kMale, kFemale, kNone };

enum class Polarity { kPositive, kNegative, kToxic, kNontoxic, kNone };

std::string_view to_string(Category c);
std::string_view to_string(Gender g);
std::string_view to_string(Polarity p);
std::optional<Category> parse_category(std::string_view s);
std::optional<Gender> parse_gender(std::string_view s);
std::optional<Polarity> parse_polarity(std::string_view s);

Gender opposite(Gender g);

struct LexiconEntry {
  std::string surface;
  Category category = Category::kPerson;
  Gender gender = Gender::kNone;
  Polarity polarity = Polarity::kNone;
  std::optional<std::string> article_override;
  std::optional<std::string> possessive_form;
  std::optional<std::string> counterpart_id;
  std::map<std::string, std::string> forms;

  bool operator==(const LexiconEntry&) const = default;
};

// Immutable, validated vocabulary. Entry order is the file order.
class Lexicon {
 public:
  Lexicon() = default;
  // Validates all invariants; throws ValidationError.
  Lexicon(std::string name, std::vector<LexiconEntry> entries,
          bool has_forms_column = false);

  const std::string& name() const { return name_; }
  const std::vector<LexiconEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool has_forms_column() const { return has_forms_column_; }

  const LexiconEntry* find(std::string_view surface) const;
  const LexiconEntry* counterpart(const LexiconEntry& entry) const;

 private:
  std::string name_;
  std::vector<LexiconEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  bool has_forms_column_ = false;
};

using LexiconSet = std::map<std::string, Lexicon>;

// Parses TSV content. `name` becomes the lexicon name.
Lexicon parse_lexicon(std::istream& in, const std::string& name);

// Lexicon name is the file stem ("person.tsv" -> "person").
Lexicon load_lexicon(const std::filesystem::path& path);

// Loads every *.tsv file in `dir`.
LexiconSet load_lexicon_dir(const std::filesystem::path& dir);

// Canonical TSV serialization; inverse of parse_lexicon for canonical files.
std::string serialize_lexicon(const Lexicon& lex);

// All (male, female) counterpart pairs in lexicon order of the male entry.
std::vector<std::pair<LexiconEntry, LexiconEntry>> gender_pairs(
    const Lexicon& lex);

}  // namespace templatesense
