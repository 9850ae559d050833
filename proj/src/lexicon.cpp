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

#include "templatesense/lexicon.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "templatesense/error.hpp"

namespace templatesense {
namespace {

constexpr std::array<std::pair<Category, std::string_view>, 11> kCategories{{
    {Category::kPerson, "person"},
    {Category::kName, "name"},
    {Category::kEmotionState, "emotion_state"},
    {Category::kEmotionSituation, "emotion_situation"},
    {Category::kIdentity, "identity"},
    {Category::kAdjective, "adjective"},
    {Category::kSubject, "subject"},
    {Category::kVerb, "verb"},
    {Category::kObject, "object"},
    {Category::kTarget, "target"},
    {Category::kAttribute, "attribute"},
}};

constexpr std::array<std::pair<Gender, std::string_view>, 3> kGenders{{
    {Gender::kMale, "male"},
    {Gender::kFemale, "female"},
    {Gender::kNone, "none"},
}};

constexpr std::array<std::pair<Polarity, std::string_view>, 5> kPolarities{{
    {Polarity::kPositive, "positive"},
    {Polarity::kNegative, "negative"},
    {Polarity::kToxic, "toxic"},
    {Polarity::kNontoxic, "nontoxic"},
    {Polarity::kNone, "none"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
  for (const auto& [e, s] : table) {
    if (e == value) return s;
  }
  return "?";
}

template <typename E, std::size_t N>
std::optional<E> value_of(const std::array<std::pair<E, std::string_view>, N>& table,
                          std::string_view s) {
  for (const auto& [e, name] : table) {
    if (name == s) return e;
  }
  return std::nullopt;
}

const std::array<std::string_view, 8> kHeader{
    "surface",         "category",       "gender", "polarity", "article_override",
    "possessive_form", "counterpart_id", "forms"};

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::optional<std::string> optional_cell(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s;
}

std::map<std::string, std::string> parse_forms(const std::string& cell, std::size_t line) {
  std::map<std::string, std::string> forms;
  if (cell.empty()) return forms;
  std::stringstream ss(cell);
  std::string item;
  while (std::getline(ss, item, ';')) {
    auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
      throw ParseError("malformed forms item '" + item + "'", line);
    }
    auto key = item.substr(0, eq);
    if (!forms.emplace(key, item.substr(eq + 1)).second) {
      throw ParseError("duplicate form key '" + key + "'", line);
    }
  }
  return forms;
}

bool has_sentinel_chars(std::string_view s) {
  return s.find_first_of("[]\t\n\r") != std::string_view::npos;
}

}  // namespace

std::string_view to_string(Category c) { return name_of(kCategories, c); }
std::string_view to_string(Gender g) { return name_of(kGenders, g); }
std::string_view to_string(Polarity p) { return name_of(kPolarities, p); }
std::optional<Category> parse_category(std::string_view s) { return value_of(kCategories, s); }
std::optional<Gender> parse_gender(std::string_view s) { return value_of(kGenders, s); }
std::optional<Polarity> parse_polarity(std::string_view s) { return value_of(kPolarities, s); }

Gender opposite(Gender g) {
  switch (g) {
    case Gender::kMale:
      return Gender::kFemale;
    case Gender::kFemale:
      return Gender::kMale;
    case Gender::kNone:
      break;
  }
  return Gender::kNone;
}

Lexicon::Lexicon(std::string name, std::vector<LexiconEntry> entries, bool has_forms_column)
    : name_(std::move(name)), entries_(std::move(entries)), has_forms_column_(has_forms_column) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.surface.empty()) {
      throw ValidationError(name_ + ": empty surface at entry " + std::to_string(i + 1));
    }
    if (has_sentinel_chars(e.surface)) {
      throw ValidationError(name_ + ": surface '" + e.surface + "' contains slot sentinel characters");
    }
    if (e.category == Category::kAttribute && e.polarity != Polarity::kPositive &&
        e.polarity != Polarity::kNegative) {
      throw ValidationError(name_ + ": attribute '" + e.surface +
                            "' must have polarity positive or negative");
    }
    if (!e.forms.empty() && !has_forms_column_) has_forms_column_ = true;
    if (!index_.emplace(e.surface, i).second) {
      throw ValidationError(name_ + ": duplicate surface '" + e.surface + "'");
    }
  }
  for (const auto& e : entries_) {
    if (!e.counterpart_id) continue;
    const LexiconEntry* other = find(*e.counterpart_id);
    if (other == nullptr) {
      throw ValidationError(name_ + ": '" + e.surface + "' references missing counterpart '" +
                            *e.counterpart_id + "'");
    }
    if (e.gender == Gender::kNone || other->gender != opposite(e.gender)) {
      throw ValidationError(name_ + ": '" + e.surface + "' and '" + other->surface +
                            "' are not of opposite gender");
    }
    if (other->counterpart_id != e.surface) {
      throw ValidationError(name_ + ": counterpart of '" + e.surface + "' does not reference back");
    }
  }
}

const LexiconEntry* Lexicon::find(std::string_view surface) const {
  auto it = index_.find(std::string(surface));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

const LexiconEntry* Lexicon::counterpart(const LexiconEntry& entry) const {
  return entry.counterpart_id ? find(*entry.counterpart_id) : nullptr;
}

Lexicon parse_lexicon(std::istream& in, const std::string& name) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(name + ": missing header row", 1);
  ++line_no;
  auto header = split_tabs(line);
  const bool with_forms = header.size() == kHeader.size();
  if (header.size() != kHeader.size() && header.size() != kHeader.size() - 1) {
    throw ParseError(name + ": header must have 7 or 8 columns", line_no);
  }
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] != kHeader[i]) {
      throw ParseError(name + ": unexpected header column '" + header[i] + "'", line_no);
    }
  }

  std::vector<LexiconEntry> entries;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_tabs(line);
    if (cells.size() != header.size()) {
      throw ParseError(name + ": expected " + std::to_string(header.size()) + " columns, got " +
                           std::to_string(cells.size()),
                       line_no);
    }
    LexiconEntry e;
    e.surface = cells[0];
    auto cat = parse_category(cells[1]);
    if (!cat) throw ParseError(name + ": unknown category '" + cells[1] + "'", line_no);
    e.category = *cat;
    auto gender = cells[2].empty() ? std::optional<Gender>(Gender::kNone) : parse_gender(cells[2]);
    if (!gender) throw ParseError(name + ": unknown gender '" + cells[2] + "'", line_no);
    e.gender = *gender;
    auto pol = cells[3].empty() ? std::optional<Polarity>(Polarity::kNone) : parse_polarity(cells[3]);
    if (!pol) throw ParseError(name + ": unknown polarity '" + cells[3] + "'", line_no);
    e.polarity = *pol;
    if (!cells[4].empty() && cells[4] != "a" && cells[4] != "an" && cells[4] != "-") {
      throw ParseError(name + ": article_override must be 'a', 'an' or '-'", line_no);
    }
    e.article_override = optional_cell(cells[4]);
    e.possessive_form = optional_cell(cells[5]);
    e.counterpart_id = optional_cell(cells[6]);
    if (with_forms) e.forms = parse_forms(cells[7], line_no);
    entries.push_back(std::move(e));
  }
  return Lexicon(name, std::move(entries), with_forms);
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open lexicon " + path.string());
  return parse_lexicon(in, path.stem().string());
}

LexiconSet load_lexicon_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ParseError("lexicon directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& item : std::filesystem::directory_iterator(dir)) {
    if (item.is_regular_file() && item.path().extension() == ".tsv") files.push_back(item.path());
  }
  std::sort(files.begin(), files.end());
  LexiconSet out;
  for (const auto& f : files) {
    auto lex = load_lexicon(f);
    auto name = lex.name();
    out.emplace(std::move(name), std::move(lex));
  }
  return out;
}

std::string serialize_lexicon(const Lexicon& lex) {
  const std::size_t columns = lex.has_forms_column() ? kHeader.size() : kHeader.size() - 1;
  std::string out;
  for (std::size_t i = 0; i < columns; ++i) {
    if (i > 0) out += '\t';
    out += kHeader[i];
  }
  out += '\n';
  for (const auto& e : lex.entries()) {
    out += e.surface;
    out += '\t';
    out += to_string(e.category);
    out += '\t';
    out += to_string(e.gender);
    out += '\t';
    out += to_string(e.polarity);
    out += '\t';
    out += e.article_override.value_or("");
    out += '\t';
    out += e.possessive_form.value_or("");
    out += '\t';
    out += e.counterpart_id.value_or("");
    if (columns == kHeader.size()) {
      out += '\t';
      bool first = true;
      for (const auto& [k, v] : e.forms) {
        if (!first) out += ';';
        first = false;
        out += k + "=" + v;
      }
    }
    out += '\n';
  }
  return out;
}

std::vector<std::pair<LexiconEntry, LexiconEntry>> gender_pairs(const Lexicon& lex) {
  std::vector<std::pair<LexiconEntry, LexiconEntry>> pairs;
  for (const auto& e : lex.entries()) {
    if (e.gender != Gender::kMale) continue;
    if (const auto* f = lex.counterpart(e)) pairs.emplace_back(e, *f);
  }
  return pairs;
}

}  // namespace templatesense
