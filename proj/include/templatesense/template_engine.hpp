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

// Templates, surface realization and instance expansion.
//
// Pattern language:
//   [NAME]          filler surface of slot NAME
//   [NAME FORM]     a stored form of the filler: POSSESSIVE reads the
//                   possessive_form column, any other key reads the forms
//                   column (OBJECT falls back to the surface, REFLEXIVE to
//                   the filler's gender)
//   a/an, A/An      article agreeing with the following word
//
// The first character of every realized text is upper-cased.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "templatesense/lexicon.hpp"

namespace templatesense {

enum class Task { kSentiment, kNli, kToxicity, kMlm };
enum class TemplateKind { kOriginal, kModified };

std::string_view to_string(Task t);
std::optional<Task> parse_task(std::string_view s);

// Filter on a lexicon entry field, written "field=value" (field is one of
// polarity, gender, category).
struct SlotConstraint {
  std::string field;
  std::string value;

  static SlotConstraint parse(std::string_view text);
  bool matches(const LexiconEntry& e) const;
  std::string str() const { return field + "=" + value; }
};

struct SlotSpec {
  std::string name;
  std::string lexicon;
  std::optional<SlotConstraint> constraint;
};

struct PatternToken {
  enum class Kind { kLiteral, kSlot, kArticle };
  Kind kind = Kind::kLiteral;
  std::string text;  // literal text, or slot name
  std::string form;  // slot form key ("" for the surface)
  bool capital = false;  // article written "A/An"
};

class Pattern {
 public:
  Pattern() = default;
  // Throws ParseError on malformed sentinels.
  static Pattern compile(std::string_view source);

  const std::string& source() const { return source_; }
  const std::vector<PatternToken>& tokens() const { return tokens_; }
  std::set<std::string> slot_names() const;

 private:
  std::string source_;
  std::vector<PatternToken> tokens_;
};

// One realizable shape of a template. NLI variants carry a hypothesis;
// labeled variants carry their gold label.
struct PatternVariant {
  Pattern text;
  std::optional<Pattern> hypothesis;
  std::optional<std::string> label;
};

struct LabelRule {
  enum class Kind { kNone, kAlwaysNeutral, kPolarityOf, kVariant };
  Kind kind = Kind::kNone;
  std::string slot;  // for kPolarityOf

  static LabelRule parse(std::string_view text);
  std::string str() const;
};

struct Template {
  std::string id;
  std::string name;  // display name, defaults to id
  Task task = Task::kSentiment;
  TemplateKind kind = TemplateKind::kOriginal;
  std::optional<std::string> parent_id;
  std::vector<PatternVariant> variants;
  std::vector<SlotSpec> slots;
  LabelRule label_rule;

  bool is_pair() const { return task == Task::kNli; }
  const SlotSpec* slot(std::string_view name) const;
};

struct TemplateFamily {
  Template original;
  std::vector<Template> modifications;
};

struct Binding {
  std::string slot;
  std::string lexicon;
  LexiconEntry entry;
};

using BindingMap = std::map<std::string, LexiconEntry>;

struct Instance {
  std::string template_id;
  std::size_t variant = 0;
  std::vector<Binding> bindings;   // template slot order
  std::vector<std::string> texts;  // one text, or premise + hypothesis
  std::string group;  // "male"/"female", identity surface, or ""
  std::optional<std::string> gold_label;
  std::string pair_key;

  // First binding whose filler carries a gender, if any.
  const Binding* gendered() const;
  const Binding* binding(std::string_view slot) const;
};

struct InstancePair {
  std::size_t male = 0;
  std::size_t female = 0;
};

// Parses a JSON template document. Throws ParseError or FamilyError.
std::vector<Template> parse_templates(std::string_view json_text);
std::vector<Template> load_templates(const std::filesystem::path& path);

// Groups originals with their modifications, in file order of originals.
std::vector<TemplateFamily> group_families(std::span<const Template> templates);

// Realizes one variant of `tmpl`. Throws MissingBinding / MissingForm.
Instance realize(const Template& tmpl, const BindingMap& bindings, std::size_t variant = 0);

// Realizes the first pattern of a variant with the slots in `masked`
// replaced verbatim by the given sentinel text.
std::string realize_masked(const Template& tmpl, const BindingMap& bindings,
                           const std::map<std::string, std::string>& masked,
                           std::size_t variant = 0);

// Number of instances expand() would produce (product of constrained
// vocabulary sizes, times the number of variants).
std::uint64_t expansion_size(const Template& tmpl, const LexiconSet& lexicons);

// Streams instances in deterministic order: variant-major, then the slot
// odometer with the first slot most significant and lexicon order within a
// slot. Throws UnknownLexicon.
void for_each_instance(const Template& tmpl, const LexiconSet& lexicons,
                       const std::function<void(Instance&&)>& sink);

std::vector<Instance> expand(const Template& tmpl, const LexiconSet& lexicons);

// Pairs male/female instances that share template, variant and pair_key and
// whose gendered fillers are counterparts. Output follows male order.
// Throws UnpairedInstance.
std::vector<InstancePair> pair_instances(std::span<const Instance> instances);

}  // namespace templatesense
