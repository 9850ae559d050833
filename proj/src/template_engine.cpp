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

#include "templatesense/template_engine.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "templatesense/error.hpp"

namespace templatesense {
namespace {

using nlohmann::json;

bool is_upper_ident(std::string_view s, bool allow_digits) {
  if (s.empty() || !std::isupper(static_cast<unsigned char>(s.front()))) return false;
  return std::all_of(s.begin(), s.end(), [&](char c) {
    auto u = static_cast<unsigned char>(c);
    return std::isupper(u) || c == '_' || (allow_digits && std::isdigit(u));
  });
}

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Rendered piece of a pattern before article resolution.
struct Segment {
  PatternToken::Kind kind;
  std::string text;
  const LexiconEntry* entry = nullptr;  // surface fillers only
  bool masked = false;
  bool capital = false;
};

std::string filler_text(const PatternToken& tok, const LexiconEntry& e) {
  if (tok.form.empty()) return e.surface;
  if (tok.form == "POSSESSIVE") {
    if (!e.possessive_form) {
      throw MissingPossessiveForm("no possessive form for '" + e.surface + "'");
    }
    return *e.possessive_form;
  }
  auto it = e.forms.find(lower(tok.form));
  if (it != e.forms.end()) return it->second;
  if (tok.form == "OBJECT") return e.surface;
  if (tok.form == "REFLEXIVE") {
    switch (e.gender) {
      case Gender::kMale:
        return "himself";
      case Gender::kFemale:
        return "herself";
      case Gender::kNone:
        return "themselves";
    }
  }
  throw MissingForm("no '" + lower(tok.form) + "' form for '" + e.surface + "'");
}

std::string_view article_for(std::string_view word) {
  auto pos = word.find_first_not_of(' ');
  if (pos == std::string_view::npos) return "a";
  char c = static_cast<char>(std::tolower(static_cast<unsigned char>(word[pos])));
  return (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') ? "an" : "a";
}

std::string render(const Pattern& pattern, const BindingMap& bindings,
                   const std::map<std::string, std::string>* masked) {
  std::vector<Segment> segs;
  segs.reserve(pattern.tokens().size());
  for (const auto& tok : pattern.tokens()) {
    switch (tok.kind) {
      case PatternToken::Kind::kLiteral:
        segs.push_back({tok.kind, tok.text});
        break;
      case PatternToken::Kind::kArticle:
        segs.push_back({tok.kind, "", nullptr, false, tok.capital});
        break;
      case PatternToken::Kind::kSlot: {
        if (masked != nullptr) {
          auto m = masked->find(tok.text);
          if (m != masked->end()) {
            segs.push_back({tok.kind, m->second, nullptr, true});
            break;
          }
        }
        auto it = bindings.find(tok.text);
        if (it == bindings.end()) throw MissingBinding("no binding for slot " + tok.text);
        segs.push_back({tok.kind, filler_text(tok, it->second),
                        tok.form.empty() ? &it->second : nullptr});
        break;
      }
    }
  }

  std::vector<bool> drop_leading_space(segs.size(), false);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (segs[i].kind != PatternToken::Kind::kArticle) continue;
    std::string_view article = "a";
    std::size_t j = i + 1;
    while (j < segs.size() && segs[j].kind == PatternToken::Kind::kLiteral &&
           segs[j].text.find_first_not_of(' ') == std::string::npos) {
      ++j;
    }
    if (j < segs.size()) {
      const auto& next = segs[j];
      if (next.kind == PatternToken::Kind::kSlot && !next.masked && next.entry != nullptr &&
          next.entry->article_override) {
        article = *next.entry->article_override == "-" ? "" : *next.entry->article_override;
      } else if (!next.masked) {
        article = article_for(next.text);
      }
    }
    if (article.empty()) {
      if (i + 1 < segs.size()) drop_leading_space[i + 1] = true;
      continue;
    }
    std::string text(article);
    if (segs[i].capital) text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
    segs[i].text = std::move(text);
  }

  std::string out;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    std::string_view t = segs[i].text;
    if (drop_leading_space[i] && !t.empty() && t.front() == ' ') t.remove_prefix(1);
    out += t;
  }
  if (!out.empty() && std::islower(static_cast<unsigned char>(out.front()))) {
    out.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(out.front())));
  }
  return out;
}

void check_bindings(const Template& tmpl, const BindingMap& bindings) {
  for (const auto& slot : tmpl.slots) {
    auto it = bindings.find(slot.name);
    if (it == bindings.end()) {
      throw MissingBinding(tmpl.id + ": no binding for slot " + slot.name);
    }
    if (slot.constraint && !slot.constraint->matches(it->second)) {
      throw ValidationError(tmpl.id + ": filler '" + it->second.surface +
                            "' violates constraint " + slot.constraint->str());
    }
  }
}

std::string pair_key_of(const Instance& inst) {
  std::string key = std::to_string(inst.variant);
  for (const auto& b : inst.bindings) {
    if (b.entry.gender != Gender::kNone) continue;
    key += '|';
    key += b.slot;
    key += '=';
    key += b.entry.surface;
  }
  return key;
}

std::string group_of(const Instance& inst) {
  for (const auto& b : inst.bindings) {
    if (b.entry.category == Category::kIdentity) return b.entry.surface;
  }
  if (const auto* g = inst.gendered()) return std::string(to_string(g->entry.gender));
  return {};
}

// --- JSON template document -------------------------------------------------

std::string req_string(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw ParseError(where + ": missing string field '" + key + "'");
  }
  return j[key].get<std::string>();
}

PatternVariant parse_variant(const json& j, bool nli, const std::string& where) {
  PatternVariant v;
  if (j.is_string()) {
    if (nli) throw ParseError(where + ": NLI templates need a {premise, hypothesis} pattern");
    v.text = Pattern::compile(j.get<std::string>());
    return v;
  }
  if (!j.is_object()) throw ParseError(where + ": pattern must be a string or object");
  if (j.contains("premise") || j.contains("hypothesis")) {
    if (!nli) throw ParseError(where + ": premise/hypothesis patterns are NLI-only");
    v.text = Pattern::compile(req_string(j, "premise", where));
    v.hypothesis = Pattern::compile(req_string(j, "hypothesis", where));
  } else {
    if (nli) throw ParseError(where + ": NLI templates need a {premise, hypothesis} pattern");
    v.text = Pattern::compile(req_string(j, "text", where));
  }
  if (j.contains("label")) v.label = req_string(j, "label", where);
  return v;
}

Template parse_template(const json& j, Task task) {
  Template t;
  t.task = task;
  t.id = req_string(j, "id", "template");
  const std::string where = "template " + t.id;
  t.name = j.contains("name") ? req_string(j, "name", where) : t.id;

  auto kind = req_string(j, "kind", where);
  if (kind == "original") {
    t.kind = TemplateKind::kOriginal;
  } else if (kind == "modified") {
    t.kind = TemplateKind::kModified;
  } else {
    throw ParseError(where + ": unknown kind '" + kind + "'");
  }
  if (j.contains("parent_id") && !j["parent_id"].is_null()) {
    t.parent_id = req_string(j, "parent_id", where);
  }

  if (!j.contains("pattern")) throw ParseError(where + ": missing pattern");
  const auto& pat = j["pattern"];
  if (pat.is_array()) {
    if (pat.empty()) throw ParseError(where + ": empty pattern variant list");
    for (const auto& v : pat) t.variants.push_back(parse_variant(v, t.is_pair(), where));
  } else {
    t.variants.push_back(parse_variant(pat, t.is_pair(), where));
  }

  if (!j.contains("slots") || !j["slots"].is_array()) throw ParseError(where + ": missing slots");
  std::set<std::string> declared;
  for (const auto& s : j["slots"]) {
    SlotSpec spec;
    spec.name = req_string(s, "name", where);
    spec.lexicon = req_string(s, "lexicon", where);
    if (s.contains("constraint") && !s["constraint"].is_null()) {
      spec.constraint = SlotConstraint::parse(req_string(s, "constraint", where));
    }
    if (!is_upper_ident(spec.name, true)) {
      throw ParseError(where + ": bad slot name '" + spec.name + "'");
    }
    if (!declared.insert(spec.name).second) {
      throw ParseError(where + ": duplicate slot " + spec.name);
    }
    t.slots.push_back(std::move(spec));
  }

  t.label_rule = LabelRule::parse(j.contains("label_rule") ? req_string(j, "label_rule", where) : "none");

  for (std::size_t vi = 0; vi < t.variants.size(); ++vi) {
    const auto& v = t.variants[vi];
    auto used = v.text.slot_names();
    if (v.hypothesis) {
      auto more = v.hypothesis->slot_names();
      used.insert(more.begin(), more.end());
    }
    if (used != declared) {
      throw ParseError(where + ": slots referenced by pattern " + std::to_string(vi) +
                       " differ from declared slots");
    }
    if (t.label_rule.kind == LabelRule::Kind::kVariant && !v.label) {
      throw ParseError(where + ": label_rule variant requires a label on every pattern");
    }
  }
  if (t.is_pair() && t.label_rule.kind != LabelRule::Kind::kAlwaysNeutral) {
    throw ParseError(where + ": NLI templates must use label_rule always_neutral");
  }
  if (t.label_rule.kind == LabelRule::Kind::kPolarityOf && !declared.count(t.label_rule.slot)) {
    throw ParseError(where + ": label_rule references unknown slot " + t.label_rule.slot);
  }
  return t;
}

void check_families(const std::vector<Template>& templates) {
  std::unordered_map<std::string, const Template*> by_id;
  for (const auto& t : templates) {
    if (!by_id.emplace(t.id, &t).second) throw ParseError("duplicate template id " + t.id);
  }
  for (const auto& t : templates) {
    if (t.kind == TemplateKind::kOriginal) {
      if (t.parent_id) throw FamilyError(t.id + ": original template has a parent_id");
      continue;
    }
    if (!t.parent_id) throw FamilyError(t.id + ": modification without parent_id");
    auto it = by_id.find(*t.parent_id);
    if (it == by_id.end()) throw FamilyError(t.id + ": parent " + *t.parent_id + " not found");
    const Template& parent = *it->second;
    if (parent.kind != TemplateKind::kOriginal) {
      throw FamilyError(t.id + ": parent " + parent.id + " is not an original");
    }
    if (parent.task != t.task) throw FamilyError(t.id + ": task differs from parent");
    if (parent.slots.size() != t.slots.size()) {
      throw FamilyError(t.id + ": slot set differs from parent " + parent.id);
    }
    for (const auto& s : t.slots) {
      const auto* ps = parent.slot(s.name);
      if (ps == nullptr) throw FamilyError(t.id + ": slot " + s.name + " not in parent " + parent.id);
      if (ps->lexicon != s.lexicon) {
        throw FamilyError(t.id + ": slot " + s.name + " uses a different lexicon than its parent");
      }
    }
  }
}

}  // namespace

std::string_view to_string(Task t) {
  switch (t) {
    case Task::kSentiment:
      return "sentiment";
    case Task::kNli:
      return "nli";
    case Task::kToxicity:
      return "toxicity";
    case Task::kMlm:
      return "mlm";
  }
  return "?";
}

std::optional<Task> parse_task(std::string_view s) {
  for (auto t : {Task::kSentiment, Task::kNli, Task::kToxicity, Task::kMlm}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

SlotConstraint SlotConstraint::parse(std::string_view text) {
  auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ParseError("constraint must be field=value");
  SlotConstraint c{std::string(text.substr(0, eq)), std::string(text.substr(eq + 1))};
  bool ok = (c.field == "polarity" && parse_polarity(c.value)) ||
            (c.field == "gender" && parse_gender(c.value)) ||
            (c.field == "category" && parse_category(c.value));
  if (!ok) throw ParseError("unsupported constraint '" + std::string(text) + "'");
  return c;
}

bool SlotConstraint::matches(const LexiconEntry& e) const {
  if (field == "polarity") return to_string(e.polarity) == value;
  if (field == "gender") return to_string(e.gender) == value;
  if (field == "category") return to_string(e.category) == value;
  return false;
}

LabelRule LabelRule::parse(std::string_view text) {
  if (text == "none") return {};
  if (text == "always_neutral") return {Kind::kAlwaysNeutral, {}};
  if (text == "variant") return {Kind::kVariant, {}};
  constexpr std::string_view prefix = "polarity_of(";
  if (text.substr(0, prefix.size()) == prefix && text.size() > prefix.size() + 1 &&
      text.back() == ')') {
    return {Kind::kPolarityOf, std::string(text.substr(prefix.size(), text.size() - prefix.size() - 1))};
  }
  throw ParseError("unknown label_rule '" + std::string(text) + "'");
}

std::string LabelRule::str() const {
  switch (kind) {
    case Kind::kNone:
      return "none";
    case Kind::kAlwaysNeutral:
      return "always_neutral";
    case Kind::kVariant:
      return "variant";
    case Kind::kPolarityOf:
      return "polarity_of(" + slot + ")";
  }
  return "none";
}

Pattern Pattern::compile(std::string_view source) {
  Pattern p;
  p.source_ = std::string(source);
  std::string literal;
  auto flush = [&] {
    if (!literal.empty()) {
      p.tokens_.push_back({PatternToken::Kind::kLiteral, literal, "", false});
      literal.clear();
    }
  };
  std::size_t i = 0;
  while (i < source.size()) {
    char c = source[i];
    if (c == '[') {
      auto close = source.find(']', i);
      if (close == std::string_view::npos) throw ParseError("unterminated slot in '" + p.source_ + "'");
      auto inner = source.substr(i + 1, close - i - 1);
      auto space = inner.find(' ');
      auto name = inner.substr(0, space);
      std::string_view form = space == std::string_view::npos ? "" : inner.substr(space + 1);
      if (!is_upper_ident(name, true) || (!form.empty() && !is_upper_ident(form, false))) {
        throw ParseError("malformed slot sentinel '[" + std::string(inner) + "]'");
      }
      flush();
      p.tokens_.push_back({PatternToken::Kind::kSlot, std::string(name), std::string(form), false});
      i = close + 1;
      continue;
    }
    if (c == ']') throw ParseError("stray ']' in '" + p.source_ + "'");
    auto four = source.substr(i, 4);
    if (four == "a/an" || four == "A/an" || four == "A/An") {
      bool start_ok = i == 0 || !is_alpha(source[i - 1]);
      bool end_ok = i + 4 >= source.size() || !is_alpha(source[i + 4]);
      if (start_ok && end_ok) {
        flush();
        p.tokens_.push_back({PatternToken::Kind::kArticle, "", "", c == 'A'});
        i += 4;
        continue;
      }
    }
    literal += c;
    ++i;
  }
  flush();
  return p;
}

std::set<std::string> Pattern::slot_names() const {
  std::set<std::string> names;
  for (const auto& t : tokens_) {
    if (t.kind == PatternToken::Kind::kSlot) names.insert(t.text);
  }
  return names;
}

const SlotSpec* Template::slot(std::string_view name) const {
  for (const auto& s : slots) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const Binding* Instance::gendered() const {
  for (const auto& b : bindings) {
    if (b.entry.gender != Gender::kNone) return &b;
  }
  return nullptr;
}

const Binding* Instance::binding(std::string_view slot) const {
  for (const auto& b : bindings) {
    if (b.slot == slot) return &b;
  }
  return nullptr;
}

std::vector<Template> parse_templates(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("template JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("template document must be a JSON object");
  auto task_name = req_string(doc, "task", "document");
  auto task = parse_task(task_name);
  if (!task) throw ParseError("unknown task '" + task_name + "'");
  if (!doc.contains("templates") || !doc["templates"].is_array()) {
    throw ParseError("document has no templates array");
  }
  std::vector<Template> out;
  for (const auto& j : doc["templates"]) out.push_back(parse_template(j, *task));
  check_families(out);
  return out;
}

std::vector<Template> load_templates(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open template file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_templates(ss.str());
}

std::vector<TemplateFamily> group_families(std::span<const Template> templates) {
  std::vector<TemplateFamily> families;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& t : templates) {
    if (t.kind != TemplateKind::kOriginal) continue;
    index.emplace(t.id, families.size());
    families.push_back({t, {}});
  }
  for (const auto& t : templates) {
    if (t.kind != TemplateKind::kModified) continue;
    auto it = index.find(t.parent_id.value_or(""));
    if (it == index.end()) throw FamilyError(t.id + ": orphan modification");
    families[it->second].modifications.push_back(t);
  }
  return families;
}

Instance realize(const Template& tmpl, const BindingMap& bindings, std::size_t variant) {
  if (variant >= tmpl.variants.size()) throw MissingBinding(tmpl.id + ": no such variant");
  check_bindings(tmpl, bindings);
  const auto& v = tmpl.variants[variant];

  Instance inst;
  inst.template_id = tmpl.id;
  inst.variant = variant;
  for (const auto& slot : tmpl.slots) {
    inst.bindings.push_back({slot.name, slot.lexicon, bindings.at(slot.name)});
  }
  inst.texts.push_back(render(v.text, bindings, nullptr));
  if (v.hypothesis) inst.texts.push_back(render(*v.hypothesis, bindings, nullptr));

  switch (tmpl.label_rule.kind) {
    case LabelRule::Kind::kNone:
      break;
    case LabelRule::Kind::kAlwaysNeutral:
      inst.gold_label = "neutral";
      break;
    case LabelRule::Kind::kVariant:
      inst.gold_label = v.label;
      break;
    case LabelRule::Kind::kPolarityOf: {
      auto pol = bindings.at(tmpl.label_rule.slot).polarity;
      if (pol != Polarity::kNone) inst.gold_label = std::string(to_string(pol));
      break;
    }
  }
  inst.group = group_of(inst);
  inst.pair_key = pair_key_of(inst);
  return inst;
}

std::string realize_masked(const Template& tmpl, const BindingMap& bindings,
                           const std::map<std::string, std::string>& masked, std::size_t variant) {
  if (variant >= tmpl.variants.size()) throw MissingBinding(tmpl.id + ": no such variant");
  return render(tmpl.variants[variant].text, bindings, &masked);
}

namespace {

std::vector<std::vector<const LexiconEntry*>> slot_vocabularies(const Template& tmpl,
                                                               const LexiconSet& lexicons) {
  std::vector<std::vector<const LexiconEntry*>> vocab;
  for (const auto& slot : tmpl.slots) {
    auto it = lexicons.find(slot.lexicon);
    if (it == lexicons.end()) {
      throw UnknownLexicon(tmpl.id + ": slot " + slot.name + " needs unknown lexicon '" +
                           slot.lexicon + "'");
    }
    std::vector<const LexiconEntry*> fillers;
    for (const auto& e : it->second.entries()) {
      if (!slot.constraint || slot.constraint->matches(e)) fillers.push_back(&e);
    }
    vocab.push_back(std::move(fillers));
  }
  return vocab;
}

}  // namespace

std::uint64_t expansion_size(const Template& tmpl, const LexiconSet& lexicons) {
  std::uint64_t n = tmpl.variants.size();
  for (const auto& v : slot_vocabularies(tmpl, lexicons)) n *= v.size();
  return n;
}

void for_each_instance(const Template& tmpl, const LexiconSet& lexicons,
                       const std::function<void(Instance&&)>& sink) {
  auto vocab = slot_vocabularies(tmpl, lexicons);
  for (const auto& v : vocab) {
    if (v.empty()) return;
  }
  for (std::size_t variant = 0; variant < tmpl.variants.size(); ++variant) {
    std::vector<std::size_t> odometer(vocab.size(), 0);
    while (true) {
      BindingMap bindings;
      for (std::size_t s = 0; s < vocab.size(); ++s) {
        bindings.emplace(tmpl.slots[s].name, *vocab[s][odometer[s]]);
      }
      sink(realize(tmpl, bindings, variant));
      // Last slot spins fastest.
      bool wrapped = true;
      for (std::size_t s = vocab.size(); s-- > 0;) {
        if (++odometer[s] < vocab[s].size()) {
          wrapped = false;
          break;
        }
        odometer[s] = 0;
      }
      if (wrapped) break;
    }
  }
}

std::vector<Instance> expand(const Template& tmpl, const LexiconSet& lexicons) {
  std::vector<Instance> out;
  out.reserve(static_cast<std::size_t>(expansion_size(tmpl, lexicons)));
  for_each_instance(tmpl, lexicons, [&](Instance&& inst) { out.push_back(std::move(inst)); });
  return out;
}

std::vector<InstancePair> pair_instances(std::span<const Instance> instances) {
  // (template, pair_key, gendered surface) -> index
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> females;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    const auto* g = inst.gendered();
    if (g == nullptr) throw UnpairedInstance(inst.template_id + ": instance has no gendered filler");
    if (g->entry.gender == Gender::kFemale) {
      females.emplace(std::make_tuple(inst.template_id, inst.pair_key, g->entry.surface), i);
    }
  }
  std::vector<InstancePair> pairs;
  std::vector<bool> used(instances.size(), false);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    const auto* g = inst.gendered();
    if (g->entry.gender != Gender::kMale) continue;
    if (!g->entry.counterpart_id) {
      throw UnpairedInstance(inst.template_id + ": '" + g->entry.surface + "' has no counterpart");
    }
    auto it = females.find(std::make_tuple(inst.template_id, inst.pair_key, *g->entry.counterpart_id));
    if (it == females.end() || used[it->second]) {
      throw UnpairedInstance(inst.template_id + ": no female instance for '" + g->entry.surface +
                             "' (" + inst.texts.front() + ")");
    }
    used[i] = true;
    used[it->second] = true;
    pairs.push_back({i, it->second});
  }
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!used[i]) {
      throw UnpairedInstance(instances[i].template_id + ": unpaired instance '" +
                             instances[i].texts.front() + "'");
    }
  }
  return pairs;
}

}  // namespace templatesense
