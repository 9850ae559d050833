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
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "pipeline_internal.hpp"
#include "templatesense/error.hpp"
#include "templatesense/hash.hpp"
#include "templatesense/metrics.hpp"
#include "templatesense/pipeline.hpp"
#include "templatesense/sensitivity.hpp"
#include "templatesense/stats.hpp"

namespace templatesense {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class PredictionReader {
 public:
  explicit PredictionReader(const fs::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw MissingPredictions("no predictions at " + path.string() + "; run evaluate");
  }

  json next(const std::string& expected_id) {
    std::string line;
    if (!std::getline(in_, line) || line.empty()) {
      throw MissingPredictions("no prediction for " + expected_id + "; evaluation incomplete");
    }
    auto j = json::parse(line);
    if (j.at("id").get<std::string>() != expected_id) {
      throw MissingPredictions("prediction " + j.at("id").get<std::string>() +
                               " found where " + expected_id + " was expected");
    }
    return j;
  }

  bool exhausted() {
    std::string line;
    while (std::getline(in_, line)) {
      if (!line.empty()) return false;
    }
    return true;
  }

 private:
  std::ifstream in_;
};

ClassifierOutput output_of(const json& p) {
  ClassifierOutput o;
  for (const auto& [label, v] : p.at("probs").items()) o.probs[label] = v.get<double>();
  return o;
}

std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : ""; }
std::string opt_fixed(const std::optional<double>& v, int d) { return v ? format_fixed(*v, d) : "n/a"; }
json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += sep;
    out += items[i];
  }
  return out;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string csv() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i > 0) out += ',';
        out += csv_cell(cells[i]);
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }

  std::string markdown() const {
    std::string out = "|";
    for (const auto& h : header) out += " " + h + " |";
    out += "\n|";
    for (std::size_t i = 0; i < header.size(); ++i) out += "---|";
    out += '\n';
    for (const auto& r : rows) {
      out += "|";
      for (const auto& c : r) out += " " + (c.empty() ? std::string("-") : c) + " |";
      out += '\n';
    }
    return out;
  }
};

std::string kind_name(const Template& t) {
  return t.kind == TemplateKind::kOriginal ? "original" : "modified";
}

std::string count_label(std::uint64_t n) {
  if (n >= 1000) return format_fixed(static_cast<double>(n) / 1000.0, n >= 10000 ? 0 : 1) + "K";
  return std::to_string(n);
}

int display_decimals(Task task) { return task == Task::kMlm ? 2 : 3; }

struct Report {
  Table templates_csv, templates_md;
  Table families_csv, families_md;
  json templates_json = json::array();
  json families_json = json::array();
  json extra = json::object();
  std::string md_extra;
};

void add_family_row(Report& r, Task task, const std::string& family_name, std::uint64_t instances,
                    const FamilyAggregate& agg) {
  const int d = display_decimals(task);
  r.families_csv.rows.push_back(
      {agg.family_id, family_name, agg.metric, opt_number(agg.orig_value), opt_number(agg.mod_mean),
       opt_number(agg.mod_sd), opt_number(agg.pct_change),
       agg.pct_change ? format_percent_change(*agg.pct_change) : "",
       std::to_string(agg.mod_values.size()), join(agg.undefined, ";")});
  r.families_md.rows.push_back(
      {family_name + " " + count_label(instances), agg.metric, opt_fixed(agg.orig_value, d),
       opt_fixed(agg.mod_mean, d), opt_fixed(agg.mod_sd, d),
       agg.pct_change ? format_percent_change(*agg.pct_change) : "n/a",
       join(agg.undefined, ", ")});
  json mods = json::object();
  for (const auto& [id, v] : agg.mod_values) mods[id] = v;
  r.families_json.push_back({{"family", agg.family_id},
                             {"name", family_name},
                             {"instances", instances},
                             {"metric", agg.metric},
                             {"orig", opt_json(agg.orig_value)},
                             {"modified_mean", opt_json(agg.mod_mean)},
                             {"modified_sd", opt_json(agg.mod_sd)},
                             {"pct_change", opt_json(agg.pct_change)},
                             {"modifications", mods},
                             {"undefined", agg.undefined}});
}

void init_family_tables(Report& r) {
  r.families_csv.header = {"family",        "family_name",   "metric",        "orig",
                           "modified_mean", "modified_sd",   "pct_change",    "pct_display",
                           "n_modifications", "undefined_members"};
  r.families_md.header = {"Template", "Metric", "Orig", "Modified", "SD", "Change", "Undefined"};
}

}  // namespace

ReportSummary cmd_report(const RunConfig& config, ReportFormat format, std::ostream& log) {
  const auto ws = detail::load_workspace(config);
  std::string backend_id = "unknown";
  if (fs::exists(config.manifest_path())) {
    std::ifstream in(config.manifest_path());
    const auto m = json::parse(in, nullptr, false);
    if (m.is_object() && m.contains("backend")) backend_id = m["backend"].get<std::string>();
  }

  PredictionReader reader(config.predictions_path());
  Report rep;
  std::map<std::string, std::uint64_t> instance_counts;
  std::map<std::string, std::map<std::string, std::optional<double>>> metric_values;

  std::map<std::string, SentimentTemplateResult> sentiment;
  std::map<std::string, std::vector<LabeledPrediction>> tox_triples;
  const int d = display_decimals(config.task);

  switch (config.task) {
    case Task::kSentiment:
      rep.templates_csv.header = {"template_id", "parent_id", "kind",   "n_pairs", "mean_diff",
                                  "t_stat",      "df",        "p_value", "category"};
      rep.templates_md.header = {"Template", "Kind", "Pairs", "Mean diff", "t", "p", "Category"};
      break;
    case Task::kNli:
      rep.templates_csv.header = {"template_id", "parent_id", "kind",     "n_male",  "n_female",
                                  "s_n_male",    "s_n_female", "s_n_diff", "f_n_male", "f_n_female",
                                  "f_n_diff"};
      rep.templates_md.header = {"Template", "Kind", "S-N", "F-N"};
      break;
    case Task::kToxicity:
      rep.templates_csv.header = {"template_id", "parent_id", "kind", "n", "fpr", "fnr",
                                  "fped",        "fned",      "fped_excluded", "fned_excluded"};
      rep.templates_md.header = {"Template", "Kind", "Instances", "FPED", "FNED", "Excluded"};
      break;
    case Task::kMlm:
      rep.templates_csv.header = {"template_id", "parent_id", "kind", "n_positive", "n_negative",
                                  "pct_positive_male", "pct_negative_male"};
      rep.templates_md.header = {"Template", "Kind", "Positive % male", "Negative % male"};
      break;
  }

  for (const auto& t : ws.templates) {
    std::uint64_t idx = 0;
    const std::string parent = t.parent_id.value_or("");
    json tj = {{"template_id", t.id}, {"parent_id", parent}, {"kind", kind_name(t)}};

    if (config.task == Task::kSentiment) {
      std::vector<Instance> instances;
      std::vector<ClassifierOutput> outputs;
      for_each_instance(t, ws.lexicons, [&](Instance&& inst) {
        outputs.push_back(output_of(reader.next(detail::instance_id(t.id, idx++))));
        instances.push_back(std::move(inst));
      });
      const auto r = sentiment_bias(t.id, instances, outputs, config.alpha);
      sentiment[t.id] = r;
      rep.templates_csv.rows.push_back(
          {t.id, parent, kind_name(t), std::to_string(r.n_pairs), format_number(r.ttest.mean_diff),
           format_number(r.ttest.t_stat), std::to_string(r.ttest.df),
           format_number(r.ttest.p_value), std::string(to_string(r.category))});
      rep.templates_md.rows.push_back({t.id, kind_name(t), std::to_string(r.n_pairs),
                                       format_fixed(r.ttest.mean_diff, 4),
                                       format_fixed(r.ttest.t_stat, 3),
                                       format_fixed(r.ttest.p_value, 4),
                                       std::string(display_name(r.category))});
      tj.update({{"n_pairs", r.n_pairs},
                 {"mean_diff", r.ttest.mean_diff},
                 {"t_stat", r.ttest.t_stat},
                 {"df", r.ttest.df},
                 {"p_value", r.ttest.p_value},
                 {"category", to_string(r.category)}});
    } else if (config.task == Task::kNli) {
      NliAccumulator acc;
      for_each_instance(t, ws.lexicons, [&](Instance&& inst) {
        acc.add(inst.group, output_of(reader.next(detail::instance_id(t.id, idx++))));
      });
      const auto r = acc.result(t.id);
      metric_values["S-N"][t.id] = r.s_n.diff;
      metric_values["F-N"][t.id] = r.f_n.diff;
      rep.templates_csv.rows.push_back(
          {t.id, parent, kind_name(t), std::to_string(r.n_male), std::to_string(r.n_female),
           format_number(r.s_n.male), format_number(r.s_n.female), format_number(r.s_n.diff),
           format_number(r.f_n.male), format_number(r.f_n.female), format_number(r.f_n.diff)});
      rep.templates_md.rows.push_back(
          {t.id, kind_name(t), format_fixed(r.s_n.diff, d), format_fixed(r.f_n.diff, d)});
      tj.update({{"n_male", r.n_male},
                 {"n_female", r.n_female},
                 {"s_n", {{"male", r.s_n.male}, {"female", r.s_n.female}, {"diff", r.s_n.diff}}},
                 {"f_n", {{"male", r.f_n.male}, {"female", r.f_n.female}, {"diff", r.f_n.diff}}}});
    } else if (config.task == Task::kToxicity) {
      auto& triples = tox_triples[t.id];
      for_each_instance(t, ws.lexicons, [&](Instance&& inst) {
        const auto out = output_of(reader.next(detail::instance_id(t.id, idx++)));
        const Binding* identity = nullptr;
        for (const auto& b : inst.bindings) {
          if (b.entry.category == Category::kIdentity) identity = &b;
        }
        if (identity == nullptr) throw ValidationError(t.id + ": no identity slot");
        if (!inst.gold_label) throw ValidationError(t.id + ": instance lacks a gold label");
        triples.push_back({argmax_label(Task::kToxicity, out), *inst.gold_label,
                           identity->entry.surface});
      });
      const auto r = toxicity_from_triples(t.id, triples);
      auto value = [](const std::optional<EqualityDifference>& e) -> std::optional<double> {
        if (!e) return std::nullopt;
        return e->value;
      };
      auto excluded = [](const std::optional<EqualityDifference>& e) {
        return e ? e->excluded : std::vector<std::string>{};
      };
      metric_values["FPED"][t.id] = value(r.fped);
      metric_values["FNED"][t.id] = value(r.fned);
      auto all_excluded = excluded(r.fped);
      for (const auto& e : excluded(r.fned)) {
        if (std::find(all_excluded.begin(), all_excluded.end(), e) == all_excluded.end()) {
          all_excluded.push_back(e);
        }
      }
      rep.templates_csv.rows.push_back(
          {t.id, parent, kind_name(t), std::to_string(r.n), opt_number(r.overall.fpr),
           opt_number(r.overall.fnr), opt_number(value(r.fped)), opt_number(value(r.fned)),
           join(excluded(r.fped), ";"), join(excluded(r.fned), ";")});
      rep.templates_md.rows.push_back({t.id, kind_name(t), std::to_string(r.n),
                                       opt_fixed(value(r.fped), d), opt_fixed(value(r.fned), d),
                                       std::to_string(all_excluded.size())});
      tj.update({{"n", r.n},
                 {"fpr", opt_json(r.overall.fpr)},
                 {"fnr", opt_json(r.overall.fnr)},
                 {"fped", opt_json(value(r.fped))},
                 {"fned", opt_json(value(r.fned))},
                 {"fped_excluded", excluded(r.fped)},
                 {"fned_excluded", excluded(r.fned)}});
    } else {
      std::map<std::pair<std::string, std::string>, std::pair<double, double>> lp;
      for_each_instance(t, ws.lexicons, [&](Instance&& inst) {
        const auto p = reader.next(detail::instance_id(t.id, idx++));
        lp[{inst.binding(kAttributeSlot)->entry.surface, inst.binding(kTargetSlot)->entry.surface}] =
            {p.at("target_log_prob").get<double>(), p.at("prior_log_prob").get<double>()};
      });
      const auto* target_slot = t.slot(kTargetSlot);
      const auto* attr_slot = t.slot(kAttributeSlot);
      if (target_slot == nullptr || attr_slot == nullptr) {
        throw ValidationError(t.id + ": MLM templates need TARGET and ATTRIBUTE slots");
      }
      const auto pairs = gender_pairs(ws.lexicons.at(target_slot->lexicon));
      std::vector<MlmAttributeScore> scores;
      for (const auto& attr : ws.lexicons.at(attr_slot->lexicon).entries()) {
        if (attr_slot->constraint && !attr_slot->constraint->matches(attr)) continue;
        for (const auto& [m, f] : pairs) {
          auto im = lp.find({attr.surface, m.surface});
          auto jf = lp.find({attr.surface, f.surface});
          if (im == lp.end() || jf == lp.end()) continue;
          scores.push_back(mlm_score_from_log_probs(attr, {m.surface, f.surface},
                                                    {im->second.first, im->second.second},
                                                    {jf->second.first, jf->second.second}));
        }
      }
      const auto r = mlm_percentage(t.id, scores);
      metric_values["positive"][t.id] = r.pct_positive_male;
      metric_values["negative"][t.id] = r.pct_negative_male;
      rep.templates_csv.rows.push_back({t.id, parent, kind_name(t), std::to_string(r.n_positive),
                                        std::to_string(r.n_negative),
                                        opt_number(r.pct_positive_male),
                                        opt_number(r.pct_negative_male)});
      rep.templates_md.rows.push_back({t.id, kind_name(t), opt_fixed(r.pct_positive_male, d),
                                       opt_fixed(r.pct_negative_male, d)});
      tj.update({{"n_positive", r.n_positive},
                 {"n_negative", r.n_negative},
                 {"pct_positive_male", opt_json(r.pct_positive_male)},
                 {"pct_negative_male", opt_json(r.pct_negative_male)}});
    }
    instance_counts[t.id] = idx;
    tj["instances"] = idx;
    rep.templates_json.push_back(std::move(tj));
  }
  if (!reader.exhausted()) throw MissingPredictions("prediction file has records beyond the corpus");

  // Family level.
  if (config.task == Task::kSentiment) {
    const auto summary = flip_table(flip_inputs(ws.families, sentiment));
    rep.families_csv.header = {"family", "family_name", "original_category", "m_gt_f",
                               "f_gt_m", "insignificant", "differing", "total"};
    rep.families_md.header = {"Template", "Original Category", "M>F", "F>M", "Insignificant",
                              "Differing"};
    json fams = json::array();
    for (std::size_t i = 0; i < summary.families.size(); ++i) {
      const auto& f = summary.families[i];
      const auto& name = ws.families[i].original.name;
      const auto c = [&](BiasCategory b) { return std::to_string(f.counts.at(b)); };
      rep.families_csv.rows.push_back(
          {f.family_id, name, std::string(to_string(f.original)), c(BiasCategory::kMaleGreater),
           c(BiasCategory::kFemaleGreater), c(BiasCategory::kInsignificant),
           std::to_string(f.differing), std::to_string(f.total)});
      rep.families_md.rows.push_back({name, std::string(display_name(f.original)),
                                      c(BiasCategory::kMaleGreater),
                                      c(BiasCategory::kFemaleGreater),
                                      c(BiasCategory::kInsignificant),
                                      std::to_string(f.differing) + "/" + std::to_string(f.total)});
      rep.families_json.push_back(
          {{"family", f.family_id},
           {"name", name},
           {"original_category", to_string(f.original)},
           {"counts",
            {{"M_GT_F", f.counts.at(BiasCategory::kMaleGreater)},
             {"F_GT_M", f.counts.at(BiasCategory::kFemaleGreater)},
             {"INSIGNIFICANT", f.counts.at(BiasCategory::kInsignificant)}}},
           {"differing", f.differing},
           {"total", f.total}});
    }
    json transitions = json::array();
    rep.md_extra += "Differing modifications: " + std::to_string(summary.differing) + "/" +
                    std::to_string(summary.total) + " (" +
                    format_fixed(100.0 * summary.fraction, 1) + "%)\n\n";
    for (const auto& [from_to, n] : summary.transitions) {
      transitions.push_back({{"from", to_string(from_to.first)},
                             {"to", to_string(from_to.second)},
                             {"count", n}});
      rep.md_extra += "- " + std::string(display_name(from_to.first)) + " to " +
                      std::string(display_name(from_to.second)) + ": " + std::to_string(n) + "\n";
    }
    rep.extra["flips"] = {{"differing", summary.differing},
                          {"total", summary.total},
                          {"fraction", summary.fraction},
                          {"transitions", transitions}};
  } else {
    init_family_tables(rep);
    for (const auto& fam : ws.families) {
      // Stable metric order follows the paper's table layout.
      std::vector<std::string> order;
      if (config.task == Task::kNli) order = {"S-N", "F-N"};
      if (config.task == Task::kToxicity) order = {"FPED", "FNED"};
      if (config.task == Task::kMlm) order = {"positive", "negative"};
      for (const auto& metric : order) {
        const auto agg = aggregate_family(fam, metric, metric_values[metric]);
        add_family_row(rep, config.task, fam.original.name, instance_counts[fam.original.id], agg);
      }
    }
    if (config.task == Task::kToxicity) {
      std::vector<std::vector<LabeledPrediction>> origs, mods;
      std::uint64_t n_orig = 0;
      for (const auto& fam : ws.families) {
        origs.push_back(tox_triples[fam.original.id]);
        n_orig += instance_counts[fam.original.id];
        for (const auto& m : fam.modifications) mods.push_back(tox_triples[m.id]);
      }
      const auto pooled = pooled_toxicity_aggregate(origs, mods);
      json pj = json::object();
      for (const auto& [metric, pick] :
           std::vector<std::pair<std::string, std::optional<EqualityDifference> ToxicityResult::*>>{
               {"FPED", &ToxicityResult::fped}, {"FNED", &ToxicityResult::fned}}) {
        FamilyAggregate agg;
        agg.family_id = "pooled";
        agg.metric = metric;
        const auto& o = pooled.original.*pick;
        const auto& m = pooled.modified.*pick;
        if (o) agg.orig_value = o->value;
        if (m) agg.mod_mean = m->value;
        if (agg.orig_value && agg.mod_mean && *agg.orig_value != 0.0) {
          agg.pct_change = stats::percent_change(*agg.orig_value, *agg.mod_mean);
        }
        add_family_row(rep, config.task, "Pooled", n_orig, agg);
        pj[metric] = {{"orig", opt_json(agg.orig_value)},
                      {"modified", opt_json(agg.mod_mean)},
                      {"pct_change", opt_json(agg.pct_change)}};
      }
      pj["instances_original"] = pooled.original.n;
      pj["instances_modified"] = pooled.modified.n;
      rep.extra["pooled"] = pj;
    }
  }

  // Rendering.
  const std::string task_name(to_string(config.task));
  const std::string flags = detail::decision_flags_text(config.alpha, backend_id);
  auto with_footer = [&](std::string csv) {
    return csv + "# " + flags + "\n";
  };
  json doc = {{"schema", kSchemaVersion},
              {"task", task_name},
              {"templates", rep.templates_json},
              {"families", rep.families_json}};
  for (const auto& [k, v] : rep.extra.items()) doc[k] = v;
  doc["decision_flags"] = detail::decision_flags_json(config.alpha);
  doc["decision_flags"]["backend"] = backend_id;

  std::string md = "# Template sensitivity report: " + task_name + "\n\n## Families\n\n" +
                   rep.families_md.markdown() + "\n";
  if (!rep.md_extra.empty()) md += rep.md_extra + "\n";
  md += "## Templates\n\n" + rep.templates_md.markdown() + "\n---\n\nDecision flags: " + flags + "\n";

  ReportSummary summary;
  summary.markdown = md;
  fs::create_directories(config.output_dir);
  auto emit = [&](const std::string& name, const std::string& content) {
    const auto path = config.output_dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    summary.files.push_back(path);
  };
  const std::string stem = "report_" + task_name;
  if (format == ReportFormat::kAll || format == ReportFormat::kCsv) {
    emit(stem + ".csv", with_footer(rep.families_csv.csv()));
    emit(stem + "_templates.csv", with_footer(rep.templates_csv.csv()));
  }
  if (format == ReportFormat::kAll || format == ReportFormat::kJson) emit(stem + ".json", doc.dump(2) + "\n");
  if (format == ReportFormat::kAll || format == ReportFormat::kMd) emit(stem + ".md", md);

  for (const auto& f : summary.files) log << "wrote " << f.string() << '\n';
  detail::update_manifest(config, "report", [&](json& m) {
    for (const auto& f : summary.files) m["hashes"]["reports"][f.filename().string()] = sha256_file(f);
    m["hashes"]["predictions"] = sha256_file(config.predictions_path());
  });
  return summary;
}

}  // namespace templatesense
