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

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "pipeline_internal.hpp"
#include "templatesense/error.hpp"
#include "templatesense/metrics.hpp"
#include "templatesense/pipeline.hpp"
#include "templatesense/sensitivity.hpp"
#include "templatesense/stats.hpp"

namespace templatesense {

int cmd_selftest(const RunConfig& config, std::ostream& log) {
  int failures = 0;
  auto check = [&](const std::string& name, auto&& fn) {
    std::string detail;
    bool ok = false;
    try {
      ok = fn(detail);
    } catch (const std::exception& e) {
      detail = e.what();
    }
    log << (ok ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : ": " + detail) << '\n';
    if (!ok) ++failures;
  };

  check("paired t-test kernel", [](std::string& detail) {
    const std::vector<double> d{1, 2, 3, 4, 5};
    const auto r = stats::paired_t_test(d);
    detail = "t=" + format_fixed(r.t_stat, 4) + " p=" + format_fixed(r.p_value, 4);
    return std::fabs(r.t_stat - 4.2426) < 1e-3 && std::fabs(r.p_value - 0.0132) < 1e-3;
  });

  check("percent change rendering", [](std::string& detail) {
    const auto a = format_percent_change(stats::percent_change(-0.037, 0.007));
    const auto b = format_percent_change(stats::percent_change(1.22, 2.77));
    detail = a + " " + b;
    return a == "81%↓" && b == "127%↑";
  });

  check("flip table", [](std::string& detail) {
    using B = BiasCategory;
    auto fam = [](B orig, int m, int f, int i) {
      FlipInput in;
      in.original = orig;
      in.modifications.insert(in.modifications.end(), m, B::kMaleGreater);
      in.modifications.insert(in.modifications.end(), f, B::kFemaleGreater);
      in.modifications.insert(in.modifications.end(), i, B::kInsignificant);
      return in;
    };
    const std::vector<FlipInput> grid{fam(B::kMaleGreater, 3, 0, 2), fam(B::kMaleGreater, 3, 1, 3),
                                      fam(B::kMaleGreater, 4, 0, 1), fam(B::kMaleGreater, 6, 0, 0),
                                      fam(B::kMaleGreater, 3, 0, 3), fam(B::kMaleGreater, 6, 0, 0),
                                      fam(B::kInsignificant, 3, 0, 2)};
    const auto s = flip_table(grid);
    detail = std::to_string(s.differing) + "/" + std::to_string(s.total);
    return s.differing == 13 && s.total == 40;
  });

  const auto ws = detail::load_workspace(config);

  check("template families", [&](std::string& detail) {
    std::size_t mods = 0;
    for (const auto& f : ws.families) mods += f.modifications.size();
    detail = std::to_string(ws.families.size()) + " original, " + std::to_string(mods) + " modified";
    return !ws.families.empty();
  });

  check("lexicon round trip", [&](std::string& detail) {
    for (const auto& [name, lex] : ws.lexicons) {
      std::ifstream in(config.lexicons / (name + ".tsv"), std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      if (serialize_lexicon(lex) != ss.str()) {
        detail = name + " is not in canonical form";
        return false;
      }
    }
    detail = std::to_string(ws.lexicons.size()) + " lexicons";
    return true;
  });

  check("expansion", [&](std::string& detail) {
    std::uint64_t total = 0;
    for (const auto& t : ws.templates) {
      total += expansion_size(t, ws.lexicons);
      bool first = true;
      std::function<void(Instance&&)> sink = [&](Instance&& inst) {
        if (first && inst.texts.empty()) throw Error(t.id + ": empty realization");
        first = false;
      };
      if (expansion_size(t, ws.lexicons) <= 100000) for_each_instance(t, ws.lexicons, sink);
    }
    detail = std::to_string(total) + " instances";
    return total > 0;
  });

  log << (failures == 0 ? "selftest passed" : "selftest FAILED") << '\n';
  return failures;
}

}  // namespace templatesense
