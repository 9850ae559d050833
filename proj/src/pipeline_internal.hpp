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

// Helpers shared by the command implementations.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "templatesense/backend.hpp"
#include "templatesense/lexicon.hpp"
#include "templatesense/pipeline.hpp"
#include "templatesense/template_engine.hpp"

namespace templatesense::detail {

struct Workspace {
  std::vector<Template> templates;
  std::vector<TemplateFamily> families;
  LexiconSet lexicons;
};

Workspace load_workspace(const RunConfig& config);
std::unique_ptr<Backend> build_backend(const RunConfig& config, const LexiconSet& lexicons);
std::string instance_id(const std::string& template_id, std::uint64_t index);
std::string decision_flags_text(double alpha, const std::string& backend_id);
nlohmann::json decision_flags_json(double alpha);
void update_manifest(const RunConfig& config, const std::string& stage,
                     const std::function<void(nlohmann::json&)>& edit);

}  // namespace templatesense::detail
