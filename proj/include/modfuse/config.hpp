// include/modfuse/config.hpp

// Copyright 2026 The modfuse Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <string_view>

#include "json.hpp"
#include "modfuse/data.hpp"
#include "modfuse/fusion.hpp"
#include "modfuse/training.hpp"

namespace modfuse {

// Everything a command can be configured with. Serialised as one flat JSON
// object keyed by dotted names ("model.heads", "train.learning_rate",
// "data.n_per_class", ...).
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SyntheticSpec data;
};

// All keys, or only those starting with `prefix` (e.g. "model.").
nlohmann::json to_flat_json(const RunConfig& cfg, std::string_view prefix = "");
// Applies the keys present in `flat`; unknown keys and ill-typed values throw
// ConfigError.
void apply_flat_json(RunConfig& cfg, const nlohmann::json& flat);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace modfuse
