// src/config.cpp

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

#include "modfuse/config.hpp"

#include <fstream>
#include <string>

namespace modfuse {

using json = nlohmann::json;

namespace {

json to_json_value(std::size_t v) { return v; }
json to_json_value(double v) { return v; }
json to_json_value(bool v) { return v; }
json to_json_value(const std::string& v) { return v; }
json to_json_value(Variant v) { return std::string(variant_name(v)); }
json to_json_value(const EmbeddingShape& s) {
  return json::array({s.channels, s.features, s.steps});
}
json to_json_value(const std::vector<std::size_t>& v) { return v; }

void from_json_value(const json& j, std::size_t& v) {
  if (!j.is_number_unsigned()) throw ConfigError("expected a non-negative integer");
  v = j.get<std::size_t>();
}
void from_json_value(const json& j, double& v) {
  if (!j.is_number()) throw ConfigError("expected a number");
  v = j.get<double>();
}
void from_json_value(const json& j, bool& v) {
  if (!j.is_boolean()) throw ConfigError("expected true or false");
  v = j.get<bool>();
}
void from_json_value(const json& j, std::string& v) {
  if (!j.is_string()) throw ConfigError("expected a string");
  v = j.get<std::string>();
}
void from_json_value(const json& j, Variant& v) {
  if (!j.is_string()) throw ConfigError("expected a model name");
  v = parse_variant(j.get<std::string>());
}
void from_json_value(const json& j, EmbeddingShape& s) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected [channels, features, steps]");
  from_json_value(j[0], s.channels);
  from_json_value(j[1], s.features);
  from_json_value(j[2], s.steps);
}
void from_json_value(const json& j, std::vector<std::size_t>& v) {
  if (!j.is_array()) throw ConfigError("expected an array of integers");
  v.clear();
  for (const auto& e : j) {
    std::size_t x;
    from_json_value(e, x);
    v.push_back(x);
  }
}

// Calls f(key, field) for every configurable field.
template <typename Cfg, typename F>
void visit_fields(Cfg& c, F&& f) {
  f("model.variant", c.model.variant);
  f("model.latent_features", c.model.latent_features);
  f("model.latent_steps", c.model.latent_steps);
  f("model.heads", c.model.heads);
  f("model.attention_scale", c.model.attention_scale);
  f("model.encoder_layers", c.model.encoder_layers);
  f("model.ff_width", c.model.ff_width);
  f("model.classifier_hidden", c.model.classifier_hidden);
  f("model.layer_norm_eps", c.model.layer_norm_eps);
  f("model.audio_shape", c.model.audio);
  f("model.video_shape", c.model.video);
  f("model.decimator.kernels", c.model.decimator.kernels);
  f("model.decimator.strides", c.model.decimator.strides);
  f("model.audio_encoder.channels1", c.model.audio_encoder.channels1);
  f("model.audio_encoder.channels2", c.model.audio_encoder.channels2);
  f("model.audio_encoder.kernel_h", c.model.audio_encoder.kernel_h);
  f("model.audio_encoder.kernel_w", c.model.audio_encoder.kernel_w);
  f("model.video_encoder.channels1", c.model.video_encoder.channels1);
  f("model.video_encoder.channels2", c.model.video_encoder.channels2);
  f("model.video_encoder.kernel_h", c.model.video_encoder.kernel_h);
  f("model.video_encoder.kernel_w", c.model.video_encoder.kernel_w);
  f("model.dropout_p", c.model.dropout_p);
  f("train.learning_rate", c.train.learning_rate);
  f("train.batch_size", c.train.batch_size);
  f("train.max_epochs", c.train.max_epochs);
  f("train.validation_fraction", c.train.validation_fraction);
  f("train.patience", c.train.patience);
  f("train.seed", c.train.seed);
  f("data.seed", c.data.seed);
  f("data.n_per_class", c.data.n_per_class);
  f("data.task", c.data.task);
  f("data.audio_shape", c.data.audio);
  f("data.video_shape", c.data.video);
  f("data.audio_sigma", c.data.audio_sigma);
  f("data.video_sigma", c.data.video_sigma);
  f("data.amplitude", c.data.amplitude);
  f("data.signal_span", c.data.signal_span);
  f("data.active_fraction", c.data.active_fraction);
  f("data.row_block", c.data.row_block);
  f("data.missing_video_fraction", c.data.missing_video_fraction);
  f("data.test_fraction", c.data.test_fraction);
}

}  // namespace

json to_flat_json(const RunConfig& cfg, std::string_view prefix) {
  json out = json::object();
  visit_fields(cfg, [&](const char* key, const auto& field) {
    if (std::string_view(key).starts_with(prefix)) out[key] = to_json_value(field);
  });
  return out;
}

void apply_flat_json(RunConfig& cfg, const json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a JSON object of dotted keys");
  for (auto it = flat.begin(); it != flat.end(); ++it) {
    bool found = false;
    visit_fields(cfg, [&](const char* key, auto& field) {
      if (it.key() != key) return;
      found = true;
      try {
        from_json_value(it.value(), field);
      } catch (const ConfigError& e) {
        throw ConfigError("config key '" + it.key() + "': " + e.what());
      }
    });
    if (!found) throw ConfigError("unknown config key '" + it.key() + "'");
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  apply_flat_json(cfg, j);
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace modfuse
