// src/checkpoint.cpp

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

#include "modfuse/checkpoint.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "json.hpp"
#include "modfuse/config.hpp"
#include "modfuse/data.hpp"

namespace modfuse {

using json = nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const FusionModel& model,
                     bool timestamps) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  RunConfig rc;
  rc.model = model.config();
  json manifest;
  manifest["config"] = to_flat_json(rc, "model.");
  manifest["tensors"] = json::object();
  // parameters() is non-const only because it hands out mutable pointers.
  for (const auto& np : const_cast<FusionModel&>(model).parameters()) {
    const std::string file = np.name + ".dave";
    write_tensor(dir / file, np.param->value);
    manifest["tensors"][np.name] = file;
  }
  if (timestamps) manifest["created"] = utc_now();
  write_json_file(dir / "manifest.json", manifest);
}

FusionModel load_checkpoint(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint manifest " + path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("checkpoint manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!manifest.contains("config") || !manifest.contains("tensors"))
    throw IoError("checkpoint manifest " + path.string() + " lacks config or tensors");
  RunConfig rc;
  apply_flat_json(rc, manifest["config"]);
  FusionModel model(rc.model, 0);
  const json& tensors = manifest["tensors"];
  for (const auto& np : model.parameters()) {
    if (!tensors.contains(np.name))
      throw IoError("checkpoint " + dir.string() + " has no tensor for '" + np.name + "'");
    Tensor t = read_tensor(dir / tensors[np.name].get<std::string>());
    if (t.shape() != np.param->value.shape())
      throw ShapeError("checkpoint tensor '" + np.name + "' has shape " + to_string(t.shape()) +
                       ", model expects " + to_string(np.param->value.shape()));
    np.param->value = std::move(t);
    np.param->zero_grad();
  }
  if (tensors.size() != model.parameters().size())
    throw IoError("checkpoint " + dir.string() + " holds tensors the model does not use");
  return model;
}

}  // namespace modfuse
