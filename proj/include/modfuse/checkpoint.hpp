// include/modfuse/checkpoint.hpp

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

#include "modfuse/fusion.hpp"

namespace modfuse {

// A checkpoint is a directory holding manifest.json and one tensor file per
// parameter:
//   {"config": {flat model.* keys}, "tensors": {"<name>": "<name>.dave", ...},
//    "created": "<UTC time>"}        <- only when timestamps are enabled
void save_checkpoint(const std::filesystem::path& dir, const FusionModel& model,
                     bool timestamps = true);
FusionModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace modfuse
