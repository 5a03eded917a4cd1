// include/modfuse/verify.hpp

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

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "modfuse/fusion.hpp"

namespace modfuse {

// One differentiable unit under test. `trial` builds a random instance from
// the seed (shapes included) and returns the worst relative error between
// reverse-mode and finite-difference gradients.
struct GradientCase {
  std::string name;
  std::function<double(std::uint64_t seed)> trial;
};

// Every op, every layer and every model variant.
std::vector<GradientCase> gradient_cases();

// Small configuration used for the whole-model gradient cases.
ModelConfig tiny_model_config(Variant v);

struct GradientResult {
  std::string name;
  double worst = 0.0;
  bool passed = false;
  std::string error;  // exception text, if a trial threw
};

std::vector<GradientResult> run_gradient_checks(std::span<const GradientCase> cases,
                                                std::size_t trials = 20, double tol = 1e-4);

// ---------------------------------------------------------------------------
// Invariants of the unified model

// True when the audio and video passes through the shared encoder reach the
// same parameter objects, and that set is exactly the encoder's parameters.
bool shared_encoder_structurally_equal(std::uint64_t seed);

// Largest |g_shared - (g_audio + g_video)| over encoder parameters, where the
// right side comes from a copy of the model whose video pass runs through a
// detached clone of the encoder.
double shared_encoder_gradient_gap(std::uint64_t seed);

// Largest |forward_unified(a, absent) - head(c_a * r_a)| for one random draw
// of parameters and input.
double missing_video_gap(std::uint64_t seed);

// ---------------------------------------------------------------------------
// Self-verification suite

struct CheckResult {
  std::string group;  // gradients | metrics | format | invariants
  std::string name;
  bool passed = false;
  std::string detail;
};

inline constexpr std::string_view kVerifyGroups[] = {"gradients", "metrics", "format",
                                                     "invariants"};

// Runs all groups, or just `only` when non-empty. Throws ConfigError on an
// unknown group name.
std::vector<CheckResult> run_verification(std::string_view only = "",
                                          std::ostream* progress = nullptr);

}  // namespace modfuse
