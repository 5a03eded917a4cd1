// include/modfuse/grad_check.hpp

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
#include <span>
#include <string>
#include <vector>

#include "modfuse/tape.hpp"

namespace modfuse {

// Relative error used throughout: |a - b| / max(1, |a| + |b|).
double relative_error(double analytic, double numeric);

// Compares the reverse-mode gradient of a scalar function of x with central
// finite differences. Returns the maximum relative error over elements.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x,
                  double h = 1e-5);

// Same comparison for a scalar function of a set of parameters. When
// `max_elements_per_param` is non-zero only that many randomly chosen
// elements of each parameter are perturbed.
double grad_check_parameters(const std::function<Var(Tape&)>& f,
                             std::span<Parameter* const> params, double h = 1e-5,
                             std::size_t max_elements_per_param = 0,
                             std::uint64_t seed = 0);

}  // namespace modfuse
