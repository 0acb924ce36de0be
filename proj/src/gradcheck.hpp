/* Copyright 2026 The imgt Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "params.hpp"

namespace imgt {

struct FiniteDiffOptions {
  double step = 1e-5;
  // 2: (f(x+h) - f(x-h)) / 2h. 4: the five-point central stencil, whose
  // O(h^4) truncation error allows a larger h and less cancellation.
  int stencil = 2;
  // Coordinates drawn from each parameter tensor.
  std::size_t samples_per_param = 4;
  // Only parameters whose index is listed are checked; empty means all.
  std::vector<std::size_t> only;
  std::uint64_t seed = 0;
  // When positive, a coordinate whose |analytic| and |numeric| both fall
  // below noise / resolve_rel, with noise = 2 eps |loss| / step, cannot be
  // verified to that relative accuracy; it is listed as unresolved and left
  // out of max_rel_error.
  double resolve_rel = 0.0;
};

struct CoordinateCheck {
  std::size_t param = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::vector<CoordinateCheck> checks;
  std::vector<CoordinateCheck> unresolved;
  // Parameters for which no coordinate satisfied the sampling rule.
  std::vector<std::size_t> skipped;
};

// Compares analytic gradients against central differences of `loss` at
// sampled coordinates. Coordinates with |x| <= 10 * step are never sampled,
// which keeps the probe away from the ReLU kink at 0 when checking
// elementwise functions of the parameters. The relative error of a
// coordinate is |a - n| / (|a| + |n| + 1e-12). `params` is perturbed in
// place and restored before returning.
FiniteDiffReport finite_diff_check(const std::function<double(const ParamSet<double>&)>& loss,
                                   ParamSet<double>& params, const Gradients<double>& analytic,
                                   const FiniteDiffOptions& options = {});

}  // namespace imgt
