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
#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "errors.hpp"

namespace imgt {

namespace {

void set_coordinate(ParamSet<double>& params, std::size_t p, std::size_t k, double v) {
  std::vector<double> values = params.value(p).to_vector();
  values[k] = v;
  params.set(p, Tensor<double>(params.value(p).shape(), std::move(values)));
}

}  // namespace

FiniteDiffReport finite_diff_check(const std::function<double(const ParamSet<double>&)>& loss,
                                   ParamSet<double>& params, const Gradients<double>& analytic,
                                   const FiniteDiffOptions& options) {
  FiniteDiffReport report;
  Rng rng(options.seed);
  const double h = options.step;
  if (!(h > 0.0)) throw RangeError("finite-difference step must be positive");
  if (options.stencil != 2 && options.stencil != 4)
    throw RangeError("finite-difference stencil must be 2 or 4");

  double floor = 0.0;
  if (options.resolve_rel > 0.0)
    floor = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(loss(params)) / h /
            options.resolve_rel;

  std::vector<std::size_t> targets = options.only;
  if (targets.empty())
    for (std::size_t p = 0; p < params.size(); ++p) targets.push_back(p);

  for (std::size_t p : targets) {
    const Tensor<double> original = params.value(p);
    auto git = analytic.find(p);
    std::vector<std::size_t> eligible;
    for (std::size_t k = 0; k < original.size(); ++k)
      if (std::abs(original[k]) > 10.0 * h) eligible.push_back(k);
    if (eligible.empty()) {
      report.skipped.push_back(p);
      continue;
    }
    const std::size_t want = std::min(options.samples_per_param, eligible.size());
    std::unordered_set<std::size_t> picked;
    while (picked.size() < want) picked.insert(eligible[rng.below(eligible.size())]);
    std::vector<std::size_t> coords(picked.begin(), picked.end());
    std::sort(coords.begin(), coords.end());

    for (std::size_t k : coords) {
      const double x = original[k];
      auto at = [&](double offset) {
        set_coordinate(params, p, k, x + offset);
        return loss(params);
      };
      double numeric;
      if (options.stencil == 2) {
        numeric = (at(h) - at(-h)) / (2.0 * h);
      } else {
        const double d1 = at(h) - at(-h), d2 = at(2.0 * h) - at(-2.0 * h);
        numeric = (8.0 * d1 - d2) / (12.0 * h);
      }
      params.set(p, original);

      CoordinateCheck c;
      c.param = p;
      c.index = k;
      c.analytic = git == analytic.end() ? 0.0 : git->second[k];
      c.numeric = numeric;
      c.rel_error =
          std::abs(c.analytic - c.numeric) / (std::abs(c.analytic) + std::abs(c.numeric) + 1e-12);
      if (std::max(std::abs(c.analytic), std::abs(c.numeric)) < floor) {
        report.unresolved.push_back(c);
        continue;
      }
      report.max_rel_error = std::max(report.max_rel_error, c.rel_error);
      report.checks.push_back(c);
    }
  }
  return report;
}

}  // namespace imgt
