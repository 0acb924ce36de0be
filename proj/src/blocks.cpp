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
#include "blocks.hpp"

#include <algorithm>
#include <numeric>

#include "errors.hpp"

namespace imgt {

namespace {

void fill_rank(BlockPlan& plan) {
  plan.rank.assign(plan.n_positions, 0);
  for (std::size_t r = 0; r < plan.gen_order.size(); ++r) plan.rank[plan.gen_order[r]] = r;
}

}  // namespace

BlockPlan plan_full(std::size_t n, bool causal) {
  if (n == 0) throw ConfigError("plan_full: need at least one position");
  BlockPlan plan;
  plan.n_positions = n;
  plan.causal = causal;
  plan.pad_to = n;
  QueryBlock b;
  b.queries.resize(n);
  std::iota(b.queries.begin(), b.queries.end(), std::size_t{0});
  b.memory = b.queries;
  plan.blocks.push_back(std::move(b));
  plan.gen_order.resize(n);
  std::iota(plan.gen_order.begin(), plan.gen_order.end(), std::size_t{0});
  fill_rank(plan);
  return plan;
}

BlockPlan plan_1d(std::size_t height, std::size_t width, std::size_t l_q, std::size_t l_m,
                  std::size_t per_pixel) {
  if (height == 0 || width == 0 || l_q == 0 || per_pixel == 0)
    throw ConfigError("plan_1d: extents and l_q must be positive");
  const std::size_t n = height * width * per_pixel;
  BlockPlan plan;
  plan.n_positions = n;
  plan.pad_to = l_q;
  for (std::size_t start = 0; start < n; start += l_q) {
    QueryBlock b;
    const std::size_t end = std::min(start + l_q, n);
    const std::size_t hist = std::min(l_m, start);
    for (std::size_t p = start - hist; p < start; ++p) b.memory.push_back(p);
    for (std::size_t p = start; p < end; ++p) {
      b.queries.push_back(p);
      b.memory.push_back(p);
    }
    plan.blocks.push_back(std::move(b));
  }
  plan.gen_order.resize(n);
  std::iota(plan.gen_order.begin(), plan.gen_order.end(), std::size_t{0});
  fill_rank(plan);
  return plan;
}

BlockPlan plan_2d(std::size_t height, std::size_t width, std::size_t h_q, std::size_t w_q,
                  std::size_t h_m, std::size_t w_m, std::size_t per_pixel) {
  if (height == 0 || width == 0 || h_q == 0 || w_q == 0 || per_pixel == 0)
    throw ConfigError("plan_2d: extents and query block size must be positive");
  BlockPlan plan;
  plan.n_positions = height * width * per_pixel;
  plan.pad_to = h_q * w_q * per_pixel;
  auto expand = [&](std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1,
                    std::vector<std::size_t>& out) {
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t c = c0; c < c1; ++c)
        for (std::size_t ch = 0; ch < per_pixel; ++ch) out.push_back((r * width + c) * per_pixel + ch);
  };
  for (std::size_t br = 0; br < height; br += h_q)
    for (std::size_t bc = 0; bc < width; bc += w_q) {
      QueryBlock b;
      const std::size_t r1 = std::min(br + h_q, height);
      const std::size_t c1 = std::min(bc + w_q, width);
      expand(br, r1, bc, c1, b.queries);
      // Extension above, left and right only; never below.
      const std::size_t mr0 = br >= h_m ? br - h_m : 0;
      const std::size_t mc0 = bc >= w_m ? bc - w_m : 0;
      const std::size_t mc1 = std::min(c1 + w_m, width);
      expand(mr0, r1, mc0, mc1, b.memory);
      plan.gen_order.insert(plan.gen_order.end(), b.queries.begin(), b.queries.end());
      plan.blocks.push_back(std::move(b));
    }
  fill_rank(plan);
  return plan;
}

BlockPlan make_plan(const Scheme& scheme, std::size_t height, std::size_t width,
                    std::size_t per_pixel) {
  switch (scheme.kind) {
    case SchemeKind::kFull:
      return plan_full(height * width * per_pixel, /*causal=*/true);
    case SchemeKind::kLocal1d:
      return plan_1d(height, width, scheme.l_q, scheme.l_m, per_pixel);
    case SchemeKind::kLocal2d:
      return plan_2d(height, width, scheme.h_q, scheme.w_q, scheme.h_m, scheme.w_m, per_pixel);
  }
  throw ConfigError("unknown scheme");
}

CausalMask build_mask(const BlockPlan& plan, std::size_t block_index, bool self_inclusive) {
  if (block_index >= plan.blocks.size())
    throw RangeError("block " + std::to_string(block_index) + " out of range for plan with " +
                     std::to_string(plan.blocks.size()) + " blocks");
  const QueryBlock& b = plan.blocks[block_index];
  CausalMask mask;
  mask.rows = std::max(plan.pad_to, b.queries.size());
  mask.cols = b.memory.size();
  mask.permitted.assign(mask.rows * mask.cols, 0);
  for (std::size_t i = 0; i < b.queries.size(); ++i) {
    std::uint8_t* row = mask.permitted.data() + i * mask.cols;
    if (!plan.causal) {
      std::fill(row, row + mask.cols, std::uint8_t{1});
      continue;
    }
    const std::size_t q = b.queries[i];
    const std::size_t qr = plan.rank[q];
    bool any = false;
    std::size_t self = mask.cols;
    for (std::size_t j = 0; j < mask.cols; ++j) {
      const std::size_t m = b.memory[j];
      if (m == q) self = j;
      if (plan.rank[m] < qr || (self_inclusive && m == q)) {
        row[j] = 1;
        any = true;
      }
    }
    if (!any && self < mask.cols) row[self] = 1;
  }
  return mask;
}

std::optional<std::string> validate_plan(const BlockPlan& plan) {
  const std::size_t n = plan.n_positions;
  if (plan.gen_order.size() != n) return "gen_order has " + std::to_string(plan.gen_order.size()) +
                                         " entries for " + std::to_string(n) + " positions";
  std::vector<std::uint8_t> seen(n, 0);
  for (std::size_t p : plan.gen_order) {
    if (p >= n || seen[p]) return "gen_order is not a permutation (position " + std::to_string(p) + ")";
    seen[p] = 1;
  }
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[plan.gen_order[r]] = r;

  std::fill(seen.begin(), seen.end(), 0);
  for (std::size_t bi = 0; bi < plan.blocks.size(); ++bi) {
    const QueryBlock& b = plan.blocks[bi];
    const std::string where = "block " + std::to_string(bi) + ": ";
    if (b.queries.empty()) return where + "empty query block";
    if (b.queries.size() > plan.pad_to) return where + "query block longer than pad_to";
    std::size_t lo = n, hi = 0;
    for (std::size_t q : b.queries) {
      if (q >= n) return where + "query position " + std::to_string(q) + " out of range";
      if (seen[q]) return where + "query position " + std::to_string(q) + " appears in two blocks";
      seen[q] = 1;
      lo = std::min(lo, rank[q]);
      hi = std::max(hi, rank[q]);
      if (std::find(b.memory.begin(), b.memory.end(), q) == b.memory.end())
        return where + "memory is missing query position " + std::to_string(q);
    }
    if (hi - lo + 1 != b.queries.size()) return where + "query positions are not contiguous in gen_order";
    for (std::size_t m : b.memory)
      if (m >= n) return where + "memory position " + std::to_string(m) + " out of range";
  }
  for (std::size_t p = 0; p < n; ++p)
    if (!seen[p]) return "position " + std::to_string(p) + " is not covered by any query block";
  return std::nullopt;
}

double attention_cost(const BlockPlan& plan, std::size_t d) {
  double cost = 0.0;
  for (const QueryBlock& b : plan.blocks)
    cost += static_cast<double>(std::max(plan.pad_to, b.queries.size())) *
            static_cast<double>(b.memory.size()) * static_cast<double>(d);
  return cost;
}

}  // namespace imgt
