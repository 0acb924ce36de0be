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
#include <optional>
#include <string>
#include <vector>

namespace imgt {

enum class SchemeKind { kFull, kLocal1d, kLocal2d };

// Query/memory block geometry. For local1d, l_q positions per query block
// and l_m extra trailing-history positions; for local2d, h_q x w_q pixel
// query rectangles extended by h_m rows above and w_m columns on each side.
struct Scheme {
  SchemeKind kind = SchemeKind::kLocal1d;
  std::size_t l_q = 1;
  std::size_t l_m = 0;
  std::size_t h_q = 1;
  std::size_t w_q = 1;
  std::size_t h_m = 0;
  std::size_t w_m = 0;

  friend bool operator==(const Scheme&, const Scheme&) = default;
};

struct QueryBlock {
  std::vector<std::size_t> queries;
  std::vector<std::size_t> memory;
};

// Partition of a flattened sequence into query blocks with their memory
// blocks, plus the generation order. Positions are raster indices:
// (row * w + col) * per_pixel + channel.
struct BlockPlan {
  std::size_t n_positions = 0;
  std::vector<QueryBlock> blocks;
  // gen_order[rank] = position; rank[position] = rank.
  std::vector<std::size_t> gen_order;
  std::vector<std::size_t> rank;
  // Query blocks shorter than this are padded with fully masked slots.
  std::size_t pad_to = 0;
  // Decoder plans mask by generation order; encoder plans attend everywhere.
  bool causal = true;
};

// Row-major [rows x cols] permission matrix for one block; rows beyond the
// block's real queries are padding and entirely false.
struct CausalMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> permitted;

  bool at(std::size_t i, std::size_t j) const { return permitted[i * cols + j] != 0; }
};

BlockPlan plan_full(std::size_t n, bool causal = false);
BlockPlan plan_1d(std::size_t height, std::size_t width, std::size_t l_q, std::size_t l_m,
                  std::size_t per_pixel = 3);
BlockPlan plan_2d(std::size_t height, std::size_t width, std::size_t h_q, std::size_t w_q,
                  std::size_t h_m, std::size_t w_m, std::size_t per_pixel = 3);
// Decoder plan for a scheme; kFull gives a single causal block.
BlockPlan make_plan(const Scheme& scheme, std::size_t height, std::size_t width,
                    std::size_t per_pixel = 3);

// Permission for query row i and memory column j of a causal block:
// rank(memory[j]) < rank(query[i]), plus the query's own slot when
// self_inclusive. A row left with nothing permitted (the first generated
// position, whose decoder input is the start vector, or a block start whose
// memory holds no earlier position) gets its own slot as the start slot.
// Non-causal plans permit everything.
CausalMask build_mask(const BlockPlan& plan, std::size_t block_index, bool self_inclusive = false);

// Returns a description of the first violated invariant, if any.
std::optional<std::string> validate_plan(const BlockPlan& plan);

// Sum over blocks of padded query length x memory length x d.
double attention_cost(const BlockPlan& plan, std::size_t d);

}  // namespace imgt
