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
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "blocks.hpp"
#include "tensor.hpp"

namespace imgt {

// Query, key and value projections are d x d; head h uses columns
// [h * d/heads, (h + 1) * d/heads) of each. No biases.
template <class T>
struct AttentionParams {
  Tensor<T> wq, wk, wv, wo;
  std::size_t heads = 1;
};

// Position-wise network layernorm(x + dropout(W_down relu(W_up x + b_up) + b_down)).
template <class T>
struct FfnParams {
  Tensor<T> w_up;    // [d, d_ff]
  Tensor<T> b_up;    // [d_ff]
  Tensor<T> w_down;  // [d_ff, d]
  Tensor<T> b_down;  // [d]
};

template <class T>
struct NormParams {
  Tensor<T> gain, bias;
};

template <class T>
struct LayerParams {
  AttentionParams<T> self_attn;
  NormParams<T> self_norm;
  std::optional<AttentionParams<T>> cross_attn;
  std::optional<NormParams<T>> cross_norm;
  FfnParams<T> ffn;
  NormParams<T> ffn_norm;
  double dropout = 0.0;
};

// Attention geometry consumed by the fused kernel. Each block lists query
// rows and memory rows; `permitted` is [queries x memory], empty = all.
struct AttentionBlock {
  std::vector<std::size_t> queries;
  std::vector<std::size_t> memory;
  std::vector<std::uint8_t> permitted;
};

struct AttentionLayout {
  std::size_t n_queries = 0;
  std::size_t n_memory = 0;
  std::vector<AttentionBlock> blocks;
};

// Layout of a decoder or encoder plan with masks from build_mask().
std::shared_ptr<const AttentionLayout> plan_layout(const BlockPlan& plan, bool self_inclusive);
// Every query attends to every memory row.
std::shared_ptr<const AttentionLayout> dense_layout(std::size_t n_queries, std::size_t n_memory);

// softmax(Q K^T / sqrt(dh) with disallowed logits replaced by -1e9) V,
// composed from primitive operations. mask is [lq x lm], nonzero = permitted.
template <class T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               std::span<const std::uint8_t> mask);

// Reference multi-head attention from primitives: heads on column slices,
// concatenated and projected by W_o.
template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& x_q, const Tensor<T>& x_m,
                               const AttentionParams<T>& p, std::span<const std::uint8_t> mask);

// Fused multi-head attention over projected q [nq, d], k/v [nm, d] for all
// blocks of a layout, with hand-derived backward. Returns the concatenated
// heads before W_o.
template <class T>
Tensor<T> block_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                          std::shared_ptr<const AttentionLayout> layout, std::size_t heads);

// W_o(block_attention(x_q W_q, x_m W_k, x_m W_v)).
template <class T>
Tensor<T> layout_attention(const Tensor<T>& x_q, const Tensor<T>& x_m, const AttentionParams<T>& p,
                           std::shared_ptr<const AttentionLayout> layout);

// layernorm(x + dropout(attention(x, x)))
template <class T>
Tensor<T> self_attn_sublayer(const Tensor<T>& x, const AttentionParams<T>& p,
                             const NormParams<T>& norm,
                             std::shared_ptr<const AttentionLayout> layout, double dropout_rate,
                             Rng& rng, bool training);

// layernorm(x + dropout(attention(x, encoder_out))) with nothing masked.
template <class T>
Tensor<T> cross_attn_sublayer(const Tensor<T>& x, const Tensor<T>& encoder_out,
                              const AttentionParams<T>& p, const NormParams<T>& norm,
                              double dropout_rate, Rng& rng, bool training);

template <class T>
Tensor<T> ffn_sublayer(const Tensor<T>& x, const FfnParams<T>& f, const NormParams<T>& norm,
                       double dropout_rate, Rng& rng, bool training);

inline constexpr double kLayerNormEps = 1e-6;

}  // namespace imgt
