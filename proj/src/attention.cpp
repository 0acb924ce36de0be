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
#include "attention.hpp"

#include <cmath>
#include <string>

#include "kernels.hpp"

namespace imgt {

std::shared_ptr<const AttentionLayout> plan_layout(const BlockPlan& plan, bool self_inclusive) {
  auto layout = std::make_shared<AttentionLayout>();
  layout->n_queries = plan.n_positions;
  layout->n_memory = plan.n_positions;
  for (std::size_t bi = 0; bi < plan.blocks.size(); ++bi) {
    const QueryBlock& qb = plan.blocks[bi];
    AttentionBlock b;
    b.queries = qb.queries;
    b.memory = qb.memory;
    if (plan.causal) {
      const CausalMask mask = build_mask(plan, bi, self_inclusive);
      b.permitted.assign(mask.permitted.begin(),
                         mask.permitted.begin() +
                             static_cast<std::ptrdiff_t>(qb.queries.size() * mask.cols));
    }
    layout->blocks.push_back(std::move(b));
  }
  return layout;
}

std::shared_ptr<const AttentionLayout> dense_layout(std::size_t n_queries, std::size_t n_memory) {
  auto layout = std::make_shared<AttentionLayout>();
  layout->n_queries = n_queries;
  layout->n_memory = n_memory;
  AttentionBlock b;
  b.queries.resize(n_queries);
  b.memory.resize(n_memory);
  for (std::size_t i = 0; i < n_queries; ++i) b.queries[i] = i;
  for (std::size_t j = 0; j < n_memory; ++j) b.memory[j] = j;
  layout->blocks.push_back(std::move(b));
  return layout;
}

template <class T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               std::span<const std::uint8_t> mask) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) ||
      k.dim(0) != v.dim(0))
    throw ShapeError("scaled_dot_attention: incompatible shapes " + shape_string(q.shape()) + ", " +
                     shape_string(k.shape()) + ", " + shape_string(v.shape()));
  if (mask.size() != q.dim(0) * k.dim(0))
    throw ShapeError("scaled_dot_attention: mask has " + std::to_string(mask.size()) +
                     " entries, expected " + std::to_string(q.dim(0) * k.dim(0)));
  const T s = T(1) / std::sqrt(static_cast<T>(q.dim(1)));
  std::vector<std::uint8_t> disallowed(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) disallowed[i] = mask[i] ? 0 : 1;
  const Tensor<T> logits = masked_fill(scale(matmul(q, transpose(k)), s), disallowed);
  return matmul(softmax(logits, -1), v);
}

template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& x_q, const Tensor<T>& x_m,
                               const AttentionParams<T>& p, std::span<const std::uint8_t> mask) {
  const std::size_t d = x_q.dim(-1);
  if (p.heads == 0 || d % p.heads != 0)
    throw ShapeError("multi_head_attention: d=" + std::to_string(d) + " not divisible by " +
                     std::to_string(p.heads) + " heads");
  const Tensor<T> q = matmul(x_q, p.wq), k = matmul(x_m, p.wk), v = matmul(x_m, p.wv);
  const std::size_t dh = d / p.heads;
  std::vector<Tensor<T>> heads;
  for (std::size_t h = 0; h < p.heads; ++h)
    heads.push_back(scaled_dot_attention(slice_cols(q, h * dh, (h + 1) * dh),
                                         slice_cols(k, h * dh, (h + 1) * dh),
                                         slice_cols(v, h * dh, (h + 1) * dh), mask));
  return matmul(concat_cols(heads), p.wo);
}

template <class T>
Tensor<T> block_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                          std::shared_ptr<const AttentionLayout> layout, std::size_t heads) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) ||
      k.shape() != v.shape() || q.dim(0) != layout->n_queries || k.dim(0) != layout->n_memory)
    throw ShapeError("block_attention: shapes " + shape_string(q.shape()) + ", " +
                     shape_string(k.shape()) + ", " + shape_string(v.shape()) +
                     " do not fit the layout");
  const std::size_t d = q.dim(1);
  if (heads == 0 || d % heads != 0)
    throw ShapeError("block_attention: d=" + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  const std::size_t dh = d / heads;
  const T s = T(1) / std::sqrt(static_cast<T>(dh));

  // Attention weights for backward, block-major then head then query row.
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const AttentionBlock& b : layout->blocks) {
    offsets.push_back(total);
    total += heads * b.queries.size() * b.memory.size();
  }
  auto probs = std::make_shared<std::vector<T>>(total);
  std::vector<T> out(q.size(), T(0));
  for (std::size_t bi = 0; bi < layout->blocks.size(); ++bi) {
    const AttentionBlock& b = layout->blocks[bi];
    const std::size_t lq = b.queries.size(), lm = b.memory.size();
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < lq; ++i) {
        const std::uint8_t* perm = b.permitted.empty() ? nullptr : b.permitted.data() + i * lm;
        kernels::attend_row(
            q.ptr() + b.queries[i] * d + h * dh, dh, lm,
            [&](std::size_t j) { return k.ptr() + b.memory[j] * d + h * dh; },
            [&](std::size_t j) { return v.ptr() + b.memory[j] * d + h * dh; },
            [perm](std::size_t j) { return perm == nullptr || perm[j] != 0; }, s,
            probs->data() + offsets[bi] + (h * lq + i) * lm, out.data() + b.queries[i] * d + h * dh);
      }
  }

  return make_result<T>(
      common_tape({&q, &k, &v}), q.shape(), std::move(out),
      [q, k, v, layout, heads, d, dh, s, probs, offsets](Tape<T>& tp, std::span<const T> g) {
        T* gq = q.tracked() ? tp.grad(q.node()).data() : nullptr;
        T* gk = k.tracked() ? tp.grad(k.node()).data() : nullptr;
        T* gv = v.tracked() ? tp.grad(v.node()).data() : nullptr;
        std::vector<T> dlogit;
        for (std::size_t bi = 0; bi < layout->blocks.size(); ++bi) {
          const AttentionBlock& b = layout->blocks[bi];
          const std::size_t lq = b.queries.size(), lm = b.memory.size();
          dlogit.resize(lm);
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < lq; ++i) {
              const T* p = probs->data() + offsets[bi] + (h * lq + i) * lm;
              const std::size_t qrow = b.queries[i] * d + h * dh;
              const T* go = g.data() + qrow;
              T weighted = T(0);
              for (std::size_t j = 0; j < lm; ++j) {
                if (p[j] == T(0)) {
                  dlogit[j] = T(0);
                  continue;
                }
                dlogit[j] = kernels::dot(go, v.ptr() + b.memory[j] * d + h * dh, dh);
                weighted += p[j] * dlogit[j];
              }
              for (std::size_t j = 0; j < lm; ++j) {
                if (p[j] == T(0)) continue;
                const std::size_t mrow = b.memory[j] * d + h * dh;
                const T ds = p[j] * (dlogit[j] - weighted) * s;
                if (gv)
                  for (std::size_t c = 0; c < dh; ++c) gv[mrow + c] += p[j] * go[c];
                if (gq)
                  for (std::size_t c = 0; c < dh; ++c) gq[qrow + c] += ds * k[mrow + c];
                if (gk)
                  for (std::size_t c = 0; c < dh; ++c) gk[mrow + c] += ds * q[qrow + c];
              }
            }
        }
      });
}

template <class T>
Tensor<T> layout_attention(const Tensor<T>& x_q, const Tensor<T>& x_m, const AttentionParams<T>& p,
                           std::shared_ptr<const AttentionLayout> layout) {
  const Tensor<T> heads = block_attention(matmul(x_q, p.wq), matmul(x_m, p.wk),
                                          matmul(x_m, p.wv), std::move(layout), p.heads);
  return matmul(heads, p.wo);
}

template <class T>
Tensor<T> self_attn_sublayer(const Tensor<T>& x, const AttentionParams<T>& p,
                             const NormParams<T>& norm,
                             std::shared_ptr<const AttentionLayout> layout, double dropout_rate,
                             Rng& rng, bool training) {
  const Tensor<T> attended = layout_attention(x, x, p, std::move(layout));
  return layernorm(add(x, dropout(attended, dropout_rate, rng, training)), norm.gain, norm.bias,
                   T(kLayerNormEps));
}

template <class T>
Tensor<T> cross_attn_sublayer(const Tensor<T>& x, const Tensor<T>& encoder_out,
                              const AttentionParams<T>& p, const NormParams<T>& norm,
                              double dropout_rate, Rng& rng, bool training) {
  if (encoder_out.rank() != 2 || encoder_out.dim(1) != x.dim(-1))
    throw ShapeError("cross attention: encoder output " + shape_string(encoder_out.shape()) +
                     " does not match decoder width " + std::to_string(x.dim(-1)));
  const Tensor<T> attended =
      layout_attention(x, encoder_out, p, dense_layout(x.dim(0), encoder_out.dim(0)));
  return layernorm(add(x, dropout(attended, dropout_rate, rng, training)), norm.gain, norm.bias,
                   T(kLayerNormEps));
}

template <class T>
Tensor<T> ffn_sublayer(const Tensor<T>& x, const FfnParams<T>& f, const NormParams<T>& norm,
                       double dropout_rate, Rng& rng, bool training) {
  const Tensor<T> hidden = relu(add_rowvec(matmul(x, f.w_up), f.b_up));
  const Tensor<T> y = add_rowvec(matmul(hidden, f.w_down), f.b_down);
  return layernorm(add(x, dropout(y, dropout_rate, rng, training)), norm.gain, norm.bias,
                   T(kLayerNormEps));
}

#define IMGT_INSTANTIATE(T)                                                                      \
  template Tensor<T> scaled_dot_attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                             std::span<const std::uint8_t>);                      \
  template Tensor<T> multi_head_attention<T>(const Tensor<T>&, const Tensor<T>&,                  \
                                             const AttentionParams<T>&,                           \
                                             std::span<const std::uint8_t>);                      \
  template Tensor<T> block_attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                        std::shared_ptr<const AttentionLayout>, std::size_t);     \
  template Tensor<T> layout_attention<T>(const Tensor<T>&, const Tensor<T>&,                      \
                                         const AttentionParams<T>&,                               \
                                         std::shared_ptr<const AttentionLayout>);                 \
  template Tensor<T> self_attn_sublayer<T>(const Tensor<T>&, const AttentionParams<T>&,           \
                                           const NormParams<T>&,                                  \
                                           std::shared_ptr<const AttentionLayout>, double, Rng&,  \
                                           bool);                                                 \
  template Tensor<T> cross_attn_sublayer<T>(const Tensor<T>&, const Tensor<T>&,                   \
                                            const AttentionParams<T>&, const NormParams<T>&,      \
                                            double, Rng&, bool);                                  \
  template Tensor<T> ffn_sublayer<T>(const Tensor<T>&, const FfnParams<T>&, const NormParams<T>&, \
                                     double, Rng&, bool);

IMGT_INSTANTIATE(float)
IMGT_INSTANTIATE(double)

#undef IMGT_INSTANTIATE

}  // namespace imgt
