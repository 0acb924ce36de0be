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
#include "generator.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>

#include "errors.hpp"
#include "kernels.hpp"

namespace imgt {

namespace {

using Row = Tensor<float>;

std::size_t active_ranks(const ModelConfig& c, const SamplerConfig& cfg) {
  const std::size_t n = c.n_positions();
  return cfg.max_positions == 0 ? n : std::min(n, cfg.max_positions);
}

// Evaluates the decoder for one generation rank at a time and returns the
// output row of that rank's position.
class Stepper {
 public:
  virtual ~Stepper() = default;
  virtual std::vector<float> step(const Image& img, std::size_t rank) = 0;
};

// Runs the whole teacher-forced decoder on the partially filled image for
// every step.
class FullStepper : public Stepper {
 public:
  FullStepper(const ImageTransformer& m, std::optional<std::size_t> class_id, const Image* source,
              GenerationStats& stats)
      : m_(m), w_(bind_weights(m.config(), m.params())), class_id_(class_id), source_(source),
        stats_(stats) {
    if (m.config().encoder_decoder()) {
      Rng rng(0);
      encoded_ = encode(m.config(), m.runtime(), w_, *source, rng, false);
      ++stats_.encoder_calls;
    }
  }

  std::vector<float> step(const Image& img, std::size_t rank) override {
    const ModelConfig& c = m_.config();
    const std::size_t p = m_.runtime().plan.gen_order[rank];
    // Positions at this rank and later are unknown; blank them so that any
    // leak would show up as a mismatch.
    Image masked = img;
    const std::size_t per = c.per_pixel_values();
    for (std::size_t r = rank; r < c.n_positions(); ++r) {
      const std::size_t q = m_.runtime().plan.gen_order[r];
      for (std::size_t i = 0; i < per; ++i) masked[q * per + i] = 0;
    }
    Rng rng(0);
    const Example e{&masked, class_id_, source_};
    const auto r = forward(c, m_.runtime(), w_, e, rng, false, encoded_ ? &*encoded_ : nullptr);
    ++stats_.decoder_steps;
    const std::size_t width = r.outputs.dim(1);
    return std::vector<float>(r.outputs.ptr() + p * width, r.outputs.ptr() + (p + 1) * width);
  }

 private:
  const ImageTransformer& m_;
  ModelWeights<float> w_;
  std::optional<std::size_t> class_id_;
  const Image* source_;
  GenerationStats& stats_;
  std::optional<Tensor<float>> encoded_;
};

// Incremental decoder: each step computes only the new position, reading
// keys and values of earlier positions from per-layer caches. Uses the same
// kernels as the batched path, so results match it bit for bit.
class CachedStepper : public Stepper {
 public:
  CachedStepper(const ImageTransformer& m, std::optional<std::size_t> class_id,
                const Image* source, GenerationStats& stats)
      : m_(m), c_(m.config()), w_(bind_weights(m.config(), m.params())), class_id_(class_id),
        stats_(stats) {
    const std::size_t n = c_.n_positions();
    const AttentionLayout& layout = *m.runtime().decoder_layout;
    block_of_.resize(n);
    slot_of_.resize(n);
    for (std::size_t b = 0; b < layout.blocks.size(); ++b)
      for (std::size_t i = 0; i < layout.blocks[b].queries.size(); ++i) {
        block_of_[layout.blocks[b].queries[i]] = b;
        slot_of_[layout.blocks[b].queries[i]] = i;
      }
    keys_.assign(c_.layers, std::vector<float>(n * c_.d));
    values_.assign(c_.layers, std::vector<float>(n * c_.d));
    written_.assign(n, 0);
    if (c_.distribution == DistributionKind::kCategorical)
      table_ = concat_rows<float>({w_.start, w_.embed});
    if (c_.encoder_decoder()) {
      Rng rng(0);
      const Tensor<float> enc = encode(c_, m.runtime(), w_, *source, rng, false);
      ++stats_.encoder_calls;
      for (const auto& l : w_.decoder) {
        enc_keys_.push_back(matmul(enc, l.cross_attn->wk));
        enc_values_.push_back(matmul(enc, l.cross_attn->wv));
      }
    }
  }

  std::vector<float> step(const Image& img, std::size_t rank) override {
    const ModelRuntime& rt = m_.runtime();
    const std::size_t p = rt.plan.gen_order[rank];
    Row x = input_row(img, rank, p);
    for (std::size_t l = 0; l < c_.layers; ++l) {
      const LayerParams<float>& lp = w_.decoder[l];
      const Row heads = self_attention(x, lp.self_attn, l, p);
      x = layernorm(add(x, matmul(heads, lp.self_attn.wo)), lp.self_norm.gain, lp.self_norm.bias,
                    float(kLayerNormEps));
      if (lp.cross_attn) {
        const Row ch = cross_attention(x, *lp.cross_attn, l);
        x = layernorm(add(x, matmul(ch, lp.cross_attn->wo)), lp.cross_norm->gain,
                      lp.cross_norm->bias, float(kLayerNormEps));
      }
      const Row hidden = relu(add_rowvec(matmul(x, lp.ffn.w_up), lp.ffn.b_up));
      const Row y = add_rowvec(matmul(hidden, lp.ffn.w_down), lp.ffn.b_down);
      x = layernorm(add(x, y), lp.ffn_norm.gain, lp.ffn_norm.bias, float(kLayerNormEps));
    }
    x = layernorm(x, w_.final_norm.gain, w_.final_norm.bias, float(kLayerNormEps));
    const std::size_t head = w_.head_w.size() == kChannels ? p % kChannels : 0;
    ++stats_.decoder_steps;
    return add_rowvec(matmul(x, w_.head_w[head]), w_.head_b[head]).to_vector();
  }

 private:
  Row input_row(const Image& img, std::size_t rank, std::size_t p) const {
    const ModelRuntime& rt = m_.runtime();
    const std::size_t d = c_.d;
    Row x;
    if (rank == 0) {
      x = w_.start;
    } else if (c_.distribution == DistributionKind::kCategorical) {
      const std::size_t id[1] = {1 + std::size_t{img[rt.plan.gen_order[rank - 1]]}};
      x = embedding_gather(table_, id);
    } else {
      const std::size_t q = rt.plan.gen_order[rank - 1];
      const Image pixel(1, 1, {img[q * 3], img[q * 3 + 1], img[q * 3 + 2]});
      x = add_rowvec(matmul(ordinal_inputs<float>(pixel), w_.ordinal_w), w_.ordinal_b);
    }
    Row coords;
    if (w_.coords) {
      const std::size_t id[1] = {p};
      coords = embedding_gather(*w_.coords, id);
    } else {
      coords = Row({1, d}, std::vector<float>(rt.decoder_coords.begin() + p * d,
                                              rt.decoder_coords.begin() + (p + 1) * d));
    }
    x = add(x, coords);
    if (w_.classes) x = add_class_embedding(x, *class_id_, *w_.classes);
    return x;
  }

  Row self_attention(const Row& x, const AttentionParams<float>& a, std::size_t l, std::size_t p) {
    const std::size_t d = c_.d, dh = d / a.heads;
    const Row q = matmul(x, a.wq);
    const Row k = matmul(x, a.wk);
    const Row v = matmul(x, a.wv);
    std::copy(k.ptr(), k.ptr() + d, keys_[l].begin() + p * d);
    std::copy(v.ptr(), v.ptr() + d, values_[l].begin() + p * d);
    if (l == 0) written_[p] = 1;

    const AttentionBlock& b = m_.runtime().decoder_layout->blocks[block_of_[p]];
    const std::size_t lm = b.memory.size();
    const std::uint8_t* perm =
        b.permitted.empty() ? nullptr : b.permitted.data() + slot_of_[p] * lm;
    auto permitted = [perm](std::size_t j) { return perm == nullptr || perm[j] != 0; };
    if (l == 0)
      for (std::size_t j = 0; j < lm; ++j)
        if (permitted(j) && !written_[b.memory[j]]) ++stats_.unknown_reads;

    const float s = 1.0f / std::sqrt(static_cast<float>(dh));
    std::vector<float> out(d), probs(lm);
    const float* keys = keys_[l].data();
    const float* values = values_[l].data();
    for (std::size_t h = 0; h < a.heads; ++h)
      kernels::attend_row(
          q.ptr() + h * dh, dh, lm,
          [&](std::size_t j) { return keys + b.memory[j] * d + h * dh; },
          [&](std::size_t j) { return values + b.memory[j] * d + h * dh; }, permitted, s,
          probs.data(), out.data() + h * dh);
    return Row({1, d}, std::move(out));
  }

  Row cross_attention(const Row& x, const AttentionParams<float>& a, std::size_t l) const {
    const std::size_t d = c_.d, dh = d / a.heads;
    const Row q = matmul(x, a.wq);
    const float* keys = enc_keys_[l].ptr();
    const float* values = enc_values_[l].ptr();
    const std::size_t lm = enc_keys_[l].dim(0);
    const float s = 1.0f / std::sqrt(static_cast<float>(dh));
    std::vector<float> out(d), probs(lm);
    for (std::size_t h = 0; h < a.heads; ++h)
      kernels::attend_row(
          q.ptr() + h * dh, dh, lm, [&](std::size_t j) { return keys + j * d + h * dh; },
          [&](std::size_t j) { return values + j * d + h * dh; },
          [](std::size_t) { return true; }, s, probs.data(), out.data() + h * dh);
    return Row({1, d}, std::move(out));
  }

  const ImageTransformer& m_;
  const ModelConfig& c_;
  ModelWeights<float> w_;
  std::optional<std::size_t> class_id_;
  GenerationStats& stats_;
  Tensor<float> table_;
  std::vector<std::size_t> block_of_, slot_of_;
  std::vector<std::vector<float>> keys_, values_;
  std::vector<std::uint8_t> written_;
  std::vector<Tensor<float>> enc_keys_, enc_values_;
};

void check_inputs(const ImageTransformer& m, std::optional<std::size_t> class_id,
                  const Image* source) {
  const ModelConfig& c = m.config();
  const Image probe(c.height, c.width);
  check_example(c, Example{&probe, class_id, source});
}

std::unique_ptr<Stepper> make_stepper(const ImageTransformer& m, bool use_cache,
                                      std::optional<std::size_t> class_id, const Image* source,
                                      GenerationStats& stats) {
  if (use_cache) return std::make_unique<CachedStepper>(m, class_id, source, stats);
  return std::make_unique<FullStepper>(m, class_id, source, stats);
}

Image run_generation(const ImageTransformer& m, Image img, std::size_t known_ranks,
                     const SamplerConfig& cfg, std::optional<std::size_t> class_id,
                     const Image* source, GenerationStats* stats) {
  if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature))
    throw RangeError("temperature must be positive, got " + std::to_string(cfg.temperature));
  check_inputs(m, class_id, source);
  const ModelConfig& c = m.config();
  GenerationStats local;
  GenerationStats& st = stats ? *stats : local;
  const std::size_t ranks = active_ranks(c, cfg);
  if (known_ranks >= ranks) return img;
  auto stepper = make_stepper(m, cfg.use_cache, class_id, source, st);
  Rng rng(cfg.seed);
  const auto& order = m.runtime().plan.gen_order;
  for (std::size_t r = 0; r < ranks; ++r) {
    const std::vector<float> row = stepper->step(img, r);
    if (r < known_ranks) continue;
    const std::size_t p = order[r];
    if (c.distribution == DistributionKind::kCategorical) {
      img[p] = categorical_sample<float>(row, cfg.temperature, rng);
    } else {
      const auto rgb = dmol_sample(row.data(), c.mixtures, cfg.temperature, rng);
      for (std::size_t ch = 0; ch < kChannels; ++ch) img[p * kChannels + ch] = rgb[ch];
    }
  }
  return img;
}

}  // namespace

Image generate(const ImageTransformer& model, const SamplerConfig& cfg,
               std::optional<std::size_t> class_id, const Image* source,
               GenerationStats* stats) {
  const ModelConfig& c = model.config();
  return run_generation(model, Image(c.height, c.width), 0, cfg, class_id, source, stats);
}

Image complete(const ImageTransformer& model, const Image& partial, std::size_t known_ranks,
               const SamplerConfig& cfg, std::optional<std::size_t> class_id,
               const Image* source, GenerationStats* stats) {
  const ModelConfig& c = model.config();
  if (partial.height() != c.height || partial.width() != c.width)
    throw ShapeError("partial image is " + std::to_string(partial.height()) + "x" +
                     std::to_string(partial.width()) + ", model expects " +
                     std::to_string(c.height) + "x" + std::to_string(c.width));
  if (known_ranks > c.n_positions())
    throw RangeError("prefix length " + std::to_string(known_ranks) + " exceeds " +
                     std::to_string(c.n_positions()) + " positions");
  Image img(c.height, c.width);
  const std::size_t per = c.per_pixel_values();
  const auto& order = model.runtime().plan.gen_order;
  for (std::size_t r = 0; r < known_ranks; ++r)
    for (std::size_t i = 0; i < per; ++i) img[order[r] * per + i] = partial[order[r] * per + i];
  return run_generation(model, std::move(img), known_ranks, cfg, class_id, source, stats);
}

Image superres(const ImageTransformer& model, const Image& low, const SamplerConfig& cfg,
               GenerationStats* stats) {
  if (!model.config().encoder_decoder())
    throw ConfigError("super-resolution needs an encoder-decoder model");
  return generate(model, cfg, std::nullopt, &low, stats);
}

double sequential_nll(const ImageTransformer& model, const Image& img,
                      std::optional<std::size_t> class_id, const Image* source, bool use_cache,
                      std::vector<double>* per_position) {
  const ModelConfig& c = model.config();
  check_example(c, Example{&img, class_id, source});
  GenerationStats stats;
  auto stepper = make_stepper(model, use_cache, class_id, source, stats);
  const auto& order = model.runtime().plan.gen_order;
  const std::size_t n = c.n_positions();
  if (per_position) per_position->assign(n, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const std::vector<float> row = stepper->step(img, r);
    const std::size_t p = order[r];
    double nll;
    if (c.distribution == DistributionKind::kCategorical)
      nll = -categorical_log_prob<float>(row, img[p]);
    else
      nll = -dmol_log_prob(row.data(), c.mixtures, img.pixels().data() + p * kChannels);
    if (per_position) (*per_position)[p] = nll;
    total += nll;
  }
  return total;
}

double consistency(const Image& low, const Image& sample) {
  if (low.empty() || sample.height() % low.height() != 0 || sample.width() % low.width() != 0 ||
      sample.height() / low.height() != sample.width() / low.width())
    throw ShapeError("consistency: sample " + std::to_string(sample.height()) + "x" +
                     std::to_string(sample.width()) + " is not an integer upscale of " +
                     std::to_string(low.height()) + "x" + std::to_string(low.width()));
  const std::vector<double> down = downsample_area_unit(sample, sample.height() / low.height());
  double acc = 0.0;
  for (std::size_t i = 0; i < down.size(); ++i) {
    const double diff = down[i] - low[i] / 255.0;
    acc += diff * diff;
  }
  return acc / static_cast<double>(down.size());
}

}  // namespace imgt
