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
#include "model.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace imgt {

namespace {

std::string idx(const std::string& prefix, std::size_t i) { return prefix + "." + std::to_string(i); }

void add_attention_specs(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d) {
  for (const char* w : {"wq", "wk", "wv", "wo"})
    out.push_back({prefix + "." + w, {d, d}, InitKind::kXavier});
}

void add_norm_specs(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d) {
  out.push_back({prefix + ".gain", {d}, InitKind::kOnes});
  out.push_back({prefix + ".bias", {d}, InitKind::kZeros});
}

void add_layer_specs(std::vector<ParamSpec>& out, const std::string& prefix,
                     const ModelConfig& c, bool cross) {
  add_attention_specs(out, prefix + ".self_attn", c.d);
  add_norm_specs(out, prefix + ".self_norm", c.d);
  if (cross) {
    add_attention_specs(out, prefix + ".cross_attn", c.d);
    add_norm_specs(out, prefix + ".cross_norm", c.d);
  }
  out.push_back({prefix + ".ffn.w_up", {c.d, c.d_ff}, InitKind::kXavier});
  out.push_back({prefix + ".ffn.b_up", {c.d_ff}, InitKind::kZeros});
  out.push_back({prefix + ".ffn.w_down", {c.d_ff, c.d}, InitKind::kXavier});
  out.push_back({prefix + ".ffn.b_down", {c.d}, InitKind::kZeros});
  add_norm_specs(out, prefix + ".ffn_norm", c.d);
}

const char* kChannelNames[kChannels] = {"r", "g", "b"};

template <class T>
struct Binder {
  const ParamSet<T>& params;
  Tape<T>* tape;

  Tensor<T> get(const std::string& name) const {
    const std::size_t i = params.at(name);
    return tape ? tape->watch(params.value(i), i) : params.value(i);
  }
  AttentionParams<T> attention(const std::string& prefix, std::size_t heads) const {
    return {get(prefix + ".wq"), get(prefix + ".wk"), get(prefix + ".wv"), get(prefix + ".wo"),
            heads};
  }
  NormParams<T> norm(const std::string& prefix) const {
    return {get(prefix + ".gain"), get(prefix + ".bias")};
  }
  LayerParams<T> layer(const std::string& prefix, const ModelConfig& c, bool cross) const {
    LayerParams<T> l;
    l.self_attn = attention(prefix + ".self_attn", c.heads);
    l.self_norm = norm(prefix + ".self_norm");
    if (cross) {
      l.cross_attn = attention(prefix + ".cross_attn", c.heads);
      l.cross_norm = norm(prefix + ".cross_norm");
    }
    l.ffn = {get(prefix + ".ffn.w_up"), get(prefix + ".ffn.b_up"), get(prefix + ".ffn.w_down"),
             get(prefix + ".ffn.b_down")};
    l.ffn_norm = norm(prefix + ".ffn_norm");
    l.dropout = c.dropout;
    return l;
  }
};

template <class T>
Tensor<T> constant_table(const std::vector<double>& values, std::size_t rows, std::size_t d) {
  return Tensor<T>({rows, d}, std::vector<T>(values.begin(), values.end()));
}

template <class T>
Tensor<T> run_layer(const Tensor<T>& x, const LayerParams<T>& l,
                    const std::shared_ptr<const AttentionLayout>& layout,
                    const Tensor<T>* encoder_out, Rng& rng, bool training) {
  Tensor<T> y = self_attn_sublayer(x, l.self_attn, l.self_norm, layout, l.dropout, rng, training);
  if (l.cross_attn && encoder_out)
    y = cross_attn_sublayer(y, *encoder_out, *l.cross_attn, *l.cross_norm, l.dropout, rng,
                            training);
  return ffn_sublayer(y, l.ffn, l.ffn_norm, l.dropout, rng, training);
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (layers == 0) fail("layers must be positive");
  if (d == 0 || heads == 0 || d % heads != 0)
    fail("d (" + std::to_string(d) + ") must be a positive multiple of heads (" +
         std::to_string(heads) + ")");
  if (d_ff == 0) fail("d_ff must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (coord_encoding == CoordinateKind::kSinusoidal && d % 4 != 0)
    fail("sinusoidal coordinates need d divisible by 4");
  if (coord_encoding == CoordinateKind::kLearned && d % 2 != 0)
    fail("learned coordinates need an even d");
  if (height == 0 || width == 0) fail("image size must be positive");
  switch (scheme.kind) {
    case SchemeKind::kFull: break;
    case SchemeKind::kLocal1d:
      if (scheme.l_q == 0) fail("query block length must be positive");
      break;
    case SchemeKind::kLocal2d:
      if (scheme.h_q == 0 || scheme.w_q == 0) fail("query block size must be positive");
      break;
  }
  if (distribution == DistributionKind::kDmol) {
    if (mixtures == 0) fail("mixtures must be positive");
    if (per_channel_head) fail("per-channel heads apply to the categorical output only");
  }
  if (encoder_decoder()) {
    if (encoder_layers == 0 || encoder_layers > layers)
      fail("encoder_layers must lie in [1, layers]");
    if (source_height == 0 || source_width == 0)
      fail("encoder-decoder models need source_height and source_width");
  } else if (encoder_layers != 0) {
    fail("encoder_layers is only valid in encoder-decoder mode");
  }
}

ModelConfig preset_config(std::string_view name) {
  ModelConfig c;
  c.height = 32;
  c.width = 32;
  c.scheme = Scheme{SchemeKind::kLocal1d, 256, 256};
  if (name == "cifar-cat") {
    c.layers = 12, c.d = 512, c.heads = 4, c.d_ff = 2048, c.dropout = 0.3;
  } else if (name == "cifar-dmol") {
    c.layers = 14, c.d = 256, c.heads = 8, c.d_ff = 512, c.dropout = 0.2;
    c.distribution = DistributionKind::kDmol;
    c.mixtures = 10;
  } else if (name == "imagenet") {
    c.layers = 12, c.d = 512, c.heads = 8, c.d_ff = 2048, c.dropout = 0.1;
  } else if (name == "cifar-small") {
    c.layers = 8, c.d = 512, c.heads = 8, c.d_ff = 1024, c.dropout = 0.1;
  } else {
    throw ConfigError("unknown preset " + std::string(name));
  }
  return c;
}

std::vector<ParamSpec> parameter_layout(const ModelConfig& c) {
  c.validate();
  std::vector<ParamSpec> out;
  const bool cross = c.encoder_decoder();
  if (cross) {
    for (std::size_t ch = 0; ch < kChannels; ++ch)
      out.push_back({std::string("encoder.embed.") + kChannelNames[ch], {kIntensities, c.d},
                     InitKind::kXavier});
    if (c.coord_encoding == CoordinateKind::kLearned)
      out.push_back({"encoder.coords", {c.n_source_positions(), c.d}, InitKind::kXavier});
    for (std::size_t i = 0; i < c.encoder_layers; ++i)
      add_layer_specs(out, idx("encoder", i), c, false);
    add_norm_specs(out, "encoder.final_norm", c.d);
  }
  out.push_back({"decoder.start", {1, c.d}, InitKind::kXavier});
  if (c.distribution == DistributionKind::kCategorical) {
    out.push_back({"decoder.embed", {kIntensities, c.d}, InitKind::kXavier});
  } else {
    out.push_back({"decoder.ordinal.w", {kChannels, c.d}, InitKind::kXavier});
    out.push_back({"decoder.ordinal.b", {c.d}, InitKind::kZeros});
  }
  if (c.coord_encoding == CoordinateKind::kLearned)
    out.push_back({"decoder.coords", {c.n_positions(), c.d}, InitKind::kXavier});
  if (c.n_classes > 0) out.push_back({"class_embed", {c.n_classes, c.d}, InitKind::kXavier});
  for (std::size_t i = 0; i < c.layers; ++i) add_layer_specs(out, idx("decoder", i), c, cross);
  add_norm_specs(out, "decoder.final_norm", c.d);
  if (c.distribution == DistributionKind::kDmol) {
    const std::size_t width = kDmolParamsPerComponent * c.mixtures;
    out.push_back({"head.w", {c.d, width}, InitKind::kXavier});
    out.push_back({"head.b", {width}, InitKind::kZeros});
  } else if (c.per_channel_head) {
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
      const std::string p = std::string("head.") + kChannelNames[ch];
      out.push_back({p + ".w", {c.d, kIntensities}, InitKind::kXavier});
      out.push_back({p + ".b", {kIntensities}, InitKind::kZeros});
    }
  } else {
    out.push_back({"head.w", {c.d, kIntensities}, InitKind::kXavier});
    out.push_back({"head.b", {kIntensities}, InitKind::kZeros});
  }
  return out;
}

std::shared_ptr<const ModelRuntime> make_runtime(const ModelConfig& c) {
  c.validate();
  auto rt = std::make_shared<ModelRuntime>();
  const std::size_t per_pixel = c.positions_per_pixel();
  rt->plan = make_plan(c.scheme, c.height, c.width, per_pixel);
  rt->decoder_layout = plan_layout(rt->plan, c.self_inclusive);
  if (c.coord_encoding == CoordinateKind::kSinusoidal)
    rt->decoder_coords =
        sinusoidal_encoding<double>(raster_coordinates(c.height, c.width, per_pixel), c.d)
            .to_vector();
  if (c.encoder_decoder()) {
    const std::size_t m = c.n_source_positions();
    rt->encoder_layout = dense_layout(m, m);
    if (c.coord_encoding == CoordinateKind::kSinusoidal)
      rt->encoder_coords =
          sinusoidal_encoding<double>(raster_coordinates(c.source_height, c.source_width), c.d)
              .to_vector();
  }
  return rt;
}

template <class T>
ModelWeights<T> bind_weights(const ModelConfig& c, const ParamSet<T>& params, Tape<T>* tape) {
  const Binder<T> b{params, tape};
  const bool cross = c.encoder_decoder();
  ModelWeights<T> w;
  if (cross) {
    for (std::size_t ch = 0; ch < kChannels; ++ch)
      w.source_embed[ch] = b.get(std::string("encoder.embed.") + kChannelNames[ch]);
    if (c.coord_encoding == CoordinateKind::kLearned) w.source_coords = b.get("encoder.coords");
    for (std::size_t i = 0; i < c.encoder_layers; ++i)
      w.encoder.push_back(b.layer(idx("encoder", i), c, false));
    w.encoder_norm = b.norm("encoder.final_norm");
  }
  w.start = b.get("decoder.start");
  if (c.distribution == DistributionKind::kCategorical) {
    w.embed = b.get("decoder.embed");
  } else {
    w.ordinal_w = b.get("decoder.ordinal.w");
    w.ordinal_b = b.get("decoder.ordinal.b");
  }
  if (c.coord_encoding == CoordinateKind::kLearned) w.coords = b.get("decoder.coords");
  if (c.n_classes > 0) w.classes = b.get("class_embed");
  for (std::size_t i = 0; i < c.layers; ++i) w.decoder.push_back(b.layer(idx("decoder", i), c, cross));
  w.final_norm = b.norm("decoder.final_norm");
  if (c.per_channel_head && c.distribution == DistributionKind::kCategorical) {
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
      const std::string p = std::string("head.") + kChannelNames[ch];
      w.head_w.push_back(b.get(p + ".w"));
      w.head_b.push_back(b.get(p + ".b"));
    }
  } else {
    w.head_w.push_back(b.get("head.w"));
    w.head_b.push_back(b.get("head.b"));
  }
  return w;
}

void check_example(const ModelConfig& c, const Example& e) {
  if (!e.image) throw ShapeError("example has no target image");
  if (e.image->height() != c.height || e.image->width() != c.width)
    throw ShapeError("image is " + std::to_string(e.image->height()) + "x" +
                     std::to_string(e.image->width()) + ", model expects " +
                     std::to_string(c.height) + "x" + std::to_string(c.width));
  if (c.n_classes > 0) {
    if (!e.class_id) throw ConfigError("class-conditional model needs a class id");
    if (*e.class_id >= c.n_classes)
      throw RangeError("class id " + std::to_string(*e.class_id) + " out of range for " +
                       std::to_string(c.n_classes) + " classes");
  }
  if (c.encoder_decoder()) {
    if (!e.source) throw ConfigError("encoder-decoder model needs a source image");
    if (e.source->height() != c.source_height || e.source->width() != c.source_width)
      throw ShapeError("source image is " + std::to_string(e.source->height()) + "x" +
                       std::to_string(e.source->width()) + ", model expects " +
                       std::to_string(c.source_height) + "x" + std::to_string(c.source_width));
  }
}

template <class T>
Tensor<T> decoder_inputs(const ModelConfig& c, const ModelRuntime& rt, const ModelWeights<T>& w,
                         const Image& image, std::optional<std::size_t> class_id) {
  const std::size_t n = c.n_positions();
  const BlockPlan& plan = rt.plan;
  std::vector<std::size_t> ids(n);
  Tensor<T> table;
  if (c.distribution == DistributionKind::kCategorical) {
    table = concat_rows<T>({w.start, w.embed});
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t r = plan.rank[p];
      ids[p] = r == 0 ? 0 : 1 + image[plan.gen_order[r - 1]];
    }
  } else {
    const Tensor<T> ordinal =
        reshape(embed_ordinal(image, w.ordinal_w, w.ordinal_b), {c.height * c.width, c.d});
    table = concat_rows<T>({w.start, ordinal});
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t r = plan.rank[p];
      ids[p] = r == 0 ? 0 : 1 + plan.gen_order[r - 1];
    }
  }
  Tensor<T> x = embedding_gather(table, ids);
  x = add(x, w.coords ? *w.coords : constant_table<T>(rt.decoder_coords, n, c.d));
  if (w.classes) x = add_class_embedding(x, *class_id, *w.classes);
  return x;
}

template <class T>
Tensor<T> encode(const ModelConfig& c, const ModelRuntime& rt, const ModelWeights<T>& w,
                 const Image& source, Rng& rng, bool training) {
  if (!c.encoder_decoder()) throw ConfigError("model has no encoder");
  const std::size_t m = c.n_source_positions();
  EmbeddingTables<T> tables;
  tables.source = w.source_embed;
  Tensor<T> x = reshape(embed_categorical(flatten_raster(source), source.height(), source.width(),
                                          tables, EmbeddingRole::kSource),
                        {m, c.d});
  x = add(x, w.source_coords ? *w.source_coords : constant_table<T>(rt.encoder_coords, m, c.d));
  for (const auto& l : w.encoder) x = run_layer<T>(x, l, rt.encoder_layout, nullptr, rng, training);
  return layernorm(x, w.encoder_norm.gain, w.encoder_norm.bias, T(kLayerNormEps));
}

template <class T>
ForwardResult<T> forward(const ModelConfig& c, const ModelRuntime& rt, const ModelWeights<T>& w,
                         const Example& e, Rng& rng, bool training, const Tensor<T>* encoded) {
  check_example(c, e);
  std::optional<Tensor<T>> enc;
  if (encoded)
    enc = *encoded;
  else if (c.encoder_decoder())
    enc = encode(c, rt, w, *e.source, rng, training);
  Tensor<T> x = decoder_inputs(c, rt, w, *e.image, e.class_id);
  for (const auto& l : w.decoder)
    x = run_layer<T>(x, l, rt.decoder_layout, enc ? &*enc : nullptr, rng, training);
  x = layernorm(x, w.final_norm.gain, w.final_norm.bias, T(kLayerNormEps));

  ForwardResult<T> r;
  if (w.head_w.size() == kChannels) {
    const std::size_t n = c.n_positions();
    std::vector<Tensor<T>> parts;
    std::vector<std::size_t> inverse(n);
    std::size_t offset = 0;
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
      std::vector<std::size_t> rows;
      for (std::size_t p = ch; p < n; p += kChannels) {
        inverse[p] = offset + rows.size();
        rows.push_back(p);
      }
      offset += rows.size();
      parts.push_back(add_rowvec(matmul(embedding_gather(x, rows), w.head_w[ch]), w.head_b[ch]));
    }
    r.outputs = embedding_gather(concat_rows(parts), inverse);
  } else {
    r.outputs = add_rowvec(matmul(x, w.head_w[0]), w.head_b[0]);
  }
  const auto& targets = e.image->pixels();
  if (c.distribution == DistributionKind::kCategorical)
    r.loss = categorical_nll(r.outputs, targets, &r.position_nll);
  else
    r.loss = dmol_nll(r.outputs, targets, c.mixtures, &r.position_nll);
  double total = 0.0;
  for (double v : r.position_nll) total += v;
  r.nll = total;
  return r;
}

ImageTransformer::ImageTransformer(ModelConfig config, ParamSet<float> params)
    : config_(std::move(config)), params_(std::move(params)) {
  const auto layout = parameter_layout(config_);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (i >= params_.size())
      throw FormatError("missing tensor " + layout[i].name);
    if (params_.name(i) != layout[i].name)
      throw FormatError("tensor " + std::to_string(i) + " is " + params_.name(i) + ", expected " +
                        layout[i].name);
    if (params_.value(i).shape() != layout[i].shape)
      throw FormatError("tensor " + layout[i].name + " has shape " +
                        shape_string(params_.value(i).shape()) + ", expected " +
                        shape_string(layout[i].shape));
  }
  if (params_.size() > layout.size())
    throw FormatError("unexpected tensor " + params_.name(layout.size()));
  runtime_ = make_runtime(config_);
}

ImageTransformer ImageTransformer::build(const ModelConfig& config, Rng& rng) {
  ParamSet<float> params;
  for (const auto& entry : parameter_layout(config)) {
    const std::size_t n = shape_numel(entry.shape);
    std::vector<float> v(n, entry.init == InitKind::kOnes ? 1.0f : 0.0f);
    if (entry.init == InitKind::kXavier) {
      const double fan_in = static_cast<double>(entry.shape[0]);
      const double fan_out = static_cast<double>(entry.shape.size() > 1 ? entry.shape[1] : 1);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& x : v) x = static_cast<float>((2.0 * rng.uniform() - 1.0) * limit);
    }
    params.add(entry.name, Tensor<float>(entry.shape, std::move(v)));
  }
  return ImageTransformer(config, std::move(params));
}

ForwardResult<float> forward_train(const ImageTransformer& model, const Example& example, Rng& rng,
                                   bool training, Tape<float>* tape) {
  const auto w = bind_weights(model.config(), model.params(), tape);
  return forward(model.config(), model.runtime(), w, example, rng, training);
}

Tensor<float> encode(const ImageTransformer& model, const Image& source) {
  const auto w = bind_weights(model.config(), model.params());
  Rng rng(0);
  return encode(model.config(), model.runtime(), w, source, rng, false);
}

#define IMGT_INSTANTIATE(T)                                                                     \
  template ModelWeights<T> bind_weights<T>(const ModelConfig&, const ParamSet<T>&, Tape<T>*);  \
  template ForwardResult<T> forward<T>(const ModelConfig&, const ModelRuntime&,                \
                                       const ModelWeights<T>&, const Example&, Rng&, bool,  \
                                       const Tensor<T>*);    \
  template Tensor<T> encode<T>(const ModelConfig&, const ModelRuntime&, const ModelWeights<T>&, \
                               const Image&, Rng&, bool);                                      \
  template Tensor<T> decoder_inputs<T>(const ModelConfig&, const ModelRuntime&,                \
                                       const ModelWeights<T>&, const Image&,                   \
                                       std::optional<std::size_t>);

IMGT_INSTANTIATE(float)
IMGT_INSTANTIATE(double)

}  // namespace imgt
