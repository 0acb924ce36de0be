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

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attention.hpp"
#include "blocks.hpp"
#include "distributions.hpp"
#include "image.hpp"
#include "image_repr.hpp"
#include "params.hpp"
#include "tensor.hpp"

namespace imgt {

enum class ModelMode { kDecoderOnly, kEncoderDecoder };

struct ModelConfig {
  ModelMode mode = ModelMode::kDecoderOnly;
  std::size_t layers = 2;
  std::size_t encoder_layers = 0;
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t d_ff = 128;
  double dropout = 0.0;
  Scheme scheme{SchemeKind::kLocal1d, 16, 16};
  DistributionKind distribution = DistributionKind::kCategorical;
  std::size_t mixtures = 10;
  CoordinateKind coord_encoding = CoordinateKind::kSinusoidal;
  // 0 means unconditioned.
  std::size_t n_classes = 0;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t source_height = 0;
  std::size_t source_width = 0;
  // One output projection per color channel instead of a shared one.
  bool per_channel_head = false;
  // Let positions attend to their own slot in the decoder.
  bool self_inclusive = false;

  bool encoder_decoder() const { return mode == ModelMode::kEncoderDecoder; }
  // Decoder positions per pixel: 3 channels (categorical) or 1 pixel (DMOL).
  std::size_t positions_per_pixel() const {
    return distribution == DistributionKind::kDmol ? 1 : kChannels;
  }
  // Intensity values per decoder position.
  std::size_t per_pixel_values() const { return kChannels / positions_per_pixel(); }
  std::size_t n_positions() const { return height * width * positions_per_pixel(); }
  std::size_t n_source_positions() const { return source_height * source_width * kChannels; }

  // Throws ConfigError describing the first inconsistency.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Architectures of the published runs: "cifar-cat", "cifar-dmol",
// "imagenet", "cifar-small". All use 32x32 images and 1D local attention
// with 256-position query blocks and a 512-position memory block.
ModelConfig preset_config(std::string_view name);

enum class InitKind { kXavier, kZeros, kOnes };

struct ParamSpec {
  std::string name;
  Shape shape;
  InitKind init;
};

// Every learnable tensor of a configuration, in registration order.
std::vector<ParamSpec> parameter_layout(const ModelConfig& config);

// Derived, parameter-free structures: block plan, attention layouts and
// sinusoidal tables.
struct ModelRuntime {
  BlockPlan plan;
  std::shared_ptr<const AttentionLayout> decoder_layout;
  std::shared_ptr<const AttentionLayout> encoder_layout;
  std::vector<double> decoder_coords;  // [n_positions, d], sinusoidal only
  std::vector<double> encoder_coords;  // [n_source_positions, d]
};

std::shared_ptr<const ModelRuntime> make_runtime(const ModelConfig& config);

template <class T>
struct ModelWeights {
  Tensor<T> start;
  Tensor<T> embed;                        // categorical decoder inputs [256, d]
  Tensor<T> ordinal_w, ordinal_b;         // DMOL decoder inputs [3, d], [d]
  std::optional<Tensor<T>> coords;        // learned decoder coordinates
  std::optional<Tensor<T>> classes;
  std::vector<LayerParams<T>> decoder;
  NormParams<T> final_norm;
  std::vector<Tensor<T>> head_w, head_b;  // 1 shared or 3 per-channel
  std::array<Tensor<T>, kChannels> source_embed;
  std::optional<Tensor<T>> source_coords;
  std::vector<LayerParams<T>> encoder;
  NormParams<T> encoder_norm;
};

// Views the parameters as a structured bundle; with a tape, every tensor is
// watched under its ParamSet index.
template <class T>
ModelWeights<T> bind_weights(const ModelConfig& config, const ParamSet<T>& params,
                             Tape<T>* tape = nullptr);

struct Example {
  const Image* image = nullptr;
  std::optional<std::size_t> class_id;
  const Image* source = nullptr;
};

template <class T>
struct ForwardResult {
  Tensor<T> loss;                     // summed NLL in nats, differentiable
  double nll = 0.0;                   // same sum accumulated in double
  std::vector<double> position_nll;   // per decoder position, raster order
  Tensor<T> outputs;                  // logits [n, 256] or DMOL params [n, 10K]
};

// Teacher-forced evaluation. The decoder input at generation rank r is the
// embedding of the true value at rank r - 1; rank 0 receives the learned
// start vector. A precomputed encoder output may be passed to skip the
// encoder.
template <class T>
ForwardResult<T> forward(const ModelConfig& config, const ModelRuntime& runtime,
                         const ModelWeights<T>& weights, const Example& example, Rng& rng,
                         bool training, const Tensor<T>* encoded = nullptr);

// Encoder stack over the flattened source image, [h_s * w_s * 3, d].
template <class T>
Tensor<T> encode(const ModelConfig& config, const ModelRuntime& runtime,
                 const ModelWeights<T>& weights, const Image& source, Rng& rng, bool training);

// Decoder input embedding (start/shifted values + coordinates + class) for
// every position of `image`; shared with the cached decoder.
template <class T>
Tensor<T> decoder_inputs(const ModelConfig& config, const ModelRuntime& runtime,
                         const ModelWeights<T>& weights, const Image& image,
                         std::optional<std::size_t> class_id);

class ImageTransformer {
 public:
  // Checks that `params` matches the configuration's layout tensor by
  // tensor; throws FormatError naming the first mismatch.
  ImageTransformer(ModelConfig config, ParamSet<float> params);

  static ImageTransformer build(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  const ParamSet<float>& params() const { return params_; }
  ParamSet<float>& mutable_params() { return params_; }
  const ModelRuntime& runtime() const { return *runtime_; }
  std::size_t count_params() const { return params_.total_scalars(); }

 private:
  ModelConfig config_;
  ParamSet<float> params_;
  std::shared_ptr<const ModelRuntime> runtime_;
};

void check_example(const ModelConfig& config, const Example& example);

// Single-precision teacher-forced pass; records on `tape` when given.
ForwardResult<float> forward_train(const ImageTransformer& model, const Example& example, Rng& rng,
                                   bool training, Tape<float>* tape = nullptr);

Tensor<float> encode(const ImageTransformer& model, const Image& source);

}  // namespace imgt
