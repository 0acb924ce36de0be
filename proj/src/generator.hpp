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
#include <vector>

#include "image.hpp"
#include "model.hpp"

namespace imgt {

struct SamplerConfig {
  double temperature = 1.0;
  std::uint64_t seed = 0;
  // Stop after this many generation ranks; 0 means all. Unsampled
  // positions stay 0.
  std::size_t max_positions = 0;
  // Incremental decoding with per-layer key/value caches. The full
  // re-evaluation path gives bit-identical results, only slower.
  bool use_cache = true;
};

struct GenerationStats {
  std::size_t encoder_calls = 0;
  std::size_t decoder_steps = 0;
  // Attention reads of positions not generated yet; always 0 unless the
  // masks are broken.
  std::size_t unknown_reads = 0;
};

Image generate(const ImageTransformer& model, const SamplerConfig& cfg,
               std::optional<std::size_t> class_id = std::nullopt, const Image* source = nullptr,
               GenerationStats* stats = nullptr);

// Copies the first `known_ranks` generation ranks from `partial` and samples
// the rest.
Image complete(const ImageTransformer& model, const Image& partial, std::size_t known_ranks,
               const SamplerConfig& cfg, std::optional<std::size_t> class_id = std::nullopt,
               const Image* source = nullptr, GenerationStats* stats = nullptr);

// Encoder-decoder generation conditioned on `low`.
Image superres(const ImageTransformer& model, const Image& low, const SamplerConfig& cfg,
               GenerationStats* stats = nullptr);

// Sum over generation ranks of -log p(true value | true values before it),
// evaluated one step at a time. Per-position values (raster order) go to
// `per_position` when given.
double sequential_nll(const ImageTransformer& model, const Image& img,
                      std::optional<std::size_t> class_id = std::nullopt,
                      const Image* source = nullptr, bool use_cache = true,
                      std::vector<double>* per_position = nullptr);

// Mean squared distance in [0, 1] intensity space between `low` and the
// area-downsampled `sample`.
double consistency(const Image& low, const Image& sample);

}  // namespace imgt
