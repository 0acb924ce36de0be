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
#include <optional>
#include <vector>

#include "image.hpp"
#include "tensor.hpp"

namespace imgt {

// Input tables for the categorical representation. Source images (encoder
// side) use one 256 x d table per channel; previously generated intensities
// fed back into the decoder share a single separate 256 x d table.
template <class T>
struct EmbeddingTables {
  std::array<Tensor<T>, kChannels> source;
  Tensor<T> output;
  std::optional<Tensor<T>> classes;

  std::size_t width() const { return output.rank() == 2 ? output.dim(1) : source[0].dim(1); }
};

enum class EmbeddingRole { kSource, kDecoderInput };

enum class CoordinateKind { kSinusoidal, kLearned };

// Position of one sequence element for coordinate encoding: the row and the
// combined column-channel index col * 3 + channel.
struct Coordinate {
  std::size_t row;
  std::size_t col_channel;
};

// Embeds a raster-ordered sequence; result has shape [h, w * 3, d].
template <class T>
Tensor<T> embed_categorical(const std::vector<PixelChannel>& seq, std::size_t height,
                            std::size_t width, const EmbeddingTables<T>& tables,
                            EmbeddingRole role);

// Intensities mapped to [-1, 1] via v / 127.5 - 1, shape [h * w, 3].
template <class T>
Tensor<T> ordinal_inputs(const Image& img);

// 1x3 window, stride-3 convolution over each pixel's scaled channels:
// [h, w, d] = scaled[h, w, 3] x weights[3, d] + bias[d].
template <class T>
Tensor<T> embed_ordinal(const Image& img, const Tensor<T>& weights, const Tensor<T>& bias);

// Sinusoidal encoding of arbitrary coordinates, [coords.size(), d]. The
// first d/2 dims encode the row and the last d/2 the column-channel index,
// each as interleaved sin/cos pairs at frequencies 1 / 10000^(2i / (d/2)).
template <class T>
Tensor<T> sinusoidal_encoding(const std::vector<Coordinate>& coords, std::size_t d);

// Coordinates of every pixel-channel of an h x w image in raster order
// (per_pixel = 3), or of every pixel (per_pixel = 1, channel taken as 0).
std::vector<Coordinate> raster_coordinates(std::size_t height, std::size_t width,
                                           std::size_t per_pixel = kChannels);

// Sinusoidal encoding shaped like the categorical input, [h, w * 3, d].
template <class T>
Tensor<T> coordinate_encoding(CoordinateKind kind, std::size_t height, std::size_t width,
                              std::size_t d, const Tensor<T>* learned_table = nullptr);

// Adds the class vector to every position of x [.., d].
template <class T>
Tensor<T> add_class_embedding(const Tensor<T>& x, std::size_t class_id,
                              const Tensor<T>& class_table);

}  // namespace imgt
