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
#include "image_repr.hpp"

#include <cmath>
#include <string>

namespace imgt {

template <class T>
Tensor<T> embed_categorical(const std::vector<PixelChannel>& seq, std::size_t height,
                            std::size_t width, const EmbeddingTables<T>& tables,
                            EmbeddingRole role) {
  if (seq.size() != height * width * kChannels)
    throw ShapeError("embed_categorical: sequence length " + std::to_string(seq.size()) +
                     " does not match a " + std::to_string(height) + "x" + std::to_string(width) +
                     " image");
  const std::size_t d = tables.width();
  std::vector<std::size_t> ids(seq.size());
  Tensor<T> emb;
  if (role == EmbeddingRole::kSource) {
    for (std::size_t i = 0; i < seq.size(); ++i) ids[i] = seq[i].channel * kIntensities + seq[i].intensity;
    const Tensor<T> table = concat_rows<T>({tables.source[0], tables.source[1], tables.source[2]});
    emb = embedding_gather(table, ids);
  } else {
    for (std::size_t i = 0; i < seq.size(); ++i) ids[i] = seq[i].intensity;
    emb = embedding_gather(tables.output, ids);
  }
  return reshape(emb, Shape{height, width * kChannels, d});
}

template <class T>
Tensor<T> ordinal_inputs(const Image& img) {
  std::vector<T> v(img.size());
  for (std::size_t p = 0; p < img.size(); ++p)
    v[p] = static_cast<T>(static_cast<double>(img[p]) / 127.5 - 1.0);
  return Tensor<T>(Shape{img.height() * img.width(), kChannels}, std::move(v));
}

template <class T>
Tensor<T> embed_ordinal(const Image& img, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (weights.rank() != 2 || weights.dim(0) != kChannels)
    throw ShapeError("embed_ordinal: weights must be [3, d], got " + shape_string(weights.shape()));
  const std::size_t d = weights.dim(1);
  Tensor<T> out = add_rowvec(matmul(ordinal_inputs<T>(img), weights), bias);
  return reshape(out, Shape{img.height(), img.width(), d});
}

std::vector<Coordinate> raster_coordinates(std::size_t height, std::size_t width,
                                           std::size_t per_pixel) {
  std::vector<Coordinate> coords;
  coords.reserve(height * width * per_pixel);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c)
      for (std::size_t ch = 0; ch < per_pixel; ++ch) coords.push_back({r, c * kChannels + ch});
  return coords;
}

template <class T>
Tensor<T> sinusoidal_encoding(const std::vector<Coordinate>& coords, std::size_t d) {
  if (d == 0 || d % 4 != 0)
    throw ConfigError("sinusoidal coordinate encoding needs d divisible by 4, got " +
                      std::to_string(d));
  const std::size_t half = d / 2;
  std::vector<T> out(coords.size() * d);
  for (std::size_t n = 0; n < coords.size(); ++n) {
    const double pos[2] = {static_cast<double>(coords[n].row),
                           static_cast<double>(coords[n].col_channel)};
    for (std::size_t part = 0; part < 2; ++part)
      for (std::size_t i = 0; i < half / 2; ++i) {
        const double freq =
            std::pow(10000.0, -static_cast<double>(2 * i) / static_cast<double>(half));
        const double angle = pos[part] * freq;
        out[n * d + part * half + 2 * i] = static_cast<T>(std::sin(angle));
        out[n * d + part * half + 2 * i + 1] = static_cast<T>(std::cos(angle));
      }
  }
  return Tensor<T>(Shape{coords.size(), d}, std::move(out));
}

template <class T>
Tensor<T> coordinate_encoding(CoordinateKind kind, std::size_t height, std::size_t width,
                              std::size_t d, const Tensor<T>* learned_table) {
  const Shape shape{height, width * kChannels, d};
  if (kind == CoordinateKind::kSinusoidal)
    return reshape(sinusoidal_encoding<T>(raster_coordinates(height, width), d), shape);
  if (d == 0 || d % 2 != 0)
    throw ConfigError("learned coordinate encoding needs even d, got " + std::to_string(d));
  if (!learned_table || learned_table->shape() != Shape{height * width * kChannels, d})
    throw ShapeError("learned coordinate encoding needs a [" +
                     std::to_string(height * width * kChannels) + ", " + std::to_string(d) +
                     "] table");
  return reshape(*learned_table, shape);
}

template <class T>
Tensor<T> add_class_embedding(const Tensor<T>& x, std::size_t class_id,
                              const Tensor<T>& class_table) {
  if (class_table.rank() != 2 || class_id >= class_table.dim(0))
    throw RangeError("class id " + std::to_string(class_id) + " out of range for " +
                     std::to_string(class_table.rank() == 2 ? class_table.dim(0) : 0) +
                     " classes");
  const std::size_t ids[1] = {class_id};
  const Tensor<T> row = reshape(embedding_gather(class_table, ids), Shape{class_table.dim(1)});
  return add_rowvec(x, row);
}

#define IMGT_INSTANTIATE(T)                                                                      \
  template Tensor<T> embed_categorical<T>(const std::vector<PixelChannel>&, std::size_t,         \
                                          std::size_t, const EmbeddingTables<T>&, EmbeddingRole); \
  template Tensor<T> ordinal_inputs<T>(const Image&);                                             \
  template Tensor<T> embed_ordinal<T>(const Image&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> sinusoidal_encoding<T>(const std::vector<Coordinate>&, std::size_t);        \
  template Tensor<T> coordinate_encoding<T>(CoordinateKind, std::size_t, std::size_t,            \
                                            std::size_t, const Tensor<T>*);                       \
  template Tensor<T> add_class_embedding<T>(const Tensor<T>&, std::size_t, const Tensor<T>&);

IMGT_INSTANTIATE(float)
IMGT_INSTANTIATE(double)

#undef IMGT_INSTANTIATE

}  // namespace imgt
