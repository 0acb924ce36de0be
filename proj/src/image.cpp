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
#include "image.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace imgt {

Image::Image(std::size_t height, std::size_t width)
    : height_(height), width_(width), pixels_(height * width * kChannels, 0) {
  if (height == 0 || width == 0) throw ShapeError("image extents must be positive");
}

Image::Image(std::size_t height, std::size_t width, std::vector<std::uint8_t> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (height == 0 || width == 0) throw ShapeError("image extents must be positive");
  if (pixels_.size() != height * width * kChannels)
    throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) + " needs " +
                     std::to_string(height * width * kChannels) + " values, got " +
                     std::to_string(pixels_.size()));
}

std::vector<PixelChannel> flatten_raster(const Image& img) {
  std::vector<PixelChannel> seq;
  seq.reserve(img.size());
  for (std::size_t r = 0; r < img.height(); ++r)
    for (std::size_t c = 0; c < img.width(); ++c)
      for (std::size_t ch = 0; ch < kChannels; ++ch) seq.push_back({img.at(r, c, ch), r, c, ch});
  return seq;
}

Image unflatten_raster(const std::vector<PixelChannel>& seq, std::size_t height,
                       std::size_t width) {
  Image img(height, width);
  if (seq.size() != img.size())
    throw ShapeError("sequence of " + std::to_string(seq.size()) + " does not fill a " +
                     std::to_string(height) + "x" + std::to_string(width) + " image");
  for (const PixelChannel& pc : seq) {
    if (pc.row >= height || pc.col >= width || pc.channel >= kChannels)
      throw RangeError("pixel-channel coordinate outside the image");
    img.set(pc.row, pc.col, pc.channel, pc.intensity);
  }
  return img;
}

namespace {

void check_factor(const Image& img, std::size_t factor) {
  if (factor == 0 || img.height() % factor != 0 || img.width() % factor != 0)
    throw ShapeError("cannot downsample " + std::to_string(img.height()) + "x" +
                     std::to_string(img.width()) + " by " + std::to_string(factor));
}

}  // namespace

std::vector<double> downsample_area_unit(const Image& img, std::size_t factor) {
  check_factor(img, factor);
  const std::size_t h = img.height() / factor, w = img.width() / factor;
  std::vector<double> out(h * w * kChannels, 0.0);
  const double area = static_cast<double>(factor * factor);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t ch = 0; ch < kChannels; ++ch) {
        double s = 0.0;
        for (std::size_t dr = 0; dr < factor; ++dr)
          for (std::size_t dc = 0; dc < factor; ++dc)
            s += img.at(r * factor + dr, c * factor + dc, ch);
        out[(r * w + c) * kChannels + ch] = s / area / 255.0;
      }
  return out;
}

Image downsample_area(const Image& img, std::size_t factor) {
  check_factor(img, factor);
  const std::size_t h = img.height() / factor, w = img.width() / factor;
  Image out(h, w);
  const std::size_t area = factor * factor;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t ch = 0; ch < kChannels; ++ch) {
        std::size_t s = 0;
        for (std::size_t dr = 0; dr < factor; ++dr)
          for (std::size_t dc = 0; dc < factor; ++dc) s += img.at(r * factor + dr, c * factor + dc, ch);
        // Integer half-up equals half-away-from-zero for non-negative sums.
        out.set(r, c, ch, static_cast<std::uint8_t>((2 * s + area) / (2 * area)));
      }
  return out;
}

Image upsample_nearest(const Image& img, std::size_t factor) {
  if (factor == 0) throw ShapeError("upsample factor must be positive");
  Image out(img.height() * factor, img.width() * factor);
  for (std::size_t r = 0; r < out.height(); ++r)
    for (std::size_t c = 0; c < out.width(); ++c)
      for (std::size_t ch = 0; ch < kChannels; ++ch) out.set(r, c, ch, img.at(r / factor, c / factor, ch));
  return out;
}

Image random_image(std::size_t height, std::size_t width, Rng& rng) {
  Image img(height, width);
  for (std::size_t p = 0; p < img.size(); ++p) img[p] = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace imgt
