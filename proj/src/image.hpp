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
#include <vector>

#include "rng.hpp"

namespace imgt {

inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kIntensities = 256;

// 8-bit RGB image, row-major, channel-minor.
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width);
  Image(std::size_t height, std::size_t width, std::vector<std::uint8_t> pixels);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  // Number of pixel-channel values, h * w * 3.
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t at(std::size_t row, std::size_t col, std::size_t channel) const {
    return pixels_[(row * width_ + col) * kChannels + channel];
  }
  void set(std::size_t row, std::size_t col, std::size_t channel, std::uint8_t v) {
    pixels_[(row * width_ + col) * kChannels + channel] = v;
  }
  // Flat raster index p = (row * w + col) * 3 + channel.
  std::uint8_t operator[](std::size_t p) const { return pixels_[p]; }
  std::uint8_t& operator[](std::size_t p) { return pixels_[p]; }

  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> pixels_;
};

struct PixelChannel {
  std::uint8_t intensity;
  std::size_t row;
  std::size_t col;
  std::size_t channel;

  friend bool operator==(const PixelChannel&, const PixelChannel&) = default;
};

// Raster-scan order: pixels row-major, R, G, B within each pixel.
std::vector<PixelChannel> flatten_raster(const Image& img);
Image unflatten_raster(const std::vector<PixelChannel>& seq, std::size_t height,
                       std::size_t width);

// Box-filter (area) downsampling by an integer factor. Means are rounded
// half away from zero.
Image downsample_area(const Image& img, std::size_t factor);
// Unrounded box-filter means, scaled to [0, 1].
std::vector<double> downsample_area_unit(const Image& img, std::size_t factor);

Image upsample_nearest(const Image& img, std::size_t factor);

Image random_image(std::size_t height, std::size_t width, Rng& rng);

}  // namespace imgt
