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
#include <string>
#include <string_view>
#include <vector>

#include "image.hpp"
#include "model.hpp"
#include "trainer.hpp"

namespace imgt {

// ---- netpbm ----------------------------------------------------------------

// Binary P6 with maxval 255.
Image decode_ppm(std::string_view bytes);
std::string encode_ppm(const Image& img);
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// Binary P5 graymap, row-major.
std::string encode_pgm(std::size_t height, std::size_t width, const std::vector<std::uint8_t>& gray);
void write_pgm(const std::string& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& gray);

// ---- packed datasets -------------------------------------------------------

// "IMDS", u32 version, u32 count, u16 height, u16 width, then raw pixels.
std::string encode_dataset(const std::vector<Image>& images);
std::vector<Image> decode_dataset(std::string_view bytes);
void save_dataset(const std::string& path, const std::vector<Image>& images);
std::vector<Image> load_dataset(const std::string& path);

// Every *.ppm in `dir`, sorted by filename.
std::vector<Image> read_ppm_dir(const std::string& dir);
// Packs `dir` into `out`; returns the image count.
std::size_t pack_dataset(const std::string& dir, const std::string& out);
// A packed file or a directory of PPMs.
std::vector<Image> load_images(const std::string& path);

// One non-negative integer per line; blank lines and # comments skipped.
std::vector<std::size_t> read_labels(const std::string& path);

// ---- configuration ---------------------------------------------------------

struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// `key = value` lines with # comments. `preset = NAME` is applied before
// every other key regardless of its position. Unknown keys are errors.
RunConfig parse_config(std::string_view text);
RunConfig read_config(const std::string& path);
// Writes every key; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& config);

// ---- checkpoints -----------------------------------------------------------

struct Checkpoint {
  RunConfig config;
  ImageTransformer model;
};

std::string encode_checkpoint(const RunConfig& config, const ImageTransformer& model);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::string& path, const RunConfig& config,
                     const ImageTransformer& model);
Checkpoint load_checkpoint(const std::string& path);
// Loads the tensors under `expected` instead of the stored configuration.
ImageTransformer load_checkpoint_as(const std::string& path, const ModelConfig& expected);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace imgt
