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
#include "imgt/imgt.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "blocks.hpp"
#include "errors.hpp"
#include "generator.hpp"
#include "io.hpp"
#include "trainer.hpp"

struct imgt_model {
  imgt::RunConfig config;
  imgt::ImageTransformer model;
};

namespace {

thread_local std::string g_last_error;

template <class F>
imgt_status guard(F&& f) {
  try {
    f();
    g_last_error.clear();
    return IMGT_OK;
  } catch (const imgt::Error& e) {
    g_last_error = e.what();
    return static_cast<imgt_status>(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return IMGT_ERR_INTERNAL;
}

void require(const void* p, const char* what) {
  if (!p) throw imgt::ConfigError(std::string(what) + " is NULL");
}

template <class T>
T* copy_out(const T* data, std::size_t n) {
  T* out = static_cast<T*>(std::malloc(n ? n * sizeof(T) : 1));
  if (!out) throw std::bad_alloc();
  if (n) std::memcpy(out, data, n * sizeof(T));
  return out;
}

std::optional<std::size_t> class_arg(int64_t class_id) {
  if (class_id < 0) return std::nullopt;
  return static_cast<std::size_t>(class_id);
}

imgt::Image wrap(const uint8_t* px, std::size_t h, std::size_t w) {
  return imgt::Image(h, w, std::vector<std::uint8_t>(px, px + h * w * imgt::kChannels));
}

void store(const imgt::Image& img, uint8_t* out) {
  std::memcpy(out, img.pixels().data(), img.size());
}

imgt_model* create(imgt::RunConfig config, int64_t seed) {
  imgt::Rng rng(seed < 0 ? config.train.seed : static_cast<std::uint64_t>(seed));
  auto model = imgt::ImageTransformer::build(config.model, rng);
  return new imgt_model{std::move(config), std::move(model)};
}

std::vector<imgt::Sample> samples_for(const imgt_model* m, const char* data_path,
                                      const char* labels_path) {
  require(data_path, "data path");
  const auto images = imgt::load_images(data_path);
  std::vector<std::size_t> labels;
  if (labels_path) labels = imgt::read_labels(labels_path);
  return imgt::make_samples(m->model.config(), images, labels_path ? &labels : nullptr);
}

}  // namespace

extern "C" {

const char* imgt_last_error(void) { return g_last_error.c_str(); }

void imgt_free(void* buffer) { std::free(buffer); }

imgt_status imgt_model_create(const char* config_text, int64_t seed, imgt_model** out) {
  return guard([&] {
    require(config_text, "config text");
    require(out, "out");
    *out = create(imgt::parse_config(config_text), seed);
  });
}

imgt_status imgt_model_create_from_file(const char* config_path, int64_t seed, imgt_model** out) {
  return guard([&] {
    require(config_path, "config path");
    require(out, "out");
    *out = create(imgt::read_config(config_path), seed);
  });
}

imgt_status imgt_model_load(const char* checkpoint_path, imgt_model** out) {
  return guard([&] {
    require(checkpoint_path, "checkpoint path");
    require(out, "out");
    auto ckpt = imgt::load_checkpoint(checkpoint_path);
    *out = new imgt_model{std::move(ckpt.config), std::move(ckpt.model)};
  });
}

imgt_status imgt_model_save(const imgt_model* model, const char* checkpoint_path) {
  return guard([&] {
    require(model, "model");
    require(checkpoint_path, "checkpoint path");
    imgt::save_checkpoint(checkpoint_path, model->config, model->model);
  });
}

void imgt_model_free(imgt_model* model) { delete model; }

imgt_status imgt_model_info_get(const imgt_model* model, imgt_model_info* out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    const auto& c = model->model.config();
    out->height = c.height;
    out->width = c.width;
    out->source_height = c.encoder_decoder() ? c.source_height : 0;
    out->source_width = c.encoder_decoder() ? c.source_width : 0;
    out->classes = c.n_classes;
    out->positions = c.n_positions();
    out->param_count = model->model.count_params();
    out->encoder_decoder = c.encoder_decoder() ? 1 : 0;
  });
}

imgt_status imgt_train(imgt_model* model, const char* data_path, const char* labels_path,
                       int64_t steps, int64_t seed, imgt_log_fn log, void* user) {
  return guard([&] {
    require(model, "model");
    const auto data = samples_for(model, data_path, labels_path);
    imgt::TrainConfig cfg = model->config.train;
    if (steps >= 0) cfg.steps = static_cast<std::size_t>(steps);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    imgt::LogCallback cb;
    if (log)
      cb = [log, user](const imgt::LogEntry& e) { log(imgt::format_log_line(e).c_str(), user); };
    imgt::train(model->model, data, cfg, cb);
    model->config.train = cfg;
  });
}

imgt_status imgt_eval(const imgt_model* model, const char* data_path, const char* labels_path,
                      double* bits_per_dim) {
  return guard([&] {
    require(model, "model");
    require(bits_per_dim, "bits_per_dim");
    *bits_per_dim = imgt::evaluate(model->model, samples_for(model, data_path, labels_path));
  });
}

imgt_status imgt_sample(const imgt_model* model, double temperature, uint64_t seed,
                        int64_t class_id, uint8_t* out_pixels) {
  return guard([&] {
    require(model, "model");
    require(out_pixels, "output buffer");
    if (model->model.config().encoder_decoder())
      throw imgt::ConfigError("encoder-decoder models sample through superres");
    imgt::SamplerConfig cfg;
    cfg.temperature = temperature;
    cfg.seed = seed;
    store(imgt::generate(model->model, cfg, class_arg(class_id)), out_pixels);
  });
}

imgt_status imgt_complete(const imgt_model* model, const uint8_t* partial, size_t prefix_ranks,
                          double temperature, uint64_t seed, int64_t class_id,
                          uint8_t* out_pixels) {
  return guard([&] {
    require(model, "model");
    require(partial, "partial image");
    require(out_pixels, "output buffer");
    if (model->model.config().encoder_decoder())
      throw imgt::ConfigError("completion needs a decoder-only model");
    const auto& c = model->model.config();
    imgt::SamplerConfig cfg;
    cfg.temperature = temperature;
    cfg.seed = seed;
    store(imgt::complete(model->model, wrap(partial, c.height, c.width), prefix_ranks, cfg,
                         class_arg(class_id)),
          out_pixels);
  });
}

imgt_status imgt_superres(const imgt_model* model, const uint8_t* low, double temperature,
                          uint64_t seed, uint8_t* out_pixels) {
  return guard([&] {
    require(model, "model");
    require(low, "low-resolution image");
    require(out_pixels, "output buffer");
    const auto& c = model->model.config();
    if (!c.encoder_decoder()) throw imgt::ConfigError("superres needs an encoder-decoder model");
    imgt::SamplerConfig cfg;
    cfg.temperature = temperature;
    cfg.seed = seed;
    store(imgt::superres(model->model, wrap(low, c.source_height, c.source_width), cfg),
          out_pixels);
  });
}

imgt_status imgt_inspect_mask(const char* config_text, size_t block, uint8_t** out, size_t* rows,
                              size_t* cols) {
  return guard([&] {
    require(config_text, "config text");
    require(out, "out");
    require(rows, "rows");
    require(cols, "cols");
    const auto c = imgt::parse_config(config_text).model;
    const auto plan = imgt::make_plan(c.scheme, c.height, c.width, c.positions_per_pixel());
    if (block >= plan.blocks.size())
      throw imgt::RangeError("block " + std::to_string(block) + " out of range; plan has " +
                             std::to_string(plan.blocks.size()) + " blocks");
    const auto mask = imgt::build_mask(plan, block, c.self_inclusive);
    std::vector<std::uint8_t> gray(mask.permitted.size());
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = mask.permitted[i] ? 255 : 0;
    *out = copy_out(gray.data(), gray.size());
    *rows = mask.rows;
    *cols = mask.cols;
  });
}

imgt_status imgt_gradcheck(const char* config_text, uint64_t seed, double* max_rel_error,
                           size_t* coordinates, size_t* unresolved) {
  return guard([&] {
    require(config_text, "config text");
    require(max_rel_error, "max_rel_error");
    const auto report = imgt::model_gradient_check(imgt::parse_config(config_text).model, seed);
    *max_rel_error = report.max_rel_error;
    if (coordinates) *coordinates = report.checks.size();
    if (unresolved) *unresolved = report.unresolved.size();
  });
}

imgt_status imgt_read_ppm(const char* path, uint8_t** pixels, size_t* height, size_t* width) {
  return guard([&] {
    require(path, "path");
    require(pixels, "pixels");
    require(height, "height");
    require(width, "width");
    const auto img = imgt::read_ppm(path);
    *pixels = copy_out(img.pixels().data(), img.size());
    *height = img.height();
    *width = img.width();
  });
}

imgt_status imgt_write_ppm(const char* path, const uint8_t* pixels, size_t height, size_t width) {
  return guard([&] {
    require(path, "path");
    require(pixels, "pixels");
    imgt::write_ppm(path, wrap(pixels, height, width));
  });
}

imgt_status imgt_write_pgm(const char* path, const uint8_t* gray, size_t height, size_t width) {
  return guard([&] {
    require(path, "path");
    require(gray, "gray");
    imgt::write_pgm(path, height, width, std::vector<std::uint8_t>(gray, gray + height * width));
  });
}

imgt_status imgt_pack_dataset(const char* dir, const char* out_path, size_t* count) {
  return guard([&] {
    require(dir, "dir");
    require(out_path, "out path");
    const std::size_t n = imgt::pack_dataset(dir, out_path);
    if (count) *count = n;
  });
}

imgt_status imgt_read_file(const char* path, char** text, size_t* length) {
  return guard([&] {
    require(path, "path");
    require(text, "text");
    const std::string s = imgt::read_file(path);
    char* buf = static_cast<char*>(std::malloc(s.size() + 1));
    if (!buf) throw std::bad_alloc();
    std::memcpy(buf, s.data(), s.size());
    buf[s.size()] = '\0';
    *text = buf;
    if (length) *length = s.size();
  });
}

}  // extern "C"
