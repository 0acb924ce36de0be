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
// Command-line front end. Talks to the library only through imgt/imgt.h.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "imgt/imgt.h"

namespace {

struct Failure {
  imgt_status status;
};

void check(imgt_status s) {
  if (s != IMGT_OK) throw Failure{s};
}

struct ModelDeleter {
  void operator()(imgt_model* m) const { imgt_model_free(m); }
};
using Model = std::unique_ptr<imgt_model, ModelDeleter>;

struct BufferDeleter {
  void operator()(void* p) const { imgt_free(p); }
};

Model load(const std::string& ckpt) {
  imgt_model* m = nullptr;
  check(imgt_model_load(ckpt.c_str(), &m));
  return Model(m);
}

imgt_model_info info(const Model& m) {
  imgt_model_info i{};
  check(imgt_model_info_get(m.get(), &i));
  return i;
}

std::string read_text(const std::string& path) {
  char* text = nullptr;
  size_t n = 0;
  check(imgt_read_file(path.c_str(), &text, &n));
  std::unique_ptr<char, BufferDeleter> hold(text);
  return std::string(text, n);
}

struct Picture {
  std::vector<uint8_t> pixels;
  size_t height = 0, width = 0;
};

Picture read_picture(const std::string& path) {
  uint8_t* px = nullptr;
  Picture p;
  check(imgt_read_ppm(path.c_str(), &px, &p.height, &p.width));
  std::unique_ptr<uint8_t, BufferDeleter> hold(px);
  p.pixels.assign(px, px + p.height * p.width * 3);
  return p;
}

void expect_size(const Picture& p, size_t h, size_t w, const char* what) {
  if (p.height != h || p.width != w) {
    std::fprintf(stderr, "imgt: error: %s is %zux%zu, model expects %zux%zu\n", what, p.height,
                 p.width, h, w);
    throw Failure{IMGT_ERR_USAGE};
  }
}

void print_log(const char* line, void*) {
  std::printf("%s\n", line);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"imgt: train, evaluate and sample autoregressive image models"};
  app.require_subcommand(1);

  std::string config, data, out, ckpt, image, low, labels;
  int64_t steps = -1, seed = -1, class_id = -1;
  uint64_t sample_seed = 0;
  size_t n = 1, prefix = 0, block = 0;
  double temperature = 1.0;

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  train->add_option("--config", config, "config file")->required();
  train->add_option("--data", data, "packed dataset or directory of PPMs")->required();
  train->add_option("--out", out, "checkpoint to write")->required();
  train->add_option("--steps", steps, "override the configured step count");
  train->add_option("--seed", seed, "override the configured seed");
  train->add_option("--labels", labels, "class ids, one per line");

  auto* eval = app.add_subcommand("eval", "print mean bits/dim on a dataset");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--data", data)->required();
  eval->add_option("--labels", labels);

  auto* sample = app.add_subcommand("sample", "write unconditional or class-conditional samples");
  sample->add_option("--ckpt", ckpt)->required();
  sample->add_option("--n", n, "number of images");
  sample->add_option("--temperature", temperature);
  sample->add_option("--seed", sample_seed);
  sample->add_option("--class", class_id);
  sample->add_option("--out", out, "output directory")->required();

  auto* comp = app.add_subcommand("complete", "keep a prefix of an image and sample the rest");
  comp->add_option("--ckpt", ckpt)->required();
  comp->add_option("--image", image)->required();
  comp->add_option("--prefix", prefix, "known positions in generation order")->required();
  comp->add_option("--temperature", temperature);
  comp->add_option("--seed", sample_seed);
  comp->add_option("--class", class_id);
  comp->add_option("--out", out)->required();

  auto* sr = app.add_subcommand("superres", "upscale a low-resolution image");
  sr->add_option("--ckpt", ckpt)->required();
  sr->add_option("--low", low)->required();
  sr->add_option("--temperature", temperature);
  sr->add_option("--seed", sample_seed);
  sr->add_option("--out", out)->required();

  auto* mask = app.add_subcommand("inspect-mask", "render one block's attention mask as PGM");
  mask->add_option("--config", config)->required();
  mask->add_option("--block", block)->required();
  mask->add_option("--out", out)->required();

  auto* grad = app.add_subcommand("gradcheck", "compare gradients with finite differences");
  grad->add_option("--config", config)->required();
  grad->add_option("--seed", sample_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return IMGT_ERR_USAGE;
  }

  try {
    if (*train) {
      imgt_model* raw = nullptr;
      check(imgt_model_create_from_file(config.c_str(), seed, &raw));
      Model m(raw);
      check(imgt_train(m.get(), data.c_str(), labels.empty() ? nullptr : labels.c_str(), steps,
                       seed, print_log, nullptr));
      check(imgt_model_save(m.get(), out.c_str()));
    } else if (*eval) {
      const Model m = load(ckpt);
      double bpd = 0.0;
      check(imgt_eval(m.get(), data.c_str(), labels.empty() ? nullptr : labels.c_str(), &bpd));
      std::printf("%.4f\n", bpd);
    } else if (*sample) {
      const Model m = load(ckpt);
      const auto i = info(m);
      std::error_code ec;
      std::filesystem::create_directories(out, ec);
      if (ec) {
        std::fprintf(stderr, "imgt: error: cannot create %s\n", out.c_str());
        return IMGT_ERR_IO;
      }
      std::vector<uint8_t> px(i.height * i.width * 3);
      for (size_t k = 0; k < n; ++k) {
        check(imgt_sample(m.get(), temperature, sample_seed + k, class_id, px.data()));
        char name[32];
        std::snprintf(name, sizeof name, "sample_%04zu.ppm", k);
        const std::string path = (std::filesystem::path(out) / name).string();
        check(imgt_write_ppm(path.c_str(), px.data(), i.height, i.width));
      }
    } else if (*comp) {
      const Model m = load(ckpt);
      const auto i = info(m);
      const Picture in = read_picture(image);
      expect_size(in, i.height, i.width, "image");
      std::vector<uint8_t> px(in.pixels.size());
      check(imgt_complete(m.get(), in.pixels.data(), prefix, temperature, sample_seed, class_id,
                          px.data()));
      check(imgt_write_ppm(out.c_str(), px.data(), i.height, i.width));
    } else if (*sr) {
      const Model m = load(ckpt);
      const auto i = info(m);
      const Picture in = read_picture(low);
      expect_size(in, i.source_height, i.source_width, "low-resolution image");
      std::vector<uint8_t> px(i.height * i.width * 3);
      check(imgt_superres(m.get(), in.pixels.data(), temperature, sample_seed, px.data()));
      check(imgt_write_ppm(out.c_str(), px.data(), i.height, i.width));
    } else if (*mask) {
      const std::string text = read_text(config);
      uint8_t* gray = nullptr;
      size_t rows = 0, cols = 0;
      check(imgt_inspect_mask(text.c_str(), block, &gray, &rows, &cols));
      std::unique_ptr<uint8_t, BufferDeleter> hold(gray);
      check(imgt_write_pgm(out.c_str(), gray, rows, cols));
      std::printf("%zu x %zu\n", rows, cols);
    } else if (*grad) {
      const std::string text = read_text(config);
      double err = 0.0;
      size_t coords = 0, unresolved = 0;
      check(imgt_gradcheck(text.c_str(), sample_seed, &err, &coords, &unresolved));
      std::printf("max_rel_error=%.3e coordinates=%zu unresolved=%zu\n", err, coords, unresolved);
      if (!(err < 1e-4)) return IMGT_ERR_NUMERIC;
    }
  } catch (const Failure& f) {
    const char* msg = imgt_last_error();
    if (msg && *msg) std::fprintf(stderr, "imgt: error: %s\n", msg);
    return f.status;
  }
  return 0;
}
