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
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "imgt/imgt.h"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

const char* kConfig =
    "height = 4\nwidth = 4\nlayers = 1\nd = 8\nheads = 2\nd_ff = 8\nscheme = local1d\n"
    "l_q = 8\nl_m = 8\nsteps = 4\nwarmup = 10\neval_interval = 2\n";

void collect(const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); }

}  // namespace

TEST_CASE("model lifecycle through the C interface") {
  const fs::path dir = imgt::testing::scratch_dir("capi");
  fs::create_directories(dir / "data");
  std::vector<uint8_t> px(48);
  for (int n = 0; n < 3; ++n) {
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<uint8_t>(i * 5 + n * 40);
    REQUIRE(imgt_write_ppm((dir / "data" / ("i" + std::to_string(n) + ".ppm")).c_str(), px.data(), 4, 4) == IMGT_OK);
  }
  imgt_model* m = nullptr;
  REQUIRE(imgt_model_create(kConfig, 1, &m) == IMGT_OK);
  imgt_model_info info;
  REQUIRE(imgt_model_info_get(m, &info) == IMGT_OK);
  CHECK(info.height == 4);
  CHECK(info.positions == 48);
  CHECK(info.encoder_decoder == 0);

  std::vector<std::string> log;
  REQUIRE(imgt_train(m, (dir / "data").c_str(), nullptr, -1, -1, collect, &log) == IMGT_OK);
  CHECK(log.size() == 2);
  double bpd = 0;
  REQUIRE(imgt_eval(m, (dir / "data").c_str(), nullptr, &bpd) == IMGT_OK);
  CHECK(bpd > 0);

  const std::string ckpt = (dir / "m.ckpt").string();
  REQUIRE(imgt_model_save(m, ckpt.c_str()) == IMGT_OK);
  imgt_model* back = nullptr;
  REQUIRE(imgt_model_load(ckpt.c_str(), &back) == IMGT_OK);
  std::vector<uint8_t> s1(48), s2(48), c(48);
  REQUIRE(imgt_sample(m, 1.0, 9, -1, s1.data()) == IMGT_OK);
  REQUIRE(imgt_sample(back, 1.0, 9, -1, s2.data()) == IMGT_OK);
  CHECK(s1 == s2);
  REQUIRE(imgt_complete(m, px.data(), 12, 1.0, 3, -1, c.data()) == IMGT_OK);
  CHECK(std::memcmp(c.data(), px.data(), 12) == 0);
  CHECK(imgt_superres(m, px.data(), 1.0, 0, c.data()) == IMGT_ERR_USAGE);
  CHECK(std::string(imgt_last_error()).find("encoder") != std::string::npos);
  CHECK(imgt_sample(m, 0.0, 9, -1, s1.data()) == IMGT_ERR_USAGE);
  imgt_model_free(back);
  imgt_model_free(m);
  fs::remove_all(dir);
}

TEST_CASE("status codes") {
  imgt_model* m = nullptr;
  CHECK(imgt_model_create("layers = x\n", 0, &m) == IMGT_ERR_USAGE);
  CHECK(m == nullptr);
  CHECK(std::strlen(imgt_last_error()) > 0);
  CHECK(imgt_model_create(nullptr, 0, &m) == IMGT_ERR_USAGE);
  CHECK(imgt_model_load("/nonexistent/m.ckpt", &m) == IMGT_ERR_IO);
  uint8_t* px = nullptr;
  size_t h = 0, w = 0;
  CHECK(imgt_read_ppm(IMGT_GOLDEN_DIR "/ascii_p3.ppm", &px, &h, &w) == IMGT_ERR_FORMAT);
  REQUIRE(imgt_read_ppm(IMGT_GOLDEN_DIR "/ramp_3x2.ppm", &px, &h, &w) == IMGT_OK);
  CHECK(h == 2);
  CHECK(px[1] == 48);
  imgt_free(px);
}

TEST_CASE("mask and gradient probes") {
  uint8_t* mask = nullptr;
  size_t rows = 0, cols = 0;
  REQUIRE(imgt_inspect_mask("height = 2\nwidth = 2\nl_q = 4\nl_m = 0\n", 0, &mask, &rows, &cols) == IMGT_OK);
  CHECK(rows == 4);
  CHECK(mask[0] == 255);
  CHECK(mask[1] == 0);
  CHECK(mask[4] == 255);
  imgt_free(mask);
  CHECK(imgt_inspect_mask("height = 2\nwidth = 2\nl_q = 4\n", 5, &mask, &rows, &cols) == IMGT_ERR_USAGE);
  double err = 1;
  size_t n = 0, unresolved = 0;
  REQUIRE(imgt_gradcheck("height = 2\nwidth = 2\nlayers = 1\nd = 8\nheads = 2\nd_ff = 8\n", 3, &err, &n, &unresolved) == IMGT_OK);
  CHECK(err < 1e-4);
  CHECK(n > 0);
}
