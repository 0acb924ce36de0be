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
#include <filesystem>
#include <string>

#include "doctest.h"
#include "image.hpp"
#include "io.hpp"
#include "support.hpp"

using namespace imgt;
namespace fs = std::filesystem;
using imgt::testing::run_command;

namespace {

const std::string kCli = IMGT_CLI_PATH;

struct Scratch {
  fs::path dir = imgt::testing::scratch_dir("cli");
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("usage errors exit 2") {
  Scratch s;
  CHECK(run_command(kCli, s / "log").exit_code == 2);
  CHECK(run_command(kCli + " frobnicate", s / "log").exit_code == 2);
  CHECK(run_command(kCli + " eval --ckpt", s / "log").exit_code == 2);
  write_file(s / "bad.cfg", "laers = 2\n");
  CHECK(run_command(kCli + " gradcheck --config " + (s / "bad.cfg"), s / "log").exit_code == 2);
  CHECK(read_file(s / "log").find("laers") != std::string::npos);
}

TEST_CASE("io and format errors") {
  Scratch s;
  CHECK(run_command(kCli + " eval --ckpt " + (s / "none.ckpt") + " --data " + s.dir.string(), s / "log").exit_code == 3);
  fs::create_directories(s.dir / "data");
  fs::copy_file(std::string(IMGT_GOLDEN_DIR) + "/ascii_p3.ppm", s.dir / "data" / "x.ppm");
  write_file(s / "m.cfg", "height = 1\nwidth = 1\nd = 8\nheads = 2\nsteps = 1\n");
  CHECK(run_command(kCli + " train --config " + (s / "m.cfg") + " --data " + (s / "data") + " --out " + (s / "m.ckpt"),
                    s / "log").exit_code == 4);
}

TEST_CASE("inspect-mask prints the matrix size") {
  Scratch s;
  const auto r = run_command(kCli + " inspect-mask --config " + IMGT_GOLDEN_DIR "/mask_1d_2x2.cfg --block 1 --out " +
                                 (s / "m.pgm"),
                             s / "log");
  CHECK(r.exit_code == 0);
  CHECK(read_file(s / "log").find("4 x 4") != std::string::npos);
}

TEST_CASE("eval on the golden checkpoint") {
  Scratch s;
  fs::create_directories(s.dir / "data");
  fs::copy_file(std::string(IMGT_GOLDEN_DIR) + "/white_1x1.ppm", s.dir / "data" / "w.ppm");
  const auto r = run_command(kCli + " eval --ckpt " IMGT_GOLDEN_DIR "/tiny.ckpt --data " + (s / "data"), s / "log");
  CHECK(r.exit_code == 0);
  CHECK(std::stod(read_file(s / "log")) > 0.0);
}

TEST_CASE("gradcheck reports its summary") {
  Scratch s;
  write_file(s / "g.cfg", "height = 2\nwidth = 2\nlayers = 1\nd = 8\nheads = 2\nd_ff = 8\n");
  CHECK(run_command(kCli + " gradcheck --config " + (s / "g.cfg"), s / "log").exit_code == 0);
  CHECK(read_file(s / "log").rfind("max_rel_error=", 0) == 0);
}

TEST_CASE("eval of a uniform head prints 8 bits per dim") {
  Scratch s;
  Rng rng(1);
  RunConfig rc;
  rc.model = imgt::testing::tiny_config(SchemeKind::kLocal1d, false, DistributionKind::kCategorical);
  ImageTransformer m = ImageTransformer::build(rc.model, rng);
  auto& ps = m.mutable_params();
  for (const char* name : {"head.w", "head.b"}) {
    const std::size_t i = ps.at(name);
    ps.set(i, Tensor<float>::full(ps.value(i).shape(), 0.0f));
  }
  save_checkpoint(s / "u.ckpt", rc, m);
  fs::create_directories(s.dir / "data");
  write_ppm(s / "data/a.ppm", random_image(4, 4, rng));
  const auto r = run_command(kCli + " eval --ckpt " + (s / "u.ckpt") + " --data " + (s / "data"), s / "log");
  CHECK(r.exit_code == 0);
  CHECK(read_file(s / "log") == "8.0000\n");
}
