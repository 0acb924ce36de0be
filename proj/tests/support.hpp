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
// Shared helpers for the unit tests and the acceptance suite.
#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "image.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace imgt::testing {

// Small model over 4x4 images for property checks.
inline ModelConfig tiny_config(SchemeKind scheme, bool encoder_decoder, DistributionKind dist) {
  ModelConfig c;
  c.height = 4;
  c.width = 4;
  c.layers = 2;
  c.d = 8;
  c.heads = 2;
  c.d_ff = 16;
  c.dropout = 0.0;
  c.distribution = dist;
  c.mixtures = 2;
  if (scheme == SchemeKind::kLocal2d) {
    c.scheme = Scheme{SchemeKind::kLocal2d, 1, 0, 2, 2, 1, 1};
  } else if (dist == DistributionKind::kDmol) {
    c.scheme = Scheme{scheme, 4, 4};
  } else {
    c.scheme = Scheme{scheme, 8, 8};
  }
  if (encoder_decoder) {
    c.mode = ModelMode::kEncoderDecoder;
    c.encoder_layers = 1;
    c.source_height = 8;
    c.source_width = 8;
  }
  return c;
}

inline std::string describe(const ModelConfig& c) {
  std::string s = c.scheme.kind == SchemeKind::kLocal2d   ? "local2d"
                  : c.scheme.kind == SchemeKind::kLocal1d ? "local1d"
                                                          : "full";
  s += c.encoder_decoder() ? "/enc-dec" : "/dec";
  s += c.distribution == DistributionKind::kDmol ? "/dmol" : "/cat";
  return s;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("imgt_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

struct CommandResult {
  int exit_code = -1;
  double seconds = 0.0;
};

// Runs a shell command with output sent to `log`.
inline CommandResult run_command(const std::string& cmd, const std::string& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const int raw = std::system((cmd + " >" + log + " 2>&1").c_str());
  const auto t1 = std::chrono::steady_clock::now();
  CommandResult r;
  r.exit_code = raw == -1 ? -1 : WEXITSTATUS(raw);
  r.seconds = std::chrono::duration<double>(t1 - t0).count();
  return r;
}

}  // namespace imgt::testing
