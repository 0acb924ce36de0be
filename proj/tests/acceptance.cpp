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
// Acceptance suite. One PASS/FAIL line per criterion; `--criterion N` runs a
// single one, which is how ctest registers them.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "blocks.hpp"
#include "distributions.hpp"
#include "errors.hpp"
#include "generator.hpp"
#include "image.hpp"
#include "io.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "support.hpp"
#include "trainer.hpp"

namespace fs = std::filesystem;
using namespace imgt;
using imgt::testing::describe;
using imgt::testing::tiny_config;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const SchemeKind kSchemes[] = {SchemeKind::kLocal1d, SchemeKind::kLocal2d};
const DistributionKind kDists[] = {DistributionKind::kCategorical, DistributionKind::kDmol};

std::vector<ModelConfig> property_configs() {
  std::vector<ModelConfig> out;
  for (SchemeKind s : kSchemes)
    for (bool ed : {false, true})
      for (DistributionKind d : kDists) out.push_back(tiny_config(s, ed, d));
  return out;
}

bool same_row(const Tensor<float>& a, const Tensor<float>& b, std::size_t row) {
  const std::size_t w = a.dim(1);
  return std::memcmp(a.ptr() + row * w, b.ptr() + row * w, w * sizeof(float)) == 0;
}

// ---- 1: causality ------------------------------------------------------------
Outcome causality() {
  std::size_t checks = 0, leaks = 0, insensitive = 0, unknown = 0;
  std::string first;
  std::uint64_t seed = 11;
  for (const ModelConfig& cfg : property_configs()) {
    Rng rng(seed++);
    ImageTransformer model = ImageTransformer::build(cfg, rng);
    Image img = random_image(cfg.height, cfg.width, rng);
    Image src;
    if (cfg.encoder_decoder()) src = random_image(cfg.source_height, cfg.source_width, rng);
    const Image* srcp = cfg.encoder_decoder() ? &src : nullptr;
    Rng fwd(0);
    const Tensor<float> base = forward_train(model, {&img, std::nullopt, srcp}, fwd, false).outputs;
    const BlockPlan& plan = model.runtime().plan;
    const std::size_t per = cfg.per_pixel_values();
    for (std::size_t p = 0; p < plan.n_positions; ++p) {
      Image moved = img;
      for (std::size_t c = 0; c < per; ++c) moved[p * per + c] ^= 0x80;
      const Tensor<float> out = forward_train(model, {&moved, std::nullopt, srcp}, fwd, false).outputs;
      const std::size_t r = plan.rank[p];
      for (std::size_t q = 0; q < plan.n_positions; ++q) {
        if (plan.rank[q] > r) continue;
        ++checks;
        if (!same_row(base, out, q)) {
          ++leaks;
          if (first.empty()) first = fmt(" first leak %s pos %zu -> %zu", describe(cfg).c_str(), p, q);
        }
      }
      if (r + 1 < plan.n_positions && same_row(base, out, plan.gen_order[r + 1])) ++insensitive;
    }
    GenerationStats stats;
    SamplerConfig sc;
    sc.seed = 5;
    generate(model, sc, std::nullopt, srcp, &stats);
    unknown += stats.unknown_reads;
  }
  return {leaks == 0 && insensitive == 0 && unknown == 0,
          fmt("8 configs, %zu earlier-rank rows compared, %zu changed, %zu next-rank rows unchanged, "
              "%zu unknown reads in generation%s",
              checks, leaks, insensitive, unknown, first.c_str())};
}

// ---- 2: mask oracle ------------------------------------------------------------
struct OracleGeometry {
  Scheme scheme;
  std::size_t h, w, per;
  // Sort key of a position in generation order.
  std::tuple<std::size_t, std::size_t, std::size_t> key(std::size_t p) const {
    const std::size_t pix = p / per, ch = p % per, r = pix / w, c = pix % w;
    if (scheme.kind == SchemeKind::kLocal2d) {
      const std::size_t blocks_per_row = (w + scheme.w_q - 1) / scheme.w_q;
      const std::size_t b = (r / scheme.h_q) * blocks_per_row + c / scheme.w_q;
      return {b, (r * w + c), ch};
    }
    return {0, pix, ch};
  }
  bool precedes(std::size_t a, std::size_t b) const { return key(a) < key(b); }
  std::set<std::size_t> block_queries(std::size_t p) const {
    std::set<std::size_t> s;
    const std::size_t n = h * w * per;
    if (scheme.kind == SchemeKind::kLocal1d) {
      const std::size_t b = p / scheme.l_q;
      for (std::size_t x = b * scheme.l_q; x < std::min(n, (b + 1) * scheme.l_q); ++x) s.insert(x);
      return s;
    }
    const std::size_t pix = p / per, br = pix / w / scheme.h_q, bc = pix % w / scheme.w_q;
    for (std::size_t x = 0; x < n; ++x) {
      const std::size_t xp = x / per;
      if (xp / w / scheme.h_q == br && xp % w / scheme.w_q == bc) s.insert(x);
    }
    return s;
  }
  std::set<std::size_t> block_memory(std::size_t p) const {
    std::set<std::size_t> s;
    const std::size_t n = h * w * per;
    if (scheme.kind == SchemeKind::kLocal1d) {
      const long start = static_cast<long>(p / scheme.l_q * scheme.l_q);
      const long end = std::min<long>(static_cast<long>(n), start + static_cast<long>(scheme.l_q));
      for (long x = start - static_cast<long>(scheme.l_m); x < end; ++x)
        if (x >= 0) s.insert(static_cast<std::size_t>(x));
      return s;
    }
    const long pix = static_cast<long>(p / per), W = static_cast<long>(w);
    const long r0 = pix / W / static_cast<long>(scheme.h_q) * static_cast<long>(scheme.h_q);
    const long c0 = pix % W / static_cast<long>(scheme.w_q) * static_cast<long>(scheme.w_q);
    for (std::size_t x = 0; x < n; ++x) {
      const long xp = static_cast<long>(x / per), xr = xp / W, xc = xp % W;
      if (xr >= r0 - static_cast<long>(scheme.h_m) && xr < r0 + static_cast<long>(scheme.h_q) &&
          xc >= c0 - static_cast<long>(scheme.w_m) &&
          xc < c0 + static_cast<long>(scheme.w_q + scheme.w_m))
        s.insert(x);
    }
    return s;
  }
};

Outcome mask_oracle() {
  Rng rng(2024);
  std::size_t plans = 0, cells = 0, bad = 0, draws = 0;
  std::string first;
  for (SchemeKind kind : kSchemes)
    for (std::size_t draw = 0; draw < 24; ++draw, ++draws) {
      Scheme s;
      s.kind = kind;
      s.l_q = 1 + rng.below(12);
      s.l_m = rng.below(20);
      s.h_q = 1 + rng.below(3);
      s.w_q = 1 + rng.below(4);
      s.h_m = rng.below(3);
      s.w_m = rng.below(3);
      for (std::size_t per : {std::size_t{1}, std::size_t{3}})
        for (std::size_t h = 1; h <= 6; ++h)
          for (std::size_t w = 1; w <= 6; ++w) {
            const BlockPlan plan = make_plan(s, h, w, per);
            ++plans;
            const OracleGeometry geo{s, h, w, per};
            auto fail = [&](const std::string& why) {
              ++bad;
              if (first.empty()) first = fmt(" first failure h=%zu w=%zu per=%zu: %s", h, w, per, why.c_str());
            };
            if (auto err = validate_plan(plan)) fail(*err);
            for (std::size_t r = 0; r + 1 < plan.n_positions; ++r)
              if (!geo.precedes(plan.gen_order[r], plan.gen_order[r + 1])) fail("generation order");
            for (bool self_inclusive : {false, true})
              for (std::size_t bi = 0; bi < plan.blocks.size(); ++bi) {
                const QueryBlock& b = plan.blocks[bi];
                const CausalMask m = build_mask(plan, bi, self_inclusive);
                const std::set<std::size_t> qs(b.queries.begin(), b.queries.end());
                const std::set<std::size_t> ms(b.memory.begin(), b.memory.end());
                if (qs != geo.block_queries(b.queries[0])) fail("query block membership");
                if (ms != geo.block_memory(b.queries[0])) fail("memory block membership");
                if (m.cols != b.memory.size() || m.rows < b.queries.size()) fail("mask shape");
                for (std::size_t i = 0; i < m.rows; ++i) {
                  std::vector<std::uint8_t> want(m.cols, 0);
                  if (i < b.queries.size()) {
                    const std::size_t q = b.queries[i];
                    bool any = false;
                    for (std::size_t j = 0; j < m.cols; ++j) {
                      const std::size_t x = b.memory[j];
                      if (geo.precedes(x, q) || (self_inclusive && x == q)) want[j] = 1, any = true;
                    }
                    // Nothing earlier is visible: the row falls back to its own slot.
                    if (!any)
                      for (std::size_t j = 0; j < m.cols; ++j)
                        if (b.memory[j] == q) want[j] = 1;
                  }
                  for (std::size_t j = 0; j < m.cols; ++j) {
                    ++cells;
                    if (m.at(i, j) != (want[j] != 0)) fail(fmt("block %zu cell (%zu,%zu)", bi, i, j));
                  }
                }
              }
          }
    }
  return {bad == 0, fmt("%zu scheme draws, %zu plans, %zu mask cells, %zu mismatches%s", draws, plans,
                        cells, bad, first.c_str())};
}

// ---- 3: teacher-forced vs sequential NLL ----------------------------------------
Outcome nll_equivalence() {
  std::vector<ModelConfig> configs = property_configs();
  ModelConfig extra = tiny_config(SchemeKind::kFull, false, DistributionKind::kCategorical);
  extra.n_classes = 3;
  extra.per_channel_head = true;
  extra.coord_encoding = CoordinateKind::kLearned;
  extra.self_inclusive = true;
  configs.push_back(extra);
  double worst = 0.0;
  std::size_t images = 0, exact_mismatch = 0;
  std::uint64_t seed = 300;
  for (const ModelConfig& cfg : configs) {
    Rng rng(seed++);
    ImageTransformer model = ImageTransformer::build(cfg, rng);
    for (std::size_t k = 0; k < 50; ++k, ++images) {
      Image img = random_image(cfg.height, cfg.width, rng);
      Image src;
      if (cfg.encoder_decoder()) src = random_image(cfg.source_height, cfg.source_width, rng);
      const Image* srcp = cfg.encoder_decoder() ? &src : nullptr;
      std::optional<std::size_t> cls;
      if (cfg.n_classes) cls = rng.below(cfg.n_classes);
      Rng fwd(0);
      const double tf = forward_train(model, {&img, cls, srcp}, fwd, false).nll;
      const double seq = sequential_nll(model, img, cls, srcp, true);
      worst = std::max(worst, std::abs(tf - seq));
      if (k < 3 && sequential_nll(model, img, cls, srcp, false) != seq) ++exact_mismatch;
    }
  }
  return {worst <= 1e-5 && exact_mismatch == 0,
          fmt("%zu configs x 50 images, max |teacher-forced - sequential| = %.3e nats, "
              "%zu cached/full mismatches",
              configs.size(), worst, exact_mismatch)};
}

// ---- 4: gradient check ------------------------------------------------------------
std::string param_group(const std::string& name) {
  if (name.find("start") != std::string::npos) return "start";
  if (name.rfind("head", 0) == 0) return "heads";
  if (name.find("norm") != std::string::npos) return "layernorm";
  if (name.find("attn") != std::string::npos) return "attention";
  if (name.find("ffn") != std::string::npos) return "ffn";
  return "embeddings";
}

Outcome gradient_check() {
  std::vector<ModelConfig> configs;
  {
    ModelConfig c = tiny_config(SchemeKind::kLocal1d, false, DistributionKind::kCategorical);
    c.height = c.width = 2;
    c.scheme = Scheme{SchemeKind::kLocal1d, 4, 4};
    c.n_classes = 2;
    c.coord_encoding = CoordinateKind::kLearned;
    c.per_channel_head = true;
    configs.push_back(c);
  }
  {
    ModelConfig c = tiny_config(SchemeKind::kLocal2d, true, DistributionKind::kDmol);
    c.height = c.width = 2;
    c.source_height = c.source_width = 2;
    c.scheme = Scheme{SchemeKind::kLocal2d, 1, 0, 1, 2, 1, 1};
    configs.push_back(c);
  }
  {
    ModelConfig c = tiny_config(SchemeKind::kFull, false, DistributionKind::kCategorical);
    c.height = c.width = 2;
    c.scheme = Scheme{SchemeKind::kFull};
    configs.push_back(c);
  }
  std::map<std::string, std::size_t> groups;
  for (const char* g : {"embeddings", "attention", "ffn", "layernorm", "heads", "start"}) groups[g] = 0;
  std::size_t resolved = 0, unresolved = 0;
  double worst = 0.0;
  std::uint64_t seed = 40;
  for (const ModelConfig& cfg : configs) {
    const std::vector<ParamSpec> layout = parameter_layout(cfg);
    const FiniteDiffReport rep = model_gradient_check(cfg, seed++, 8);
    worst = std::max(worst, rep.max_rel_error);
    resolved += rep.checks.size();
    unresolved += rep.unresolved.size();
    for (const CoordinateCheck& c : rep.checks) ++groups[param_group(layout[c.param].name)];
  }
  bool covered = true;
  std::string per_group;
  for (const auto& [g, n] : groups) {
    covered = covered && n > 0;
    per_group += fmt(" %s=%zu", g.c_str(), n);
  }
  return {worst < 1e-4 && resolved >= 200 && covered,
          fmt("%zu resolved coordinates (%zu below probe resolution), max rel error %.3e;%s", resolved,
              unresolved, worst, per_group.c_str())};
}

// ---- 5: DMOL normalization ----------------------------------------------------------
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Discretized logistic bin probabilities, written out directly.
std::vector<double> logistic_bins(double mean, double log_scale) {
  const double s = std::exp(std::max(log_scale, -7.0));
  std::vector<double> p(256);
  for (int v = 0; v < 256; ++v) {
    const double x = v / 127.5 - 1.0;
    const double hi = v == 255 ? 1.0 : sigmoid((x + 1.0 / 255 - mean) / s);
    const double lo = v == 0 ? 0.0 : sigmoid((x - 1.0 / 255 - mean) / s);
    p[v] = hi - lo;
  }
  return p;
}

Outcome dmol_normalization() {
  Rng rng(77);
  double worst_sum = 0.0, worst_bin = 0.0, worst_joint = 0.0;
  std::size_t edge_cases = 0, min_scale_cases = 0;
  for (std::size_t draw = 0; draw < 1000; ++draw) {
    const std::size_t K = 1 + rng.below(5);
    const DmolView at{K};
    std::vector<float> row(kDmolParamsPerComponent * K);
    for (std::size_t k = 0; k < K; ++k) {
      row[at.logit(k)] = static_cast<float>(2.0 * rng.normal());
      for (std::size_t c = 0; c < 3; ++c) {
        row[at.mean(k, c)] = static_cast<float>(2.4 * rng.uniform() - 1.2);
        row[at.log_scale(k, c)] = static_cast<float>(-8.0 + 9.0 * rng.uniform());
        row[at.coeff(k, c)] = static_cast<float>(rng.normal());
      }
    }
    // Every third draw pins one component to an edge bin, every fifth to the
    // scale floor.
    if (draw % 3 == 0) {
      row[at.mean(0, 0)] = rng.uniform() < 0.5 ? -1.0f : 1.0f;
      row[at.mean(0, 1)] = draw % 2 ? -1.3f : 1.3f;
      ++edge_cases;
    }
    if (draw % 5 == 0) {
      for (std::size_t c = 0; c < 3; ++c) row[at.log_scale(0, c)] = c == 0 ? -7.0f : -12.0f;
      ++min_scale_cases;
    }
    const std::uint8_t r = static_cast<std::uint8_t>(rng.below(256));
    const std::uint8_t g = static_cast<std::uint8_t>(rng.below(256));
    const double xr = r / 127.5 - 1.0, xg = g / 127.5 - 1.0;
    // Per-component conditionals for R, G | r, B | r, g.
    std::vector<std::array<std::vector<double>, 3>> bins(K);
    std::vector<double> pi(K);
    double zsum = 0.0;
    for (std::size_t k = 0; k < K; ++k) zsum += std::exp(row[at.logit(k)]);
    for (std::size_t k = 0; k < K; ++k) {
      pi[k] = std::exp(row[at.logit(k)]) / zsum;
      const double mean[3] = {
          row[at.mean(k, 0)],
          row[at.mean(k, 1)] + std::tanh(static_cast<double>(row[at.coeff(k, 0)])) * xr,
          row[at.mean(k, 2)] + std::tanh(static_cast<double>(row[at.coeff(k, 1)])) * xr +
              std::tanh(static_cast<double>(row[at.coeff(k, 2)])) * xg};
      for (std::size_t c = 0; c < 3; ++c) {
        bins[k][c] = logistic_bins(mean[c], row[at.log_scale(k, c)]);
        double sum = 0.0;
        for (int v = 0; v < 256; ++v) {
          sum += bins[k][c][v];
          const double lib = std::exp(dmol_channel_log_prob(
              mean[c], std::max<double>(row[at.log_scale(k, c)], kDmolMinLogScale), static_cast<std::uint8_t>(v)));
          worst_bin = std::max(worst_bin, std::abs(lib - bins[k][c][v]));
        }
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      }
    }
    // Mixture conditionals: weights follow the already-fixed channels.
    std::vector<double> wr(K), wrg(K);
    double nr = 0.0, nrg = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      wr[k] = pi[k] * bins[k][0][r];
      wrg[k] = wr[k] * bins[k][1][g];
      nr += wr[k];
      nrg += wrg[k];
    }
    for (std::size_t c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (int v = 0; v < 256; ++v)
        for (std::size_t k = 0; k < K; ++k) {
          const double w = c == 0 ? pi[k] : c == 1 ? wr[k] / nr : wrg[k] / nrg;
          if (std::isfinite(w)) sum += w * bins[k][c][v];
        }
      if (c == 0 || (c == 1 && nr > 0) || (c == 2 && nrg > 0)) worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
    // Library joint density summed over blue equals p(r, g).
    if (draw % 10 == 0) {
      double sum = 0.0;
      for (int b = 0; b < 256; ++b) {
        const std::uint8_t rgb[3] = {r, g, static_cast<std::uint8_t>(b)};
        sum += std::exp(dmol_log_prob(row.data(), K, rgb));
      }
      worst_joint = std::max(worst_joint, std::abs(sum - nrg) / std::max(nrg, 1e-300) * (nrg > 1e-12));
    }
  }
  return {worst_sum <= 1e-5 && worst_bin <= 1e-9 && worst_joint <= 1e-6,
          fmt("1000 draws (%zu edge-bin, %zu min-scale): max |sum - 1| = %.2e, max bin deviation from "
              "logistic oracle %.2e, max relative joint-marginal deviation %.2e",
              edge_cases, min_scale_cases, worst_sum, worst_bin, worst_joint)};
}

// ---- 6: output dimensionality and parameter counts ------------------------------------
std::size_t expected_params(const ModelConfig& c) {
  const std::size_t d = c.d, f = c.d_ff;
  std::size_t n = d + 256 * d;
  n += c.layers * (4 * d * d + 2 * d + d * f + f + f * d + d + 2 * d);
  n += 2 * d + d * 256 + 256;
  return n;
}

Outcome parameter_counts() {
  const std::size_t cat = categorical_output_dims(32, 32);
  const std::size_t dmol = dmol_output_dims(32, 32, 10);
  ModelConfig c;
  c.height = c.width = 32;
  c.layers = 1;
  c.d = 8;
  c.heads = 2;
  c.d_ff = 8;
  c.scheme = Scheme{SchemeKind::kLocal1d, 256, 0};
  Rng rng(1);
  Image img = random_image(32, 32, rng);
  Rng fwd(0);
  const std::size_t cat_model = forward_train(ImageTransformer::build(c, rng), {&img, std::nullopt, nullptr}, fwd, false).outputs.size();
  ModelConfig cd = c;
  cd.distribution = DistributionKind::kDmol;
  cd.mixtures = 10;
  const std::size_t dmol_model = forward_train(ImageTransformer::build(cd, rng), {&img, std::nullopt, nullptr}, fwd, false).outputs.size();

  bool invariant = true;
  ModelConfig base = c;
  base.layers = 2;
  base.d = 16;
  base.d_ff = 32;
  const std::size_t ref = ImageTransformer::build(base, rng).count_params();
  const bool formula = ref == expected_params(base);
  for (std::size_t l_m : {0, 1, 64, 256, 512, 3071}) {
    ModelConfig m = base;
    m.scheme.l_m = l_m;
    invariant = invariant && ImageTransformer::build(m, rng).count_params() == ref;
  }
  for (std::size_t h_m : {0, 2, 8})
    for (std::size_t w_m : {0, 3, 16}) {
      ModelConfig m = base;
      m.scheme = Scheme{SchemeKind::kLocal2d, 1, 0, 8, 8, h_m, w_m};
      invariant = invariant && ImageTransformer::build(m, rng).count_params() == ref;
    }
  const bool pass = cat == 786432 && dmol == 102400 && cat_model == cat && dmol_model == dmol &&
                    invariant && formula;
  return {pass, fmt("categorical %zu (model emits %zu), dmol %zu (model emits %zu); %zu params, "
                    "matches closed form: %s, invariant to memory extent: %s",
                    cat, cat_model, dmol, dmol_model, ref, formula ? "yes" : "no",
                    invariant ? "yes" : "no")};
}

// ---- 7: sampling -----------------------------------------------------------------
std::vector<double> softmax(std::span<const float> logits, double tau) {
  double mx = -1e300;
  for (float l : logits) mx = std::max(mx, l / tau);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] / tau - mx);
  for (double& x : p) x /= z;
  return p;
}

Outcome sampling() {
  Rng rng(9);
  ModelConfig cfg = tiny_config(SchemeKind::kLocal1d, false, DistributionKind::kCategorical);
  cfg.d = 16;
  ImageTransformer model = ImageTransformer::build(cfg, rng);
  Image img = random_image(4, 4, rng);
  Rng fwd(0);
  const Tensor<float> out = forward_train(model, {&img, std::nullopt, nullptr}, fwd, false).outputs;

  std::vector<std::vector<float>> rows;
  rows.emplace_back(out.ptr(), out.ptr() + 256);
  std::vector<float> peaked(256);
  for (float& l : peaked) l = static_cast<float>(1.5 * rng.normal());
  rows.push_back(peaked);

  const std::size_t N = 100000;
  std::size_t outside = 0;
  double worst_z = 0.0;
  for (const auto& row : rows) {
    const std::vector<double> p = softmax(row, 1.0);
    std::vector<std::size_t> count(256, 0);
    Rng s(123);
    for (std::size_t i = 0; i < N; ++i) ++count[categorical_sample<float>(row, 1.0, s)];
    for (std::size_t v = 0; v < 256; ++v) {
      const double sd = std::sqrt(N * p[v] * (1.0 - p[v]));
      const double dev = std::abs(count[v] - N * p[v]);
      if (dev > 4.0 * sd + 1e-9) ++outside;
      if (sd > 0) worst_z = std::max(worst_z, dev / sd);
    }
  }

  // Low temperature on the model row with the widest top-2 gap.
  std::size_t best_row = 0;
  double best_gap = -1.0;
  for (std::size_t r = 0; r < out.dim(0); ++r) {
    std::vector<float> v(out.ptr() + r * 256, out.ptr() + (r + 1) * 256);
    std::partial_sort(v.begin(), v.begin() + 2, v.end(), std::greater<>());
    if (v[0] - v[1] > best_gap) best_gap = v[0] - v[1], best_row = r;
  }
  std::vector<std::span<const float>> cold = {std::span<const float>(out.ptr() + best_row * 256, 256),
                                              std::span<const float>(peaked)};
  double worst_match = 1.0;
  for (auto row : cold) {
    const std::size_t arg = std::max_element(row.begin(), row.end()) - row.begin();
    Rng s(321);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < 10000; ++i) hit += categorical_sample(row, 0.01, s) == arg;
    worst_match = std::min(worst_match, hit / 10000.0);
  }

  // Fixed-seed generation, twice and through both decoding paths.
  bool identical = true, seeds_differ = true;
  for (DistributionKind dist : kDists)
    for (bool ed : {false, true}) {
      ModelConfig mc = tiny_config(SchemeKind::kLocal1d, ed, dist);
      Rng mr(50);
      ImageTransformer m = ImageTransformer::build(mc, mr);
      Image src;
      if (ed) src = random_image(mc.source_height, mc.source_width, mr);
      const Image* srcp = ed ? &src : nullptr;
      SamplerConfig sc;
      sc.seed = 42;
      const Image a = generate(m, sc, std::nullopt, srcp);
      const Image b = generate(m, sc, std::nullopt, srcp);
      sc.use_cache = false;
      const Image c = generate(m, sc, std::nullopt, srcp);
      sc.use_cache = true;
      sc.seed = 43;
      const Image d = generate(m, sc, std::nullopt, srcp);
      identical = identical && a == b && a == c;
      seeds_differ = seeds_differ && a != d;
    }
  return {outside == 0 && worst_match >= 0.999 && identical && seeds_differ,
          fmt("tau=1: %zu of 512 bins outside 4 sigma (max %.2f sigma) at 1e5 draws; tau=0.01: "
              "argmax rate %.4f (model row gap %.3f); fixed-seed runs identical: %s, new seed "
              "differs: %s",
              outside, worst_z, worst_match, best_gap, identical ? "yes" : "no",
              seeds_differ ? "yes" : "no")};
}

// ---- 8: memorization --------------------------------------------------------------
Outcome memorization() {
  ModelConfig cfg;
  cfg.height = cfg.width = 8;
  cfg.layers = 2;
  cfg.d = 64;
  cfg.heads = 4;
  cfg.d_ff = 128;
  cfg.scheme = Scheme{SchemeKind::kLocal1d, 16, 16};
  Rng rng(8);
  ImageTransformer model = ImageTransformer::build(cfg, rng);
  std::vector<Sample> data = make_samples(cfg, {random_image(8, 8, rng)});
  TrainConfig tc;
  tc.steps = 2000;
  tc.eval_interval = 250;
  std::string trace;
  train(model, data, tc, [&](const LogEntry& e) {
    trace += fmt(" %zu:%.3f", e.step, e.bits_per_dim);
  });
  const double bpd = evaluate(model, data);
  return {bpd < 0.1, fmt("bits/dim after %zu steps: %.5f (train log%s)", tc.steps, bpd, trace.c_str())};
}

// ---- 9: receptive field ----------------------------------------------------------
// 8x8 images over a 4-colour palette: rows 0-1 random, every later row copies
// the row two above it (48 positions back in raster order).
std::vector<Image> row_repeat_images(std::size_t n, Rng& rng) {
  const std::uint8_t palette[4][3] = {{20, 200, 90}, {230, 40, 160}, {90, 120, 250}, {170, 250, 10}};
  std::vector<Image> out;
  for (std::size_t i = 0; i < n; ++i) {
    Image img(8, 8);
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c) {
        const std::size_t k = r < 2 ? rng.below(4) : 0;
        for (std::size_t ch = 0; ch < 3; ++ch)
          img.set(r, c, ch, r < 2 ? palette[k][ch] : img.at(r - 2, c, ch));
      }
    out.push_back(std::move(img));
  }
  return out;
}

Outcome receptive_field() {
  Rng data_rng(900);
  const std::vector<Image> train_images = row_repeat_images(64, data_rng);
  const std::vector<Image> eval_images = row_repeat_images(32, data_rng);
  double mean[2] = {0.0, 0.0};
  std::string per_seed;
  const std::size_t memory_total[2] = {8, 64};
  for (std::size_t arm = 0; arm < 2; ++arm)
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      ModelConfig cfg;
      cfg.height = cfg.width = 8;
      cfg.layers = 2;
      cfg.d = 32;
      cfg.heads = 4;
      cfg.d_ff = 64;
      cfg.scheme = Scheme{SchemeKind::kLocal1d, 8, memory_total[arm] - 8};
      Rng rng(100 + seed);
      ImageTransformer model = ImageTransformer::build(cfg, rng);
      TrainConfig tc;
      tc.steps = 3000;
      tc.warmup = 300;
      tc.seed = seed;
      tc.eval_interval = 3000;
      train(model, make_samples(cfg, train_images), tc);
      const double bpd = evaluate(model, make_samples(cfg, eval_images));
      mean[arm] += bpd / 3.0;
      per_seed += fmt(" m%zu/s%llu=%.4f", memory_total[arm], static_cast<unsigned long long>(seed), bpd);
    }
  return {mean[1] <= mean[0], fmt("mean eval bits/dim: memory 64 -> %.4f, memory 8 -> %.4f;%s", mean[1],
                                  mean[0], per_seed.c_str())};
}

// ---- 10: super-resolution ----------------------------------------------------------
// 2x2 palette images upsampled by 4; the 8x8 target is a deterministic
// function of its source.
std::vector<Image> blocky_images(std::size_t n, Rng& rng) {
  std::uint8_t palette[8][3];
  Rng prng(4242);
  for (auto& col : palette)
    for (auto& v : col) v = static_cast<std::uint8_t>(prng.below(256));
  std::vector<Image> out;
  for (std::size_t i = 0; i < n; ++i) {
    Image low(2, 2);
    for (std::size_t p = 0; p < 4; ++p) {
      const std::size_t k = rng.below(8);
      for (std::size_t ch = 0; ch < 3; ++ch) low.set(p / 2, p % 2, ch, palette[k][ch]);
    }
    out.push_back(upsample_nearest(low, 4));
  }
  return out;
}

Outcome super_resolution() {
  Rng data_rng(1000);
  const std::vector<Image> train_images = blocky_images(200, data_rng);
  const std::vector<Image> eval_images = blocky_images(40, data_rng);
  std::string detail;
  bool pass = true;
  double worst_ratio = 1e300;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ModelConfig ed;
    ed.mode = ModelMode::kEncoderDecoder;
    ed.height = ed.width = 8;
    ed.source_height = ed.source_width = 2;
    ed.layers = 4;
    ed.encoder_layers = 2;
    ed.d = 32;
    ed.heads = 4;
    ed.d_ff = 64;
    ed.scheme = Scheme{SchemeKind::kLocal1d, 16, 16};
    ModelConfig blind = ed;
    blind.mode = ModelMode::kDecoderOnly;
    blind.layers = 6;
    blind.encoder_layers = 0;
    blind.source_height = blind.source_width = 0;

    TrainConfig tc;
    // Half the default rate keeps the 6-layer stack stable.
    tc.steps = 5000;
    tc.warmup = 1000;
    tc.lr_scale = 0.5;
    tc.seed = seed;
    tc.eval_interval = 5000;
    double bpd[2];
    std::optional<ImageTransformer> kept;
    for (int arm = 0; arm < 2; ++arm) {
      const ModelConfig& cfg = arm == 0 ? ed : blind;
      Rng rng(500 + seed);
      ImageTransformer model = ImageTransformer::build(cfg, rng);
      train(model, make_samples(cfg, train_images), tc);
      bpd[arm] = evaluate(model, make_samples(cfg, eval_images));
      if (arm == 0) kept.emplace(std::move(model));
    }
    // Consistency of samples against that of unrelated random images.
    double sample_c = 0.0, random_c = 0.0;
    Rng rr(77 + seed);
    for (std::size_t i = 0; i < 10; ++i) {
      const Image low = downsample_area(eval_images[i], 4);
      SamplerConfig sc;
      sc.seed = 1000 * seed + i;
      sample_c += consistency(low, superres(*kept, low, sc)) / 10.0;
      random_c += consistency(low, random_image(8, 8, rr)) / 10.0;
    }
    const double ratio = random_c / std::max(sample_c, 1e-12);
    worst_ratio = std::min(worst_ratio, ratio);
    pass = pass && bpd[0] < bpd[1] && ratio >= 3.0;
    detail += fmt(" seed %llu: enc-dec %.4f vs source-blind %.4f bits/dim, consistency %.2e vs random %.2e;",
                  static_cast<unsigned long long>(seed), bpd[0], bpd[1], sample_c, random_c);
  }
  return {pass, fmt("worst random/sample consistency ratio %.3g;", worst_ratio) + detail};
}

// ---- 11: formats and CLI ------------------------------------------------------------
Outcome formats() {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  const fs::path golden = IMGT_GOLDEN_DIR;
  const fs::path dir = imgt::testing::scratch_dir("acceptance11");

  // Round trips.
  {
    Rng rng(3);
    ModelConfig cfg = tiny_config(SchemeKind::kLocal2d, true, DistributionKind::kDmol);
    cfg.n_classes = 4;
    RunConfig rc{cfg, TrainConfig{}};
    ImageTransformer model = ImageTransformer::build(cfg, rng);
    const std::string bytes = encode_checkpoint(rc, model);
    const Checkpoint back = decode_checkpoint(bytes);
    bool same = back.config == rc && back.model.params().size() == model.params().size();
    for (std::size_t i = 0; same && i < model.params().size(); ++i) {
      const auto& a = model.params().value(i);
      const auto& b = back.model.params().value(i);
      same = a.shape() == b.shape() && back.model.params().name(i) == model.params().name(i) &&
             std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(float)) == 0;
    }
    expect(same, "checkpoint tensors differ after decode");
    expect(encode_checkpoint(back.config, back.model) == bytes, "checkpoint re-encode differs");
    save_checkpoint((dir / "m.ckpt").string(), rc, model);
    expect(read_file((dir / "m.ckpt").string()) == bytes, "checkpoint file bytes differ");

    std::vector<Image> images;
    for (int i = 0; i < 5; ++i) images.push_back(random_image(3, 5, rng));
    expect(decode_dataset(encode_dataset(images)) == images, "dataset round trip");
    fs::create_directories(dir / "ppm");
    for (int i = 0; i < 5; ++i) write_ppm((dir / "ppm" / fmt("img%02d.ppm", i)).string(), images[i]);
    expect(pack_dataset((dir / "ppm").string(), (dir / "d.imds").string()) == 5, "pack count");
    expect(load_dataset((dir / "d.imds").string()) == images, "packed directory differs");
    expect(decode_ppm(encode_ppm(images[0])) == images[0], "ppm round trip");
    expect(parse_config(format_config(rc)) == rc, "config round trip");
  }

  // Golden files.
  {
    auto gold = [&](const char* name) { return (golden / name).string(); };
    expect(encode_ppm(Image(1, 1, {255, 255, 255})) == read_file(gold("white_1x1.ppm")), "white_1x1 bytes");
    const Image ramp = read_ppm(gold("ramp_3x2.ppm"));
    bool ramp_ok = ramp.height() == 2 && ramp.width() == 3;
    for (std::size_t i = 0; ramp_ok && i < 18; ++i) ramp_ok = ramp[i] == (37 * i + 11) % 256;
    expect(ramp_ok, "ramp_3x2 values");
    for (const char* bad : {"ascii_p3.ppm", "maxval_65535.ppm", "truncated.ppm"}) {
      bool threw = false;
      try {
        read_ppm(gold(bad));
      } catch (const FormatError&) {
        threw = true;
      }
      expect(threw, std::string(bad) + " not rejected");
    }
    const std::vector<Image> three = load_dataset(gold("three_2x2.imds"));
    bool three_ok = three.size() == 3;
    for (std::size_t n = 0; three_ok && n < 3; ++n)
      for (std::size_t i = 0; i < 12; ++i) three_ok = three_ok && three[n][i] == (50 * n + 7 * i) % 256;
    expect(three_ok, "three_2x2 values");
    expect(encode_dataset(three) == read_file(gold("three_2x2.imds")), "three_2x2 re-encode");

    const Checkpoint tiny = load_checkpoint(gold("tiny.ckpt"));
    bool tiny_ok = tiny.config.model.height == 1 && tiny.config.model.d == 4 &&
                   tiny.config.model.scheme.kind == SchemeKind::kFull && tiny.config.train.warmup == 10;
    std::size_t k = 0;
    for (const auto& t : tiny.model.params().values())
      for (float v : t.data()) tiny_ok = tiny_ok && v == static_cast<float>((k++ % 97) / 97.0 - 0.5);
    expect(tiny_ok && k == tiny.model.count_params(), "tiny.ckpt contents");

    const RunConfig sample = read_config(gold("config_sample.cfg"));
    RunConfig want;
    want.model = preset_config("cifar-cat");
    want.model.dropout = 0.25;
    want.model.scheme.l_m = 128;
    want.train.steps = 50;
    expect(sample == want, "config_sample.cfg values");
  }

  // CLI smoke tests on 4x4 images.
  std::string timing;
  {
    const std::string cli = IMGT_CLI_PATH;
    Rng rng(4);
    fs::create_directories(dir / "data");
    for (int i = 0; i < 6; ++i) write_ppm((dir / "data" / fmt("img%d.ppm", i)).string(), random_image(4, 4, rng));
    write_ppm((dir / "low.ppm").string(), random_image(2, 2, rng));
    write_file((dir / "dec.cfg").string(),
               "height = 4\nwidth = 4\nlayers = 1\nd = 8\nheads = 2\nd_ff = 16\n"
               "scheme = local1d\nl_q = 8\nl_m = 8\nsteps = 5\nwarmup = 10\neval_interval = 5\n");
    write_file((dir / "sr.cfg").string(),
               "mode = encoder-decoder\nencoder_layers = 1\nlayers = 2\nheight = 4\nwidth = 4\n"
               "source_height = 2\nsource_width = 2\nd = 8\nheads = 2\nd_ff = 16\nsteps = 3\n");
    write_file((dir / "grad.cfg").string(),
               "height = 2\nwidth = 2\nlayers = 1\nd = 8\nheads = 2\nd_ff = 8\nscheme = local1d\n"
               "l_q = 4\nl_m = 4\n");
    const std::string d = dir.string() + "/";
    struct Step {
      const char* name;
      std::string args;
    };
    const std::vector<Step> steps = {
        {"train", "train --config " + d + "dec.cfg --data " + d + "data --out " + d + "dec.ckpt"},
        {"train-sr", "train --config " + d + "sr.cfg --data " + d + "data --out " + d + "sr.ckpt"},
        {"eval", "eval --ckpt " + d + "dec.ckpt --data " + d + "data"},
        {"sample", "sample --ckpt " + d + "dec.ckpt --n 2 --seed 7 --out " + d + "s1"},
        {"sample-again", "sample --ckpt " + d + "dec.ckpt --n 2 --seed 7 --out " + d + "s2"},
        {"complete", "complete --ckpt " + d + "dec.ckpt --image " + d + "data/img0.ppm --prefix 10 --out " +
                         d + "completed.ppm"},
        {"superres", "superres --ckpt " + d + "sr.ckpt --low " + d + "low.ppm --out " + d + "sr.ppm"},
        {"inspect-mask", "inspect-mask --config " + (golden / "mask_1d_2x2.cfg").string() +
                             " --block 0 --out " + d + "mask.pgm"},
        {"gradcheck", "gradcheck --config " + d + "grad.cfg --seed 1"},
    };
    for (const Step& s : steps) {
      const auto r = imgt::testing::run_command(cli + " " + s.args, d + s.name + ".log");
      timing += fmt(" %s=%.1fs", s.name, r.seconds);
      expect(r.exit_code == 0, fmt("cli %s exited %d (%s)", s.name, r.exit_code, read_file(d + s.name + ".log").c_str()));
      expect(r.seconds < 60.0, fmt("cli %s took %.1fs", s.name, r.seconds));
    }
    if (failures.empty()) {
      expect(read_file(d + "s1/sample_0000.ppm") == read_file(d + "s2/sample_0000.ppm") &&
                 read_file(d + "s1/sample_0001.ppm") == read_file(d + "s2/sample_0001.ppm"),
             "fixed-seed CLI samples differ");
      expect(read_ppm(d + "s1/sample_0001.ppm").height() == 4, "sample size");
      const Image orig = read_ppm(d + "data/img0.ppm");
      const Image done = read_ppm(d + "completed.ppm");
      bool prefix = true;
      for (std::size_t p = 0; p < 10; ++p) prefix = prefix && orig[p] == done[p];
      expect(prefix, "completion changed the known prefix");
      expect(read_ppm(d + "sr.ppm").width() == 4, "superres size");
      expect(read_file(d + "mask.pgm") == read_file((golden / "mask_1d_2x2_block0.pgm").string()),
             "inspect-mask output differs from golden");
      expect(std::atof(read_file(d + "eval.log").c_str()) > 0.0, "eval printed no bits/dim");
    }
  }
  fs::remove_all(dir);
  std::string detail = failures.empty() ? "round trips, golden files and 7 CLI subcommands ok;" : "";
  for (const auto& f : failures) detail += " [" + f + "]";
  return {failures.empty(), detail + timing};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "causality", causality},
    {2, "mask-oracle", mask_oracle},
    {3, "nll-equivalence", nll_equivalence},
    {4, "gradient-check", gradient_check},
    {5, "dmol-normalization", dmol_normalization},
    {6, "parameter-counts", parameter_counts},
    {7, "sampling", sampling},
    {8, "memorization", memorization},
    {9, "receptive-field", receptive_field},
    {10, "super-resolution", super_resolution},
    {11, "formats-and-cli", formats},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else if (std::strcmp(argv[i], "--list") == 0) {
      for (const Criterion& c : kCriteria) std::printf("%d %s\n", c.id, c.name);
      return 0;
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N] [--list]\n", argv[0]);
      return 2;
    }
  }
  int failed = 0, ran = 0;
  for (const Criterion& c : kCriteria) {
    if (only && c.id != only) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %2d %-20s (%.1fs) %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  if (!ran) {
    std::fprintf(stderr, "no criterion %d\n", only);
    return 2;
  }
  return failed ? 1 : 0;
}
