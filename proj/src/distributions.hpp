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

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace imgt {

enum class DistributionKind { kCategorical, kDmol };

inline constexpr std::size_t kDmolParamsPerComponent = 10;
// Lower clamp on DMOL log-scales.
inline constexpr double kDmolMinLogScale = -7.0;

// ---- categorical -----------------------------------------------------------

// log softmax(logits)[target] for one position, evaluated in double.
template <class T>
double categorical_log_prob(std::span<const T> logits, std::uint8_t target);

// Summed negative log-likelihood (nats) of targets under per-position logits
// [n, 256]. The per-position values, computed in double, are written to
// `per_position` when given.
template <class T>
Tensor<T> categorical_nll(const Tensor<T>& logits, std::span<const std::uint8_t> targets,
                          std::vector<double>* per_position = nullptr);

// Sample from softmax(logits / temperature).
template <class T>
std::uint8_t categorical_sample(std::span<const T> logits, double temperature, Rng& rng);

// ---- discretized mixture of logistics --------------------------------------

// Raw per-pixel parameter row of length 10 K, laid out as
//   [0, K)      mixture logits
//   [K, 4K)     means, component-major (k * 3 + c), in [-1, 1] space
//   [4K, 7K)    log-scales
//   [7K, 10K)   channel coefficients, squashed by tanh
struct DmolView {
  std::size_t components;
  std::size_t logit(std::size_t k) const { return k; }
  std::size_t mean(std::size_t k, std::size_t c) const { return components + k * 3 + c; }
  std::size_t log_scale(std::size_t k, std::size_t c) const { return 4 * components + k * 3 + c; }
  std::size_t coeff(std::size_t k, std::size_t c) const { return 7 * components + k * 3 + c; }
};

// Intensity v mapped to its bin center v / 127.5 - 1.
double intensity_to_unit(std::uint8_t v);

// log P(v) for one channel of one logistic component with conditional mean
// `mean` and log-scale `log_scale` (already clamped). Bins have half-width
// 1/255; v = 0 and v = 255 integrate to -inf / +inf.
double dmol_channel_log_prob(double mean, double log_scale, std::uint8_t v);

// log p(r, g, b) under one pixel's mixture. If grad is non-null it receives
// d log p / d row (length 10 K).
template <class T>
double dmol_log_prob(const T* row, std::size_t components, const std::uint8_t* rgb,
                     double* grad = nullptr);

// Summed NLL (nats) for params [n_pixels, 10 K] against targets given as
// n_pixels consecutive (r, g, b) triples.
template <class T>
Tensor<T> dmol_nll(const Tensor<T>& params, std::span<const std::uint8_t> targets,
                   std::size_t components, std::vector<double>* per_pixel = nullptr);

// Picks a component from softmax(logits / temperature), then draws each
// channel r -> g -> b as mean + scale * temperature * logistic noise, with the
// earlier sampled channels feeding the conditional means. Values are clamped
// to [-1, 1] and quantized to the nearest of the 256 bins.
template <class T>
std::array<std::uint8_t, 3> dmol_sample(const T* row, std::size_t components, double temperature,
                                        Rng& rng);

// ---- evaluation ------------------------------------------------------------

double bits_per_dim(double total_nll_nats, std::size_t height, std::size_t width);

// Values the output layer emits for a full h x w image.
std::size_t categorical_output_dims(std::size_t height, std::size_t width);
std::size_t dmol_output_dims(std::size_t height, std::size_t width, std::size_t components);

}  // namespace imgt
