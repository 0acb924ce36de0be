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
#include "distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "image.hpp"

namespace imgt {

namespace {

constexpr double kHalfBin = 1.0 / 255.0;

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double log_sigmoid(double z) { return -softplus(-z); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw RangeError("temperature must be positive, got " + std::to_string(temperature));
}

// log P(v) for a channel together with its partial derivatives with respect
// to the upper and lower standardized bin edges.
struct ChannelTerm {
  double log_prob;
  double d_upper;
  double d_lower;
};

ChannelTerm channel_term(double upper, double lower, std::uint8_t v) {
  if (v == 0) return {log_sigmoid(upper), sigmoid(-upper), 0.0};
  if (v == 255) return {log_sigmoid(-lower), 0.0, -sigmoid(lower)};
  // sigmoid(a) - sigmoid(b) = sigmoid(a) sigmoid(b) (e^-b - e^-a), which stays
  // finite in log space wherever the bin sits relative to the mean.
  const double delta = upper - lower;
  const double tail = 1.0 / std::expm1(delta);
  return {log_sigmoid(upper) + log_sigmoid(lower) - lower + std::log(-std::expm1(-delta)),
          sigmoid(-upper) + tail, -sigmoid(lower) - tail};
}

}  // namespace

// ---- categorical -----------------------------------------------------------

template <class T>
double categorical_log_prob(std::span<const T> logits, std::uint8_t target) {
  double mx = logits[0];
  for (T l : logits) mx = std::max(mx, static_cast<double>(l));
  double s = 0.0;
  for (T l : logits) s += std::exp(static_cast<double>(l) - mx);
  return static_cast<double>(logits[target]) - mx - std::log(s);
}

template <class T>
Tensor<T> categorical_nll(const Tensor<T>& logits, std::span<const std::uint8_t> targets,
                          std::vector<double>* per_position) {
  if (logits.rank() != 2 || logits.dim(1) != kIntensities || logits.dim(0) != targets.size())
    throw ShapeError("categorical_nll: logits " + shape_string(logits.shape()) + " for " +
                     std::to_string(targets.size()) + " targets");
  const std::size_t n = targets.size();
  std::vector<double> nll(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    nll[i] = -categorical_log_prob(logits.data().subspan(i * kIntensities, kIntensities), targets[i]);
    total += nll[i];
  }
  if (per_position) *per_position = nll;
  auto tgt = std::make_shared<std::vector<std::uint8_t>>(targets.begin(), targets.end());
  return make_result<T>(common_tape({&logits}), Shape{}, std::vector<T>{static_cast<T>(total)},
                        [logits, tgt, n](Tape<T>& tp, std::span<const T> g) {
                          auto gl = tp.grad(logits.node());
                          const double scale = g[0];
                          for (std::size_t i = 0; i < n; ++i) {
                            const T* row = logits.ptr() + i * kIntensities;
                            double mx = row[0];
                            for (std::size_t v = 1; v < kIntensities; ++v)
                              mx = std::max(mx, static_cast<double>(row[v]));
                            double s = 0.0;
                            for (std::size_t v = 0; v < kIntensities; ++v) s += std::exp(row[v] - mx);
                            for (std::size_t v = 0; v < kIntensities; ++v) {
                              const double p = std::exp(row[v] - mx) / s;
                              const double onehot = v == (*tgt)[i] ? 1.0 : 0.0;
                              gl[i * kIntensities + v] += static_cast<T>(scale * (p - onehot));
                            }
                          }
                        });
}

template <class T>
std::uint8_t categorical_sample(std::span<const T> logits, double temperature, Rng& rng) {
  check_temperature(temperature);
  if (logits.size() != kIntensities)
    throw ShapeError("categorical_sample: expected 256 logits, got " + std::to_string(logits.size()));
  double mx = static_cast<double>(logits[0]) / temperature;
  for (T l : logits) mx = std::max(mx, static_cast<double>(l) / temperature);
  std::array<double, kIntensities> w{};
  double s = 0.0;
  for (std::size_t v = 0; v < kIntensities; ++v) {
    w[v] = std::exp(static_cast<double>(logits[v]) / temperature - mx);
    s += w[v];
  }
  const double u = rng.uniform() * s;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t v = 0; v < kIntensities; ++v) {
    if (w[v] <= 0.0) continue;
    last = v;
    acc += w[v];
    if (u < acc) return static_cast<std::uint8_t>(v);
  }
  return static_cast<std::uint8_t>(last);
}

// ---- discretized mixture of logistics --------------------------------------

double intensity_to_unit(std::uint8_t v) { return static_cast<double>(v) / 127.5 - 1.0; }

double dmol_channel_log_prob(double mean, double log_scale, std::uint8_t v) {
  const double inv = std::exp(-log_scale);
  const double centered = intensity_to_unit(v) - mean;
  return channel_term(inv * (centered + kHalfBin), inv * (centered - kHalfBin), v).log_prob;
}

template <class T>
double dmol_log_prob(const T* row, std::size_t components, const std::uint8_t* rgb, double* grad) {
  const DmolView at{components};
  const std::size_t K = components;
  double x[3];
  for (std::size_t c = 0; c < 3; ++c) x[c] = intensity_to_unit(rgb[c]);

  double logit_max = row[0];
  for (std::size_t k = 1; k < K; ++k) logit_max = std::max(logit_max, static_cast<double>(row[k]));
  double logit_sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) logit_sum += std::exp(row[k] - logit_max);
  const double log_norm = logit_max + std::log(logit_sum);

  std::vector<double> total(K);
  // Per component: d log p_k / d conditional mean and / d raw log-scale.
  std::vector<std::array<double, 3>> d_mean(K), d_log_scale(K), tanh_c(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t c = 0; c < 3; ++c) tanh_c[k][c] = std::tanh(static_cast<double>(row[at.coeff(k, c)]));
    const double mean[3] = {
        static_cast<double>(row[at.mean(k, 0)]),
        row[at.mean(k, 1)] + tanh_c[k][0] * x[0],
        row[at.mean(k, 2)] + tanh_c[k][1] * x[0] + tanh_c[k][2] * x[1],
    };
    double lp = row[k] - log_norm;
    for (std::size_t c = 0; c < 3; ++c) {
      const double raw = row[at.log_scale(k, c)];
      const double ls = std::max(raw, kDmolMinLogScale);
      const double inv = std::exp(-ls);
      const double centered = x[c] - mean[c];
      const double upper = inv * (centered + kHalfBin), lower = inv * (centered - kHalfBin);
      const ChannelTerm term = channel_term(upper, lower, rgb[c]);
      lp += term.log_prob;
      d_mean[k][c] = -inv * (term.d_upper + term.d_lower);
      d_log_scale[k][c] = raw > kDmolMinLogScale ? -(upper * term.d_upper + lower * term.d_lower) : 0.0;
    }
    total[k] = lp;
  }
  double mx = total[0];
  for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, total[k]);
  double s = 0.0;
  for (std::size_t k = 0; k < K; ++k) s += std::exp(total[k] - mx);
  const double log_p = mx + std::log(s);

  if (grad) {
    std::fill(grad, grad + kDmolParamsPerComponent * K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const double w = std::exp(total[k] - log_p);
      grad[at.logit(k)] = w - std::exp(row[k] - log_norm);
      for (std::size_t c = 0; c < 3; ++c) {
        grad[at.mean(k, c)] = w * d_mean[k][c];
        grad[at.log_scale(k, c)] = w * d_log_scale[k][c];
      }
      grad[at.coeff(k, 0)] = w * d_mean[k][1] * x[0] * (1.0 - tanh_c[k][0] * tanh_c[k][0]);
      grad[at.coeff(k, 1)] = w * d_mean[k][2] * x[0] * (1.0 - tanh_c[k][1] * tanh_c[k][1]);
      grad[at.coeff(k, 2)] = w * d_mean[k][2] * x[1] * (1.0 - tanh_c[k][2] * tanh_c[k][2]);
    }
  }
  return log_p;
}

template <class T>
Tensor<T> dmol_nll(const Tensor<T>& params, std::span<const std::uint8_t> targets,
                   std::size_t components, std::vector<double>* per_pixel) {
  const std::size_t width = kDmolParamsPerComponent * components;
  if (components == 0 || params.rank() != 2 || params.dim(1) != width ||
      params.dim(0) * 3 != targets.size())
    throw ShapeError("dmol_nll: params " + shape_string(params.shape()) + " for " +
                     std::to_string(targets.size()) + " target values and " +
                     std::to_string(components) + " components");
  const std::size_t n = params.dim(0);
  std::vector<double> nll(n);
  double total = 0.0;
  auto grads = std::make_shared<std::vector<double>>(params.tracked() ? n * width : 0);
  for (std::size_t i = 0; i < n; ++i) {
    nll[i] = -dmol_log_prob(params.ptr() + i * width, components, targets.data() + 3 * i,
                            params.tracked() ? grads->data() + i * width : nullptr);
    total += nll[i];
  }
  if (per_pixel) *per_pixel = nll;
  return make_result<T>(common_tape({&params}), Shape{}, std::vector<T>{static_cast<T>(total)},
                        [params, grads](Tape<T>& tp, std::span<const T> g) {
                          auto gp = tp.grad(params.node());
                          for (std::size_t i = 0; i < gp.size(); ++i)
                            gp[i] += static_cast<T>(-g[0] * (*grads)[i]);
                        });
}

template <class T>
std::array<std::uint8_t, 3> dmol_sample(const T* row, std::size_t components, double temperature,
                                        Rng& rng) {
  check_temperature(temperature);
  const DmolView at{components};
  std::vector<double> logits(components);
  for (std::size_t k = 0; k < components; ++k) logits[k] = row[k];
  std::size_t k = 0;
  {
    double mx = logits[0] / temperature;
    for (double l : logits) mx = std::max(mx, l / temperature);
    double s = 0.0;
    std::vector<double> w(components);
    for (std::size_t j = 0; j < components; ++j) {
      w[j] = std::exp(logits[j] / temperature - mx);
      s += w[j];
    }
    const double u = rng.uniform() * s;
    double acc = 0.0;
    for (std::size_t j = 0; j < components; ++j) {
      acc += w[j];
      k = j;
      if (u < acc) break;
    }
  }
  std::array<double, 3> x{};
  std::array<std::uint8_t, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = row[at.mean(k, c)];
    if (c == 1) mean += std::tanh(static_cast<double>(row[at.coeff(k, 0)])) * x[0];
    if (c == 2)
      mean += std::tanh(static_cast<double>(row[at.coeff(k, 1)])) * x[0] +
              std::tanh(static_cast<double>(row[at.coeff(k, 2)])) * x[1];
    const double ls = std::max(static_cast<double>(row[at.log_scale(k, c)]), kDmolMinLogScale);
    const double u = std::clamp(rng.uniform_open(), 1e-5, 1.0 - 1e-5);
    const double value = mean + std::exp(ls) * temperature * (std::log(u) - std::log1p(-u));
    x[c] = std::clamp(value, -1.0, 1.0);
    const double bin = std::round((x[c] + 1.0) * 127.5);
    out[c] = static_cast<std::uint8_t>(std::clamp(bin, 0.0, 255.0));
  }
  return out;
}

// ---- evaluation ------------------------------------------------------------

double bits_per_dim(double total_nll_nats, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ShapeError("bits_per_dim: empty image");
  return total_nll_nats / static_cast<double>(height * width * kChannels) / std::numbers::ln2;
}

std::size_t categorical_output_dims(std::size_t height, std::size_t width) {
  return height * width * kChannels * kIntensities;
}

std::size_t dmol_output_dims(std::size_t height, std::size_t width, std::size_t components) {
  return height * width * kDmolParamsPerComponent * components;
}

#define IMGT_INSTANTIATE(T)                                                                       \
  template double categorical_log_prob<T>(std::span<const T>, std::uint8_t);                      \
  template Tensor<T> categorical_nll<T>(const Tensor<T>&, std::span<const std::uint8_t>,          \
                                        std::vector<double>*);                                    \
  template std::uint8_t categorical_sample<T>(std::span<const T>, double, Rng&);                  \
  template double dmol_log_prob<T>(const T*, std::size_t, const std::uint8_t*, double*);          \
  template Tensor<T> dmol_nll<T>(const Tensor<T>&, std::span<const std::uint8_t>, std::size_t,    \
                                 std::vector<double>*);                                           \
  template std::array<std::uint8_t, 3> dmol_sample<T>(const T*, std::size_t, double, Rng&);

IMGT_INSTANTIATE(float)
IMGT_INSTANTIATE(double)

#undef IMGT_INSTANTIATE

}  // namespace imgt
