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

// Scalar kernels shared by the recorded tensor operations and the cached
// decoding path. Both must produce bit-identical results, so every
// reduction here runs in a fixed, shape-independent order.

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace imgt::kernels {

// c[m, n] = a[m, k] * b[k, n]. Each c[i][j] accumulates over k in ascending
// order whatever m is, so a single-row call reproduces a row of a batched one.
template <class T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    std::fill(ci, ci + n, T(0));
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ai[p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[k, n] += a[m, k]^T * g[m, n]
template <class T>
void gemm_tn_acc(const T* a, const T* g, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    const T* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ai[p];
      T* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * gi[j];
    }
  }
}

// c[m, k] += g[m, n] * b[k, n]^T
template <class T>
void gemm_nt_acc(const T* g, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* gi = g + i * n;
    T* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* bp = b + p * n;
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
      ci[p] += acc;
    }
  }
}

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// Normalizes one row; stores the normalized values (before the affine map)
// in xhat and returns 1/sqrt(var + eps).
template <class T>
T layernorm_row(const T* x, const T* gain, const T* bias, T eps, std::size_t d, T* xhat,
                T* y) {
  T mean = T(0);
  for (std::size_t i = 0; i < d; ++i) mean += x[i];
  mean /= static_cast<T>(d);
  T var = T(0);
  for (std::size_t i = 0; i < d; ++i) {
    const T c = x[i] - mean;
    var += c * c;
  }
  var /= static_cast<T>(d);
  const T inv = T(1) / std::sqrt(var + eps);
  for (std::size_t i = 0; i < d; ++i) {
    xhat[i] = (x[i] - mean) * inv;
    y[i] = xhat[i] * gain[i] + bias[i];
  }
  return inv;
}

// Scaled dot-product attention for a single query row against `count`
// memory rows. key(j) / value(j) return row pointers of width dh; permitted(j)
// says whether the query may attend to slot j. Disallowed slots receive
// exactly zero weight, which is what adding the -1e9 surrogate to their
// logits yields after max-subtraction; they are therefore skipped outright.
// probs (length count) receives the attention distribution. Returns false if
// no slot is permitted (out is then left zero).
template <class T, class KeyFn, class ValueFn, class PermitFn>
bool attend_row(const T* q, std::size_t dh, std::size_t count, KeyFn key, ValueFn value,
                PermitFn permitted, T scale, T* probs, T* out) {
  std::fill(out, out + dh, T(0));
  bool any = false;
  T max_logit = T(0);
  for (std::size_t j = 0; j < count; ++j) {
    if (!permitted(j)) {
      probs[j] = T(0);
      continue;
    }
    const T s = dot(q, key(j), dh) * scale;
    probs[j] = s;
    if (!any || s > max_logit) max_logit = s;
    any = true;
  }
  if (!any) return false;
  T denom = T(0);
  for (std::size_t j = 0; j < count; ++j) {
    if (!permitted(j)) continue;
    probs[j] = std::exp(probs[j] - max_logit);
    denom += probs[j];
  }
  for (std::size_t j = 0; j < count; ++j) {
    if (!permitted(j)) continue;
    probs[j] /= denom;
    const T p = probs[j];
    const T* v = value(j);
    for (std::size_t c = 0; c < dh; ++c) out[c] += p * v[c];
  }
  return true;
}

}  // namespace imgt::kernels
