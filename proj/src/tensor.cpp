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
#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kernels.hpp"

namespace imgt {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (std::size_t e : shape)
    if (e == 0) throw ShapeError("zero extent in shape " + shape_string(shape));
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  if (axis < -r || axis >= r)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
}

template <class T>
void accumulate(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

template <class T>
Tensor<T>::Tensor() : shape_{}, data_(std::make_shared<const std::vector<T>>(1, T(0))) {}

template <class T>
Tensor<T>::Tensor(Shape shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<const std::vector<T>>(shape_numel(shape_), T(0))) {
  check_extents(shape_);
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
  check_extents(shape_);
  if (values.size() != shape_numel(shape_))
    throw ShapeError("tensor of shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_numel(shape_)) + " values, got " +
                     std::to_string(values.size()));
  data_ = std::make_shared<const std::vector<T>>(std::move(values));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <class T>
std::size_t Tensor<T>::dim(int axis) const {
  return shape_[normalize_axis(axis, shape_.size())];
}

template <class T>
T Tensor<T>::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return (*data_)[0];
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  Tensor out = *this;
  out.tape_ = nullptr;
  out.node_ = -1;
  return out;
}

template <class T>
Tensor<T> Tensor<T>::with_shape(Shape shape) const {
  if (shape_numel(shape) != size())
    throw ShapeError("cannot view " + shape_string(shape_) + " as " + shape_string(shape));
  check_extents(shape);
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

// ---- Tape ------------------------------------------------------------------

template <class T>
Tensor<T> Tape<T>::watch(const Tensor<T>& value, std::size_t param_id) {
  Tensor<T> out = value.detach();
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{value.size(), nullptr, {}});
  params_.emplace_back(param_id, out.node_);
  param_shapes_.push_back(value.shape());
  return out;
}

template <class T>
Tensor<T> Tape<T>::record(Shape shape, std::vector<T> values, BackwardFn fn) {
  Tensor<T> out(std::move(shape), std::move(values));
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{out.size(), std::move(fn), {}});
  return out;
}

template <class T>
std::span<T> Tape<T>::grad(int node) {
  Node& n = nodes_.at(static_cast<std::size_t>(node));
  if (n.grad.empty()) n.grad.assign(n.size, T(0));
  return {n.grad.data(), n.grad.size()};
}

template <class T>
Gradients<T> Tape<T>::backward(const Tensor<T>& loss) {
  if (loss.size() != 1)
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  if (loss.tape() != this) throw ShapeError("backward(): loss was not recorded on this tape");
  for (Node& n : nodes_) n.grad.clear();
  grad(loss.node())[0] = T(1);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.fn || n.grad.empty()) continue;
    // The callback may only touch earlier nodes, so this span stays valid.
    std::span<const T> g(n.grad.data(), n.grad.size());
    n.fn(*this, g);
  }
  Gradients<T> out;
  for (std::size_t p = 0; p < params_.size(); ++p) {
    const auto [id, node] = params_[p];
    Node& n = nodes_[static_cast<std::size_t>(node)];
    std::vector<T> g = n.grad.empty() ? std::vector<T>(n.size, T(0)) : n.grad;
    auto it = out.find(id);
    if (it == out.end()) {
      out.emplace(id, Tensor<T>(param_shapes_[p], std::move(g)));
    } else {
      // Same parameter watched twice: gradients add.
      std::vector<T> sum = it->second.to_vector();
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += g[k];
      it->second = Tensor<T>(param_shapes_[p], std::move(sum));
    }
  }
  return out;
}

template <class T>
Tape<T>* common_tape(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = nullptr;
  for (const Tensor<T>* t : inputs) {
    if (!t->tracked()) continue;
    if (tape && tape != t->tape()) throw ShapeError("operands recorded on different tapes");
    tape = t->tape();
  }
  return tape;
}

template <class T>
Tensor<T> make_result(Tape<T>* tape, Shape shape, std::vector<T> values,
                      typename Tape<T>::BackwardFn fn) {
  if (!tape) return Tensor<T>(std::move(shape), std::move(values));
  return tape->record(std::move(shape), std::move(values), std::move(fn));
}

// ---- operations ------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw ShapeError("matmul needs rank >= 2 operands, got " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k)
    throw ShapeError("matmul: inner extents differ: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  const Shape lead_a(a.shape().begin(), a.shape().end() - 2);
  const Shape lead_b(b.shape().begin(), b.shape().end() - 2);
  const bool shared_b = lead_b.empty();
  if (!shared_b && lead_a != lead_b)
    throw ShapeError("matmul: leading extents differ: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  const std::size_t batch = shape_numel(lead_a);
  Shape out_shape = lead_a;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(batch * m * n);
  for (std::size_t t = 0; t < batch; ++t)
    kernels::gemm(a.ptr() + t * m * k, b.ptr() + (shared_b ? 0 : t * k * n), out.data() + t * m * n,
                  m, k, n);

  Tape<T>* tape = common_tape({&a, &b});
  return make_result<T>(tape, std::move(out_shape), std::move(out),
                        [a, b, batch, m, k, n, shared_b](Tape<T>& tp, std::span<const T> g) {
                          for (std::size_t t = 0; t < batch; ++t) {
                            const T* gt = g.data() + t * m * n;
                            const T* bt = b.ptr() + (shared_b ? 0 : t * k * n);
                            if (a.tracked())
                              kernels::gemm_nt_acc(gt, bt, tp.grad(a.node()).data() + t * m * k, m,
                                                   k, n);
                            if (b.tracked())
                              kernels::gemm_tn_acc(a.ptr() + t * m * k, gt,
                                                   tp.grad(b.node()).data() +
                                                       (shared_b ? 0 : t * k * n),
                                                   m, k, n);
                          }
                        });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_string(x.shape()));
  const std::size_t m = x.dim(-2), n = x.dim(-1);
  const std::size_t batch = x.size() / (m * n);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  std::vector<T> out(x.size());
  for (std::size_t t = 0; t < batch; ++t)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[t * m * n + j * m + i] = x[t * m * n + i * n + j];
  return make_result<T>(common_tape({&x}), std::move(shape), std::move(out),
                        [x, batch, m, n](Tape<T>& tp, std::span<const T> g) {
                          auto gx = tp.grad(x.node());
                          for (std::size_t t = 0; t < batch; ++t)
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j)
                                gx[t * m * n + i * n + j] += g[t * m * n + j * m + i];
                        });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                     shape_string(shape));
  if (!x.tracked()) return x.with_shape(std::move(shape));
  return make_result<T>(x.tape(), std::move(shape), x.to_vector(),
                        [x](Tape<T>& tp, std::span<const T> g) { accumulate(tp.grad(x.node()), g); });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a.shape(), b.shape());
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result<T>(common_tape({&a, &b}), a.shape(), std::move(out),
                        [a, b](Tape<T>& tp, std::span<const T> g) {
                          if (a.tracked()) accumulate(tp.grad(a.node()), g);
                          if (b.tracked()) accumulate(tp.grad(b.node()), g);
                        });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a.shape(), b.shape());
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result<T>(common_tape({&a, &b}), a.shape(), std::move(out),
                        [a, b](Tape<T>& tp, std::span<const T> g) {
                          if (a.tracked()) accumulate(tp.grad(a.node()), g);
                          if (b.tracked()) {
                            auto gb = tp.grad(b.node());
                            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                          }
                        });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a.shape(), b.shape());
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result<T>(common_tape({&a, &b}), a.shape(), std::move(out),
                        [a, b](Tape<T>& tp, std::span<const T> g) {
                          if (a.tracked()) {
                            auto ga = tp.grad(a.node());
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * b[i];
                          }
                          if (b.tracked()) {
                            auto gb = tp.grad(b.node());
                            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a[i];
                          }
                        });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * c;
  return make_result<T>(common_tape({&x}), x.shape(), std::move(out),
                        [x, c](Tape<T>& tp, std::span<const T> g) {
                          auto gx = tp.grad(x.node());
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * c;
                        });
}

template <class T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  if (x.rank() < 1 || v.size() != x.dim(-1) || v.rank() != 1)
    throw ShapeError("add_rowvec: cannot add " + shape_string(v.shape()) + " to rows of " +
                     shape_string(x.shape()));
  const std::size_t d = v.size(), rows = x.size() / d;
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x[r * d + j] + v[j];
  return make_result<T>(common_tape({&x, &v}), x.shape(), std::move(out),
                        [x, v, rows, d](Tape<T>& tp, std::span<const T> g) {
                          if (x.tracked()) accumulate(tp.grad(x.node()), g);
                          if (v.tracked()) {
                            auto gv = tp.grad(v.node());
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < d; ++j) gv[j] += g[r * d + j];
                          }
                        });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return make_result<T>(common_tape({&x}), x.shape(), std::move(out),
                        [x](Tape<T>& tp, std::span<const T> g) {
                          auto gx = tp.grad(x.node());
                          // Subgradient at 0 is 0.
                          for (std::size_t i = 0; i < gx.size(); ++i)
                            if (x[i] > T(0)) gx[i] += g[i];
                        });
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const std::size_t len = x.shape()[ax];
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  const std::size_t outer = x.size() / (len * inner);
  for (T v : x.data())
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");

  std::vector<T> out(x.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = x[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, x[base + j * inner]);
      T denom = T(0);
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(x[base + j * inner] - mx);
        out[base + j * inner] = e;
        denom += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= denom;
    }
  auto y = std::make_shared<std::vector<T>>(out);
  return make_result<T>(common_tape({&x}), x.shape(), std::move(out),
                        [x, y, outer, inner, len](Tape<T>& tp, std::span<const T> g) {
                          auto gx = tp.grad(x.node());
                          const auto& yv = *y;
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t in = 0; in < inner; ++in) {
                              const std::size_t base = o * len * inner + in;
                              T s = T(0);
                              for (std::size_t j = 0; j < len; ++j)
                                s += g[base + j * inner] * yv[base + j * inner];
                              for (std::size_t j = 0; j < len; ++j) {
                                const std::size_t k = base + j * inner;
                                gx[k] += yv[k] * (g[k] - s);
                              }
                            }
                        });
}

template <class T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (x.rank() < 1) throw ShapeError("layernorm on a scalar");
  const std::size_t d = x.dim(-1);
  if (gain.size() != d || bias.size() != d)
    throw ShapeError("layernorm: gain/bias " + shape_string(gain.shape()) + "/" +
                     shape_string(bias.shape()) + " do not match " + shape_string(x.shape()));
  const std::size_t rows = x.size() / d;
  std::vector<T> out(x.size());
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    (*inv)[r] = kernels::layernorm_row(x.ptr() + r * d, gain.ptr(), bias.ptr(), eps, d,
                                       xhat->data() + r * d, out.data() + r * d);
  return make_result<T>(
      common_tape({&x, &gain, &bias}), x.shape(), std::move(out),
      [x, gain, bias, xhat, inv, rows, d](Tape<T>& tp, std::span<const T> g) {
        const auto& xh = *xhat;
        if (gain.tracked()) {
          auto gg = tp.grad(gain.node());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xh[r * d + j];
        }
        if (bias.tracked()) {
          auto gb = tp.grad(bias.node());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
        if (x.tracked()) {
          auto gx = tp.grad(x.node());
          std::vector<T> dxhat(d);
          for (std::size_t r = 0; r < rows; ++r) {
            T sum = T(0), sum_xh = T(0);
            for (std::size_t j = 0; j < d; ++j) {
              dxhat[j] = g[r * d + j] * gain[j];
              sum += dxhat[j];
              sum_xh += dxhat[j] * xh[r * d + j];
            }
            const T n = static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j)
              gx[r * d + j] += (*inv)[r] / n * (n * dxhat[j] - sum - xh[r * d + j] * sum_xh);
          }
        }
      });
}

template <class T>
Tensor<T> reduce_sum(const Tensor<T>& x, std::optional<int> axis) {
  if (!axis) {
    T s = T(0);
    for (T v : x.data()) s += v;
    return make_result<T>(common_tape({&x}), Shape{}, std::vector<T>{s},
                          [x](Tape<T>& tp, std::span<const T> g) {
                            auto gx = tp.grad(x.node());
                            for (T& v : gx) v += g[0];
                          });
  }
  const std::size_t ax = normalize_axis(*axis, x.rank());
  const std::size_t len = x.shape()[ax];
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  const std::size_t outer = x.size() / (len * inner);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
  std::vector<T> out(outer * inner, T(0));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < len; ++j)
      for (std::size_t in = 0; in < inner; ++in)
        out[o * inner + in] += x[(o * len + j) * inner + in];
  return make_result<T>(common_tape({&x}), std::move(shape), std::move(out),
                        [x, outer, len, inner](Tape<T>& tp, std::span<const T> g) {
                          auto gx = tp.grad(x.node());
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t j = 0; j < len; ++j)
                              for (std::size_t in = 0; in < inner; ++in)
                                gx[(o * len + j) * inner + in] += g[o * inner + in];
                        });
}

template <class T>
Tensor<T> embedding_gather(const Tensor<T>& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2)
    throw ShapeError("embedding_gather: table must be 2-d, got " + shape_string(table.shape()));
  if (ids.empty()) throw ShapeError("embedding_gather: empty id list");
  const std::size_t v = table.dim(0), d = table.dim(1);
  std::vector<T> out(ids.size() * d);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= v)
      throw RangeError("embedding id " + std::to_string(ids[r]) + " out of range for table of " +
                       std::to_string(v) + " rows");
    std::copy_n(table.ptr() + ids[r] * d, d, out.data() + r * d);
  }
  auto id_copy = std::make_shared<std::vector<std::size_t>>(ids.begin(), ids.end());
  return make_result<T>(common_tape({&table}), Shape{ids.size(), d}, std::move(out),
                        [table, id_copy, d](Tape<T>& tp, std::span<const T> g) {
                          auto gt = tp.grad(table.node());
                          const auto& idv = *id_copy;
                          for (std::size_t r = 0; r < idv.size(); ++r)
                            for (std::size_t j = 0; j < d; ++j) gt[idv[r] * d + j] += g[r * d + j];
                        });
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t d = parts[0].dim(-1);
  std::size_t rows = 0;
  Tape<T>* tape = nullptr;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != d)
      throw ShapeError("concat_rows: incompatible part " + shape_string(p.shape()));
    rows += p.dim(0);
    Tape<T>* t = common_tape({&p});
    if (t && tape && t != tape) throw ShapeError("operands recorded on different tapes");
    if (t) tape = t;
  }
  std::vector<T> out;
  out.reserve(rows * d);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result<T>(tape, Shape{rows, d}, std::move(out),
                        [parts](Tape<T>& tp, std::span<const T> g) {
                          std::size_t offset = 0;
                          for (const auto& p : parts) {
                            if (p.tracked()) accumulate(tp.grad(p.node()), g.subspan(offset, p.size()));
                            offset += p.size();
                          }
                        });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  if (x.rank() != 2 || begin >= end || end > x.dim(1))
    throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") for " + shape_string(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1), w = end - begin;
  std::vector<T> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.ptr() + r * cols + begin, w, out.data() + r * w);
  return make_result<T>(common_tape({&x}), Shape{rows, w}, std::move(out),
                        [x, rows, cols, begin, w](Tape<T>& tp, std::span<const T> g) {
                          auto gx = tp.grad(x.node());
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < w; ++j) gx[r * cols + begin + j] += g[r * w + j];
                        });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  Tape<T>* tape = nullptr;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows)
      throw ShapeError("concat_cols: incompatible part " + shape_string(p.shape()));
    cols += p.dim(1);
    Tape<T>* t = common_tape({&p});
    if (t && tape && t != tape) throw ShapeError("operands recorded on different tapes");
    if (t) tape = t;
  }
  std::vector<T> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.ptr() + r * w, w, out.data() + r * cols + offset);
    offset += w;
  }
  return make_result<T>(tape, Shape{rows, cols}, std::move(out),
                        [parts, rows, cols](Tape<T>& tp, std::span<const T> g) {
                          std::size_t off = 0;
                          for (const auto& p : parts) {
                            const std::size_t w = p.dim(1);
                            if (p.tracked()) {
                              auto gp = tp.grad(p.node());
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t j = 0; j < w; ++j) gp[r * w + j] += g[r * cols + off + j];
                            }
                            off += w;
                          }
                        });
}

template <class T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0) || rate >= 1.0)
    throw RangeError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const T keep_scale = T(1.0 / (1.0 - rate));
  auto keep = std::make_shared<std::vector<std::uint8_t>>(x.size());
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*keep)[i] = rng.uniform() >= rate;
    out[i] = (*keep)[i] ? x[i] * keep_scale : T(0);
  }
  return make_result<T>(common_tape({&x}), x.shape(), std::move(out),
                        [x, keep, keep_scale](Tape<T>& tp, std::span<const T> g) {
                          auto gx = tp.grad(x.node());
                          for (std::size_t i = 0; i < gx.size(); ++i)
                            if ((*keep)[i]) gx[i] += g[i] * keep_scale;
                        });
}

template <class T>
Tensor<T> masked_fill(const Tensor<T>& x, std::span<const std::uint8_t> mask, T value) {
  if (mask.empty() || x.size() % mask.size() != 0)
    throw ShapeError("masked_fill: mask of " + std::to_string(mask.size()) +
                     " entries does not tile " + shape_string(x.shape()));
  auto m = std::make_shared<std::vector<std::uint8_t>>(mask.begin(), mask.end());
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*m)[i % m->size()] ? value : x[i];
  return make_result<T>(common_tape({&x}), x.shape(), std::move(out),
                        [x, m](Tape<T>& tp, std::span<const T> g) {
                          auto gx = tp.grad(x.node());
                          for (std::size_t i = 0; i < gx.size(); ++i)
                            if (!(*m)[i % m->size()]) gx[i] += g[i];
                        });
}

#define IMGT_INSTANTIATE(T)                                                                   \
  template class Tensor<T>;                                                                   \
  template class Tape<T>;                                                                     \
  template Tape<T>* common_tape<T>(std::initializer_list<const Tensor<T>*>);                 \
  template Tensor<T> make_result<T>(Tape<T>*, Shape, std::vector<T>,                          \
                                    typename Tape<T>::BackwardFn);                            \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> transpose<T>(const Tensor<T>&);                                          \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                     \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                           \
  template Tensor<T> add_rowvec<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> relu<T>(const Tensor<T>&);                                               \
  template Tensor<T> softmax<T>(const Tensor<T>&, int);                                       \
  template Tensor<T> layernorm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);   \
  template Tensor<T> reduce_sum<T>(const Tensor<T>&, std::optional<int>);                     \
  template Tensor<T> embedding_gather<T>(const Tensor<T>&, std::span<const std::size_t>);     \
  template Tensor<T> concat_rows<T>(const std::vector<Tensor<T>>&);                           \
  template Tensor<T> slice_cols<T>(const Tensor<T>&, std::size_t, std::size_t);               \
  template Tensor<T> concat_cols<T>(const std::vector<Tensor<T>>&);                           \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, Rng&, bool);                        \
  template Tensor<T> masked_fill<T>(const Tensor<T>&, std::span<const std::uint8_t>, T);

IMGT_INSTANTIATE(float)
IMGT_INSTANTIATE(double)

#undef IMGT_INSTANTIATE

}  // namespace imgt
