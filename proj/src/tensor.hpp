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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace imgt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Value substituted for disallowed attention logits.
inline constexpr double kMaskedLogit = -1e9;

template <class T>
class Tape;

// Dense row-major array. Values are immutable once constructed; a tensor
// produced while a Tape is active also carries the id of its node in that
// tape so that backward() can route gradients to it.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor();
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value);
  static Tensor full(Shape shape, T value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  // Negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t size() const { return data_->size(); }

  std::span<const T> data() const { return {data_->data(), data_->size()}; }
  const T* ptr() const { return data_->data(); }
  T operator[](std::size_t i) const { return (*data_)[i]; }
  T item() const;
  std::vector<T> to_vector() const { return *data_; }

  Tape<T>* tape() const { return tape_; }
  int node() const { return node_; }
  bool tracked() const { return tape_ != nullptr; }
  Tensor detach() const;

  // Shares storage with `this`; used by reshape.
  Tensor with_shape(Shape shape) const;

 private:
  friend class Tape<T>;
  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
  Tape<T>* tape_ = nullptr;
  int node_ = -1;
};

template <class T>
using Gradients = std::map<std::size_t, Tensor<T>>;

// Ordered record of the primitive operations evaluated since construction.
// Every node's inputs precede it, so a single reverse sweep is enough.
// A tape is single-owner and not thread-safe; separate tapes may be used
// concurrently.
template <class T>
class Tape {
 public:
  // Receives the tape and the gradient of the node's output; accumulates
  // into the gradients of the node's inputs via grad().
  using BackwardFn = std::function<void(Tape&, std::span<const T>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `value` as the parameter `param_id` and returns a tracked
  // alias of it.
  Tensor<T> watch(const Tensor<T>& value, std::size_t param_id);

  Tensor<T> record(Shape shape, std::vector<T> values, BackwardFn fn);

  std::span<T> grad(int node);
  std::size_t num_nodes() const { return nodes_.size(); }

  // Exact reverse-mode gradients of a scalar loss for every watched
  // parameter. Parameters the loss does not depend on get zero tensors.
  Gradients<T> backward(const Tensor<T>& loss);

 private:
  struct Node {
    std::size_t size = 0;
    BackwardFn fn;
    std::vector<T> grad;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, int>> params_;
  std::vector<Shape> param_shapes_;
};

// Returns the tape shared by the tracked inputs, or nullptr when none is
// tracked. Mixing tapes is an error.
template <class T>
Tape<T>* common_tape(std::initializer_list<const Tensor<T>*> inputs);

// Builds the result of an operation: tracked with `fn` if `tape` is set.
template <class T>
Tensor<T> make_result(Tape<T>* tape, Shape shape, std::vector<T> values,
                      typename Tape<T>::BackwardFn fn);

// ---- differentiable operations -------------------------------------------

// [.., m, k] x [.., k, n] -> [.., m, n]. `b` may be rank 2, in which case it
// is shared across the leading dimensions of `a`.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Swaps the last two axes.
template <class T>
Tensor<T> transpose(const Tensor<T>& x);

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> scale(const Tensor<T>& x, T c);

// x[.., d] + v[d] at every leading index.
template <class T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v);

template <class T>
Tensor<T> relu(const Tensor<T>& x);

template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1);

template <class T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                    T eps = T(1e-6));

// Sum along `axis` (removed from the shape), or over everything when unset.
template <class T>
Tensor<T> reduce_sum(const Tensor<T>& x, std::optional<int> axis = std::nullopt);

// Rows of `table` [v, d] selected by `ids`, giving [ids.size(), d].
template <class T>
Tensor<T> embedding_gather(const Tensor<T>& table, std::span<const std::size_t> ids);

// Stacks 2-d tensors with equal column counts along the row axis.
template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);

// Columns [begin, end) of a 2-d tensor.
template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end);

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);

// Inverted dropout; the identity when !training or rate == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng, bool training);

// Replaces entries where mask is nonzero. `mask` matches the trailing
// dimensions of x and is repeated over the leading ones.
template <class T>
Tensor<T> masked_fill(const Tensor<T>& x, std::span<const std::uint8_t> mask,
                      T value = T(kMaskedLogit));

}  // namespace imgt
