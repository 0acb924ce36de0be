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
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace imgt {

// Ordered, named collection of learnable tensors. Ids are insertion indices
// and double as the param ids used with Tape::watch.
template <class T>
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor<T> value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
    index_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return names_.size() - 1;
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Tensor<T>& value(std::size_t i) const { return values_.at(i); }
  const std::vector<Tensor<T>>& values() const { return values_; }

  void set(std::size_t i, Tensor<T> value) {
    if (value.shape() != values_.at(i).shape())
      throw ShapeError("parameter " + names_[i] + ": shape " + shape_string(value.shape()) +
                       " does not match " + shape_string(values_[i].shape()));
    values_[i] = std::move(value);
  }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t at(const std::string& name) const {
    auto i = find(name);
    if (!i) throw ConfigError("no parameter named " + name);
    return *i;
  }

  std::size_t total_scalars() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (std::size_t i = 0; i < size(); ++i) {
      std::vector<U> v(values_[i].data().begin(), values_[i].data().end());
      out.add(names_[i], Tensor<U>(values_[i].shape(), std::move(v)));
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace imgt
