// Copyright 2026 The seqvc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "seqvc/error.hpp"
#include "seqvc/rng.hpp"

namespace seqvc::num {

// Dense row-major tensor of doubles, rank 1..3. Values are stored at 64-bit
// precision; persistence formats narrow to 32-bit (see io.hpp).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  // rank-2 helpers
  int rows() const { return shape_[0]; }
  int cols() const { return shape_[1]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& at(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  void fill(double v) { data_.assign(data_.size(), v); }

  // in-place helpers used by the optimizer
  void add_scaled(const Tensor& o, double s);

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

Tensor random_uniform(std::vector<int> shape, double lo, double hi, Rng& rng);
Tensor random_normal(std::vector<int> shape, double mean, double stddev, Rng& rng);

// Frame-major feature matrix: rows = time frames, cols = feature dims.
using FeatureSequence = Tensor;

// Ordered parameter bank. Iteration order is lexicographic by name (std::map),
// which fixes checkpoint layout and optimizer update order.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
  };

  Tensor& create(const std::string& name, Tensor init);
  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;

  void zero_grads();
  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> names() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace seqvc::num
