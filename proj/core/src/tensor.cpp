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

#include "seqvc/tensor.hpp"

#include <sstream>

namespace seqvc::num {

namespace {
std::size_t checked_count(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 3) {
    throw NumericError("tensor rank must be 1..3");
  }
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw NumericError("tensor extents must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(checked_count(shape_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (checked_count(shape_) != data_.size()) {
    throw NumericError("tensor value count does not match shape " + shape_str());
  }
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::add_scaled(const Tensor& o, double s) {
  if (!same_shape(o)) throw NumericError("add_scaled: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

Tensor random_uniform(std::vector<int> shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

Tensor random_normal(std::vector<int> shape, double mean, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = mean + stddev * rng.normal();
  return t;
}

Tensor& ParamStore::create(const std::string& name, Tensor init) {
  if (has(name)) throw NumericError("duplicate parameter name: " + name);
  Entry e;
  e.grad = Tensor::zeros(init.shape());
  e.value = std::move(init);
  auto [it, ok] = entries_.emplace(name, std::move(e));
  (void)ok;
  return it->second.value;
}

Tensor& ParamStore::value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw NumericError("unknown parameter: " + name);
  return it->second.value;
}

const Tensor& ParamStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw NumericError("unknown parameter: " + name);
  return it->second.value;
}

Tensor& ParamStore::grad(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw NumericError("unknown parameter: " + name);
  return it->second.grad;
}

const Tensor& ParamStore::grad(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw NumericError("unknown parameter: " + name);
  return it->second.grad;
}

void ParamStore::zero_grads() {
  for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

}  // namespace seqvc::num
