/*
 * Copyright 2026 The fedsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDSIM_PARAM_VECTOR_HPP_
#define FEDSIM_PARAM_VECTOR_HPP_

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fedsim {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LayerShape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Flat parameter vector with optional per-layer matrix shapes.
///
/// Holds model weights as well as every vector-valued algorithm quantity
/// (perturbations, dual variables, control variates). Arithmetic requires
/// matching lengths; layer shapes are carried along but do not participate.
/// Operations that produce new values throw NonFiniteError on NaN/Inf.
class ParamVector {
 public:
  ParamVector() = default;

  explicit ParamVector(std::size_t d, double fill = 0.0) : values_(d, fill) {}

  explicit ParamVector(std::vector<double> values, std::vector<LayerShape> shapes = {})
      : values_(std::move(values)), shapes_(std::move(shapes)) {
    check_shapes();
    check_finite("ParamVector");
  }

  ParamVector(std::initializer_list<double> values) : values_(values) {
    check_finite("ParamVector");
  }

  static ParamVector zeros_like(const ParamVector& other) {
    ParamVector out(other.size());
    out.shapes_ = other.shapes_;
    return out;
  }

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }

  std::span<const double> span() const noexcept { return values_; }
  std::span<double> span() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  const double* data() const noexcept { return values_.data(); }
  double* data() noexcept { return values_.data(); }

  const std::vector<LayerShape>& layer_shapes() const noexcept { return shapes_; }

  void set_layer_shapes(std::vector<LayerShape> shapes) {
    std::swap(shapes_, shapes);
    try {
      check_shapes();
    } catch (...) {
      std::swap(shapes_, shapes);
      throw;
    }
  }

  /// Row-major view of layer `l`.
  std::span<const double> layer(std::size_t l) const {
    if (l >= shapes_.size()) throw std::out_of_range("ParamVector::layer: index out of range");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < l; ++i) offset += shapes_[i].size();
    return std::span<const double>(values_).subspan(offset, shapes_[l].size());
  }

  ParamVector& operator+=(const ParamVector& rhs) {
    require_same_size(rhs, "operator+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += rhs.values_[i];
    check_finite("operator+=");
    return *this;
  }

  ParamVector& operator-=(const ParamVector& rhs) {
    require_same_size(rhs, "operator-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= rhs.values_[i];
    check_finite("operator-=");
    return *this;
  }

  ParamVector& operator*=(double a) {
    for (auto& v : values_) v *= a;
    check_finite("operator*=");
    return *this;
  }

  /// this += a * x
  ParamVector& axpy(double a, const ParamVector& x) {
    require_same_size(x, "axpy");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += a * x.values_[i];
    check_finite("axpy");
    return *this;
  }

  friend ParamVector operator+(ParamVector lhs, const ParamVector& rhs) { return lhs += rhs; }
  friend ParamVector operator-(ParamVector lhs, const ParamVector& rhs) { return lhs -= rhs; }
  friend ParamVector operator*(double a, ParamVector v) { return v *= a; }
  friend ParamVector operator*(ParamVector v, double a) { return v *= a; }

  double dot(const ParamVector& rhs) const {
    require_same_size(rhs, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) acc += values_[i] * rhs.values_[i];
    return acc;
  }

  double squared_norm() const noexcept {
    double acc = 0.0;
    for (double v : values_) acc += v * v;
    return acc;
  }

  double norm() const noexcept { return std::sqrt(squared_norm()); }

  bool all_finite() const noexcept {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void check_finite(const char* where) const {
    if (!all_finite()) throw NonFiniteError(std::string(where) + ": non-finite value");
  }

  void require_same_size(const ParamVector& other, const char* where) const {
    if (other.size() != size()) {
      throw DimensionError(std::string(where) + ": dimension mismatch (" +
                           std::to_string(size()) + " vs " + std::to_string(other.size()) + ")");
    }
  }

  /// Exact (==) equality of values and shapes.
  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  void check_shapes() const {
    if (shapes_.empty()) return;
    std::size_t total = 0;
    for (const auto& s : shapes_) total += s.size();
    if (total != values_.size()) {
      throw DimensionError("ParamVector: layer shapes cover " + std::to_string(total) +
                           " entries but vector has " + std::to_string(values_.size()));
    }
  }

  std::vector<double> values_;
  std::vector<LayerShape> shapes_;
};

/// Arithmetic mean of equal-length vectors, accumulated in list order.
inline ParamVector mean_of(std::span<const ParamVector> vs) {
  if (vs.empty()) throw std::invalid_argument("mean_of: empty list");
  ParamVector acc = ParamVector::zeros_like(vs.front());
  for (const auto& v : vs) acc += v;
  acc *= 1.0 / static_cast<double>(vs.size());
  return acc;
}

}  // namespace fedsim

#endif  // FEDSIM_PARAM_VECTOR_HPP_
