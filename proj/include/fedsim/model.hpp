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

#ifndef FEDSIM_MODEL_HPP_
#define FEDSIM_MODEL_HPP_

// Small differentiable objectives with analytic gradients.
//
// Three kinds are supported: a diagonal quadratic (analytic ground truth for
// convergence checks), multinomial logistic regression, and a tanh MLP with a
// softmax cross-entropy head. Loss is always the mean over the batch.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

/// Row-major feature block plus class labels.
struct Batch {
  std::vector<double> features;
  std::vector<int> labels;
  std::size_t input_dim = 0;

  std::size_t rows() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }

  std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(features).subspan(i * input_dim, input_dim);
  }
};

/// f(w) = 1/2 * sum_j h_j (w_j - c_j)^2. Data-independent: batches are ignored.
struct QuadraticFed {
  std::vector<double> center;
  std::vector<double> curvature;

  static QuadraticFed isotropic(std::vector<double> center, double h = 1.0) {
    std::vector<double> curv(center.size(), h);
    return QuadraticFed{std::move(center), std::move(curv)};
  }
};

struct LogisticRegression {
  std::size_t input_dim = 0;
  std::size_t classes = 0;
};

/// Fully connected network: sizes = {input, hidden..., classes}; tanh on
/// hidden layers, linear logits.
struct Mlp {
  std::vector<std::size_t> sizes;
};

class Model {
 public:
  using Kind = std::variant<QuadraticFed, LogisticRegression, Mlp>;

  Model(QuadraticFed q) : kind_(std::move(q)) { validate(); }  // NOLINT(google-explicit-constructor)
  Model(LogisticRegression l) : kind_(l) { validate(); }       // NOLINT(google-explicit-constructor)
  Model(Mlp m) : kind_(std::move(m)) { validate(); }           // NOLINT(google-explicit-constructor)

  const Kind& kind() const noexcept { return kind_; }
  bool is_quadratic() const noexcept { return std::holds_alternative<QuadraticFed>(kind_); }
  bool is_classifier() const noexcept { return !is_quadratic(); }

  std::size_t dim() const noexcept { return dim_; }

  /// Layer sizes for the softmax network view ({input, ..., classes}).
  const std::vector<std::size_t>& network_sizes() const noexcept { return net_sizes_; }

  std::vector<LayerShape> layer_shapes() const {
    std::vector<LayerShape> shapes;
    if (is_quadratic()) return shapes;
    for (std::size_t l = 1; l < net_sizes_.size(); ++l) {
      shapes.push_back({net_sizes_[l], net_sizes_[l - 1]});
      shapes.push_back({net_sizes_[l], 1});
    }
    return shapes;
  }

  std::size_t num_classes() const noexcept { return is_quadratic() ? 0 : net_sizes_.back(); }
  std::size_t input_dim() const noexcept { return is_quadratic() ? 0 : net_sizes_.front(); }

 private:
  void validate() {
    if (auto* q = std::get_if<QuadraticFed>(&kind_)) {
      if (q->center.empty()) throw std::invalid_argument("QuadraticFed: empty center");
      if (q->curvature.size() != q->center.size()) {
        throw std::invalid_argument("QuadraticFed: curvature/center length mismatch");
      }
      dim_ = q->center.size();
      return;
    }
    if (auto* l = std::get_if<LogisticRegression>(&kind_)) {
      net_sizes_ = {l->input_dim, l->classes};
    } else {
      net_sizes_ = std::get<Mlp>(kind_).sizes;
    }
    if (net_sizes_.size() < 2) throw std::invalid_argument("network needs at least two layer sizes");
    for (auto s : net_sizes_) {
      if (s == 0) throw std::invalid_argument("network layer sizes must be positive");
    }
    if (net_sizes_.back() < 2) throw std::invalid_argument("classifier needs at least two classes");
    dim_ = 0;
    for (std::size_t l = 1; l < net_sizes_.size(); ++l) {
      dim_ += net_sizes_[l] * net_sizes_[l - 1] + net_sizes_[l];
    }
  }

  Kind kind_;
  std::vector<std::size_t> net_sizes_;
  std::size_t dim_ = 0;
};

namespace detail {

inline void check_inputs(const Model& model, const ParamVector& params, const Batch& batch,
                         const char* where) {
  if (params.size() != model.dim()) {
    throw DimensionError(std::string(where) + ": params have dimension " +
                         std::to_string(params.size()) + ", model expects " +
                         std::to_string(model.dim()));
  }
  if (model.is_quadratic()) return;
  if (batch.empty()) throw std::invalid_argument(std::string(where) + ": empty batch");
  if (batch.input_dim != model.input_dim() ||
      batch.features.size() != batch.rows() * batch.input_dim) {
    throw DimensionError(std::string(where) + ": batch feature shape does not match model");
  }
  const auto classes = static_cast<int>(model.num_classes());
  for (int y : batch.labels) {
    if (y < 0 || y >= classes) {
      throw std::invalid_argument(std::string(where) + ": label out of range");
    }
  }
}

inline double finite_or_throw(double v, const char* where) {
  if (!std::isfinite(v)) throw NonFiniteError(std::string(where) + ": non-finite result");
  return v;
}

// Forward/backward over a softmax network. When grad is non-null the mean
// gradient is accumulated into it. Returns the mean cross-entropy.
inline double network_pass(const std::vector<std::size_t>& sizes, std::span<const double> params,
                           const Batch& batch, std::span<double> grad) {
  const std::size_t layers = sizes.size() - 1;
  std::vector<std::size_t> offsets(layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = off;
    off += sizes[l + 1] * sizes[l] + sizes[l + 1];
  }

  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);

  // acts[l] is the input to layer l (acts[0] = x); acts[layers] holds logits.
  std::vector<std::vector<double>> acts(layers + 1);
  for (std::size_t l = 0; l <= layers; ++l) acts[l].resize(sizes[l]);
  std::vector<double> delta;
  std::vector<double> delta_prev;

  const std::size_t b = batch.rows();
  const double inv_b = 1.0 / static_cast<double>(b);
  double total = 0.0;

  for (std::size_t n = 0; n < b; ++n) {
    auto x = batch.row(n);
    std::copy(x.begin(), x.end(), acts[0].begin());
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = sizes[l];
      const std::size_t out = sizes[l + 1];
      const double* w = params.data() + offsets[l];
      const double* bias = w + out * in;
      const auto& a = acts[l];
      auto& z = acts[l + 1];
      for (std::size_t o = 0; o < out; ++o) {
        double s = bias[o];
        const double* wrow = w + o * in;
        for (std::size_t i = 0; i < in; ++i) s += wrow[i] * a[i];
        z[o] = (l + 1 < layers) ? std::tanh(s) : s;
      }
    }

    const auto& logits = acts[layers];
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - zmax);
    const double log_norm = zmax + std::log(sum);
    const auto y = static_cast<std::size_t>(batch.labels[n]);
    total += log_norm - logits[y];

    if (!want_grad) continue;

    delta.resize(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
      delta[k] = std::exp(logits[k] - log_norm) * inv_b;
    }
    delta[y] -= inv_b;

    for (std::size_t l = layers; l-- > 0;) {
      const std::size_t in = sizes[l];
      const std::size_t out = sizes[l + 1];
      const double* w = params.data() + offsets[l];
      double* gw = grad.data() + offsets[l];
      double* gb = gw + out * in;
      const auto& a = acts[l];
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        double* grow = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) grow[i] += d * a[i];
        gb[o] += d;
      }
      if (l == 0) break;
      delta_prev.assign(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        const double* wrow = w + o * in;
        for (std::size_t i = 0; i < in; ++i) delta_prev[i] += wrow[i] * d;
      }
      // a = tanh(z) for hidden inputs, so da/dz = 1 - a^2.
      for (std::size_t i = 0; i < in; ++i) delta_prev[i] *= 1.0 - a[i] * a[i];
      std::swap(delta, delta_prev);
    }
  }
  return total * inv_b;
}

}  // namespace detail

/// Mean per-sample loss.
inline double loss(const Model& model, const ParamVector& params, const Batch& batch) {
  detail::check_inputs(model, params, batch, "loss");
  double value = 0.0;
  if (const auto* q = std::get_if<QuadraticFed>(&model.kind())) {
    for (std::size_t j = 0; j < params.size(); ++j) {
      const double r = params[j] - q->center[j];
      value += 0.5 * q->curvature[j] * r * r;
    }
  } else {
    value = detail::network_pass(model.network_sizes(), params.span(), batch, {});
  }
  return detail::finite_or_throw(value, "loss");
}

inline ParamVector grad(const Model& model, const ParamVector& params, const Batch& batch) {
  detail::check_inputs(model, params, batch, "grad");
  std::vector<double> g(params.size());
  if (const auto* q = std::get_if<QuadraticFed>(&model.kind())) {
    for (std::size_t j = 0; j < params.size(); ++j) g[j] = q->curvature[j] * (params[j] - q->center[j]);
  } else {
    detail::network_pass(model.network_sizes(), params.span(), batch, g);
  }
  for (double v : g) detail::finite_or_throw(v, "grad");
  return ParamVector(std::move(g), params.layer_shapes());
}

/// Loss and gradient from a single pass.
inline std::pair<double, ParamVector> loss_and_grad(const Model& model, const ParamVector& params,
                                                    const Batch& batch) {
  if (model.is_quadratic()) return {loss(model, params, batch), grad(model, params, batch)};
  detail::check_inputs(model, params, batch, "loss_and_grad");
  std::vector<double> g(params.size());
  const double value = detail::network_pass(model.network_sizes(), params.span(), batch, g);
  detail::finite_or_throw(value, "loss_and_grad");
  for (double v : g) detail::finite_or_throw(v, "loss_and_grad");
  return {value, ParamVector(std::move(g), params.layer_shapes())};
}

/// Central-difference gradient, one coordinate at a time.
inline ParamVector finite_diff_grad(const Model& model, const ParamVector& params,
                                    const Batch& batch, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  detail::check_inputs(model, params, batch, "finite_diff_grad");
  ParamVector probe = params;
  std::vector<double> g(params.size());
  for (std::size_t j = 0; j < params.size(); ++j) {
    const double orig = probe[j];
    probe[j] = orig + h;
    const double up = loss(model, probe, batch);
    probe[j] = orig - h;
    const double down = loss(model, probe, batch);
    probe[j] = orig;
    g[j] = (up - down) / (2.0 * h);
  }
  return ParamVector(std::move(g), params.layer_shapes());
}

/// Hessian-vector product by central differences of the analytic gradient
/// along v/|v|, rescaled by |v|.
inline ParamVector hvp(const Model& model, const ParamVector& params, const Batch& batch,
                       const ParamVector& v, double h = 1e-5) {
  if (!(h > 0.0)) throw std::invalid_argument("hvp: step must be positive");
  params.require_same_size(v, "hvp");
  const double vnorm = v.norm();
  if (!(vnorm > 0.0)) throw std::invalid_argument("hvp: direction must be nonzero");
  const double step = h / vnorm;
  ParamVector plus = params;
  plus.axpy(step, v);
  ParamVector minus = params;
  minus.axpy(-step, v);
  ParamVector out = grad(model, plus, batch);
  out -= grad(model, minus, batch);
  out *= vnorm / (2.0 * h);
  return out;
}

/// Fraction of rows whose argmax logit equals the label.
inline double accuracy(const Model& model, const ParamVector& params, const Batch& batch) {
  if (!model.is_classifier()) throw std::invalid_argument("accuracy: model is not a classifier");
  detail::check_inputs(model, params, batch, "accuracy");
  const auto& sizes = model.network_sizes();
  const std::size_t layers = sizes.size() - 1;
  std::vector<double> a;
  std::vector<double> z;
  std::size_t correct = 0;
  for (std::size_t n = 0; n < batch.rows(); ++n) {
    auto x = batch.row(n);
    a.assign(x.begin(), x.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = sizes[l];
      const std::size_t out = sizes[l + 1];
      const double* w = params.data() + off;
      const double* bias = w + out * in;
      z.assign(out, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        double s = bias[o];
        for (std::size_t i = 0; i < in; ++i) s += w[o * in + i] * a[i];
        z[o] = (l + 1 < layers) ? std::tanh(s) : s;
      }
      off += out * in + out;
      std::swap(a, z);
    }
    const auto pred = static_cast<int>(std::max_element(a.begin(), a.end()) - a.begin());
    if (pred == batch.labels[n]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.rows());
}

/// Initial parameters: zeros for quadratic and logistic models, uniform
/// +-1/sqrt(fan_in) for MLP weights and biases.
inline ParamVector initial_params(const Model& model, Rng& rng) {
  ParamVector p(model.dim());
  if (const auto* m = std::get_if<Mlp>(&model.kind())) {
    std::size_t off = 0;
    for (std::size_t l = 1; l < m->sizes.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(m->sizes[l - 1]));
      const std::size_t count = m->sizes[l] * m->sizes[l - 1] + m->sizes[l];
      for (std::size_t i = 0; i < count; ++i) p[off + i] = rng.uniform(-bound, bound);
      off += count;
    }
  }
  p.set_layer_shapes(model.layer_shapes());
  return p;
}

/// The weight matrices of a network model (biases dropped), with shapes.
inline ParamVector weight_layers(const Model& model, const ParamVector& params) {
  if (!model.is_classifier()) throw std::invalid_argument("weight_layers: model has no layers");
  if (params.size() != model.dim()) throw DimensionError("weight_layers: dimension mismatch");
  const auto& sizes = model.network_sizes();
  std::vector<double> values;
  std::vector<LayerShape> shapes;
  std::size_t off = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    const std::size_t count = sizes[l] * sizes[l - 1];
    values.insert(values.end(), params.data() + off, params.data() + off + count);
    shapes.push_back({sizes[l], sizes[l - 1]});
    off += count + sizes[l];
  }
  return ParamVector(std::move(values), std::move(shapes));
}

}  // namespace fedsim

#endif  // FEDSIM_MODEL_HPP_
