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

#ifndef FEDSIM_DIAGNOSTICS_HPP_
#define FEDSIM_DIAGNOSTICS_HPP_

// Flatness and generalization diagnostics: Hessian top eigenvalue (power
// iteration on finite-difference HVPs), Hutchinson trace, client
// consistency, the layer-norm quantity V_L with its bound term, and 2-D
// loss-landscape slices.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedsim/io.hpp"
#include "fedsim/model.hpp"
#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct PowerIterationResult {
  double eigenvalue = 0.0;
  std::size_t iterations = 0;
  std::vector<double> rayleigh_history;
};

/// Dominant-magnitude Hessian eigenvalue. Starts from a random unit vector
/// and stops once successive Rayleigh quotients agree to `tol` (relative).
inline PowerIterationResult hessian_top_eigenvalue(const Model& model, const ParamVector& params,
                                                   const Batch& data, std::size_t max_iters, double tol,
                                                   std::uint64_t seed = 0) {
  if (!(tol > 0.0)) throw std::invalid_argument("hessian_top_eigenvalue: tol must be > 0");
  if (max_iters < 1) throw std::invalid_argument("hessian_top_eigenvalue: max_iters must be >= 1");
  Rng rng(derive_seed({seed, 0xe16eULL}));
  ParamVector v = ParamVector::zeros_like(params);
  while (v.norm() == 0.0) {
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = rng.normal();
  }
  v *= 1.0 / v.norm();

  PowerIterationResult res;
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t it = 1; it <= max_iters; ++it) {
    ParamVector hv = hvp(model, params, data, v);
    const double rq = v.dot(hv);
    res.rayleigh_history.push_back(rq);
    res.eigenvalue = rq;
    res.iterations = it;
    const double hv_norm = hv.norm();
    if (hv_norm == 0.0) break;  // v lies in the null space
    if (std::isfinite(previous) && std::abs(rq - previous) <= tol * std::abs(rq)) break;
    previous = rq;
    hv *= 1.0 / hv_norm;
    v = std::move(hv);
  }
  return res;
}

struct TraceEstimate {
  double trace = 0.0;
  double stderr_ = 0.0;
  std::size_t probes = 0;
};

/// Hutchinson estimator mean(z^T H z) over Rademacher probes, with the
/// standard error of that mean.
inline TraceEstimate hessian_trace_hutchinson(const Model& model, const ParamVector& params, const Batch& data,
                                              std::size_t probes, Rng& rng) {
  if (probes < 1) throw std::invalid_argument("hessian_trace_hutchinson: probes must be >= 1");
  std::vector<double> samples;
  samples.reserve(probes);
  ParamVector z = ParamVector::zeros_like(params);
  for (std::size_t p = 0; p < probes; ++p) {
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = rng.rademacher();
    samples.push_back(z.dot(hvp(model, params, data, z)));
  }
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(probes);
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  TraceEstimate est;
  est.trace = mean;
  est.probes = probes;
  if (probes > 1) est.stderr_ = std::sqrt(var / static_cast<double>(probes - 1) / static_cast<double>(probes));
  return est;
}

struct FlatnessReport {
  double top_eigenvalue = 0.0;
  double trace_estimate = 0.0;
  double trace_stderr = 0.0;
  std::size_t power_iterations_used = 0;
  std::size_t probes_used = 0;
};

inline FlatnessReport flatness_report(const Model& model, const ParamVector& params, const Batch& data,
                                      std::size_t max_iters, double tol, std::size_t probes, std::uint64_t seed) {
  const auto eig = hessian_top_eigenvalue(model, params, data, max_iters, tol, seed);
  Rng rng(derive_seed({seed, 0x7ace}));
  const auto tr = hessian_trace_hutchinson(model, params, data, probes, rng);
  return FlatnessReport{eig.eigenvalue, tr.trace, tr.stderr_, eig.iterations, tr.probes};
}

inline nlohmann::json to_json(const FlatnessReport& r) {
  return {{"top_eigenvalue", r.top_eigenvalue},
          {"trace_estimate", r.trace_estimate},
          {"trace_stderr", r.trace_stderr},
          {"power_iterations_used", r.power_iterations_used},
          {"probes_used", r.probes_used}};
}

/// Mean squared distance of client models to w.
inline double consistency(std::span<const ParamVector> client_params, const ParamVector& w) {
  if (client_params.empty()) throw std::invalid_argument("consistency: no client models");
  double acc = 0.0;
  for (const auto& wi : client_params) {
    w.require_same_size(wi, "consistency");
    double sq = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double diff = wi[j] - w[j];
      sq += diff * diff;
    }
    acc += sq;
  }
  return acc / static_cast<double>(client_params.size());
}

/// Largest singular value of a row-major rows x cols matrix by power
/// iteration on W^T W, run until the estimate stops changing.
inline double spectral_norm(std::span<const double> w, std::size_t rows, std::size_t cols,
                            std::size_t max_iters = 5000, double tol = 1e-15) {
  if (w.size() != rows * cols) throw DimensionError("spectral_norm: shape mismatch");
  // Deterministic start with distinct entries so it is not orthogonal to
  // the top right-singular vector in practice.
  std::vector<double> v(cols);
  for (std::size_t j = 0; j < cols; ++j) v[j] = 1.0 + 0.1 * std::sin(static_cast<double>(j + 1));
  std::vector<double> u(rows);
  std::vector<double> next(cols);
  double sigma_sq = 0.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    double vn = 0.0;
    for (double x : v) vn += x * x;
    vn = std::sqrt(vn);
    if (vn == 0.0) return 0.0;
    for (auto& x : v) x /= vn;
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += w[r * cols + c] * v[c];
      u[r] = s;
    }
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) next[c] += w[r * cols + c] * u[r];
    }
    double rq = 0.0;  // v^T W^T W v
    for (std::size_t c = 0; c < cols; ++c) rq += v[c] * next[c];
    const bool done = it > 0 && std::abs(rq - sigma_sq) <= tol * std::abs(rq);
    sigma_sq = rq;
    if (done) break;
    std::swap(v, next);
  }
  return std::sqrt(sigma_sq);
}

struct BoundReport {
  double v_l = 0.0;
  double bound_term = 0.0;
  // Inputs, echoed.
  std::size_t layers = 0;            // L_l
  double input_norm = 0.0;           // L_n
  std::size_t params_per_layer = 0;  // d
  std::size_t dataset_size = 0;      // D
  double confidence = 0.0;           // p
  double margin = 0.0;               // epsilon
  double input_bound = std::numeric_limits<double>::quiet_NaN();  // L_w, not used by the bound
};

/// V_L = prod_l |w_l|_2^2 * sum_l |w_l|_F^2 / |w_l|_2^2 over the layer
/// shapes of `params`, and the margin bound term
///   sqrt((L_l^2 L_n^2 d ln(d L_l) V_L + ln(L_l D / p)) / ((D - 1) eps^2))
/// with L_l the number of layers and d the largest per-layer parameter count.
inline BoundReport generalization_bound(const ParamVector& params, double input_norm, std::size_t dataset_size,
                                        double confidence, double margin,
                                        double input_bound = std::numeric_limits<double>::quiet_NaN()) {
  const auto& shapes = params.layer_shapes();
  if (shapes.empty()) throw std::invalid_argument("generalization_bound: parameters carry no layer shapes");
  if (dataset_size < 2) throw std::invalid_argument("generalization_bound: need D >= 2");
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("generalization_bound: p must be in (0, 1)");
  if (!(margin > 0.0)) throw std::invalid_argument("generalization_bound: margin must be > 0");
  if (!(input_norm >= 0.0)) throw std::invalid_argument("generalization_bound: input norm must be >= 0");

  double product = 1.0;
  double ratio_sum = 0.0;
  std::size_t per_layer = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto layer = params.layer(l);
    const double spec = spectral_norm(layer, shapes[l].rows, shapes[l].cols);
    if (spec == 0.0) {
      throw std::invalid_argument("generalization_bound: layer " + std::to_string(l) + " is zero");
    }
    double frob = 0.0;
    for (double x : layer) frob += x * x;
    product *= spec * spec;
    ratio_sum += frob / (spec * spec);
    per_layer = std::max(per_layer, shapes[l].size());
  }

  BoundReport rep;
  rep.v_l = product * ratio_sum;
  rep.layers = shapes.size();
  rep.input_norm = input_norm;
  rep.params_per_layer = per_layer;
  rep.dataset_size = dataset_size;
  rep.confidence = confidence;
  rep.margin = margin;
  rep.input_bound = input_bound;

  const double L = static_cast<double>(rep.layers);
  const double d = static_cast<double>(per_layer);
  const double D = static_cast<double>(dataset_size);
  const double numerator =
      L * L * input_norm * input_norm * d * std::log(d * L) * rep.v_l + std::log(L * D / confidence);
  if (numerator < 0.0) throw std::invalid_argument("generalization_bound: bound undefined for these inputs");
  rep.bound_term = std::sqrt(numerator / ((D - 1.0) * margin * margin));
  return rep;
}

inline nlohmann::json to_json(const BoundReport& r) {
  nlohmann::json j = {{"V_L", r.v_l},
                      {"bound_term", r.bound_term},
                      {"L_l", r.layers},
                      {"L_n", r.input_norm},
                      {"d", r.params_per_layer},
                      {"D", r.dataset_size},
                      {"p", r.confidence},
                      {"epsilon", r.margin}};
  j["L_w"] = std::isfinite(r.input_bound) ? nlohmann::json(r.input_bound) : nlohmann::json(nullptr);
  return j;
}

/// Random Gaussian direction rescaled layer by layer to the norm of the
/// corresponding layer of `params` (whole-vector norm when shapeless).
inline ParamVector random_direction(const ParamVector& params, Rng& rng) {
  ParamVector dir = ParamVector::zeros_like(params);
  for (std::size_t j = 0; j < dir.size(); ++j) dir[j] = rng.normal();
  const auto& shapes = params.layer_shapes();
  auto rescale = [&](std::size_t off, std::size_t len) {
    double pn = 0.0;
    double dn = 0.0;
    for (std::size_t j = off; j < off + len; ++j) {
      pn += params[j] * params[j];
      dn += dir[j] * dir[j];
    }
    const double scale = dn > 0.0 ? std::sqrt(pn / dn) : 0.0;
    for (std::size_t j = off; j < off + len; ++j) dir[j] *= scale;
  };
  if (shapes.empty()) {
    rescale(0, dir.size());
  } else {
    std::size_t off = 0;
    for (const auto& s : shapes) {
      rescale(off, s.size());
      off += s.size();
    }
  }
  return dir;
}

struct LandscapeGrid {
  std::vector<double> coords;               // shared axis values, length grid_n
  std::vector<std::vector<double>> losses;  // losses[i][j] at (coords[i], coords[j])
};

/// Losses at params + a * dir1 + b * dir2 over a symmetric grid. dir2 is
/// made orthogonal to dir1 first; both must be nonzero.
inline LandscapeGrid landscape_slice(const Model& model, const ParamVector& params, const Batch& data,
                                     const ParamVector& dir1, const ParamVector& dir2, double half_width,
                                     std::size_t grid_n) {
  if (grid_n < 3 || grid_n % 2 == 0) throw std::invalid_argument("landscape_slice: grid_n must be odd and >= 3");
  if (!(half_width >= 0.0)) throw std::invalid_argument("landscape_slice: half_width must be >= 0");
  params.require_same_size(dir1, "landscape_slice");
  params.require_same_size(dir2, "landscape_slice");
  const double n1 = dir1.squared_norm();
  if (n1 == 0.0 || dir2.squared_norm() == 0.0) throw std::invalid_argument("landscape_slice: zero direction");
  ParamVector d2 = dir2;
  d2.axpy(-dir1.dot(dir2) / n1, dir1);
  if (d2.squared_norm() == 0.0) throw std::invalid_argument("landscape_slice: directions are parallel");

  LandscapeGrid grid;
  const double denom = static_cast<double>(grid_n - 1);
  for (std::size_t i = 0; i < grid_n; ++i) {
    grid.coords.push_back(half_width * (2.0 * static_cast<double>(i) - denom) / denom);
  }
  grid.losses.assign(grid_n, std::vector<double>(grid_n));
  for (std::size_t i = 0; i < grid_n; ++i) {
    for (std::size_t j = 0; j < grid_n; ++j) {
      ParamVector p = params;
      if (grid.coords[i] != 0.0) p.axpy(grid.coords[i], dir1);
      if (grid.coords[j] != 0.0) p.axpy(grid.coords[j], d2);
      grid.losses[i][j] = loss(model, p, data);
    }
  }
  return grid;
}

inline std::string landscape_csv(const LandscapeGrid& g) {
  std::string out = "a,b,loss\n";
  for (std::size_t i = 0; i < g.coords.size(); ++i) {
    for (std::size_t j = 0; j < g.coords.size(); ++j) {
      out += format_double(g.coords[i]) + "," + format_double(g.coords[j]) + "," + format_double(g.losses[i][j]) + "\n";
    }
  }
  return out;
}

}  // namespace fedsim

#endif  // FEDSIM_DIAGNOSTICS_HPP_
