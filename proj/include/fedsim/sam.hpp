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

#ifndef FEDSIM_SAM_HPP_
#define FEDSIM_SAM_HPP_

// Perturbation mathematics for sharpness-aware local training.
//
// Vanilla SAM ascends along r * g / |g|. The globally corrected variant keeps
// a per-client dual mu for the constraint s_i = s and ascends along
// r * q / |q| with q = (g - mu) - s, where s is the server's estimate of the
// global perturbation. The penalty weight alpha of the perturbation
// augmented Lagrangian is fixed at 1 throughout.

#include <cmath>
#include <span>
#include <stdexcept>

#include "fedsim/param_vector.hpp"

namespace fedsim {

inline constexpr double kPerturbAlpha = 1.0;

struct PerturbState {
  ParamVector mu;        // dual for s_i = s
  ParamVector s_global;  // broadcast global perturbation
  double radius = 0.0;
  double alpha = kPerturbAlpha;

  static PerturbState zeros(std::size_t d, double radius) {
    return PerturbState{ParamVector(d), ParamVector(d), radius, kPerturbAlpha};
  }
};

/// r * v / |v|, or the zero vector when |v| = 0 or r = 0.
inline ParamVector normalize_to_ball(const ParamVector& v, double r) {
  if (r < 0.0 || !std::isfinite(r)) throw std::invalid_argument("normalize_to_ball: radius must be >= 0");
  const double n = v.norm();
  if (n == 0.0 || r == 0.0) return ParamVector::zeros_like(v);
  return v * (r / n);
}

inline ParamVector vanilla_sam_perturbation(const ParamVector& g, double r) {
  return normalize_to_ball(g, r);
}

namespace detail {

inline void check_perturb_state(const PerturbState& st, std::size_t d, const char* where) {
  if (st.alpha != kPerturbAlpha) throw std::invalid_argument(std::string(where) + ": alpha must be 1");
  if (st.mu.size() != d || st.s_global.size() != d) {
    throw DimensionError(std::string(where) + ": perturbation state dimension mismatch");
  }
}

}  // namespace detail

/// Maximizer of the linearized local augmented Lagrangian over the r-ball.
inline ParamVector corrected_perturbation(const ParamVector& g, const PerturbState& state) {
  detail::check_perturb_state(state, g.size(), "corrected_perturbation");
  ParamVector direction = g;
  direction -= state.mu;
  direction *= state.alpha;
  direction -= state.s_global;
  return normalize_to_ball(direction, state.radius);
}

/// mu <- mu + (s_hat - s) / alpha
inline PerturbState dual_mu_update(PerturbState state, const ParamVector& s_hat) {
  detail::check_perturb_state(state, s_hat.size(), "dual_mu_update");
  ParamVector step = s_hat;
  step -= state.s_global;
  state.mu.axpy(1.0 / state.alpha, step);
  return state;
}

/// Server estimate: normalized mean of the clients' s~_i = mu_i - s_hat_i.
inline ParamVector global_perturbation(std::span<const ParamVector> tilde_s, double r) {
  if (tilde_s.empty()) throw std::invalid_argument("global_perturbation: no client perturbations");
  return normalize_to_ball(mean_of(tilde_s), r);
}

}  // namespace fedsim

#endif  // FEDSIM_SAM_HPP_
