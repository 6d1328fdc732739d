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

#ifndef FEDSIM_ALGORITHMS_HPP_
#define FEDSIM_ALGORITHMS_HPP_

// Client local training and server aggregation rules.
//
// FedSMOO combines a dynamic (ADMM) regularizer on the model with a
// globally corrected SAM perturbation. The baselines are FedAvg, FedAdam,
// SCAFFOLD, FedCM, FedDyn, FedSAM and MoFedSAM. Each algorithm is a pair
// (local round, server round) selected through Algorithm.
//
// Every local round is a pure function of (client state, server broadcast,
// hyperparameters, client data, rng): it returns the upload payload and the
// client's next state instead of mutating shared state.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedsim/model.hpp"
#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/sam.hpp"

namespace fedsim {

enum class Algorithm { FedAvg, FedAdam, Scaffold, FedCM, FedDyn, FedSam, MoFedSam, FedSmoo };

inline constexpr std::array<Algorithm, 8> kAllAlgorithms = {
    Algorithm::FedAvg, Algorithm::FedAdam, Algorithm::Scaffold, Algorithm::FedCM,
    Algorithm::FedDyn, Algorithm::FedSam,  Algorithm::MoFedSam, Algorithm::FedSmoo};

inline std::string_view to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::FedAvg: return "fedavg";
    case Algorithm::FedAdam: return "fedadam";
    case Algorithm::Scaffold: return "scaffold";
    case Algorithm::FedCM: return "fedcm";
    case Algorithm::FedDyn: return "feddyn";
    case Algorithm::FedSam: return "fedsam";
    case Algorithm::MoFedSam: return "mofedsam";
    case Algorithm::FedSmoo: return "fedsmoo";
  }
  return "unknown";
}

inline Algorithm parse_algorithm(std::string_view name) {
  for (auto a : kAllAlgorithms) {
    if (to_string(a) == name) return a;
  }
  throw std::invalid_argument("unknown algorithm '" + std::string(name) + "'");
}

/// Vectors sent server -> client per active client per round.
inline int download_vectors(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::FedSmoo:   // w, s
    case Algorithm::Scaffold:  // w, c
    case Algorithm::FedCM:     // w, momentum
    case Algorithm::MoFedSam:  // w, momentum
      return 2;
    default:
      return 1;
  }
}

/// Vectors sent client -> server per active client per round.
inline int upload_vectors(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::FedSmoo:   // w_i, s~_i
    case Algorithm::Scaffold:  // w_i, delta c_i
      return 2;
    default:
      return 1;
  }
}

struct HyperParams {
  double eta = 0.1;
  double eta_decay = 1.0;
  double beta = 10.0;
  double radius = 0.1;
  std::size_t local_steps = 5;
  std::size_t batch_size = 50;
  std::size_t rounds = 100;
  std::size_t num_clients = 10;
  std::size_t active_clients = 10;
  double server_lr = 0.1;  // FedAdam
  double alpha_cm = 0.1;   // FedCM / MoFedSAM client momentum weight
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-3;
  double weight_decay = 0.0;
  bool disable_proximal = false;  // FedDyn only: freeze lambda at 0, drop the 1/beta term

  void validate() const {
    auto fail = [](const char* msg) { throw std::invalid_argument(std::string("hyperparameters: ") + msg); };
    if (!(eta > 0.0)) fail("eta must be > 0");
    if (!(eta_decay > 0.0 && eta_decay <= 1.0)) fail("eta_decay must be in (0, 1]");
    if (!(beta > 0.0)) fail("beta must be > 0");
    if (!(radius >= 0.0)) fail("radius must be >= 0");
    if (local_steps < 1) fail("local_steps (K) must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (num_clients < 1) fail("num_clients must be >= 1");
    if (active_clients < 1 || active_clients > num_clients) fail("active_clients must be in [1, num_clients]");
    if (!(server_lr > 0.0)) fail("server_lr must be > 0");
    if (!(alpha_cm >= 0.0 && alpha_cm <= 1.0)) fail("alpha_cm must be in [0, 1]");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must be in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must be in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  }

  /// eta_t = eta_0 * decay^t
  double eta_at(std::size_t round) const { return eta * std::pow(eta_decay, static_cast<double>(round)); }
};

struct ClientState {
  std::size_t client_id = 0;
  ParamVector lambda;   // dynamic-regularizer dual
  PerturbState perturb; // perturbation dual mu and radius
  ParamVector control;  // SCAFFOLD c_i
  std::int64_t last_seen_round = -1;

  static ClientState initial(std::size_t id, std::size_t d, double radius) {
    return ClientState{id, ParamVector(d), PerturbState::zeros(d, radius), ParamVector(d), -1};
  }
};

struct ServerState {
  ParamVector w;
  ParamVector lambda;
  ParamVector s;
  ParamVector c;
  ParamVector momentum;
  ParamVector adam_m;
  ParamVector adam_v;

  static ServerState initial(ParamVector w0) {
    const std::size_t d = w0.size();
    ServerState st;
    st.w = std::move(w0);
    st.lambda = ParamVector(d);
    st.s = ParamVector(d);
    st.c = ParamVector(d);
    st.momentum = ParamVector(d);
    st.adam_m = ParamVector(d);
    st.adam_v = ParamVector(d);
    return st;
  }
};

struct ClientReturn {
  std::size_t client_id = 0;
  ParamVector w;              // w_i after K local steps
  ParamVector tilde_s;        // FedSMOO: mu_i - s_hat_{i,K}
  ParamVector control_delta;  // SCAFFOLD: c_i^+ - c_i
  int upload_vectors = 1;
  int download_vectors = 1;
};

struct LocalResult {
  ClientReturn ret;
  ClientState state;
};

/// Raised when a local or server update leaves the finite / bounded region.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t round, std::optional<std::size_t> client, std::optional<std::size_t> step,
                  const std::string& what)
      : std::runtime_error(format(round, client, step, what)), round_(round), client_(client), step_(step) {}

  std::size_t round() const noexcept { return round_; }
  std::optional<std::size_t> client() const noexcept { return client_; }
  std::optional<std::size_t> step() const noexcept { return step_; }

 private:
  static std::string format(std::size_t round, std::optional<std::size_t> client,
                            std::optional<std::size_t> step, const std::string& what) {
    std::string msg = "diverged at round " + std::to_string(round);
    if (client) msg += ", client " + std::to_string(*client);
    if (step) msg += ", step " + std::to_string(*step);
    return msg + ": " + what;
  }

  std::size_t round_;
  std::optional<std::size_t> client_;
  std::optional<std::size_t> step_;
};

inline constexpr double kDivergenceNorm = 1e8;

/// Intermediates of one local step, reported to LocalHooks::on_step.
struct StepTrace {
  std::size_t step = 0;
  const ParamVector* g = nullptr;       // stochastic gradient at w_{i,k}
  const ParamVector* s_hat = nullptr;   // applied perturbation (SAM variants)
  const ParamVector* mu = nullptr;      // perturbation dual after update (FedSMOO)
  const ParamVector* g_hat = nullptr;   // gradient used for the descent step
  const ParamVector* w_next = nullptr;  // w_{i,k+1}
};

struct LocalHooks {
  std::function<void(const StepTrace&)> on_step;
};

/// Mini-batch source over a client's local data. Rows are reshuffled each
/// epoch and sliced sequentially; a trailing partial slice starts a new
/// epoch. If batch_size covers the whole set, every batch is the full set.
/// Data-free objectives (quadratics) always get an empty batch.
class BatchStream {
 public:
  BatchStream(const Batch& data, std::size_t batch_size, Rng& rng)
      : data_(&data), batch_size_(batch_size), rng_(&rng) {
    if (batch_size == 0) throw std::invalid_argument("BatchStream: batch size must be positive");
    order_.resize(data.rows());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    cursor_ = order_.size();  // forces a shuffle on first use
  }

  Batch next() {
    const std::size_t n = order_.size();
    if (n == 0) return Batch{};
    if (batch_size_ >= n) return *data_;
    if (cursor_ + batch_size_ > n) {
      rng_->shuffle(order_);
      cursor_ = 0;
    }
    Batch b;
    b.input_dim = data_->input_dim;
    b.features.reserve(batch_size_ * b.input_dim);
    b.labels.reserve(batch_size_);
    for (std::size_t k = 0; k < batch_size_; ++k) {
      const std::size_t r = order_[cursor_ + k];
      const auto row = data_->row(r);
      b.features.insert(b.features.end(), row.begin(), row.end());
      b.labels.push_back(data_->labels[r]);
    }
    cursor_ += batch_size_;
    return b;
  }

 private:
  const Batch* data_;
  std::size_t batch_size_;
  Rng* rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Everything a client needs for one local round besides its own state.
struct LocalContext {
  const Model& model;
  const Batch& data;  // the client's full local data (empty for quadratics)
  double eta = 0.1;   // learning rate of this round
  std::size_t round = 0;
  Rng rng;
  const LocalHooks* hooks = nullptr;
};

namespace detail {

inline ParamVector stochastic_grad(const LocalContext& ctx, const ParamVector& w, const Batch& batch,
                                   double weight_decay) {
  ParamVector g = grad(ctx.model, w, batch);
  if (weight_decay != 0.0) g.axpy(weight_decay, w);
  return g;
}

inline void guard(const ParamVector& w, const LocalContext& ctx, std::size_t client, std::size_t step) {
  if (!w.all_finite()) throw DivergenceError(ctx.round, client, step, "non-finite parameters");
  if (w.norm() > kDivergenceNorm) throw DivergenceError(ctx.round, client, step, "parameter norm exceeds 1e8");
}

inline void report(const LocalContext& ctx, const StepTrace& t) {
  if (ctx.hooks != nullptr && ctx.hooks->on_step) ctx.hooks->on_step(t);
}

// w <- w - eta * [g - lambda + (w - w_t) / beta]
inline void dynamic_regularized_step(ParamVector& w, const ParamVector& g, const ParamVector& lambda,
                                     const ParamVector& w_t, double beta, double eta) {
  ParamVector direction = g;
  direction -= lambda;
  ParamVector drift = w;
  drift -= w_t;
  direction.axpy(1.0 / beta, drift);
  w.axpy(-eta, direction);
}

// lambda <- lambda - (w_K - w_t) / beta
inline void dynamic_dual_update(ParamVector& lambda, const ParamVector& w_k, const ParamVector& w_t,
                                double beta) {
  ParamVector drift = w_k;
  drift -= w_t;
  lambda.axpy(-1.0 / beta, drift);
}

template <class Fn>
decltype(auto) with_context(const LocalContext& ctx, std::size_t client, std::size_t step, Fn&& fn) {
  try {
    return fn();
  } catch (const NonFiniteError& e) {
    throw DivergenceError(ctx.round, client, step, e.what());
  }
}

inline void require_dims(const ClientState& state, const ParamVector& w_t, const Model& model) {
  const std::size_t d = model.dim();
  if (w_t.size() != d || state.lambda.size() != d || state.control.size() != d ||
      state.perturb.mu.size() != d || state.perturb.s_global.size() != d) {
    throw DimensionError("local round: state/model dimension mismatch");
  }
}

}  // namespace detail

/// One FedSMOO local round (K corrected-SAM steps on the dynamically
/// regularized objective, then the lambda update).
inline LocalResult fedsmoo_local_round(const ClientState& state, const ParamVector& w_t,
                                       const ParamVector& s_t, const HyperParams& hyper,
                                       LocalContext& ctx) {
  detail::require_dims(state, w_t, ctx.model);
  w_t.require_same_size(s_t, "fedsmoo_local_round");
  const std::size_t id = state.client_id;

  ClientState next = state;
  next.perturb.s_global = s_t;
  next.perturb.radius = hyper.radius;
  ParamVector w = w_t;
  ParamVector s_hat(w_t.size());
  BatchStream stream(ctx.data, hyper.batch_size, ctx.rng);

  for (std::size_t k = 0; k < hyper.local_steps; ++k) {
    detail::with_context(ctx, id, k, [&] {
      const Batch batch = stream.next();
      const ParamVector g = detail::stochastic_grad(ctx, w, batch, hyper.weight_decay);
      s_hat = corrected_perturbation(g, next.perturb);
      next.perturb = dual_mu_update(std::move(next.perturb), s_hat);
      const ParamVector g_hat = detail::stochastic_grad(ctx, w + s_hat, batch, hyper.weight_decay);
      detail::dynamic_regularized_step(w, g_hat, next.lambda, w_t, hyper.beta, ctx.eta);
      detail::report(ctx, {k, &g, &s_hat, &next.perturb.mu, &g_hat, &w});
    });
    detail::guard(w, ctx, id, k);
  }

  ClientReturn ret;
  ret.client_id = id;
  ret.tilde_s = next.perturb.mu;
  ret.tilde_s -= s_hat;
  detail::dynamic_dual_update(next.lambda, w, w_t, hyper.beta);
  ret.w = std::move(w);
  ret.upload_vectors = upload_vectors(Algorithm::FedSmoo);
  ret.download_vectors = download_vectors(Algorithm::FedSmoo);
  next.last_seen_round = static_cast<std::int64_t>(ctx.round);
  return {std::move(ret), std::move(next)};
}

/// Local rounds of the baselines. FedAdam trains locally exactly like FedAvg.
inline LocalResult baseline_local_round(Algorithm kind, const ClientState& state, const ServerState& server,
                                        const HyperParams& hyper, LocalContext& ctx) {
  if (kind == Algorithm::FedSmoo) {
    return fedsmoo_local_round(state, server.w, server.s, hyper, ctx);
  }
  const ParamVector& w_t = server.w;
  detail::require_dims(state, w_t, ctx.model);
  const std::size_t id = state.client_id;
  ClientState next = state;
  ParamVector w = w_t;
  BatchStream stream(ctx.data, hyper.batch_size, ctx.rng);
  const double eta = ctx.eta;
  const bool proximal = !(kind == Algorithm::FedDyn && hyper.disable_proximal);

  for (std::size_t k = 0; k < hyper.local_steps; ++k) {
    detail::with_context(ctx, id, k, [&] {
      const Batch batch = stream.next();
      const ParamVector g = detail::stochastic_grad(ctx, w, batch, hyper.weight_decay);
      switch (kind) {
        case Algorithm::FedAvg:
        case Algorithm::FedAdam:
          w.axpy(-eta, g);
          detail::report(ctx, {k, &g, nullptr, nullptr, &g, &w});
          break;
        case Algorithm::FedSam: {
          const ParamVector s_hat = vanilla_sam_perturbation(g, hyper.radius);
          const ParamVector g_hat = detail::stochastic_grad(ctx, w + s_hat, batch, hyper.weight_decay);
          w.axpy(-eta, g_hat);
          detail::report(ctx, {k, &g, &s_hat, nullptr, &g_hat, &w});
          break;
        }
        case Algorithm::MoFedSam: {
          const ParamVector s_hat = vanilla_sam_perturbation(g, hyper.radius);
          const ParamVector g_hat = detail::stochastic_grad(ctx, w + s_hat, batch, hyper.weight_decay);
          ParamVector d = g_hat * hyper.alpha_cm;
          d.axpy(1.0 - hyper.alpha_cm, server.momentum);
          w.axpy(-eta, d);
          detail::report(ctx, {k, &g, &s_hat, nullptr, &d, &w});
          break;
        }
        case Algorithm::FedCM: {
          ParamVector d = g * hyper.alpha_cm;
          d.axpy(1.0 - hyper.alpha_cm, server.momentum);
          w.axpy(-eta, d);
          detail::report(ctx, {k, &g, nullptr, nullptr, &d, &w});
          break;
        }
        case Algorithm::FedDyn:
          if (proximal) {
            detail::dynamic_regularized_step(w, g, next.lambda, w_t, hyper.beta, eta);
          } else {
            w.axpy(-eta, g);
          }
          detail::report(ctx, {k, &g, nullptr, nullptr, &g, &w});
          break;
        case Algorithm::Scaffold: {
          ParamVector d = g;
          d -= next.control;
          d += server.c;
          w.axpy(-eta, d);
          detail::report(ctx, {k, &g, nullptr, nullptr, &d, &w});
          break;
        }
        case Algorithm::FedSmoo:
          break;
      }
    });
    detail::guard(w, ctx, id, k);
  }

  ClientReturn ret;
  ret.client_id = id;
  if (kind == Algorithm::FedDyn && proximal) detail::dynamic_dual_update(next.lambda, w, w_t, hyper.beta);
  if (kind == Algorithm::Scaffold) {
    // c_i^+ = c_i - c + (w_t - w_{i,K}) / (K eta)
    ParamVector c_new = next.control;
    c_new -= server.c;
    ParamVector progress = w_t;
    progress -= w;
    c_new.axpy(1.0 / (static_cast<double>(hyper.local_steps) * eta), progress);
    ret.control_delta = c_new;
    ret.control_delta -= next.control;
    next.control = std::move(c_new);
  }
  ret.w = std::move(w);
  ret.upload_vectors = upload_vectors(kind);
  ret.download_vectors = download_vectors(kind);
  next.last_seen_round = static_cast<std::int64_t>(ctx.round);
  return {std::move(ret), std::move(next)};
}

inline LocalResult local_round(Algorithm kind, const ClientState& state, const ServerState& server,
                               const HyperParams& hyper, LocalContext& ctx) {
  return baseline_local_round(kind, state, server, hyper, ctx);
}

/// Dynamic-regularizer local round with the inner problem
///   min_w f_i(w) - <lambda_i, w> + |w - w_t|^2 / (2 beta)
/// solved in closed form (quadratic clients only), then the lambda update.
inline LocalResult exact_dynamic_local_round(const ClientState& state, const ParamVector& w_t,
                                             const HyperParams& hyper, const Model& model, std::size_t round) {
  const auto* q = std::get_if<QuadraticFed>(&model.kind());
  if (q == nullptr) throw std::invalid_argument("exact_dynamic_local_round: quadratic clients only");
  detail::require_dims(state, w_t, model);
  ClientState next = state;
  ParamVector w = ParamVector::zeros_like(w_t);
  const double inv_beta = 1.0 / hyper.beta;
  for (std::size_t j = 0; j < w.size(); ++j) {
    w[j] = (q->curvature[j] * q->center[j] + next.lambda[j] + w_t[j] * inv_beta) / (q->curvature[j] + inv_beta);
  }
  detail::dynamic_dual_update(next.lambda, w, w_t, hyper.beta);
  ClientReturn ret;
  ret.client_id = state.client_id;
  ret.w = std::move(w);
  ret.tilde_s = ParamVector::zeros_like(w_t);
  ret.upload_vectors = upload_vectors(Algorithm::FedDyn);
  ret.download_vectors = download_vectors(Algorithm::FedDyn);
  next.last_seen_round = static_cast<std::int64_t>(round);
  return {std::move(ret), std::move(next)};
}

namespace detail {

inline std::vector<const ClientReturn*> sorted_returns(std::span<const ClientReturn> returns) {
  if (returns.empty()) throw std::invalid_argument("server round: no client returns");
  std::vector<const ClientReturn*> sorted;
  sorted.reserve(returns.size());
  for (const auto& r : returns) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ClientReturn* a, const ClientReturn* b) { return a->client_id < b->client_id; });
  return sorted;
}

inline ParamVector mean_w(const std::vector<const ClientReturn*>& returns, const ParamVector& like) {
  ParamVector acc = ParamVector::zeros_like(like);
  for (const auto* r : returns) acc += r->w;
  acc *= 1.0 / static_cast<double>(returns.size());
  return acc;
}

// lambda^{t+1} = lambda^t - 1/(beta m) sum (w_i - w^t); w^{t+1} = mean(w_i) - beta lambda^{t+1}
inline void dynamic_server_update(ServerState& server, const std::vector<const ClientReturn*>& returns,
                                  double beta, std::size_t m) {
  ParamVector drift_sum = ParamVector::zeros_like(server.w);
  for (const auto* r : returns) {
    drift_sum += r->w;
    drift_sum -= server.w;
  }
  server.lambda.axpy(-1.0 / (beta * static_cast<double>(m)), drift_sum);
  ParamVector w_next = mean_w(returns, server.w);
  w_next.axpy(-beta, server.lambda);
  server.w = std::move(w_next);
}

inline void guard_server(const ServerState& server, std::size_t round) {
  if (!server.w.all_finite()) throw DivergenceError(round, std::nullopt, std::nullopt, "non-finite global model");
  if (server.w.norm() > kDivergenceNorm) {
    throw DivergenceError(round, std::nullopt, std::nullopt, "global model norm exceeds 1e8");
  }
}

}  // namespace detail

/// Global perturbation, then the dual-corrected model update. The lambda
/// step divides by the total client count m while the model average is
/// over the n active returns.
inline ServerState fedsmoo_server_round(ServerState server, std::span<const ClientReturn> returns,
                                        const HyperParams& hyper, std::size_t m) {
  const auto sorted = detail::sorted_returns(returns);
  std::vector<ParamVector> tilde;
  tilde.reserve(sorted.size());
  for (const auto* r : sorted) tilde.push_back(r->tilde_s);
  server.s = global_perturbation(tilde, hyper.radius);
  detail::dynamic_server_update(server, sorted, hyper.beta, m);
  return server;
}

/// Aggregation for the baselines. `eta` is the local learning rate used in
/// the round (FedCM/MoFedSAM convert the averaged progress into a
/// pseudo-gradient with it).
inline ServerState baseline_server_round(Algorithm kind, ServerState server, std::span<const ClientReturn> returns,
                                         const HyperParams& hyper, std::size_t m, double eta) {
  if (kind == Algorithm::FedSmoo) return fedsmoo_server_round(std::move(server), returns, hyper, m);
  const auto sorted = detail::sorted_returns(returns);
  switch (kind) {
    case Algorithm::FedAvg:
    case Algorithm::FedSam:
      server.w = detail::mean_w(sorted, server.w);
      break;
    case Algorithm::FedDyn:
      if (hyper.disable_proximal) {
        server.w = detail::mean_w(sorted, server.w);
      } else {
        detail::dynamic_server_update(server, sorted, hyper.beta, m);
      }
      break;
    case Algorithm::Scaffold: {
      ParamVector delta_sum = ParamVector::zeros_like(server.w);
      for (const auto* r : sorted) delta_sum += r->control_delta;
      // c += (n/m) * mean(delta c_i) = (1/m) * sum(delta c_i)
      server.c.axpy(1.0 / static_cast<double>(m), delta_sum);
      server.w = detail::mean_w(sorted, server.w);
      break;
    }
    case Algorithm::FedCM:
    case Algorithm::MoFedSam: {
      ParamVector w_bar = detail::mean_w(sorted, server.w);
      // Averaged local progress as a descent-direction pseudo-gradient.
      ParamVector momentum = server.w;
      momentum -= w_bar;
      momentum *= 1.0 / (static_cast<double>(hyper.local_steps) * eta);
      server.momentum = std::move(momentum);
      server.w = std::move(w_bar);
      break;
    }
    case Algorithm::FedAdam: {
      ParamVector delta = detail::mean_w(sorted, server.w);
      delta -= server.w;
      for (std::size_t j = 0; j < delta.size(); ++j) {
        const double g = delta[j];
        server.adam_m[j] = hyper.adam_beta1 * server.adam_m[j] + (1.0 - hyper.adam_beta1) * g;
        server.adam_v[j] = hyper.adam_beta2 * server.adam_v[j] + (1.0 - hyper.adam_beta2) * g * g;
        server.w[j] += hyper.server_lr * server.adam_m[j] / (std::sqrt(server.adam_v[j]) + hyper.adam_eps);
      }
      server.w.check_finite("fedadam");
      break;
    }
    case Algorithm::FedSmoo:
      break;
  }
  return server;
}

inline ServerState server_round(Algorithm kind, ServerState server, std::span<const ClientReturn> returns,
                                const HyperParams& hyper, std::size_t m, double eta, std::size_t round) {
  try {
    server = baseline_server_round(kind, std::move(server), returns, hyper, m, eta);
  } catch (const NonFiniteError& e) {
    throw DivergenceError(round, std::nullopt, std::nullopt, e.what());
  }
  detail::guard_server(server, round);
  return server;
}

}  // namespace fedsim

#endif  // FEDSIM_ALGORITHMS_HPP_
