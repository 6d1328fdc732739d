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

#ifndef FEDSIM_GOLDEN_HPP_
#define FEDSIM_GOLDEN_HPP_

// Hand-traced FedSMOO round on two 1-D quadratic clients,
// f_0(w) = (w - 1)^2 / 2 and f_1(w) = (w - 3)^2 / 2, from w = 0 with all
// duals zero, eta = 0.1, beta = 1, r = 0.1, K = 1:
//
//   client 0: g = -1, s_hat = -0.1, mu = -0.1, g_hat = -1.1, w = 0.11,
//             s~ = 0, lambda = -0.11
//   client 1: w = 0.31
//   server:   lambda = -0.21, w = 0.42
//
// The r = 0 variant instead runs the same round as FedSMOO(r = 0) and as
// FedDyn and requires the two traces to agree.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/engine.hpp"

namespace fedsim {

inline constexpr double kGoldenTolerance = 1e-12;

struct GoldenCheck {
  std::string name;
  double expected = 0.0;
  double actual = 0.0;
  bool ok() const { return std::abs(expected - actual) <= kGoldenTolerance; }
};

struct GoldenReport {
  std::vector<GoldenCheck> checks;

  bool ok() const { return first_failure() == nullptr; }
  const GoldenCheck* first_failure() const {
    for (const auto& c : checks) {
      if (!c.ok()) return &c;
    }
    return nullptr;
  }
};

inline ExperimentConfig golden_config() {
  ExperimentConfig cfg;
  cfg.algorithm = Algorithm::FedSmoo;
  cfg.task = TaskKind::Quadratic;
  cfg.quad_dim = 1;
  cfg.hyper.eta = 0.1;
  cfg.hyper.beta = 1.0;
  cfg.hyper.radius = 0.1;
  cfg.hyper.local_steps = 1;
  cfg.hyper.rounds = 1;
  cfg.hyper.num_clients = 2;
  cfg.hyper.active_clients = 2;
  return cfg;
}

/// Everything observable in one round of the two-client trace.
struct GoldenTrace {
  double g = 0.0, s_hat = 0.0, mu = 0.0, g_hat = 0.0;  // client 0, step 0
  double w0 = 0.0, w1 = 0.0;                            // returned client models
  double tilde_s0 = 0.0;
  double lambda0 = 0.0;
  double server_lambda = 0.0, server_w = 0.0;
  double aggregation_gap = 0.0;  // |mean(w_i) - (w^{t+1} + beta lambda^{t+1})|
};

inline GoldenTrace run_golden_round(const ExperimentConfig& cfg) {
  Federation fed;
  auto q = make_quadratic_federation({{1.0}, {3.0}});
  fed.client_models = std::move(q.clients);
  fed.client_data.assign(2, Batch{});
  fed.optimum = std::move(q.optimum);

  ExperimentConfig run_cfg = cfg;
  run_cfg.hyper.num_clients = 2;
  run_cfg.hyper.active_clients = 2;
  run_cfg.validate();

  GoldenTrace tr;
  LocalHooks hooks;
  bool captured = false;
  hooks.on_step = [&](const StepTrace& s) {
    if (captured) return;  // client 0 runs first with one worker
    captured = true;
    tr.g = (*s.g)[0];
    tr.s_hat = s.s_hat != nullptr ? (*s.s_hat)[0] : 0.0;
    tr.mu = s.mu != nullptr ? (*s.mu)[0] : 0.0;
    tr.g_hat = (*s.g_hat)[0];
  };
  EngineOptions opts;
  opts.workers = 1;
  opts.local_hooks = &hooks;
  opts.on_round = [&](const RoundOutcome& o, const World& world) {
    tr.w0 = o.returns[0].w[0];
    tr.w1 = o.returns[1].w[0];
    tr.tilde_s0 = o.returns[0].tilde_s.size() > 0 ? o.returns[0].tilde_s[0] : 0.0;
    tr.lambda0 = world.clients[0].lambda[0];
    tr.server_lambda = world.server.lambda[0];
    tr.server_w = world.server.w[0];
    tr.aggregation_gap = std::abs(o.w_bar[0] - (world.server.w[0] + run_cfg.hyper.beta * world.server.lambda[0]));
  };
  World world = initial_world(run_cfg, fed);
  run_round(world, fed, run_cfg, false, opts);
  return tr;
}

inline void add_trace_checks(GoldenReport& rep, const GoldenTrace& expected, const GoldenTrace& actual) {
  auto add = [&](const char* name, double e, double a) { rep.checks.push_back({name, e, a}); };
  add("g", expected.g, actual.g);
  add("s_hat", expected.s_hat, actual.s_hat);
  add("mu", expected.mu, actual.mu);
  add("g_hat", expected.g_hat, actual.g_hat);
  add("w_client0", expected.w0, actual.w0);
  add("tilde_s", expected.tilde_s0, actual.tilde_s0);
  add("lambda_client0", expected.lambda0, actual.lambda0);
  add("w_client1", expected.w1, actual.w1);
  add("server_lambda", expected.server_lambda, actual.server_lambda);
  add("server_w", expected.server_w, actual.server_w);
}

/// Runs the hand trace with `cfg` (normally golden_config() plus any
/// overrides) and compares every intermediate with the hand-derived values.
inline GoldenReport golden_trace(const ExperimentConfig& cfg) {
  GoldenTrace expected;
  expected.g = -1.0;
  expected.s_hat = -0.1;
  expected.mu = -0.1;
  expected.g_hat = -1.1;
  expected.w0 = 0.11;
  expected.tilde_s0 = 0.0;
  expected.lambda0 = -0.11;
  expected.w1 = 0.31;
  expected.server_lambda = -0.21;
  expected.server_w = 0.42;

  GoldenReport rep;
  const GoldenTrace actual = run_golden_round(cfg);
  add_trace_checks(rep, expected, actual);
  rep.checks.push_back({"aggregation_identity", 0.0, actual.aggregation_gap});
  return rep;
}

/// FedSMOO with r = 0 against FedDyn on the same round.
inline GoldenReport golden_trace_r0(const ExperimentConfig& cfg) {
  ExperimentConfig smoo = cfg;
  smoo.algorithm = Algorithm::FedSmoo;
  smoo.hyper.radius = 0.0;
  ExperimentConfig dyn = smoo;
  dyn.algorithm = Algorithm::FedDyn;
  GoldenTrace dyn_trace = run_golden_round(dyn);
  // FedDyn reports neither a perturbation nor its dual; both are zero
  // for FedSMOO at r = 0.
  dyn_trace.s_hat = 0.0;
  dyn_trace.mu = 0.0;
  const GoldenTrace smoo_trace = run_golden_round(smoo);
  GoldenReport rep;
  add_trace_checks(rep, dyn_trace, smoo_trace);
  rep.checks.push_back({"aggregation_identity", 0.0, smoo_trace.aggregation_gap});
  return rep;
}

}  // namespace fedsim

#endif  // FEDSIM_GOLDEN_HPP_
