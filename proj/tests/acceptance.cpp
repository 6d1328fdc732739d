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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <sys/wait.h>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/diagnostics.hpp"
#include "fedsim/engine.hpp"
#include "fedsim/golden.hpp"
#include "fedsim/partition.hpp"
#include "test_support.hpp"

namespace fedsim {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

ExperimentConfig shipped(const char* name) {
  return load_config(fs::path(FEDSIM_SOURCE_DIR) / "configs" / name);
}

// Aggregation identity, checked on every FedSMOO/FedDyn round run below.
struct AggregationWatch {
  std::mutex mu;
  std::size_t rounds = 0;
  double worst = 0.0;

  void check(const ParamVector& w_bar, const ServerState& server, double beta) {
    double gap = 0.0;
    for (std::size_t j = 0; j < w_bar.size(); ++j) {
      const double d = w_bar[j] - (server.w[j] + beta * server.lambda[j]);
      gap += d * d;
    }
    double wn = 0.0;
    for (std::size_t j = 0; j < server.w.size(); ++j) wn += server.w[j] * server.w[j];
    const double scaled = std::sqrt(gap) / (1.0 + std::sqrt(wn));
    std::lock_guard<std::mutex> lock(mu);
    ++rounds;
    worst = std::max(worst, scaled);
  }

  std::function<void(const RoundOutcome&, const World&)> hook(double beta) {
    return [this, beta](const RoundOutcome& o, const World& w) { check(o.w_bar, w.server, beta); };
  }
};

AggregationWatch g_aggregation;

bool is_dynamic(Algorithm a) { return a == Algorithm::FedSmoo || a == Algorithm::FedDyn; }

EngineOptions watched(const ExperimentConfig& cfg, EngineOptions opts = {}) {
  if (!is_dynamic(cfg.algorithm)) return opts;
  auto agg = g_aggregation.hook(cfg.hyper.beta);
  auto user = opts.on_round;
  opts.on_round = [agg, user](const RoundOutcome& o, const World& w) {
    agg(o, w);
    if (user) user(o, w);
  };
  return opts;
}

// 1. Golden trace through the command-line tool.
Verdict criterion_golden() {
  const auto t0 = Clock::now();
  const std::string cmd = std::string(FEDSIM_CLI_PATH) + " trace-golden >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  const double dt = seconds_since(t0);
  const bool exit_ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
  const auto rep = golden_trace(golden_config());
  double worst = 0.0;
  for (const auto& c : rep.checks) worst = std::max(worst, std::abs(c.expected - c.actual));
  return {exit_ok && rep.ok() && dt < 1.0,
          "cli exit " + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1) + ", " +
              std::to_string(rep.checks.size()) + " quantities, max |err| " + fmt(worst) + ", " + fmt(dt) + " s"};
}

// 2. Analytic gradients against central differences of the loss.
Verdict criterion_gradients() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0.0;
  auto check = [&](const Model& m, const ParamVector& p, const Batch& b) {
    const ParamVector g = grad(m, p, b);
    const double h = 1e-5;
    double num = 0.0, den = 0.0;
    ParamVector probe = p;
    for (std::size_t j = 0; j < p.size(); ++j) {
      probe[j] = p[j] + h;
      const double up = loss(m, probe, b);
      probe[j] = p[j] - h;
      const double down = loss(m, probe, b);
      probe[j] = p[j];
      const double fd = (up - down) / (2.0 * h);
      num += (g[j] - fd) * (g[j] - fd);
      den += fd * fd;
    }
    worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-8));
  };
  for (int i = 0; i < 100; ++i) {
    std::vector<double> c(6), h(6);
    for (std::size_t j = 0; j < 6; ++j) {
      c[j] = rng.normal();
      h[j] = 0.1 + 2.0 * rng.uniform();
    }
    const Model q = QuadraticFed{c, h};
    check(q, testing::random_params(rng, 6), Batch{});
  }
  const Model logistic = LogisticRegression{5, 4};
  for (int i = 0; i < 100; ++i) {
    check(logistic, testing::random_params(rng, logistic.dim()), testing::random_batch(rng, 12, 5, 4));
  }
  const Model mlp = Mlp{{5, 7, 4}};
  for (int i = 0; i < 100; ++i) {
    check(mlp, testing::random_params(rng, mlp.dim()), testing::random_batch(rng, 12, 5, 4));
  }
  const double dt = seconds_since(t0);
  return {worst <= 1e-5 && dt < 60.0, "max relative error " + fmt(worst) + " over 300 points, " + fmt(dt) + " s"};
}

// 3. With exact local solves, lambda_i equals the local gradient at w_i.
Verdict criterion_dual_identity() {
  Rng rng(77);
  const std::size_t m = 10, n = 4, d = 8;
  std::vector<QuadraticFed> qs;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> c(d), h(d);
    for (std::size_t j = 0; j < d; ++j) {
      c[j] = 2.0 * rng.normal();
      h[j] = 0.2 + 3.0 * rng.uniform();
    }
    qs.push_back({c, h});
  }
  double worst = 0.0;
  std::size_t checks = 0;
  for (std::size_t active : {m, n}) {
    HyperParams hp;
    hp.beta = 0.5;
    hp.radius = 0.0;
    ServerState server = ServerState::initial(ParamVector(d));
    std::vector<ClientState> clients;
    for (std::size_t i = 0; i < m; ++i) clients.push_back(ClientState::initial(i, d, 0.0));
    for (std::size_t t = 0; t < 50; ++t) {
      std::vector<ClientReturn> rets;
      for (std::size_t i : sample_active_clients(m, active, t, 5)) {
        auto res = exact_dynamic_local_round(clients[i], server.w, hp, Model(qs[i]), t);
        double err = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double gj = qs[i].curvature[j] * (res.ret.w[j] - qs[i].center[j]);
          err += (res.state.lambda[j] - gj) * (res.state.lambda[j] - gj);
        }
        worst = std::max(worst, std::sqrt(err));
        ++checks;
        clients[i] = res.state;
        rets.push_back(res.ret);
      }
      server = server_round(Algorithm::FedSmoo, server, rets, hp, m, 0.1, t);
      ParamVector w_bar = ParamVector::zeros_like(server.w);
      for (const auto& r : rets) w_bar += r.w;
      w_bar *= 1.0 / static_cast<double>(rets.size());
      g_aggregation.check(w_bar, server, hp.beta);
    }
  }
  return {worst <= 1e-10, "max |lambda_i - grad F_i(w_i)| " + fmt(worst) + " over " + std::to_string(checks) +
                              " client updates (50 rounds, full and partial participation)"};
}

// 5. Quadratic federation convergence, consistency and rate.
Verdict criterion_convergence() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = shipped("quadratic.cfg");
  cfg.eval_every = 1;
  const Federation fed = build_federation(cfg);
  // Oracle: grad f(w) = w - mean(c) for unit-curvature clients.
  std::vector<double> cbar(cfg.quad_dim, 0.0);
  for (const auto& mdl : fed.client_models) {
    const auto& q = std::get<QuadraticFed>(mdl.kind());
    for (std::size_t j = 0; j < cbar.size(); ++j) cbar[j] += q.center[j] / static_cast<double>(fed.num_clients());
  }
  std::vector<double> gn;
  double final_consistency = 0.0;
  EngineOptions opts;
  opts.on_round = [&](const RoundOutcome& o, const World&) {
    double s = 0.0;
    for (std::size_t j = 0; j < cbar.size(); ++j) s += (o.w_bar[j] - cbar[j]) * (o.w_bar[j] - cbar[j]);
    gn.push_back(s);
    double c = 0.0;
    for (const auto& r : o.returns) {
      for (std::size_t j = 0; j < r.w.size(); ++j) c += (r.w[j] - o.w_broadcast[j]) * (r.w[j] - o.w_broadcast[j]);
    }
    final_consistency = c / static_cast<double>(o.returns.size());
  };
  const auto res = run_experiment(cfg, fed, watched(cfg, opts));
  if (res.summary.status != "ok" || gn.size() < 500) return {false, "run did not complete: " + res.summary.message};
  double sx = 0, sy = 0, sxx = 0, sxy = 0, k = 0;
  double running = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t <= gn.size(); ++t) {
    running = std::min(running, gn[t - 1]);
    if (t < 50 || t > 500) continue;
    const double x = std::log(static_cast<double>(t)), y = std::log(running);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    k += 1;
  }
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  const double final_g = gn.back();
  const double dt = seconds_since(t0);
  return {final_g <= 1e-8 && final_consistency <= 1e-8 && slope <= -0.9 && dt < 60.0,
          "final |grad f|^2 " + fmt(final_g) + ", consistency " + fmt(final_consistency) + ", slope " + fmt(slope) +
              ", " + fmt(dt) + " s"};
}

// 6. Reduction lattice over 100 rounds.
std::string trajectory(const std::vector<RoundMetrics>& s) {
  std::string out;
  for (const auto& m : s) {
    out += std::to_string(m.round) + "," + format_double(m.eta) + "," + format_double(m.train_loss) + "," +
           format_double(m.grad_norm_sq) + "," + format_double(m.test_acc) + "," + format_double(m.consistency) +
           "," + m.status + "\n";
  }
  return out;
}

Verdict criterion_lattice() {
  ExperimentConfig base;
  base.num_classes = 5;
  base.input_dim = 8;
  base.train_size = 1000;
  base.test_size = 200;
  base.hidden = {10};
  base.hyper.num_clients = 8;
  base.hyper.active_clients = 3;
  base.hyper.rounds = 100;
  base.hyper.local_steps = 5;
  base.hyper.batch_size = 20;
  base.hyper.eta = 0.1;
  base.hyper.beta = 5.0;
  base.hyper.radius = 0.05;
  base.master_seed = 11;
  const Federation fed = build_federation(base);
  auto run = [&](Algorithm a, const std::function<void(ExperimentConfig&)>& tweak) {
    ExperimentConfig cfg = base;
    cfg.algorithm = a;
    tweak(cfg);
    EngineOptions opts;
    opts.workers = 4;
    return run_experiment(cfg, fed, watched(cfg, opts));
  };
  auto r0 = [](ExperimentConfig& c) { c.hyper.radius = 0.0; };
  auto same = [](const ExperimentResult& a, const ExperimentResult& b) {
    return a.series.size() == 100 && trajectory(a.series) == trajectory(b.series) && a.world.server.w == b.world.server.w;
  };
  const bool smoo_dyn = same(run(Algorithm::FedSmoo, r0), run(Algorithm::FedDyn, r0));
  const bool sam_avg = same(run(Algorithm::FedSam, r0), run(Algorithm::FedAvg, [](ExperimentConfig&) {}));
  const bool dyn_avg = same(run(Algorithm::FedDyn, [](ExperimentConfig& c) { c.hyper.disable_proximal = true; }),
                            run(Algorithm::FedAvg, [](ExperimentConfig&) {}));
  const bool mo_sam = same(run(Algorithm::MoFedSam, [](ExperimentConfig& c) { c.hyper.alpha_cm = 1.0; }),
                           run(Algorithm::FedSam, [](ExperimentConfig&) {}));
  auto word = [](bool b) { return b ? "identical" : "DIFFERENT"; };
  return {smoo_dyn && sam_avg && dyn_avg && mo_sam,
          std::string("fedsmoo(r=0)/feddyn ") + word(smoo_dyn) + ", fedsam(r=0)/fedavg " + word(sam_avg) +
              ", feddyn(no prox)/fedavg " + word(dyn_avg) + ", mofedsam(alpha=1)/fedsam " + word(mo_sam)};
}

// 8. Partition statistics.
Verdict criterion_partition() {
  std::vector<int> labels(50000);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  double sum_std = 0.0;
  double worst_without = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto with = dirichlet_partition(labels, 10, 100, 0.1, true, seed);
    const auto without = dirichlet_partition(labels, 10, 100, 0.1, false, seed);
    // Independent count of per-class totals.
    auto class_std = [&](const PartitionPlan& plan) {
      std::array<double, 10> totals{};
      for (const auto& a : plan.assignments) {
        for (auto idx : a) totals[static_cast<std::size_t>(labels[idx])] += 1.0;
      }
      double mean = 0.0;
      for (double t : totals) mean += t / 10.0;
      double var = 0.0;
      for (double t : totals) var += (t - mean) * (t - mean) / 10.0;
      return std::sqrt(var);
    };
    sum_std += class_std(with);
    worst_without = std::max(worst_without, class_std(without));
  }
  const double mean_std = sum_std / 20.0;
  return {mean_std >= 550.0 && mean_std <= 1150.0 && worst_without == 0.0,
          "mean class-count std with replacement " + fmt(mean_std) + ", without " + fmt(worst_without)};
}

// 9, 10 and 7: the heterogeneous synthetic task.
struct HeteroRun {
  Algorithm algorithm;
  std::uint64_t seed;
  double test_acc = 0.0;
  double top_eigenvalue = 0.0;
  double trace = 0.0;
  std::string status;
};

struct PerturbationWatch {
  std::atomic<std::size_t> checked{0};
  std::atomic<std::size_t> off_ball{0};
  std::mutex mu;
  double worst = 0.0;

  void see(const ParamVector& v, double r) {
    const double n = v.norm();
    ++checked;
    if (n == 0.0) return;
    const double dev = std::abs(n - r);
    if (dev > 1e-9 * std::max(1.0, r)) ++off_ball;
    std::lock_guard<std::mutex> lock(mu);
    worst = std::max(worst, dev);
  }
};

ExperimentConfig hetero_config(Algorithm a, std::uint64_t seed) {
  ExperimentConfig cfg = shipped("heterogeneity.cfg");
  cfg.algorithm = a;
  cfg.master_seed = seed;
  cfg.eval_every = cfg.hyper.rounds;
  if (a != Algorithm::FedSmoo) {
    // SGD-type baselines: faster decay; FedSAM with its own smaller radius.
    cfg.hyper.eta_decay = 0.998;
    cfg.hyper.radius = 0.01;
  }
  return cfg;
}

std::vector<HeteroRun> hetero_runs(PerturbationWatch& watch, double& seconds) {
  const auto t0 = Clock::now();
  std::vector<HeteroRun> runs;
  for (Algorithm a : {Algorithm::FedSmoo, Algorithm::FedAvg, Algorithm::FedSam}) {
    for (std::uint64_t s = 0; s < 5; ++s) runs.push_back({a, s, 0.0, 0.0, 0.0, ""});
  }
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      auto& r = runs[i];
      const ExperimentConfig cfg = hetero_config(r.algorithm, r.seed);
      const Federation fed = build_federation(cfg);
      LocalHooks hooks;
      EngineOptions opts;
      if (r.algorithm == Algorithm::FedSmoo) {
        hooks.on_step = [&](const StepTrace& t) { watch.see(*t.s_hat, cfg.hyper.radius); };
        opts.local_hooks = &hooks;
        opts.on_round = [&](const RoundOutcome&, const World& w) { watch.see(w.server.s, cfg.hyper.radius); };
      }
      const auto res = run_experiment(cfg, fed, watched(cfg, opts));
      r.status = res.summary.status;
      r.test_acc = res.summary.final_test_acc;
      if (r.status != "ok") continue;
      const Batch subset = diagnostic_subset(fed, cfg.master_seed);
      const auto flat = flatness_report(fed.model(), res.world.server.w, subset, 200, 1e-6, 100, 0);
      r.top_eigenvalue = flat.top_eigenvalue;
      r.trace = flat.trace_estimate;
      progress(std::string(to_string(r.algorithm)) + " seed " + std::to_string(r.seed) + ": acc " + fmt(r.test_acc) +
               ", eig " + fmt(r.top_eigenvalue) + ", trace " + fmt(r.trace));
    }
  };
  const std::size_t workers = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < workers; ++k) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  seconds = seconds_since(t0);
  return runs;
}

Verdict criterion_heterogeneity(const std::vector<HeteroRun>& runs, double seconds) {
  std::map<Algorithm, double> mean;
  bool all_ok = true;
  for (const auto& r : runs) {
    mean[r.algorithm] += r.test_acc / 5.0;
    all_ok = all_ok && r.status == "ok";
  }
  const double smoo = mean[Algorithm::FedSmoo], avg = mean[Algorithm::FedAvg], sam = mean[Algorithm::FedSam];
  return {all_ok && smoo >= avg + 0.01 && smoo >= sam && seconds < 900.0,
          "mean test acc fedsmoo " + fmt(smoo) + ", fedavg " + fmt(avg) + ", fedsam " + fmt(sam) + " (5 seeds, " +
              fmt(seconds) + " s)"};
}

Verdict criterion_flatness(const std::vector<HeteroRun>& runs) {
  int eig_wins = 0, trace_wins = 0;
  std::string eigs, traces;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const HeteroRun *smoo = nullptr, *avg = nullptr;
    for (const auto& r : runs) {
      if (r.seed != s) continue;
      if (r.algorithm == Algorithm::FedSmoo) smoo = &r;
      if (r.algorithm == Algorithm::FedAvg) avg = &r;
    }
    if (smoo->top_eigenvalue < avg->top_eigenvalue) ++eig_wins;
    if (smoo->trace < avg->trace) ++trace_wins;
    eigs += " " + fmt(smoo->top_eigenvalue) + "/" + fmt(avg->top_eigenvalue);
    traces += " " + fmt(smoo->trace) + "/" + fmt(avg->trace);
  }
  return {eig_wins >= 4 && trace_wins >= 4, "fedsmoo/fedavg top eigenvalue" + eigs + " (lower on " +
                                                std::to_string(eig_wins) + "/5); trace" + traces + " (lower on " +
                                                std::to_string(trace_wins) + "/5)"};
}

Verdict criterion_perturbation(const PerturbationWatch& w) {
  return {w.checked.load() > 0 && w.off_ball.load() == 0,
          std::to_string(w.checked.load()) + " perturbations checked, " + std::to_string(w.off_ball.load()) +
              " off the ball, max | |s| - r | " + fmt(w.worst)};
}

// 11. Hessian diagnostics against a dense finite-difference Hessian.
Verdict criterion_diagnostics() {
  std::string detail;
  bool ok = true;
  Rng rng(99);
  const std::vector<Model> models = {Mlp{{4, 6, 3}}, LogisticRegression{6, 4}, Mlp{{6, 8, 5, 3}}};
  for (std::size_t k = 0; k < models.size(); ++k) {
    const Model& m = models[k];
    const Batch b = testing::random_batch(rng, 60, m.input_dim(), m.num_classes());
    ParamVector p = initial_params(m, rng);
    for (int i = 0; i < 100; ++i) p.axpy(-0.3, grad(m, p, b));
    const Eigen::MatrixXd H = testing::dense_hessian(m, p, b);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    const auto& ev = es.eigenvalues();
    const double top = std::abs(ev.minCoeff()) > std::abs(ev.maxCoeff()) ? ev.minCoeff() : ev.maxCoeff();
    const auto pi = hessian_top_eigenvalue(m, p, b, 10000, 1e-12, k);
    Rng probes(500 + k);
    const auto tr = hessian_trace_hutchinson(m, p, b, 500, probes);
    const double eig_err = std::abs(pi.eigenvalue - top) / std::abs(top);
    const double tr_dev = std::abs(tr.trace - H.trace());
    const bool this_ok = m.dim() <= 200 && eig_err <= 0.02 && tr_dev <= 3.0 * tr.stderr_;
    ok = ok && this_ok;
    detail += (k ? "; " : "") + std::string("d=") + std::to_string(m.dim()) + " eig rel err " + fmt(eig_err) +
              ", trace dev " + fmt(tr_dev) + " (3 se " + fmt(3.0 * tr.stderr_) + ")";
  }
  return {ok, detail};
}

// 12. Per-round communication counters.
Verdict criterion_communication() {
  const std::map<Algorithm, std::pair<std::uint64_t, std::uint64_t>> expected = {
      {Algorithm::FedSmoo, {2, 2}},  {Algorithm::Scaffold, {2, 2}}, {Algorithm::FedCM, {2, 1}},
      {Algorithm::MoFedSam, {2, 1}}, {Algorithm::FedAvg, {1, 1}},   {Algorithm::FedDyn, {1, 1}},
      {Algorithm::FedSam, {1, 1}}};
  ExperimentConfig base;
  base.num_classes = 3;
  base.input_dim = 4;
  base.train_size = 300;
  base.test_size = 50;
  base.hidden = {5};
  base.hyper.num_clients = 6;
  base.hyper.active_clients = 4;
  base.hyper.rounds = 5;
  base.hyper.local_steps = 2;
  base.hyper.batch_size = 10;
  const Federation fed = build_federation(base);
  bool ok = true;
  std::string detail;
  for (const auto& [a, io] : expected) {
    ExperimentConfig cfg = base;
    cfg.algorithm = a;
    const auto res = run_experiment(cfg, fed, watched(cfg));
    std::uint64_t prev_down = 0, prev_up = 0;
    bool this_ok = res.series.size() == 5;
    for (const auto& row : res.series) {
      this_ok = this_ok && row.download_vectors_cum - prev_down == io.first * 4 &&
                row.upload_vectors_cum - prev_up == io.second * 4;
      prev_down = row.download_vectors_cum;
      prev_up = row.upload_vectors_cum;
    }
    ok = ok && this_ok;
    detail += (detail.empty() ? "" : ", ") + std::string(to_string(a)) + " " +
              std::to_string(res.summary.download_vectors_total / (5 * 4)) + "/" +
              std::to_string(res.summary.upload_vectors_total / (5 * 4));
  }
  return {ok, "down/up per active client per round: " + detail};
}

// 13. Bound computation against an SVD oracle, plus monotonicity.
Verdict criterion_bound() {
  Rng rng(13);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<std::pair<std::size_t, std::size_t>> dims = {
        {2 + rng.uniform_index(5), 2 + rng.uniform_index(5)}, {0, 0}, {0, 0}};
    std::vector<std::pair<std::size_t, std::size_t>> layers{dims[0]};
    layers.push_back({2 + rng.uniform_index(5), layers[0].first});
    layers.push_back({2 + rng.uniform_index(5), layers[1].first});
    std::vector<double> v;
    std::vector<LayerShape> shapes;
    for (auto [r, c] : layers) {
      for (std::size_t k = 0; k < r * c; ++k) v.push_back(rng.normal());
      shapes.push_back({r, c});
    }
    const ParamVector p(v, shapes);
    const double Ln = 0.5 + rng.uniform(), eps = 0.2 + rng.uniform(), prob = 0.05;
    const std::size_t D = 100 + rng.uniform_index(10000);
    const auto rep = generalization_bound(p, Ln, D, prob, eps);
    double prod = 1.0, ratio = 0.0;
    std::size_t off = 0, dmax = 0;
    for (auto [r, c] : layers) {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(
          v.data() + off, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      const double s = Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()(0);
      prod *= s * s;
      ratio += M.squaredNorm() / (s * s);
      off += r * c;
      dmax = std::max(dmax, r * c);
    }
    const double V = prod * ratio;
    const double L = 3.0, dd = static_cast<double>(dmax), DD = static_cast<double>(D);
    const double bound =
        std::sqrt((L * L * Ln * Ln * dd * std::log(dd * L) * V + std::log(L * DD / prob)) / ((DD - 1) * eps * eps));
    worst = std::max({worst, std::abs(rep.v_l - V) / V, std::abs(rep.bound_term - bound) / bound});
  }
  // Monotonicity sweeps.
  const ParamVector base(std::vector<double>{1.0, 0.3, -0.2, 0.8, 0.5, -1.0}, {{2, 2}, {1, 2}});
  bool mono = true;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t D : {10u, 100u, 1000u, 10000u, 100000u}) {
    const double b = generalization_bound(base, 1.0, D, 0.05, 1.0).bound_term;
    mono = mono && b < prev;
    prev = b;
  }
  prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.05, 0.1, 0.5, 1.0, 5.0}) {
    const double b = generalization_bound(base, 1.0, 1000, 0.05, eps).bound_term;
    mono = mono && b < prev;
    prev = b;
  }
  double prev_v = 0.0;
  prev = 0.0;
  for (double c : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    ParamVector q = base;
    for (std::size_t j = 0; j < 4; ++j) q[j] *= c;
    const auto rep = generalization_bound(q, 1.0, 1000, 0.05, 1.0);
    mono = mono && rep.v_l > prev_v && rep.bound_term > prev;
    prev_v = rep.v_l;
    prev = rep.bound_term;
  }
  return {worst <= 1e-8 && mono,
          "max relative error " + fmt(worst) + " over 20 random 3-layer sets; monotone in D, eps, V_L: " +
              (mono ? "yes" : "NO")};
}

int run_all() {
  std::map<int, Verdict> v;
  auto timed = [&](int id, const std::function<Verdict()>& f) {
    progress("criterion " + std::to_string(id));
    try {
      v[id] = f();
    } catch (const std::exception& e) {
      v[id] = {false, std::string("exception: ") + e.what()};
    }
  };
  timed(1, criterion_golden);
  timed(2, criterion_gradients);
  timed(3, criterion_dual_identity);
  timed(5, criterion_convergence);
  timed(6, criterion_lattice);
  timed(8, criterion_partition);

  PerturbationWatch perturb;
  double hetero_seconds = 0.0;
  std::vector<HeteroRun> runs;
  try {
    progress("criteria 9, 10 (15 runs)");
    runs = hetero_runs(perturb, hetero_seconds);
    v[9] = criterion_heterogeneity(runs, hetero_seconds);
    v[10] = criterion_flatness(runs);
  } catch (const std::exception& e) {
    v[9] = {false, std::string("exception: ") + e.what()};
    v[10] = v[9];
  }
  v[7] = criterion_perturbation(perturb);

  timed(11, criterion_diagnostics);
  timed(12, criterion_communication);
  timed(13, criterion_bound);

  {
    std::lock_guard<std::mutex> lock(g_aggregation.mu);
    v[4] = {g_aggregation.rounds > 0 && g_aggregation.worst <= 1e-12,
            std::to_string(g_aggregation.rounds) + " FedSMOO/FedDyn rounds, max scaled gap " +
                fmt(g_aggregation.worst)};
  }

  static const std::array<const char*, 13> names = {
      "golden trace",          "gradient oracle",       "dual identity",        "aggregation identity",
      "convergence",           "reduction lattice",     "perturbation norms",   "partition statistics",
      "heterogeneity trend",   "flatness direction",    "diagnostics oracles",  "communication accounting",
      "bound computation"};
  int failures = 0;
  for (int id = 1; id <= 13; ++id) {
    const auto& r = v[id];
    if (!r.pass) ++failures;
    std::cout << (r.pass ? "PASS" : "FAIL") << " " << id << " " << names[static_cast<std::size_t>(id - 1)] << ": "
              << r.detail << "\n";
  }
  std::cout << (13 - failures) << "/13 criteria passed\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace fedsim

int main() { return fedsim::run_all(); }
