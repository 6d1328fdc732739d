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

#ifndef FEDSIM_ENGINE_HPP_
#define FEDSIM_ENGINE_HPP_

// The federated round loop.
//
// A run is a pure function of its ExperimentConfig: every random draw is
// derived from master_seed (client sampling from (seed, round), client
// mini-batches from (seed, round, client)), and aggregation consumes client
// returns in client-id order, so the worker count never changes results.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fedsim/algorithms.hpp"
#include "fedsim/diagnostics.hpp"
#include "fedsim/io.hpp"
#include "fedsim/model.hpp"
#include "fedsim/partition.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class TaskKind { Classification, Quadratic };
enum class ModelKind { Mlp, Logistic };
enum class PartitionScheme { Dirichlet, Pathological, Iid };

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::FedSmoo;
  HyperParams hyper;

  TaskKind task = TaskKind::Classification;
  ModelKind model = ModelKind::Mlp;
  std::vector<std::size_t> hidden = {32};

  // Classification data: loaded from dataset_file when set, otherwise
  // synthesized. The last test_size rows become the held-out test set.
  std::string dataset_file;
  std::size_t num_classes = 10;
  std::size_t input_dim = 20;
  std::size_t train_size = 10000;
  std::size_t test_size = 2000;
  double class_separation = 2.0;
  double noise = 1.0;

  // Quadratic federation.
  std::size_t quad_dim = 10;
  double center_spread = 1.0;

  PartitionScheme partition = PartitionScheme::Dirichlet;
  double dirichlet_u = 0.1;
  std::size_t classes_per_client = 3;
  bool with_replacement = true;

  std::uint64_t master_seed = 0;
  std::size_t eval_every = 1;

  void validate() const {
    hyper.validate();
    if (eval_every < 1) throw std::invalid_argument("config: eval_every must be >= 1");
    if (task == TaskKind::Quadratic) {
      if (quad_dim < 1) throw std::invalid_argument("config: quad_dim must be >= 1");
      return;
    }
    if (!dataset_file.empty() && !std::filesystem::exists(dataset_file)) {
      throw std::invalid_argument("config: dataset_file '" + dataset_file + "' does not exist");
    }
    if (dataset_file.empty() && (num_classes < 2 || input_dim < 1 || train_size < num_classes)) {
      throw std::invalid_argument("config: synthetic dataset needs num_classes >= 2 and train_size >= num_classes");
    }
    if (partition == PartitionScheme::Dirichlet && !(dirichlet_u > 0.0)) {
      throw std::invalid_argument("config: dirichlet_u must be > 0");
    }
  }
};

/// Data and objectives of every client plus held-out evaluation data.
struct Federation {
  std::vector<Model> client_models;
  std::vector<Batch> client_data;  // empty batches for quadratic clients
  std::optional<Batch> test;
  std::optional<LabeledDataset> train;  // classification only
  std::optional<PartitionPlan> plan;
  std::optional<ParamVector> optimum;   // quadratic only: mean of centers

  std::size_t num_clients() const noexcept { return client_models.size(); }
  const Model& model() const { return client_models.front(); }
};

struct RoundMetrics {
  std::size_t round = 0;       // rounds completed
  double eta = 0.0;            // local learning rate used in this round
  double train_loss = 0.0;     // f(w_bar)
  double grad_norm_sq = 0.0;   // |grad f(w_bar)|^2
  double test_acc = 0.0;       // at the post-correction global model w
  double consistency = 0.0;    // 1/n sum |w_i - w^t|^2
  std::uint64_t upload_vectors_cum = 0;
  std::uint64_t download_vectors_cum = 0;
  std::string status = "ok";
};

inline constexpr const char* kMetricsCsvHeader =
    "round,eta,train_loss,grad_norm_sq,test_acc,consistency,upload_vectors_cum,download_vectors_cum,status";

inline std::string metrics_csv_row(const RoundMetrics& m) {
  return std::to_string(m.round) + "," + format_double(m.eta) + "," + format_double(m.train_loss) + "," +
         format_double(m.grad_norm_sq) + "," + format_double(m.test_acc) + "," + format_double(m.consistency) + "," +
         std::to_string(m.upload_vectors_cum) + "," + std::to_string(m.download_vectors_cum) + "," + m.status;
}

struct World {
  ServerState server;
  std::vector<ClientState> clients;
  std::size_t next_round = 0;
  std::uint64_t upload_vectors_cum = 0;
  std::uint64_t download_vectors_cum = 0;
};

/// What happened inside one round, for callers that check invariants.
struct RoundOutcome {
  std::size_t round = 0;
  std::vector<std::size_t> active;
  ParamVector w_broadcast;  // w^t
  ParamVector w_bar;        // mean of returned w_i
  std::vector<ClientReturn> returns;
  double eta = 0.0;
  double consistency = 0.0;
};

struct EngineOptions {
  std::size_t workers = 1;
  // Called from worker threads when workers > 1.
  const LocalHooks* local_hooks = nullptr;
  std::function<void(const RoundOutcome&, const World&)> on_round;
};

/// Uniform n-of-m sample without replacement, sorted ascending.
inline std::vector<std::size_t> sample_active_clients(std::size_t m, std::size_t n, std::size_t round,
                                                      std::uint64_t master_seed) {
  if (n < 1 || n > m) throw std::invalid_argument("sample_active_clients: need 1 <= n <= m");
  std::vector<std::size_t> ids(m);
  for (std::size_t i = 0; i < m; ++i) ids[i] = i;
  if (n == m) return ids;
  Rng rng(derive_seed({master_seed, 0x5a3bULL, round}));
  // Partial Fisher-Yates: the first n slots are the sample.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(m - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(n);
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline std::uint64_t client_stream_seed(std::uint64_t master_seed, std::size_t round, std::size_t client) {
  return derive_seed({master_seed, 0xc11eULL, round, client});
}

namespace detail {

inline std::uint64_t data_seed(std::uint64_t master) { return derive_seed({master, 0xda7aULL}); }
inline std::uint64_t partition_seed(std::uint64_t master) { return derive_seed({master, 0x9a27ULL}); }
inline std::uint64_t init_seed(std::uint64_t master) { return derive_seed({master, 0x1417ULL}); }

inline Model make_model(const ExperimentConfig& cfg, std::size_t input_dim, std::size_t classes) {
  if (cfg.model == ModelKind::Logistic) return LogisticRegression{input_dim, classes};
  std::vector<std::size_t> sizes{input_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(classes);
  return Mlp{sizes};
}

}  // namespace detail

/// Builds the client objectives (data, partition, models) for a config.
inline Federation build_federation(const ExperimentConfig& cfg) {
  cfg.validate();
  Federation fed;
  const std::size_t m = cfg.hyper.num_clients;
  if (cfg.task == TaskKind::Quadratic) {
    auto q = synth_quadratic_federation(m, cfg.quad_dim, cfg.center_spread, detail::data_seed(cfg.master_seed));
    fed.client_models = std::move(q.clients);
    fed.client_data.assign(m, Batch{});
    fed.optimum = std::move(q.optimum);
    return fed;
  }

  LabeledDataset all = cfg.dataset_file.empty()
                           ? synth_classification(cfg.num_classes, cfg.input_dim, cfg.train_size + cfg.test_size,
                                                  cfg.class_separation, cfg.noise, detail::data_seed(cfg.master_seed))
                           : load_dataset(cfg.dataset_file);
  const std::size_t test_rows = std::min(cfg.test_size, all.size() > 0 ? all.size() - 1 : 0);
  auto [train, test] = all.split_tail(test_rows);
  train.validate();

  PartitionPlan plan;
  const auto seed = detail::partition_seed(cfg.master_seed);
  switch (cfg.partition) {
    case PartitionScheme::Dirichlet:
      plan = dirichlet_partition(train.labels, train.num_classes, m, cfg.dirichlet_u, cfg.with_replacement, seed);
      break;
    case PartitionScheme::Pathological:
      plan = pathological_partition(train.labels, train.num_classes, m, cfg.classes_per_client,
                                    cfg.with_replacement, seed);
      break;
    case PartitionScheme::Iid: {
      std::vector<std::size_t> order(train.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng(seed);
      rng.shuffle(order);
      plan.assignments.resize(m);
      for (std::size_t i = 0; i < order.size(); ++i) plan.assignments[i % m].push_back(order[i]);
      break;
    }
  }

  const Model model = detail::make_model(cfg, train.input_dim, train.num_classes);
  fed.client_models.assign(m, model);
  for (const auto& idx : plan.assignments) {
    if (idx.empty()) throw std::runtime_error("build_federation: a client received no samples");
    fed.client_data.push_back(train.gather(idx));
  }
  if (test.size() > 0) fed.test = test.as_batch();
  fed.plan = std::move(plan);
  fed.train = std::move(train);
  return fed;
}

/// f(w) = 1/m sum_i f_i(w) over each client's full local data.
inline double global_loss(const Federation& fed, const ParamVector& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < fed.num_clients(); ++i) acc += loss(fed.client_models[i], w, fed.client_data[i]);
  return acc / static_cast<double>(fed.num_clients());
}

inline ParamVector global_grad(const Federation& fed, const ParamVector& w) {
  ParamVector acc = ParamVector::zeros_like(w);
  for (std::size_t i = 0; i < fed.num_clients(); ++i) acc += grad(fed.client_models[i], w, fed.client_data[i]);
  acc *= 1.0 / static_cast<double>(fed.num_clients());
  return acc;
}

inline double test_accuracy(const Federation& fed, const ParamVector& w) {
  if (!fed.test || !fed.model().is_classifier()) return 0.0;
  return accuracy(fed.model(), w, *fed.test);
}

inline constexpr std::size_t kDiagnosticSubsetSize = 1024;

/// Fixed random subset of the training set (all of it when smaller), used
/// for Hessian diagnostics and landscape slices.
inline Batch diagnostic_subset(const Federation& fed, std::uint64_t master_seed,
                               std::size_t size = kDiagnosticSubsetSize) {
  if (!fed.train) throw std::invalid_argument("diagnostic_subset: federation has no training set");
  std::vector<std::size_t> order(fed.train->size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (order.size() > size) {
    Rng rng(derive_seed({master_seed, 0xd1a6ULL}));
    rng.shuffle(order);
    order.resize(size);
    std::sort(order.begin(), order.end());
  }
  return fed.train->gather(order);
}

inline ParamVector initial_model(const ExperimentConfig& cfg, const Federation& fed) {
  Rng rng(detail::init_seed(cfg.master_seed));
  return initial_params(fed.model(), rng);
}

inline World initial_world(const ExperimentConfig& cfg, const Federation& fed) {
  World world;
  world.server = ServerState::initial(initial_model(cfg, fed));
  const std::size_t d = world.server.w.size();
  for (std::size_t i = 0; i < fed.num_clients(); ++i) {
    world.clients.push_back(ClientState::initial(i, d, cfg.hyper.radius));
  }
  return world;
}

/// Executes round `world.next_round` in place. Metrics are computed when
/// `evaluate` is set. Client failures propagate as DivergenceError.
inline std::optional<RoundMetrics> run_round(World& world, const Federation& fed, const ExperimentConfig& cfg,
                                             bool evaluate, const EngineOptions& opts = {}) {
  const HyperParams& hp = cfg.hyper;
  const std::size_t t = world.next_round;
  const std::size_t m = fed.num_clients();
  const auto active = sample_active_clients(m, hp.active_clients, t, cfg.master_seed);
  const double eta = hp.eta_at(t);

  std::vector<std::optional<LocalResult>> results(active.size());
  std::vector<std::exception_ptr> errors(active.size());
  auto work = [&](std::size_t j) {
    const std::size_t id = active[j];
    try {
      LocalContext ctx{fed.client_models[id], fed.client_data[id], eta, t,
                       Rng(client_stream_seed(cfg.master_seed, t, id)), opts.local_hooks};
      results[j] = local_round(cfg.algorithm, world.clients[id], world.server, hp, ctx);
    } catch (...) {
      errors[j] = std::current_exception();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(opts.workers, active.size()));
  if (workers == 1) {
    for (std::size_t j = 0; j < active.size(); ++j) work(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t k = 0; k < workers; ++k) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < active.size(); j = next++) work(j);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  RoundOutcome outcome;
  outcome.round = t;
  outcome.active = active;
  outcome.w_broadcast = world.server.w;
  outcome.eta = eta;
  std::vector<ParamVector> client_ws;
  client_ws.reserve(active.size());
  for (std::size_t j = 0; j < active.size(); ++j) {
    auto& r = *results[j];
    world.clients[active[j]] = std::move(r.state);
    world.upload_vectors_cum += static_cast<std::uint64_t>(r.ret.upload_vectors);
    world.download_vectors_cum += static_cast<std::uint64_t>(r.ret.download_vectors);
    client_ws.push_back(r.ret.w);
    outcome.returns.push_back(std::move(r.ret));
  }
  outcome.w_bar = mean_of(client_ws);
  outcome.consistency = consistency(client_ws, outcome.w_broadcast);

  world.server = server_round(cfg.algorithm, std::move(world.server), outcome.returns, hp, m, eta, t);
  world.next_round = t + 1;

  std::optional<RoundMetrics> metrics;
  if (evaluate) {
    RoundMetrics rm;
    rm.round = t + 1;
    rm.eta = eta;
    rm.train_loss = global_loss(fed, outcome.w_bar);
    rm.grad_norm_sq = global_grad(fed, outcome.w_bar).squared_norm();
    rm.test_acc = test_accuracy(fed, world.server.w);
    rm.consistency = outcome.consistency;
    rm.upload_vectors_cum = world.upload_vectors_cum;
    rm.download_vectors_cum = world.download_vectors_cum;
    metrics = std::move(rm);
  }
  if (opts.on_round) opts.on_round(outcome, world);
  return metrics;
}

struct ExperimentSummary {
  std::string status = "ok";  // ok | diverged
  std::string message;
  std::size_t rounds_completed = 0;
  double final_test_acc = 0.0;       // at w^T
  double final_test_acc_wbar = 0.0;  // at the last client average
  double best_test_acc = 0.0;
  double final_train_loss = 0.0;
  double final_grad_norm_sq = std::numeric_limits<double>::quiet_NaN();
  double min_grad_norm_sq = std::numeric_limits<double>::quiet_NaN();
  double final_consistency = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t upload_vectors_total = 0;
  std::uint64_t download_vectors_total = 0;
};

struct ExperimentResult {
  std::vector<RoundMetrics> series;
  World world;
  ParamVector final_w_bar;
  ExperimentSummary summary;
};

inline nlohmann::json summary_to_json(const ExperimentSummary& s) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  return {{"status", s.status},
          {"message", s.message},
          {"rounds_completed", s.rounds_completed},
          {"final_test_acc", num(s.final_test_acc)},
          {"final_test_acc_wbar", num(s.final_test_acc_wbar)},
          {"best_test_acc", num(s.best_test_acc)},
          {"final_train_loss", num(s.final_train_loss)},
          {"final_grad_norm_sq", num(s.final_grad_norm_sq)},
          {"min_grad_norm_sq", num(s.min_grad_norm_sq)},
          {"final_consistency", num(s.final_consistency)},
          {"upload_vectors_total", s.upload_vectors_total},
          {"download_vectors_total", s.download_vectors_total}};
}

inline nlohmann::json client_states_to_json(const World& world) {
  nlohmann::json clients = nlohmann::json::array();
  for (const auto& c : world.clients) {
    clients.push_back({{"id", c.client_id},
                       {"last_seen_round", c.last_seen_round},
                       {"lambda", c.lambda.values()},
                       {"mu", c.perturb.mu.values()},
                       {"control", c.control.values()}});
  }
  return {{"rounds_completed", world.next_round}, {"clients", clients}};
}

inline std::string metrics_csv(const std::vector<RoundMetrics>& series) {
  std::string out = std::string(kMetricsCsvHeader) + "\n";
  for (const auto& m : series) out += metrics_csv_row(m) + "\n";
  return out;
}

/// Runs T rounds. Divergence ends the run early with a status=diverged row
/// rather than an exception. When `out_dir` is given, writes metrics.csv,
/// summary.json, model.fspv and client_states.json into it.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Federation& fed,
                                       const EngineOptions& opts = {},
                                       const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  ExperimentResult res;
  res.world = initial_world(cfg, fed);
  auto& sum = res.summary;
  const std::size_t T = cfg.hyper.rounds;
  res.final_w_bar = res.world.server.w;

  EngineOptions local = opts;
  auto user_hook = opts.on_round;
  local.on_round = [&](const RoundOutcome& o, const World& w) {
    res.final_w_bar = o.w_bar;
    sum.final_consistency = o.consistency;
    if (user_hook) user_hook(o, w);
  };

  for (std::size_t t = 0; t < T; ++t) {
    const bool eval = ((t + 1) % cfg.eval_every == 0) || (t + 1 == T);
    try {
      auto metrics = run_round(res.world, fed, cfg, eval, local);
      if (metrics) {
        res.series.push_back(*metrics);
        sum.best_test_acc = std::max(sum.best_test_acc, metrics->test_acc);
        if (!(sum.min_grad_norm_sq <= metrics->grad_norm_sq)) sum.min_grad_norm_sq = metrics->grad_norm_sq;
      }
    } catch (const DivergenceError& e) {
      RoundMetrics row;
      row.round = t + 1;
      row.eta = cfg.hyper.eta_at(t);
      row.train_loss = std::numeric_limits<double>::quiet_NaN();
      row.grad_norm_sq = std::numeric_limits<double>::quiet_NaN();
      row.test_acc = std::numeric_limits<double>::quiet_NaN();
      row.consistency = std::numeric_limits<double>::quiet_NaN();
      row.upload_vectors_cum = res.world.upload_vectors_cum;
      row.download_vectors_cum = res.world.download_vectors_cum;
      row.status = "diverged";
      res.series.push_back(row);
      sum.status = "diverged";
      sum.message = e.what();
      break;
    }
  }

  sum.rounds_completed = res.world.next_round;
  sum.upload_vectors_total = res.world.upload_vectors_cum;
  sum.download_vectors_total = res.world.download_vectors_cum;
  if (sum.status == "ok") {
    sum.final_test_acc = test_accuracy(fed, res.world.server.w);
    sum.final_test_acc_wbar = test_accuracy(fed, res.final_w_bar);
    if (!res.series.empty()) {
      sum.final_train_loss = res.series.back().train_loss;
      sum.final_grad_norm_sq = res.series.back().grad_norm_sq;
    } else {
      sum.final_train_loss = global_loss(fed, res.world.server.w);
    }
  }

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    detail::write_text(*out_dir / "metrics.csv", metrics_csv(res.series));
    detail::write_text(*out_dir / "summary.json", summary_to_json(sum).dump(2) + "\n");
    save_params(*out_dir / "model.fspv", res.world.server.w);
    detail::write_text(*out_dir / "client_states.json", client_states_to_json(res.world).dump() + "\n");
  }
  return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const EngineOptions& opts = {},
                                       const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  const Federation fed = build_federation(cfg);
  return run_experiment(cfg, fed, opts, out_dir);
}

}  // namespace fedsim

#endif  // FEDSIM_ENGINE_HPP_
