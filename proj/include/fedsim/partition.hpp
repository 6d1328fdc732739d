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

#ifndef FEDSIM_PARTITION_HPP_
#define FEDSIM_PARTITION_HPP_

// Synthetic federated datasets and non-iid client partitions.
//
// Two heterogeneity schemes are provided:
//  * Dirichlet(u): per-client (with replacement) or per-class (without
//    replacement) proportions drawn from a symmetric Dirichlet.
//  * Pathological(c): every client is restricted to c random classes.
//
// With replacement, each client draws exactly floor(D/m) samples, so the
// global per-class totals drift away from the original balance. Without
// replacement the plan is an exact partition of {0..D-1}.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct LabeledDataset {
  std::vector<double> features;  // D x input_dim, row-major
  std::vector<int> labels;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }

  void validate() const {
    if (input_dim == 0 || num_classes == 0) throw std::invalid_argument("dataset: zero dimension");
    if (features.size() != labels.size() * input_dim) {
      throw std::invalid_argument("dataset: feature block does not match D x input_dim");
    }
    if (labels.size() < num_classes) throw std::invalid_argument("dataset: fewer samples than classes");
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
        throw std::invalid_argument("dataset: label out of range");
      }
    }
  }

  /// Gathers the given rows (duplicates allowed) into a Batch.
  Batch gather(std::span<const std::size_t> indices) const {
    Batch b;
    b.input_dim = input_dim;
    b.features.reserve(indices.size() * input_dim);
    b.labels.reserve(indices.size());
    for (std::size_t idx : indices) {
      if (idx >= size()) throw std::out_of_range("dataset: index out of range");
      const auto first = features.begin() + static_cast<std::ptrdiff_t>(idx * input_dim);
      b.features.insert(b.features.end(), first, first + static_cast<std::ptrdiff_t>(input_dim));
      b.labels.push_back(labels[idx]);
    }
    return b;
  }

  Batch as_batch() const {
    std::vector<std::size_t> all(size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return gather(all);
  }

  /// Splits off the trailing `tail` rows as a second dataset.
  std::pair<LabeledDataset, LabeledDataset> split_tail(std::size_t tail) const {
    if (tail > size()) throw std::invalid_argument("dataset: split larger than dataset");
    const std::size_t head = size() - tail;
    LabeledDataset a{{features.begin(), features.begin() + static_cast<std::ptrdiff_t>(head * input_dim)},
                     {labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(head)},
                     input_dim,
                     num_classes};
    LabeledDataset b{{features.begin() + static_cast<std::ptrdiff_t>(head * input_dim), features.end()},
                     {labels.begin() + static_cast<std::ptrdiff_t>(head), labels.end()},
                     input_dim,
                     num_classes};
    return {std::move(a), std::move(b)};
  }
};

struct PartitionPlan {
  std::vector<std::vector<std::size_t>> assignments;
  bool with_replacement = false;

  std::size_t num_clients() const noexcept { return assignments.size(); }
};

namespace detail {

inline std::vector<std::vector<std::size_t>> indices_by_class(std::span<const int> labels,
                                                              std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw std::invalid_argument("partition: label out of range");
    }
    by_class[static_cast<std::size_t>(y)].push_back(i);
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (by_class[c].empty()) {
      throw std::invalid_argument("partition: class " + std::to_string(c) + " has no samples");
    }
  }
  return by_class;
}

// Splits `count` items by proportions using floor of cumulative boundaries.
inline std::vector<std::size_t> proportional_cuts(std::size_t count, std::span<const double> probs) {
  std::vector<std::size_t> cuts(probs.size() + 1, 0);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    cuts[i + 1] = std::min(count, static_cast<std::size_t>(std::floor(acc * static_cast<double>(count))));
  }
  cuts.back() = count;
  return cuts;
}

inline constexpr int kMaxPlanRetries = 100;

}  // namespace detail

/// Dirichlet label-skew partition.
inline PartitionPlan dirichlet_partition(std::span<const int> labels, std::size_t num_classes,
                                         std::size_t m, double u, bool with_replacement,
                                         std::uint64_t seed) {
  if (!(u > 0.0)) throw std::invalid_argument("dirichlet_partition: concentration must be positive");
  if (m == 0) throw std::invalid_argument("dirichlet_partition: need at least one client");
  const auto by_class = detail::indices_by_class(labels, num_classes);
  Rng rng(derive_seed({seed, 0xd1c7ULL}));

  PartitionPlan plan;
  plan.with_replacement = with_replacement;

  if (with_replacement) {
    const std::size_t quota = labels.size() / m;
    plan.assignments.resize(m);
    for (auto& client : plan.assignments) {
      const auto p = rng.dirichlet(num_classes, u);
      client.reserve(quota);
      for (std::size_t k = 0; k < quota; ++k) {
        const auto& pool = by_class[rng.categorical(p)];
        client.push_back(pool[rng.uniform_index(pool.size())]);
      }
    }
    return plan;
  }

  // Without replacement: each class is split across clients; a plan that
  // leaves a client empty is redrawn as a whole.
  for (int attempt = 0; attempt < detail::kMaxPlanRetries; ++attempt) {
    plan.assignments.assign(m, {});
    for (std::size_t c = 0; c < num_classes; ++c) {
      std::vector<std::size_t> pool = by_class[c];
      rng.shuffle(pool);
      const auto p = rng.dirichlet(m, u);
      const auto cuts = detail::proportional_cuts(pool.size(), p);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = cuts[i]; k < cuts[i + 1]; ++k) plan.assignments[i].push_back(pool[k]);
      }
    }
    const bool has_empty = std::any_of(plan.assignments.begin(), plan.assignments.end(),
                                       [](const auto& a) { return a.empty(); });
    if (!has_empty) return plan;
  }
  throw std::runtime_error("dirichlet_partition: could not avoid empty clients after " +
                           std::to_string(detail::kMaxPlanRetries) + " draws");
}

/// Pathological partition: each client sees only `c` random classes.
inline PartitionPlan pathological_partition(std::span<const int> labels, std::size_t num_classes,
                                            std::size_t m, std::size_t c, bool with_replacement,
                                            std::uint64_t seed) {
  if (c < 1 || c > num_classes) {
    throw std::invalid_argument("pathological_partition: active classes must be in [1, num_classes]");
  }
  if (m == 0) throw std::invalid_argument("pathological_partition: need at least one client");
  const auto by_class = detail::indices_by_class(labels, num_classes);
  Rng rng(derive_seed({seed, 0x9a7bULL}));

  auto draw_class_sets = [&] {
    std::vector<std::vector<std::size_t>> sets(m);
    std::vector<std::size_t> classes(num_classes);
    for (auto& s : sets) {
      std::iota(classes.begin(), classes.end(), std::size_t{0});
      rng.shuffle(classes);
      s.assign(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(c));
      std::sort(s.begin(), s.end());
    }
    return sets;
  };

  PartitionPlan plan;
  plan.with_replacement = with_replacement;

  if (with_replacement) {
    const auto sets = draw_class_sets();
    const std::size_t quota = labels.size() / m;
    plan.assignments.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      plan.assignments[i].reserve(quota);
      for (std::size_t k = 0; k < quota; ++k) {
        const auto& pool = by_class[sets[i][rng.uniform_index(c)]];
        plan.assignments[i].push_back(pool[rng.uniform_index(pool.size())]);
      }
    }
    return plan;
  }

  // Without replacement every class must have at least one holder; each
  // class is cut into equal shards dealt to its holders in client order.
  for (int attempt = 0; attempt < detail::kMaxPlanRetries; ++attempt) {
    const auto sets = draw_class_sets();
    std::vector<std::vector<std::size_t>> holders(num_classes);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t cls : sets[i]) holders[cls].push_back(i);
    }
    const bool orphan = std::any_of(holders.begin(), holders.end(), [](const auto& h) { return h.empty(); });
    if (orphan) continue;

    plan.assignments.assign(m, {});
    for (std::size_t cls = 0; cls < num_classes; ++cls) {
      std::vector<std::size_t> pool = by_class[cls];
      rng.shuffle(pool);
      const std::size_t k = holders[cls].size();
      for (std::size_t j = 0; j < pool.size(); ++j) plan.assignments[holders[cls][j % k]].push_back(pool[j]);
    }
    const bool has_empty = std::any_of(plan.assignments.begin(), plan.assignments.end(),
                                       [](const auto& a) { return a.empty(); });
    if (!has_empty) return plan;
  }
  throw std::runtime_error("pathological_partition: no valid class assignment after " +
                           std::to_string(detail::kMaxPlanRetries) + " draws");
}

/// Gaussian class clusters. Class means sit at separation * (random unit
/// vector); samples add isotropic N(0, noise^2) noise. Labels are balanced
/// (i mod num_classes) and then shuffled.
inline LabeledDataset synth_classification(std::size_t num_classes, std::size_t input_dim,
                                           std::size_t D, double class_separation, double noise,
                                           std::uint64_t seed) {
  if (num_classes == 0 || input_dim == 0 || D == 0) {
    throw std::invalid_argument("synth_classification: sizes must be positive");
  }
  if (noise < 0.0) throw std::invalid_argument("synth_classification: noise must be non-negative");
  Rng rng(derive_seed({seed, 0x5c1aULL}));

  std::vector<double> means(num_classes * input_dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    double sq = 0.0;
    do {
      sq = 0.0;
      for (std::size_t j = 0; j < input_dim; ++j) {
        const double v = rng.normal();
        means[c * input_dim + j] = v;
        sq += v * v;
      }
    } while (sq == 0.0);
    const double scale = class_separation / std::sqrt(sq);
    for (std::size_t j = 0; j < input_dim; ++j) means[c * input_dim + j] *= scale;
  }

  LabeledDataset ds;
  ds.input_dim = input_dim;
  ds.num_classes = num_classes;
  ds.labels.resize(D);
  for (std::size_t i = 0; i < D; ++i) ds.labels[i] = static_cast<int>(i % num_classes);
  rng.shuffle(ds.labels);
  ds.features.resize(D * input_dim);
  for (std::size_t i = 0; i < D; ++i) {
    const auto c = static_cast<std::size_t>(ds.labels[i]);
    for (std::size_t j = 0; j < input_dim; ++j) {
      ds.features[i * input_dim + j] = means[c * input_dim + j] + noise * rng.normal();
    }
  }
  return ds;
}

struct QuadraticFederation {
  std::vector<Model> clients;
  ParamVector optimum;  // mean of the centers
};

/// Builds a federation from explicit centers (unit curvature).
inline QuadraticFederation make_quadratic_federation(const std::vector<std::vector<double>>& centers) {
  if (centers.empty()) throw std::invalid_argument("make_quadratic_federation: no clients");
  const std::size_t d = centers.front().size();
  QuadraticFederation fed;
  ParamVector sum(d);
  for (const auto& c : centers) {
    if (c.size() != d) throw DimensionError("make_quadratic_federation: ragged centers");
    fed.clients.emplace_back(QuadraticFed::isotropic(c));
    sum += ParamVector(c);
  }
  sum *= 1.0 / static_cast<double>(centers.size());
  fed.optimum = std::move(sum);
  return fed;
}

/// Client i gets f_i(w) = 1/2 |w - c_i|^2 with c_i ~ N(0, spread^2 I).
inline QuadraticFederation synth_quadratic_federation(std::size_t m, std::size_t d,
                                                      double center_spread, std::uint64_t seed) {
  if (m == 0 || d == 0) throw std::invalid_argument("synth_quadratic_federation: sizes must be positive");
  Rng rng(derive_seed({seed, 0x9f3dULL}));
  std::vector<std::vector<double>> centers(m, std::vector<double>(d));
  for (auto& c : centers) {
    for (auto& v : c) v = center_spread * rng.normal();
  }
  return make_quadratic_federation(centers);
}

struct PartitionStats {
  std::vector<std::size_t> class_totals;                // per class, over all clients
  std::vector<std::vector<std::size_t>> client_counts;  // client x class
  double class_total_std = 0.0;                         // population std of class_totals
};

inline PartitionStats partition_stats(const PartitionPlan& plan, std::span<const int> labels,
                                      std::size_t num_classes) {
  PartitionStats st;
  st.class_totals.assign(num_classes, 0);
  st.client_counts.assign(plan.num_clients(), std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < plan.num_clients(); ++i) {
    for (std::size_t idx : plan.assignments[i]) {
      if (idx >= labels.size()) throw std::out_of_range("partition_stats: index out of range");
      const int y = labels[idx];
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
        throw std::out_of_range("partition_stats: label out of range");
      }
      ++st.client_counts[i][static_cast<std::size_t>(y)];
      ++st.class_totals[static_cast<std::size_t>(y)];
    }
  }
  if (num_classes > 0) {
    double mean = 0.0;
    for (auto t : st.class_totals) mean += static_cast<double>(t);
    mean /= static_cast<double>(num_classes);
    double var = 0.0;
    for (auto t : st.class_totals) var += (static_cast<double>(t) - mean) * (static_cast<double>(t) - mean);
    st.class_total_std = std::sqrt(var / static_cast<double>(num_classes));
  }
  return st;
}

}  // namespace fedsim

#endif  // FEDSIM_PARTITION_HPP_
