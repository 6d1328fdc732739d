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

// fedsim command-line driver.
//
//   fedsim run --config FILE [--set KEY=VALUE]... --out DIR [--force] [--workers N]
//   fedsim sweep --config FILE --grid KEY=V1,V2,... [--grid ...] --out DIR
//   fedsim partition-stats --config FILE [--out DIR]
//   fedsim diagnose --run DIR | --config FILE --model FILE [--out DIR]
//   fedsim trace-golden [--set KEY=VALUE]... [--r0]
//
// Exit codes: 0 ok, 1 configuration or I/O error, 2 divergence, 3 golden
// trace mismatch.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fedsim/config.hpp"
#include "fedsim/diagnostics.hpp"
#include "fedsim/engine.hpp"
#include "fedsim/golden.hpp"
#include "fedsim/io.hpp"

namespace fs = std::filesystem;
using namespace fedsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDiverged = 2;
constexpr int kExitGolden = 3;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  bool force = false;
  std::size_t workers = 0;
};

std::size_t default_workers() {
  if (const char* env = std::getenv("FEDSIM_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring invalid FEDSIM_WORKERS='" << env << "'\n";
  }
  return 1;
}

ExperimentConfig load_effective(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  apply_overrides(cfg, c.overrides);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

// Refuses to touch any of `files` inside `dir` unless forced.
void claim_outputs(const fs::path& dir, const std::vector<std::string>& files, bool force) {
  if (!force) {
    for (const auto& f : files) {
      if (fs::exists(dir / f)) {
        throw IoError("'" + (dir / f).string() + "' exists; pass --force to overwrite");
      }
    }
  }
  fs::create_directories(dir);
}

const std::vector<std::string> kRunOutputs = {"metrics.csv", "summary.json", "config.effective", "model.fspv",
                                              "client_states.json"};

int do_run(const Common& c) {
  const ExperimentConfig cfg = load_effective(c);
  const fs::path out(c.out);
  claim_outputs(out, kRunOutputs, c.force);
  detail::write_text(out / "config.effective", to_config_text(cfg));
  EngineOptions opts;
  opts.workers = c.workers;
  const auto res = run_experiment(cfg, opts, out);
  const auto& s = res.summary;
  std::cout << "status=" << s.status << " rounds=" << s.rounds_completed
            << " final_test_acc=" << format_double(s.final_test_acc)
            << " min_grad_norm_sq=" << format_double(s.min_grad_norm_sq) << "\n";
  if (s.status != "ok") {
    std::cerr << "diverged: " << s.message << "\n";
    return kExitDiverged;
  }
  return kExitOk;
}

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

std::vector<GridAxis> parse_grid(const std::vector<std::string>& specs) {
  std::vector<GridAxis> axes;
  for (const auto& spec : specs) {
    auto [key, list] = split_assignment(spec);
    get_config_value(ExperimentConfig{}, key);  // rejects unknown keys
    GridAxis axis{key, {}};
    std::string_view rest = list;
    while (true) {
      const auto comma = rest.find(',');
      auto item = detail::trim(rest.substr(0, comma));
      if (item.empty()) throw ConfigError("--grid " + spec + ": empty value");
      axis.values.push_back(std::move(item));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    axes.push_back(std::move(axis));
  }
  return axes;
}

int do_sweep(const Common& c, const std::vector<std::string>& grid_specs) {
  const ExperimentConfig base = load_effective(c);
  const auto axes = parse_grid(grid_specs);

  std::vector<std::vector<std::string>> cells{{}};
  for (const auto& axis : axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& cell : cells) {
      for (const auto& v : axis.values) {
        auto extended = cell;
        extended.push_back(v);
        next.push_back(std::move(extended));
      }
    }
    cells = std::move(next);
  }

  const fs::path out(c.out);
  claim_outputs(out, {"sweep_summary.csv"}, c.force);

  struct CellResult {
    std::string status = "error";
    std::string message;
    std::optional<ExperimentSummary> summary;
  };
  std::vector<CellResult> results(cells.size());

  auto cell_dir = [&](std::size_t i) {
    std::string name = std::to_string(i);
    return out / ("cell_" + std::string(4 - std::min<std::size_t>(4, name.size()), '0') + name);
  };

  auto run_cell = [&](std::size_t i) {
    auto& r = results[i];
    try {
      ExperimentConfig cfg = base;
      for (std::size_t k = 0; k < axes.size(); ++k) set_config_value(cfg, axes[k].key, cells[i][k]);
      cfg.validate();
      const fs::path dir = cell_dir(i);
      claim_outputs(dir, kRunOutputs, c.force);
      detail::write_text(dir / "config.effective", to_config_text(cfg));
      const auto res = run_experiment(cfg, EngineOptions{}, dir);
      r.summary = res.summary;
      r.status = res.summary.status;
      r.message = res.summary.message;
    } catch (const std::exception& e) {
      r.status = "error";
      r.message = e.what();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(c.workers, cells.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < workers; ++k) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(i);
    });
  }
  for (auto& t : pool) t.join();

  std::string csv = "cell";
  for (const auto& a : axes) csv += "," + a.key;
  csv += ",status,rounds_completed,final_test_acc,best_test_acc,final_train_loss,final_grad_norm_sq,"
         "min_grad_norm_sq,final_consistency,upload_vectors_total,download_vectors_total\n";
  int code = kExitOk;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& r = results[i];
    csv += std::to_string(i);
    for (const auto& v : cells[i]) csv += "," + v;
    csv += "," + r.status;
    if (r.summary) {
      const auto& s = *r.summary;
      csv += "," + std::to_string(s.rounds_completed) + "," + format_double(s.final_test_acc) + "," +
             format_double(s.best_test_acc) + "," + format_double(s.final_train_loss) + "," +
             format_double(s.final_grad_norm_sq) + "," + format_double(s.min_grad_norm_sq) + "," +
             format_double(s.final_consistency) + "," + std::to_string(s.upload_vectors_total) + "," +
             std::to_string(s.download_vectors_total);
    } else {
      csv += ",,,,,,,,,";
    }
    csv += "\n";
    if (r.status != "ok") {
      std::cerr << "cell " << i << ": " << r.status << ": " << r.message << "\n";
      code = kExitDiverged;
    }
  }
  detail::write_text(out / "sweep_summary.csv", csv);
  std::cout << cells.size() << " cells; summary in " << (out / "sweep_summary.csv").string() << "\n";
  return code;
}

int do_partition_stats(const Common& c) {
  const ExperimentConfig cfg = load_effective(c);
  if (cfg.task != TaskKind::Classification) throw ConfigError("partition-stats needs task = classification");
  const Federation fed = build_federation(cfg);
  const auto st = partition_stats(*fed.plan, fed.train->labels, fed.train->num_classes);
  nlohmann::json j = {{"num_clients", fed.plan->num_clients()},
                      {"with_replacement", fed.plan->with_replacement},
                      {"class_totals", st.class_totals},
                      {"class_total_std", st.class_total_std},
                      {"client_counts", st.client_counts}};
  if (!c.out.empty()) {
    const fs::path out(c.out);
    claim_outputs(out, {"partition_plan.json", "partition_stats.json"}, c.force);
    detail::write_text(out / "partition_plan.json", plan_to_json(*fed.plan).dump() + "\n");
    detail::write_text(out / "partition_stats.json", j.dump(2) + "\n");
  }
  std::cout << "class_totals:";
  for (auto t : st.class_totals) std::cout << " " << t;
  std::cout << "\nclass_total_std: " << format_double(st.class_total_std) << "\n";
  return kExitOk;
}

struct DiagnoseOptions {
  std::string run_dir;
  std::string model_file;
  std::size_t max_iters = 200;
  double tol = 1e-6;
  std::size_t probes = 100;
  std::size_t grid_n = 21;
  double half_width = 1.0;
  double confidence = 0.05;
  double margin = 1.0;
  std::uint64_t seed = 0;
};

int do_diagnose(Common c, const DiagnoseOptions& d) {
  fs::path model_path(d.model_file);
  if (!d.run_dir.empty()) {
    if (c.config.empty()) c.config = (fs::path(d.run_dir) / "config.effective").string();
    if (d.model_file.empty()) model_path = fs::path(d.run_dir) / "model.fspv";
    if (c.out.empty()) c.out = d.run_dir;
  }
  if (c.config.empty() || model_path.empty()) throw ConfigError("diagnose needs --run DIR or --config and --model");
  if (c.out.empty()) throw ConfigError("diagnose needs --out DIR");
  const ExperimentConfig cfg = load_effective(c);
  if (cfg.task != TaskKind::Classification) throw ConfigError("diagnose needs task = classification");
  if (!fs::exists(model_path)) throw ConfigError("model file '" + model_path.string() + "' does not exist");

  const Federation fed = build_federation(cfg);
  const ParamVector params = load_params(model_path);
  const Model& model = fed.model();
  if (params.size() != model.dim()) throw ConfigError("model file dimension does not match the config's model");

  const fs::path out(c.out);
  claim_outputs(out, {"flatness.json", "bound.json", "landscape.csv"}, c.force);

  const Batch subset = diagnostic_subset(fed, cfg.master_seed);
  const auto flat = flatness_report(model, params, subset, d.max_iters, d.tol, d.probes, d.seed);
  detail::write_text(out / "flatness.json", to_json(flat).dump(2) + "\n");

  double input_norm = 0.0;
  for (std::size_t i = 0; i < fed.train->size(); ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < fed.train->input_dim; ++k) {
      const double x = fed.train->features[i * fed.train->input_dim + k];
      sq += x * x;
    }
    input_norm = std::max(input_norm, std::sqrt(sq));
  }
  const auto bound = generalization_bound(weight_layers(model, params), input_norm, fed.train->size(),
                                          d.confidence, d.margin);
  detail::write_text(out / "bound.json", to_json(bound).dump(2) + "\n");

  Rng rng(derive_seed({d.seed, 0x1a4dULL}));
  const ParamVector dir1 = random_direction(params, rng);
  const ParamVector dir2 = random_direction(params, rng);
  const auto grid = landscape_slice(model, params, subset, dir1, dir2, d.half_width, d.grid_n);
  detail::write_text(out / "landscape.csv", landscape_csv(grid));

  std::cout << "top_eigenvalue=" << format_double(flat.top_eigenvalue)
            << " trace=" << format_double(flat.trace_estimate) << " +- " << format_double(flat.trace_stderr)
            << " V_L=" << format_double(bound.v_l) << "\n";
  return kExitOk;
}

int do_trace_golden(const Common& c, bool r0) {
  ExperimentConfig cfg = c.config.empty() ? golden_config() : load_config(c.config);
  apply_overrides(cfg, c.overrides);
  const GoldenReport rep = r0 ? golden_trace_r0(cfg) : golden_trace(cfg);
  if (const auto* bad = rep.first_failure()) {
    std::cerr << "golden mismatch at " << bad->name << ": expected " << format_double(bad->expected) << ", got "
              << format_double(bad->actual) << "\n";
    return kExitGolden;
  }
  std::cout << "golden trace ok (" << rep.checks.size() << " quantities)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated optimization simulator"};
  app.require_subcommand(1);
  Common common;
  common.workers = default_workers();

  auto add_common = [&](CLI::App* sub, bool need_config, bool need_out) {
    auto* cfg = sub->add_option("--config", common.config, "Config file (key = value)");
    if (need_config) cfg->required();
    sub->add_option("--set", common.overrides, "Override KEY=VALUE (repeatable)")->allow_extra_args(false);
    auto* out = sub->add_option("--out", common.out, "Output directory");
    if (need_out) out->required();
    sub->add_flag("--force", common.force, "Overwrite existing outputs");
    sub->add_option("--workers", common.workers, "Worker threads (default $FEDSIM_WORKERS or 1)")
        ->check(CLI::PositiveNumber);
  };

  auto* run = app.add_subcommand("run", "Run one experiment");
  add_common(run, true, true);

  std::vector<std::string> grid;
  auto* sweep = app.add_subcommand("sweep", "Run the Cartesian product of --grid overrides");
  add_common(sweep, true, true);
  sweep->add_option("--grid", grid, "KEY=V1,V2,... (repeatable)")->required()->allow_extra_args(false);

  auto* pstats = app.add_subcommand("partition-stats", "Per-class and per-client sample counts");
  add_common(pstats, true, false);

  DiagnoseOptions dopt;
  auto* diag = app.add_subcommand("diagnose", "Hessian flatness, bound terms and a landscape slice");
  add_common(diag, false, false);
  diag->add_option("--run", dopt.run_dir, "Run directory with config.effective and model.fspv");
  diag->add_option("--model", dopt.model_file, "Parameter file (.fspv)");
  diag->add_option("--max-iters", dopt.max_iters, "Power iterations")->check(CLI::PositiveNumber);
  diag->add_option("--tol", dopt.tol, "Relative Rayleigh-quotient tolerance")->check(CLI::PositiveNumber);
  diag->add_option("--probes", dopt.probes, "Hutchinson probes")->check(CLI::PositiveNumber);
  diag->add_option("--grid-n", dopt.grid_n, "Landscape grid size (odd, >= 3)");
  diag->add_option("--half-width", dopt.half_width, "Landscape half width");
  diag->add_option("--confidence", dopt.confidence, "Bound confidence p");
  diag->add_option("--margin", dopt.margin, "Bound margin epsilon");
  diag->add_option("--seed", dopt.seed, "Diagnostics seed");

  bool r0 = false;
  auto* golden = app.add_subcommand("trace-golden", "Check the hand-traced FedSMOO round");
  golden->add_option("--config", common.config, "Config file replacing the built-in golden config");
  golden->add_option("--set", common.overrides, "Override KEY=VALUE (repeatable)")->allow_extra_args(false);
  golden->add_flag("--r0", r0, "Compare FedSMOO(r=0) against FedDyn instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return do_run(common);
    if (*sweep) return do_sweep(common, grid);
    if (*pstats) return do_partition_stats(common);
    if (*diag) return do_diagnose(common, dopt);
    if (*golden) return do_trace_golden(common, r0);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
