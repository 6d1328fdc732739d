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

#ifndef FEDSIM_CONFIG_HPP_
#define FEDSIM_CONFIG_HPP_

// Flat key = value experiment configs.
//
//   # comment
//   algorithm = fedsmoo
//   beta = 10
//   hidden = 32,32
//
// Every key is typed; unknown keys, duplicate keys and malformed values are
// errors. to_config_text() writes every key, so its output reproduces the
// configuration exactly when parsed again.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "fedsim/engine.hpp"
#include "fedsim/io.hpp"

namespace fedsim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

struct ConfigKey {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
ConfigKey double_key(const std::string& name, T ExperimentConfig::*outer, double T::*field) {
  return {[=](ExperimentConfig& c, const std::string& v) { (c.*outer).*field = parse_double(name, v); },
          [=](const ExperimentConfig& c) { return format_double((c.*outer).*field); }};
}

inline ConfigKey double_key(const std::string& name, double ExperimentConfig::*field) {
  return {[=](ExperimentConfig& c, const std::string& v) { c.*field = parse_double(name, v); },
          [=](const ExperimentConfig& c) { return format_double(c.*field); }};
}

template <class U>
ConfigKey size_key(const std::string& name, U HyperParams::*field) {
  return {[=](ExperimentConfig& c, const std::string& v) { c.hyper.*field = static_cast<U>(parse_uint(name, v)); },
          [=](const ExperimentConfig& c) { return std::to_string(c.hyper.*field); }};
}

template <class U>
ConfigKey size_key(const std::string& name, U ExperimentConfig::*field) {
  return {[=](ExperimentConfig& c, const std::string& v) { c.*field = static_cast<U>(parse_uint(name, v)); },
          [=](const ExperimentConfig& c) { return std::to_string(c.*field); }};
}

template <class E>
ConfigKey enum_key(const std::string& name, E ExperimentConfig::*field,
                   std::vector<std::pair<std::string, E>> names) {
  return {[=](ExperimentConfig& c, const std::string& v) {
            for (const auto& [n, e] : names) {
              if (n == v) {
                c.*field = e;
                return;
              }
            }
            std::string allowed;
            for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : ", ") + n;
            throw ConfigError("key '" + name + "': unknown value '" + v + "' (expected one of " + allowed + ")");
          },
          [=](const ExperimentConfig& c) {
            for (const auto& [n, e] : names) {
              if (e == c.*field) return n;
            }
            return std::string("?");
          }};
}

// Ordered: this is also the order of the effective-config file.
inline const std::vector<std::pair<std::string, ConfigKey>>& config_schema() {
  static const std::vector<std::pair<std::string, ConfigKey>> schema = [] {
    using C = ExperimentConfig;
    using H = HyperParams;
    std::vector<std::pair<std::string, ConfigKey>> s;
    s.emplace_back("algorithm",
                   ConfigKey{[](C& c, const std::string& v) {
                               try {
                                 c.algorithm = parse_algorithm(v);
                               } catch (const std::invalid_argument& e) {
                                 throw ConfigError(std::string("key 'algorithm': ") + e.what());
                               }
                             },
                             [](const C& c) { return std::string(to_string(c.algorithm)); }});
    s.emplace_back("master_seed", size_key("master_seed", &C::master_seed));
    s.emplace_back("rounds", size_key("rounds", &H::rounds));
    s.emplace_back("local_steps", size_key("local_steps", &H::local_steps));
    s.emplace_back("batch_size", size_key("batch_size", &H::batch_size));
    s.emplace_back("num_clients", size_key("num_clients", &H::num_clients));
    s.emplace_back("active_clients", size_key("active_clients", &H::active_clients));
    s.emplace_back("eta", double_key("eta", &C::hyper, &H::eta));
    s.emplace_back("eta_decay", double_key("eta_decay", &C::hyper, &H::eta_decay));
    s.emplace_back("beta", double_key("beta", &C::hyper, &H::beta));
    s.emplace_back("radius", double_key("radius", &C::hyper, &H::radius));
    s.emplace_back("weight_decay", double_key("weight_decay", &C::hyper, &H::weight_decay));
    s.emplace_back("server_lr", double_key("server_lr", &C::hyper, &H::server_lr));
    s.emplace_back("alpha_cm", double_key("alpha_cm", &C::hyper, &H::alpha_cm));
    s.emplace_back("adam_beta1", double_key("adam_beta1", &C::hyper, &H::adam_beta1));
    s.emplace_back("adam_beta2", double_key("adam_beta2", &C::hyper, &H::adam_beta2));
    s.emplace_back("adam_eps", double_key("adam_eps", &C::hyper, &H::adam_eps));
    s.emplace_back("disable_proximal",
                   ConfigKey{[](C& c, const std::string& v) { c.hyper.disable_proximal = parse_bool("disable_proximal", v); },
                             [](const C& c) { return std::string(c.hyper.disable_proximal ? "true" : "false"); }});
    s.emplace_back("task", enum_key<TaskKind>("task", &C::task,
                                              {{"classification", TaskKind::Classification},
                                               {"quadratic", TaskKind::Quadratic}}));
    s.emplace_back("model", enum_key<ModelKind>("model", &C::model,
                                                {{"mlp", ModelKind::Mlp}, {"logistic", ModelKind::Logistic}}));
    s.emplace_back("hidden", ConfigKey{[](C& c, const std::string& v) {
                                         c.hidden.clear();
                                         std::string_view rest = v;
                                         while (!rest.empty()) {
                                           const auto comma = rest.find(',');
                                           const auto item = trim(rest.substr(0, comma));
                                           const auto width = parse_uint("hidden", item);
                                           if (width == 0) throw ConfigError("key 'hidden': widths must be >= 1");
                                           c.hidden.push_back(width);
                                           rest = comma == std::string_view::npos ? std::string_view{}
                                                                                  : rest.substr(comma + 1);
                                         }
                                       },
                                       [](const C& c) {
                                         std::string out;
                                         for (auto h : c.hidden) out += (out.empty() ? "" : ",") + std::to_string(h);
                                         return out;
                                       }});
    s.emplace_back("dataset_file", ConfigKey{[](C& c, const std::string& v) { c.dataset_file = v; },
                                             [](const C& c) { return c.dataset_file; }});
    s.emplace_back("num_classes", size_key("num_classes", &C::num_classes));
    s.emplace_back("input_dim", size_key("input_dim", &C::input_dim));
    s.emplace_back("train_size", size_key("train_size", &C::train_size));
    s.emplace_back("test_size", size_key("test_size", &C::test_size));
    s.emplace_back("class_separation", double_key("class_separation", &C::class_separation));
    s.emplace_back("noise", double_key("noise", &C::noise));
    s.emplace_back("quad_dim", size_key("quad_dim", &C::quad_dim));
    s.emplace_back("center_spread", double_key("center_spread", &C::center_spread));
    s.emplace_back("partition", enum_key<PartitionScheme>("partition", &C::partition,
                                                          {{"dirichlet", PartitionScheme::Dirichlet},
                                                           {"pathological", PartitionScheme::Pathological},
                                                           {"iid", PartitionScheme::Iid}}));
    s.emplace_back("dirichlet_u", double_key("dirichlet_u", &C::dirichlet_u));
    s.emplace_back("classes_per_client", size_key("classes_per_client", &C::classes_per_client));
    s.emplace_back("with_replacement",
                   ConfigKey{[](C& c, const std::string& v) { c.with_replacement = parse_bool("with_replacement", v); },
                             [](const C& c) { return std::string(c.with_replacement ? "true" : "false"); }});
    s.emplace_back("eval_every", size_key("eval_every", &C::eval_every));
    return s;
  }();
  return schema;
}

inline const ConfigKey& find_key(const std::string& key) {
  for (const auto& [name, k] : config_schema()) {
    if (name == key) return k;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [name, k] : detail::config_schema()) out.push_back(name);
  return out;
}

/// Applies one key = value assignment.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  detail::find_key(key).set(cfg, value);
}

inline std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) {
  return detail::find_key(key).get(cfg);
}

/// Splits "KEY=VALUE" (whitespace around either side is ignored).
inline std::pair<std::string, std::string> split_assignment(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected KEY=VALUE, got '" + std::string(text) + "'");
  auto key = detail::trim(text.substr(0, eq));
  if (key.empty()) throw ConfigError("empty key in '" + std::string(text) + "'");
  return {std::move(key), detail::trim(text.substr(eq + 1))};
}

/// Parses config text on top of the defaults. Does not validate.
inline ExperimentConfig parse_config_text(std::string_view text, const std::string& origin = "<config>") {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (detail::trim(line).empty()) continue;
    try {
      auto [key, value] = split_assignment(line);
      if (auto it = seen.find(key); it != seen.end()) {
        throw ConfigError("duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")");
      }
      seen.emplace(key, line_no);
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::vector<char> bytes;
  try {
    bytes = detail::read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config_text(std::string_view(bytes.data(), bytes.size()), path.string());
}

inline void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    auto [key, value] = split_assignment(o);
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("--set ") + o + ": " + e.what());
    }
  }
}

/// Every key, one per line, in schema order.
inline std::string to_config_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [name, k] : detail::config_schema()) out += name + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace fedsim

#endif  // FEDSIM_CONFIG_HPP_
