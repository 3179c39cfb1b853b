/*
 * Copyright 2026 The fedselect Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedselect/adversary.hpp"
#include "fedselect/client_utility.hpp"
#include "fedselect/cluster_protocol.hpp"
#include "fedselect/common.hpp"
#include "fedselect/fl_engine.hpp"
#include "fedselect/secure_aggregation.hpp"

namespace fedselect::sim {

using nlohmann::json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Mode { cluster_local, cluster_global, vrf, baseline_random, baseline_lossproxy, insecure_global };

inline constexpr Mode kAllModes[] = {Mode::cluster_local,   Mode::cluster_global,     Mode::vrf,
                                     Mode::baseline_random, Mode::baseline_lossproxy, Mode::insecure_global};

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::cluster_local: return "cluster_local";
    case Mode::cluster_global: return "cluster_global";
    case Mode::vrf: return "vrf";
    case Mode::baseline_random: return "baseline_random";
    case Mode::baseline_lossproxy: return "baseline_lossproxy";
    case Mode::insecure_global: return "insecure_global";
  }
  return "?";
}

inline Mode mode_from_string(const std::string& s) {
  for (Mode m : kAllModes)
    if (to_string(m) == s) return m;
  throw ConfigError("unknown mode '" + s + "'");
}

inline bool is_cluster_mode(Mode m) { return m == Mode::cluster_local || m == Mode::cluster_global; }
inline bool uses_deadline(Mode m) { return is_cluster_mode(m) || m == Mode::vrf || m == Mode::insecure_global; }
inline bool quantized_by_default(Mode m) { return uses_deadline(m); }

enum class DeadlinePolicy { calibrated_median, fixed };

/// How participant gradients are combined into the global step.
///   uniform  theta - lr * sum_k g_k
///   samples  theta - lr * sum_k (N n_k / S_total) g_k
enum class Weighting { uniform, samples };

struct AttackConfig {
  adversary::AttackKind kind = adversary::AttackKind::non_colluding;
  std::uint64_t round = 1;  // round t; the non-colluding attack finishes at t + 1
  ClientId victim = 0;
  std::vector<ClientId> companions;  // honest clients the aggregator pairs with the victim
  std::vector<ClientId> colluders;
  bool freeze_model = true;
  bool freeze_data = true;
  adversary::TamperStrategy tamper = adversary::TamperStrategy::inflate;
  std::size_t tamper_rank = 0;
};

struct ExperimentConfig {
  Mode mode = Mode::cluster_local;
  std::size_t num_clients = 100;
  std::vector<std::size_t> cluster_sizes{12, 8, 10, 11, 9, 5, 15, 10, 4, 16};
  std::size_t budget = 20;

  // Cluster privacy threshold: either C directly or derived from (phi, delta).
  std::size_t privacy_threshold = 2;
  std::optional<double> collusion_phi;
  std::optional<double> collusion_delta;

  // Second-level sortition.
  double honest_fraction = 0.9;
  double colluding_fraction = 0.1;
  double p_max = 0.001;
  std::uint64_t conservative_factor = 1;
  std::size_t chunk_size = 16;

  double omega = 0.4;
  DeadlinePolicy deadline_policy = DeadlinePolicy::calibrated_median;
  double deadline_seconds = 0.5;

  utility::ChannelModel channel{};
  std::optional<bool> quantize;  // defaults per mode
  int quantization_bits = 8;

  double learning_rate = 0.01;
  Weighting weighting = Weighting::samples;
  std::size_t batch_size = 64;
  std::size_t rounds = 300;
  std::uint64_t seed = 1;

  std::size_t num_classes = 2;
  std::size_t dim = 20;
  std::size_t samples = 5000;
  double dirichlet_alpha = 0.1;
  double test_fraction = 0.2;

  fl::Architecture architecture = fl::Architecture::logistic;
  std::size_t hidden = 16;
  double l2 = 0.0;

  bool descent_diagnostic = false;
  std::vector<double> accuracy_targets{0.9, 0.91, 0.915};
  std::vector<double> loss_targets;

  std::optional<AttackConfig> attack;

  bool quantized() const { return quantize.value_or(quantized_by_default(mode)); }

  std::size_t resolved_threshold() const {
    if (collusion_phi && collusion_delta) return cluster::min_cluster_threshold(*collusion_phi, *collusion_delta);
    return privacy_threshold;
  }

  /// Mode-specific completeness and range checks.
  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigError(what); };
    if (num_clients < 2) fail("num_clients must be >= 2");
    if (cluster_sizes.empty()) fail("cluster_sizes must be non-empty");
    if (std::accumulate(cluster_sizes.begin(), cluster_sizes.end(), std::size_t{0}) != num_clients)
      fail("cluster_sizes must sum to num_clients");
    for (auto s : cluster_sizes)
      if (s < 1) fail("every cluster needs at least one member");
    if (budget < 1) fail("budget must be >= 1");
    if (collusion_phi.has_value() != collusion_delta.has_value())
      fail("collusion needs both phi and delta");
    if (resolved_threshold() < 2) fail("privacy_threshold must be >= 2");
    if (!(omega >= 0.0 && omega <= 1.0)) fail("omega must be in [0, 1]");
    if (deadline_policy == DeadlinePolicy::fixed && !(deadline_seconds > 0.0)) fail("deadline seconds must be > 0");
    if (!(channel.bandwidth_hz > 0.0) || !(channel.power_watts > 0.0)) fail("channel constants must be positive");
    if (channel.snr_db_low > channel.snr_db_high) fail("snr range is inverted");
    if (quantization_bits < 2 || quantization_bits > 8) fail("quantization_bits must be in [2, 8]");
    if (quantized() && !sa::decoded_sum_is_exact(num_clients, quantization_bits))
      fail("population too large for exact ring decoding");
    if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (rounds < 1) fail("rounds must be >= 1");
    if (num_classes < 2 || dim < 2 || samples < num_classes) fail("degenerate data parameters");
    if (!(dirichlet_alpha > 0.0)) fail("dirichlet_alpha must be > 0");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test_fraction must be in (0, 1)");
    if (mode == Mode::vrf) {
      if (chunk_size < 1) fail("chunk_size must be >= 1");
      if (conservative_factor < 1) fail("conservative factor must be >= 1");
    }
    if (descent_diagnostic && architecture != fl::Architecture::logistic)
      fail("the descent diagnostic needs a known smoothness constant (logistic model)");
    if (attack) {
      const auto& a = *attack;
      if (a.round < 1 || a.round >= rounds) fail("attack round must be in [1, rounds)");
      auto known = [&](ClientId id) { return id < num_clients; };
      if (!known(a.victim)) fail("attack victim is not a client");
      for (auto id : a.companions)
        if (!known(id) || id == a.victim) fail("invalid attack companion");
      for (auto id : a.colluders)
        if (!known(id) || id == a.victim) fail("invalid attack colluder");
      using adversary::AttackKind;
      if (a.kind == AttackKind::broadcast_tamper) {
        if (mode != Mode::vrf) fail("broadcast tampering applies to vrf mode only");
      } else if (a.kind == AttackKind::non_colluding || a.kind == AttackKind::colluding) {
        if (mode == Mode::vrf) fail("the aggregator cannot choose the committee in vrf mode");
        if (!quantized()) fail("attacks run against the secure-aggregation ring (quantized modes)");
        if (a.kind == AttackKind::colluding && a.colluders.empty()) fail("colluding attack needs colluders");
        if (a.kind == AttackKind::non_colluding && a.companions.empty()) fail("non-colluding attack needs companions");
      } else {
        fail("sybil scenarios run through attack-demo, not run_experiment");
      }
    }
  }
};

namespace detail {

inline void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!ok.contains(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  using detail::read;
  using detail::reject_unknown;
  ExperimentConfig c;
  try {
    reject_unknown(j,
                   {"mode", "num_clients", "cluster_sizes", "budget", "privacy_threshold", "collusion", "vrf", "omega",
                    "deadline", "channel", "quantize", "quantization_bits", "learning_rate", "weighting", "batch_size", "rounds",
                    "seed", "data", "model", "descent_diagnostic", "accuracy_targets", "loss_targets", "attack"},
                   "config");
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
    read(j, "num_clients", c.num_clients);
    read(j, "cluster_sizes", c.cluster_sizes);
    read(j, "budget", c.budget);
    read(j, "privacy_threshold", c.privacy_threshold);
    if (j.contains("collusion")) {
      const auto& o = j.at("collusion");
      reject_unknown(o, {"phi", "delta"}, "collusion");
      c.collusion_phi = o.at("phi").get<double>();
      c.collusion_delta = o.at("delta").get<double>();
    }
    if (j.contains("vrf")) {
      const auto& o = j.at("vrf");
      reject_unknown(o, {"honest_fraction", "colluding_fraction", "p_max", "factor", "chunk_size"}, "vrf");
      read(o, "honest_fraction", c.honest_fraction);
      read(o, "colluding_fraction", c.colluding_fraction);
      read(o, "p_max", c.p_max);
      read(o, "factor", c.conservative_factor);
      read(o, "chunk_size", c.chunk_size);
    }
    read(j, "omega", c.omega);
    if (j.contains("deadline")) {
      const auto& o = j.at("deadline");
      reject_unknown(o, {"policy", "seconds"}, "deadline");
      const auto policy = o.value("policy", std::string("calibrated_median"));
      if (policy == "calibrated_median") c.deadline_policy = DeadlinePolicy::calibrated_median;
      else if (policy == "fixed") c.deadline_policy = DeadlinePolicy::fixed;
      else throw ConfigError("unknown deadline policy '" + policy + "'");
      read(o, "seconds", c.deadline_seconds);
    }
    if (j.contains("channel")) {
      const auto& o = j.at("channel");
      reject_unknown(o, {"bandwidth_hz", "power_watts", "snr_db_min", "snr_db_max"}, "channel");
      read(o, "bandwidth_hz", c.channel.bandwidth_hz);
      read(o, "power_watts", c.channel.power_watts);
      read(o, "snr_db_min", c.channel.snr_db_low);
      read(o, "snr_db_max", c.channel.snr_db_high);
    }
    if (j.contains("quantize")) c.quantize = j.at("quantize").get<bool>();
    read(j, "quantization_bits", c.quantization_bits);
    read(j, "learning_rate", c.learning_rate);
    if (j.contains("weighting")) {
      const auto w = j.at("weighting").get<std::string>();
      if (w == "uniform") c.weighting = Weighting::uniform;
      else if (w == "samples") c.weighting = Weighting::samples;
      else throw ConfigError("unknown weighting '" + w + "'");
    }
    read(j, "batch_size", c.batch_size);
    read(j, "rounds", c.rounds);
    read(j, "seed", c.seed);
    if (j.contains("data")) {
      const auto& o = j.at("data");
      reject_unknown(o, {"num_classes", "dim", "samples", "dirichlet_alpha", "test_fraction"}, "data");
      read(o, "num_classes", c.num_classes);
      read(o, "dim", c.dim);
      read(o, "samples", c.samples);
      read(o, "dirichlet_alpha", c.dirichlet_alpha);
      read(o, "test_fraction", c.test_fraction);
    }
    if (j.contains("model")) {
      const auto& o = j.at("model");
      reject_unknown(o, {"architecture", "hidden", "l2"}, "model");
      const auto arch = o.value("architecture", std::string("logistic"));
      if (arch == "logistic") c.architecture = fl::Architecture::logistic;
      else if (arch == "mlp") c.architecture = fl::Architecture::mlp;
      else throw ConfigError("unknown architecture '" + arch + "'");
      read(o, "hidden", c.hidden);
      read(o, "l2", c.l2);
    }
    read(j, "descent_diagnostic", c.descent_diagnostic);
    read(j, "accuracy_targets", c.accuracy_targets);
    read(j, "loss_targets", c.loss_targets);
    if (j.contains("attack")) {
      const auto& o = j.at("attack");
      reject_unknown(o,
                     {"kind", "round", "victim", "companions", "colluders", "freeze_model", "freeze_data",
                      "tamper_strategy", "tamper_rank"},
                     "attack");
      AttackConfig a;
      a.kind = adversary::attack_kind_from_string(o.at("kind").get<std::string>());
      read(o, "round", a.round);
      read(o, "victim", a.victim);
      read(o, "companions", a.companions);
      read(o, "colluders", a.colluders);
      read(o, "freeze_model", a.freeze_model);
      read(o, "freeze_data", a.freeze_data);
      if (o.contains("tamper_strategy")) {
        const auto s = o.at("tamper_strategy").get<std::string>();
        bool found = false;
        for (auto t : adversary::kAllTamperStrategies)
          if (adversary::to_string(t) == s) a.tamper = t, found = true;
        if (!found) throw ConfigError("unknown tamper strategy '" + s + "'");
      }
      read(o, "tamper_rank", a.tamper_rank);
      c.attack = a;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return config_from_json(j);
}

}  // namespace fedselect::sim
