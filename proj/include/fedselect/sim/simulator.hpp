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

// The round loop. Each round: local gradients at the current model, channel
// draws, utilities, mode-specific selection (with cluster-head verification or
// two-level sortition), secure aggregation, and one global FedSGD step.
//
// Every random draw comes from derive_seed(config.seed, tag, round, client),
// so two runs that differ only in mode see the same data, batches and
// channels.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedselect/adversary.hpp"
#include "fedselect/client_utility.hpp"
#include "fedselect/cluster_protocol.hpp"
#include "fedselect/common.hpp"
#include "fedselect/crypto.hpp"
#include "fedselect/fl_engine.hpp"
#include "fedselect/secure_aggregation.hpp"
#include "fedselect/sim/baselines.hpp"
#include "fedselect/sim/config.hpp"
#include "fedselect/sim/diagnostics.hpp"
#include "fedselect/vrf_protocol.hpp"

namespace fedselect::sim {

namespace stream {
inline constexpr std::uint64_t kData = 0xD47A;
inline constexpr std::uint64_t kSplit = 0x5B17;
inline constexpr std::uint64_t kPartition = 0xD1C7;
inline constexpr std::uint64_t kInit = 0x1417;
inline constexpr std::uint64_t kSnr = 0x5742;
inline constexpr std::uint64_t kBatch = 0xBA7C;
inline constexpr std::uint64_t kMask = 0x3A5C;
inline constexpr std::uint64_t kRandom = 0x7A4D;
inline constexpr std::uint64_t kKeys = 0x6E75;
inline constexpr std::uint64_t kAggregatorKey = 0xA66E;
}  // namespace stream

/// Per-participant costs for one round.
struct ParticipantEntry {
  ClientId client = 0;
  double snr_db = 0.0;
  double transmission_time_s = 0.0;
  double energy_j = 0.0;
  std::uint64_t payload_bits = 0;
};

struct AttackRecord {
  adversary::AttackKind kind = adversary::AttackKind::non_colluding;
  std::uint64_t round_t = 0;
  std::uint64_t round_t1 = 0;
  std::vector<ClientId> committee_t;
  std::vector<ClientId> committee_t1;
  adversary::AttackOutcome outcome;
};

struct TamperRecord {
  adversary::TamperStrategy strategy = adversary::TamperStrategy::inflate;
  bool detected = false;
  bool by_broadcast_check = false;
  std::vector<ClientId> complaining_clients;
};

struct RoundLog {
  std::uint64_t round = 0;
  Mode mode = Mode::cluster_local;
  std::vector<ClientId> selected;      // the aggregator's choice (or the sortition winners)
  std::vector<ClientId> participants;  // after cluster-head withholding
  std::vector<ParticipantEntry> entries;
  std::size_t survivors = 0;           // clients that met the deadline
  std::size_t withheld_clusters = 0;
  std::size_t vulnerable_clusters = 0;
  std::size_t deadline_violations = 0;
  std::size_t committee_target = 0;    // vrf: expected committee size this round
  bool aggregated = false;             // false when the round produced no update
  double global_loss = 0.0;            // training objective after the update
  double test_accuracy = 0.0;
  std::uint64_t bits = 0;
  double energy_j = 0.0;
  std::optional<AttackRecord> attack;
  std::optional<TamperRecord> tamper;
  std::optional<double> descent_slack;
  double wall_time_s = 0.0;
};

struct RunResult {
  ExperimentConfig config;
  std::vector<RoundLog> rounds;
  std::vector<std::string> violations;
  std::size_t parameter_count = 0;
  std::uint64_t payload_bits_per_client = 0;
  double deadline_s = 0.0;
  std::size_t privacy_threshold = 0;  // cluster modes
  std::optional<vrf::CommitteeSolution> committee;  // vrf mode
  double initial_loss = 0.0;
  double initial_accuracy = 0.0;
  double smoothness = 0.0;  // when the descent diagnostic is on
  double wall_time_s = 0.0;

  bool ok() const { return violations.empty(); }
};

/// Everything a run needs that does not change across rounds.
struct Environment {
  fl::Dataset train;
  fl::Dataset test;
  std::vector<fl::Shard> shards;
  std::vector<cluster::Cluster> clusters;
  fl::Model initial_model;
};

inline Environment build_environment(const ExperimentConfig& cfg) {
  Environment env;
  auto all = fl::generate_synthetic_dataset(cfg.num_classes, cfg.dim, cfg.samples, derive_seed(cfg.seed, stream::kData));
  auto split = fl::split_train_test(all, cfg.test_fraction, derive_seed(cfg.seed, stream::kSplit));
  env.train = std::move(split.train);
  env.test = std::move(split.test);
  env.shards =
      fl::dirichlet_partition(env.train, cfg.num_clients, cfg.dirichlet_alpha, derive_seed(cfg.seed, stream::kPartition));
  env.clusters = cluster::clusters_from_sizes(cfg.cluster_sizes);
  env.initial_model = cfg.architecture == fl::Architecture::logistic
                          ? fl::Model::logistic(cfg.dim, cfg.num_classes, cfg.l2)
                          : fl::Model::mlp(cfg.dim, cfg.num_classes, cfg.hidden, derive_seed(cfg.seed, stream::kInit),
                                           cfg.l2);
  return env;
}

inline std::uint64_t payload_bits_for(const ExperimentConfig& cfg, std::size_t parameter_count) {
  if (cfg.quantized())
    return static_cast<std::uint64_t>(parameter_count) * static_cast<std::uint64_t>(cfg.quantization_bits) +
           fl::kScaleOverheadBits;
  return fl::float32_payload_bits(parameter_count);
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw DomainError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Median transmission time of all clients in a calibration draw (round 0).
inline double calibrate_deadline(const ExperimentConfig& cfg, std::uint64_t payload_bits) {
  if (cfg.deadline_policy == DeadlinePolicy::fixed) return cfg.deadline_seconds;
  std::vector<double> times;
  for (ClientId i = 0; i < cfg.num_clients; ++i) {
    const double snr = cfg.channel.sample_snr_db(derive_seed(cfg.seed, stream::kSnr, 0, i));
    times.push_back(utility::transmission_time(payload_bits, utility::channel_rate(cfg.channel.bandwidth_hz, snr)));
  }
  return median(std::move(times));
}

inline crypto::KeyPair client_keys(std::uint64_t seed, ClientId id) {
  return crypto::keygen(crypto::seed_from_u64(derive_seed(seed, stream::kKeys, id)), id);
}

namespace detail {

struct ClientRound {
  fl::GradientReport report;
  std::vector<std::size_t> batch;
  double snr_db = 0.0;
  double transmission_time_s = 0.0;
};

inline std::vector<ClientId> sorted_unique(std::vector<ClientId> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace detail

/// Runs the configured experiment. Infeasible security parameters and invalid
/// configs throw before round 1; invariant failures during the run are
/// collected in RunResult::violations.
inline RunResult run_experiment(const ExperimentConfig& config) {
  using Clock = std::chrono::steady_clock;
  const auto run_start = Clock::now();
  config.validate();

  RunResult res;
  res.config = config;
  const auto& cfg = res.config;
  const Mode mode = cfg.mode;
  const bool quantized = cfg.quantized();

  if (is_cluster_mode(mode) || mode == Mode::insecure_global) res.privacy_threshold = cfg.resolved_threshold();
  if (mode == Mode::vrf)
    res.committee = vrf::required_committee_size(cfg.num_clients, cfg.honest_fraction, cfg.colluding_fraction, cfg.p_max);
  const std::size_t threshold = std::max<std::size_t>(cfg.resolved_threshold(), 2);

  Environment env = build_environment(cfg);
  fl::Model model = env.initial_model;
  const std::size_t n_params = model.size();
  res.parameter_count = n_params;
  res.payload_bits_per_client = payload_bits_for(cfg, n_params);
  res.deadline_s = calibrate_deadline(cfg, res.payload_bits_per_client);
  if (cfg.descent_diagnostic) res.smoothness = logistic_smoothness_bound(env.train, cfg.l2);
  {
    const auto ev = fl::evaluate(model, env.test);
    res.initial_loss = fl::loss_and_gradient(model, env.train).loss;
    res.initial_accuracy = ev.accuracy;
  }

  std::vector<ClientId> all_ids(cfg.num_clients);
  for (ClientId i = 0; i < cfg.num_clients; ++i) all_ids[i] = i;
  const std::size_t s_total = env.train.size();

  std::map<ClientId, crypto::KeyPair> keys;
  vrf::KeyRegistry registry;
  crypto::KeyPair aggregator_key;
  if (mode == Mode::vrf) {
    for (ClientId i : all_ids) {
      keys.emplace(i, client_keys(cfg.seed, i));
      registry.emplace(i, keys.at(i).public_key);
    }
    aggregator_key = crypto::keygen(crypto::seed_from_u64(derive_seed(cfg.seed, stream::kAggregatorKey)));
  }

  // State carried from attack round t to t + 1.
  const auto& attack = cfg.attack;
  sa::RingVector attack_sum_t;
  double attack_scale = 0.0;
  std::vector<ClientId> attack_committee_t;
  std::vector<double> attack_truth;

  auto violation = [&](std::uint64_t t, const std::string& what) {
    res.violations.push_back("round " + std::to_string(t) + ": " + what);
  };

  for (std::uint64_t t = 1; t <= cfg.rounds; ++t) {
    const auto round_start = Clock::now();
    RoundLog log;
    log.round = t;
    log.mode = mode;

    const bool attack_t = attack && t == attack->round;
    const bool attack_t1 = attack && t == attack->round + 1 && attack->kind == adversary::AttackKind::non_colluding;
    const bool aggregator_picks = (attack_t || attack_t1) && attack->kind != adversary::AttackKind::broadcast_tamper;
    const std::uint64_t data_round = (attack_t1 && attack->freeze_data) ? attack->round : t;

    // Local training and channel state for every client.
    std::vector<detail::ClientRound> local(cfg.num_clients);
    std::vector<utility::UtilityRecord> records;
    records.reserve(cfg.num_clients);
    for (ClientId i : all_ids) {
      auto& c = local[i];
      const auto batch_seed = derive_seed(cfg.seed, stream::kBatch, data_round, i);
      c.batch = fl::sample_batch(env.shards[i], cfg.batch_size, batch_seed);
      c.report = fl::local_gradient(model, env.train, env.shards[i], cfg.batch_size, batch_seed);
      c.snr_db = cfg.channel.sample_snr_db(derive_seed(cfg.seed, stream::kSnr, t, i));
      c.transmission_time_s = utility::transmission_time(
          res.payload_bits_per_client, utility::channel_rate(cfg.channel.bandwidth_hz, c.snr_db));
      utility::UtilityRecord r;
      r.client = i;
      r.loss = c.report.loss;
      r.grad_norm = c.report.grad_norm;
      r.sample_fraction = static_cast<double>(env.shards[i].sample_indices.size()) / static_cast<double>(s_total);
      r.utility = utility::compute_utility(r.loss, r.grad_norm, env.shards[i].sample_indices.size(), s_total, cfg.omega);
      r.transmission_time_s = c.transmission_time_s;
      r.payload_bits = res.payload_bits_per_client;
      records.push_back(r);
    }
    const auto survivors = utility::deadline_filter(records, res.deadline_s);
    log.survivors = survivors.size();

    // Selection.
    bool aborted = false;
    if (aggregator_picks) {
      std::vector<ClientId> chosen(attack->companions.begin(), attack->companions.end());
      chosen.insert(chosen.end(), attack->colluders.begin(), attack->colluders.end());
      if (attack_t) chosen.push_back(attack->victim);
      log.selected = detail::sorted_unique(std::move(chosen));
    } else {
      switch (mode) {
        case Mode::cluster_local:
        case Mode::cluster_global:
        case Mode::insecure_global: {
          const auto scope = mode == Mode::cluster_local ? cluster::Scope::local : cluster::Scope::global;
          log.selected = cluster::select_clients(scope, survivors, env.clusters, cfg.budget, {}, t).selected;
          break;
        }
        case Mode::baseline_random:
          log.selected = baseline_random_select(all_ids, cfg.budget, derive_seed(cfg.seed, stream::kRandom, t));
          break;
        case Mode::baseline_lossproxy: {
          std::vector<LossProxyReport> reports;
          for (ClientId i : all_ids)
            reports.push_back({i, env.shards[i].sample_indices.size(),
                               fl::per_sample_losses(model, env.train, local[i].batch)});
          log.selected = baseline_lossproxy_select(reports, cfg.budget);
          break;
        }
        case Mode::vrf: {
          if (survivors.empty()) break;
          std::vector<vrf::SignedUtility> subs;
          for (const auto& r : survivors) subs.push_back(vrf::sign_utility(keys.at(r.client), r.client, t, r.utility));
          auto broadcast = vrf::first_level_rank(subs, t, cfg.chunk_size);
          if (attack_t && attack->kind == adversary::AttackKind::broadcast_tamper) {
            const std::size_t rank = std::min(attack->tamper_rank, broadcast.size() - 1);
            TamperRecord tr;
            tr.strategy = attack->tamper;
            if (attack->tamper == adversary::TamperStrategy::reorder && broadcast.size() < 2) {
              violation(t, "reorder tampering needs two submissions");
            } else {
              auto forged = adversary::tamper_broadcast(broadcast, attack->tamper, rank, aggregator_key);
              const auto d = adversary::detect_tampering(forged, subs, registry);
              tr.detected = d.detected;
              tr.by_broadcast_check = d.by_broadcast_check;
              tr.complaining_clients = d.complaining_clients;
              if (!d.detected) violation(t, "broadcast tampering went undetected");
              aborted = d.detected;  // clients refuse to continue the round
            }
            log.tamper = tr;
            if (aborted) break;
          }
          if (!vrf::verify_ranked_broadcast(broadcast, registry)) violation(t, "honest broadcast failed verification");
          const auto eligible = vrf::eligible_cut(broadcast);
          const auto alpha = vrf::build_alpha(broadcast);
          const std::size_t n_eligible = eligible.size();
          const std::size_t target = std::min(std::max<std::size_t>(res.committee->k, cfg.budget), n_eligible);
          log.committee_target = target;
          const auto z = vrf::selection_threshold(target, n_eligible, cfg.conservative_factor);
          std::vector<vrf::VrfTicket> tickets;
          for (ClientId id : eligible) tickets.push_back(vrf::draw_ticket(keys.at(id), id, alpha));
          const auto w = vrf::winner_set(tickets, alpha, z, registry);
          if (!w.rejected.empty()) violation(t, "honest ticket rejected");
          for (const auto& tk : tickets)
            if (std::binary_search(w.winners.begin(), w.winners.end(), tk.client) &&
                !vrf::audit_winner(tk, registry.at(tk.client), alpha, z))
              violation(t, "winner " + std::to_string(tk.client) + " failed audit");
          log.selected = w.winners;
          break;
        }
      }
    }

    // Cluster-head verification.
    if (is_cluster_mode(mode)) {
      const auto d = cluster::verify_and_withhold(log.selected, env.clusters, threshold);
      log.participants = d.participants;
      log.withheld_clusters = d.withheld.size();
      if (!cluster::satisfies_threshold(log.participants, env.clusters, threshold))
        violation(t, "participant counts break the cluster threshold");
    } else {
      log.participants = detail::sorted_unique(log.selected);
    }
    if (mode != Mode::vrf)
      log.vulnerable_clusters = cluster::count_vulnerable_clusters(log.participants, env.clusters, threshold);

    for (ClientId id : log.participants) {
      const auto& c = local[id];
      ParticipantEntry e{id, c.snr_db, c.transmission_time_s, utility::energy(cfg.channel.power_watts, c.transmission_time_s),
                         res.payload_bits_per_client};
      if (e.transmission_time_s > res.deadline_s) ++log.deadline_violations;
      log.bits += e.payload_bits;
      log.energy_j += e.energy_j;
      log.entries.push_back(e);
    }

    // Each participant's contribution: its gradient, scaled under sample
    // weighting by N n_k / S_total. The weight depends only on the client's
    // own public sample count, never on who else is in the committee.
    std::map<ClientId, std::vector<double>> contribution;
    for (ClientId id : log.participants) {
      auto g = local[id].report.gradient;
      if (cfg.weighting == Weighting::samples) {
        const double w = static_cast<double>(cfg.num_clients) *
                         static_cast<double>(env.shards[id].sample_indices.size()) / static_cast<double>(s_total);
        for (double& v : g) v *= w;
      }
      contribution.emplace(id, std::move(g));
    }

    // Aggregation. Secure aggregation needs at least two participants.
    std::optional<std::vector<double>> total;
    sa::RingVector ring_sum;
    double scale = 1.0;
    std::optional<sa::SecureAggregationRound> sa_round;
    if (!aborted && quantized && log.participants.size() >= 2) {
      if (attack_t1) {
        scale = attack_scale;  // the attacking aggregator pins the step
      } else {
        scale = 0.0;
        for (ClientId id : log.participants)
          scale = std::max(scale, fl::quantization_scale(contribution.at(id), cfg.quantization_bits));
      }
      sa_round.emplace(t, log.participants, n_params, derive_seed(cfg.seed, stream::kMask, t));
      for (ClientId id : log.participants)
        sa_round->submit(sa::encode(id, fl::quantize_with_scale(contribution.at(id), scale, cfg.quantization_bits)));
      ring_sum = sa_round->aggregate();
      total = sa::decode_real(ring_sum, scale);
    } else if (!aborted && !quantized && !log.participants.empty()) {
      std::vector<double> sum(n_params, 0.0);
      for (ClientId id : log.participants) {
        const auto& g = contribution.at(id);
        for (std::size_t k = 0; k < n_params; ++k) sum[k] += static_cast<double>(static_cast<float>(g[k]));
      }
      total = std::move(sum);
    }
    log.aggregated = total.has_value();

    // Attacks against the aggregate.
    if (attack && (attack->kind == adversary::AttackKind::non_colluding ||
                   attack->kind == adversary::AttackKind::colluding)) {
      // What the victim sends (or would send) at round t.
      const auto& victim_update = contribution.contains(attack->victim) ? contribution.at(attack->victim)
                                                                        : local[attack->victim].report.gradient;
      auto victim_truth = [&](double s) {
        return fl::dequantize(fl::quantize_with_scale(victim_update, s, cfg.quantization_bits));
      };
      if (attack_t) {
        attack_scale = sa_round ? scale : fl::quantization_scale(victim_update, cfg.quantization_bits);
        attack_sum_t = sa_round ? ring_sum : sa::RingVector(n_params, 0);
        attack_committee_t = log.participants;
        attack_truth = victim_truth(attack_scale);
        if (attack->kind == adversary::AttackKind::colluding) {
          std::set<ClientId> present;
          for (ClientId id : attack->colluders)
            if (std::binary_search(log.participants.begin(), log.participants.end(), id)) present.insert(id);
          const auto leaked = sa_round ? sa_round->leak_to_adversary(present) : std::vector<sa::EncodedUpdate>{};
          AttackRecord ar;
          ar.kind = attack->kind;
          ar.round_t = ar.round_t1 = t;
          ar.committee_t = ar.committee_t1 = log.participants;
          ar.outcome = adversary::assess(
              sa::decode_real(adversary::colluding_bsa(attack_sum_t, leaked), attack_scale), attack_truth);
          log.attack = ar;
        }
      } else if (attack_t1) {
        const auto sum_t1 = sa_round ? ring_sum : sa::RingVector(n_params, 0);
        AttackRecord ar;
        ar.kind = attack->kind;
        ar.round_t = t - 1;
        ar.round_t1 = t;
        ar.committee_t = attack_committee_t;
        ar.committee_t1 = log.participants;
        ar.outcome = adversary::assess(
            sa::decode_real(adversary::noncolluding_bsa(attack_sum_t, sum_t1), attack_scale), attack_truth);
        log.attack = ar;
      }
    }

    // Global step.
    const bool frozen = attack_t && attack->kind == adversary::AttackKind::non_colluding && attack->freeze_model;
    const fl::Model before = model;
    std::optional<fl::LossGradient> full_before;
    if (cfg.descent_diagnostic) full_before = fl::loss_and_gradient(model, env.train);
    if (total && !frozen) model = fl::global_update(model, std::span<const std::vector<double>>(&*total, 1), cfg.learning_rate);

    const auto objective = fl::loss_and_gradient(model, env.train);
    if (!std::isfinite(objective.loss)) throw fl::DivergenceError("global loss is not finite at round " + std::to_string(t));
    log.global_loss = objective.loss;
    log.test_accuracy = fl::evaluate(model, env.test).accuracy;
    if (full_before) {
      log.descent_slack = descent_diagnostic(before.parameters, model.parameters, full_before->gradient,
                                             res.smoothness, full_before->loss, objective.loss);
      if (*log.descent_slack < kDescentTolerance) violation(t, "descent inequality violated");
    }

    log.wall_time_s = std::chrono::duration<double>(Clock::now() - round_start).count();
    res.rounds.push_back(std::move(log));
  }
  res.wall_time_s = std::chrono::duration<double>(Clock::now() - run_start).count();
  return res;
}

/// First round whose test accuracy reaches `target`.
inline std::optional<std::uint64_t> rounds_to_accuracy(const RunResult& r, double target) {
  for (const auto& l : r.rounds)
    if (l.test_accuracy >= target) return l.round;
  return std::nullopt;
}

/// First round whose training objective is at or below `target`.
inline std::optional<std::uint64_t> rounds_to_loss(const RunResult& r, double target) {
  for (const auto& l : r.rounds)
    if (l.global_loss <= target) return l.round;
  return std::nullopt;
}

}  // namespace fedselect::sim
