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

// Self-contained attack and protocol experiments, shared by the CLI's
// attack-demo command and the acceptance suite.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fedselect/adversary.hpp"
#include "fedselect/cluster_protocol.hpp"
#include "fedselect/crypto.hpp"
#include "fedselect/secure_aggregation.hpp"
#include "fedselect/sim/simulator.hpp"
#include "fedselect/vrf_protocol.hpp"

namespace fedselect::sim {

// ---------------------------------------------------------------------------
// Biased selection attacks run through the full simulator

struct SimulatedAttack {
  adversary::AttackKind kind = adversary::AttackKind::non_colluding;
  bool defended = false;     // cluster_global with C = 2 instead of insecure_global
  bool preconditions = true;  // freeze model and data between t and t + 1
};

/// Smallest config that still runs the real data, training and SA path:
/// victim 0 sits in the first cluster (ids 0..11), the partners are in the
/// second (ids 12..19). Under the defense the aggregator must add a cluster
/// mate (id 1) or the victim's cluster withholds.
inline ExperimentConfig attack_config(const SimulatedAttack& a, std::uint64_t seed) {
  ExperimentConfig c;
  c.mode = a.defended ? Mode::cluster_global : Mode::insecure_global;
  c.privacy_threshold = 2;
  c.rounds = 2;
  c.seed = seed;
  c.samples = 1000;
  // Raw gradients as updates. With sample weighting a one-sample cluster
  // mate barely perturbs the victim's share of the mix.
  c.weighting = Weighting::uniform;
  AttackConfig ac;
  ac.kind = a.kind;
  ac.round = 1;
  ac.victim = 0;
  ac.freeze_model = a.preconditions;
  ac.freeze_data = a.preconditions;
  if (a.kind == adversary::AttackKind::non_colluding) {
    ac.companions = {12, 13};
    if (a.defended) ac.companions.push_back(1);
  } else {
    ac.colluders = {12, 13};
    if (a.defended) ac.companions = {1};
  }
  c.attack = ac;
  return c;
}

inline adversary::AttackOutcome run_simulated_attack(const SimulatedAttack& a, std::uint64_t seed) {
  const auto r = run_experiment(attack_config(a, seed));
  for (const auto& l : r.rounds)
    if (l.attack) return l.attack->outcome;
  throw ProtocolError("the attack produced no outcome");
}

// ---------------------------------------------------------------------------
// Two-cluster defense arithmetic at the ring level

inline std::vector<double> random_update(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> g(dim);
  for (double& v : g) v = normal(rng);
  return g;
}

struct DefenseTrace {
  // Non-colluding: clusters A = {A1, A2}, B = {B1, B2}; the aggregator drops A1 at t + 1.
  bool noncolluding_equals_pair = false;  // S_t - S_{t+1} == x_A1 + x_A2 in the ring
  adversary::AttackOutcome noncolluding;   // against x_A1
  // Colluding: honest cluster {M1, M2}, fake cluster {M3, M4} run by the aggregator.
  bool colluding_equals_pair = false;      // S - x_M3 - x_M4 == x_M1 + x_M2 in the ring
  adversary::AttackOutcome colluding;      // against x_M1
};

inline DefenseTrace cluster_defense_trace(std::uint64_t seed, std::size_t dim = 64, std::size_t threshold = 2) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> x;
  for (int i = 0; i < 4; ++i) x.push_back(random_update(dim, rng));
  double scale = 0.0;
  for (const auto& g : x) scale = std::max(scale, fl::quantization_scale(g));
  std::vector<sa::EncodedUpdate> enc;
  for (ClientId i = 0; i < 4; ++i) enc.push_back(sa::encode(i, fl::quantize_with_scale(x[i], scale)));
  const std::vector<cluster::Cluster> clusters{{0, {0, 1}}, {1, {2, 3}}};

  auto run_round = [&](std::uint64_t round, const std::vector<ClientId>& selected) {
    const auto d = cluster::verify_and_withhold(selected, clusters, threshold);
    if (d.participants.size() < 2) return std::pair{sa::RingVector(dim, 0), std::optional<sa::SecureAggregationRound>{}};
    std::optional<sa::SecureAggregationRound> r;
    r.emplace(round, d.participants, dim, derive_seed(seed, 0x7ACE, round));
    for (ClientId id : d.participants) r->submit(enc[id]);
    return std::pair{r->aggregate(), std::move(r)};
  };
  auto truth = [&](ClientId id) { return sa::decode_real(enc[id].values, scale); };

  DefenseTrace out;
  {
    const auto [s_t, r_t] = run_round(1, {0, 1, 2, 3});
    const auto [s_t1, r_t1] = run_round(2, {1, 2, 3});
    const auto est = adversary::noncolluding_bsa(s_t, s_t1);
    out.noncolluding_equals_pair = est == sa::ring_add(enc[0].values, enc[1].values);
    out.noncolluding = adversary::assess(sa::decode_real(est, scale), truth(0));
  }
  {
    auto [s, r] = run_round(3, {0, 1, 2, 3});
    const auto leaked = r->leak_to_adversary({2, 3});
    const auto est = adversary::colluding_bsa(s, leaked);
    out.colluding_equals_pair = est == sa::ring_add(enc[0].values, enc[1].values);
    out.colluding = adversary::assess(sa::decode_real(est, scale), truth(0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fake cluster of Sybils

struct SybilClusterResult {
  bool honest_clusters_hold_threshold = true;  // every honest cluster gave 0 or >= C in both rounds
  bool victim_withheld = false;
  adversary::AttackOutcome outcome;
};

/// The aggregator registers a cluster of `n_sybils` identities and pairs the
/// victim (alone from its own cluster) with them, then drops the victim.
inline SybilClusterResult sybil_cluster_trial(std::uint64_t seed, std::size_t n_sybils = 5, std::size_t threshold = 2,
                                              std::size_t dim = 64) {
  const std::vector<std::size_t> sizes{12, 8, 10, 11, 9, 5, 15, 10, 4, 16};
  auto honest = cluster::clusters_from_sizes(sizes);
  const ClientId first_sybil = 100;
  const auto fake = adversary::spawn_sybil_cluster(n_sybils, static_cast<std::uint32_t>(honest.size()), first_sybil, seed);
  auto clusters = honest;
  clusters.push_back(fake.cluster);

  std::mt19937_64 rng(seed);
  std::map<ClientId, std::vector<double>> x;
  x[0] = random_update(dim, rng);
  for (const auto& s : fake.members) x[s.id] = random_update(dim, rng);
  double scale = 0.0;
  for (const auto& [id, g] : x) scale = std::max(scale, fl::quantization_scale(g));

  SybilClusterResult out;
  auto run_round = [&](std::uint64_t round, std::vector<ClientId> selected) {
    const auto d = cluster::verify_and_withhold(selected, clusters, threshold);
    if (!cluster::satisfies_threshold(d.participants, honest, threshold)) out.honest_clusters_hold_threshold = false;
    if (round == 1) out.victim_withheld = !std::binary_search(d.participants.begin(), d.participants.end(), ClientId{0});
    sa::SecureAggregationRound r(round, d.participants, dim, derive_seed(seed, 0x5B1C, round));
    for (ClientId id : d.participants) r.submit(sa::encode(id, fl::quantize_with_scale(x.at(id), scale)));
    return r.aggregate();
  };
  std::vector<ClientId> with_victim{0};
  std::vector<ClientId> without;
  for (const auto& s : fake.members) {
    with_victim.push_back(s.id);
    without.push_back(s.id);
  }
  const auto s_t = run_round(1, with_victim);
  const auto s_t1 = run_round(2, without);
  out.outcome = adversary::assess(sa::decode_real(adversary::noncolluding_bsa(s_t, s_t1), scale),
                                  fl::dequantize(fl::quantize_with_scale(x.at(0), scale)));
  return out;
}

// ---------------------------------------------------------------------------
// Broadcast tampering

struct TamperTrial {
  adversary::TamperStrategy strategy = adversary::TamperStrategy::inflate;
  std::size_t target_rank = 0;
  adversary::TamperDetection detection;
};

/// `m` honest submissions with random utilities; the aggregator tampers with
/// a random rank.
inline TamperTrial tamper_trial(std::uint64_t seed, adversary::TamperStrategy strategy, std::size_t m = 24,
                                std::size_t chunk_size = 8) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  const std::uint64_t round = seed;
  std::vector<vrf::SignedUtility> subs;
  vrf::KeyRegistry registry;
  for (ClientId i = 0; i < m; ++i) {
    const auto kp = client_keys(seed, i);
    registry.emplace(i, kp.public_key);
    subs.push_back(vrf::sign_utility(kp, i, round, u(rng)));
  }
  const auto honest = vrf::first_level_rank(subs, round, chunk_size);
  TamperTrial t;
  t.strategy = strategy;
  std::uniform_int_distribution<std::size_t> pick(strategy == adversary::TamperStrategy::inflate ? 1 : 0, m - 1);
  t.target_rank = pick(rng);
  const auto aggregator = crypto::keygen(crypto::seed_from_u64(derive_seed(seed, stream::kAggregatorKey)));
  const auto forged = adversary::tamper_broadcast(honest, strategy, t.target_rank, aggregator);
  t.detection = adversary::detect_tampering(forged, subs, registry);
  return t;
}

// ---------------------------------------------------------------------------
// Sortition statistics

/// round (u64 BE) || encodings of `m` random utilities: the shape of a real
/// alpha without the signing cost.
inline Bytes synthetic_alpha(std::uint64_t round, std::size_t m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 5.0);
  Bytes alpha;
  append_u64_be(alpha, round);
  for (std::size_t i = 0; i < m; ++i) {
    const auto enc = vrf::canonical_utility_encoding(u(rng));
    alpha.insert(alpha.end(), enc.begin(), enc.end());
  }
  return alpha;
}

struct SelectionRateResult {
  double expected = 0.0;  // Z / 2^512
  double standard_error = 0.0;
  std::vector<double> rates;  // per client
  std::size_t outside_3se = 0;
  double expected_committee = 0.0;  // n Z / 2^512
  double mean_committee = 0.0;
};

/// Threshold sortition over `rounds` fresh alphas; per-client win rates.
inline SelectionRateResult selection_rate_experiment(std::size_t n_clients, std::size_t k, std::size_t rounds,
                                                     std::uint64_t seed) {
  std::vector<crypto::KeyPair> keys;
  for (ClientId i = 0; i < n_clients; ++i) keys.push_back(client_keys(seed, i));
  const auto z = vrf::selection_threshold(k, n_clients, 1);
  SelectionRateResult out;
  out.expected = static_cast<double>(vrf::Rational(z, crypto::beta_space()));
  out.standard_error = std::sqrt(out.expected * (1.0 - out.expected) / static_cast<double>(rounds));
  out.expected_committee = out.expected * static_cast<double>(n_clients);
  std::vector<std::size_t> wins(n_clients, 0);
  std::size_t total = 0;
  std::mt19937_64 rng(derive_seed(seed, 0xA1FA));
  for (std::size_t r = 0; r < rounds; ++r) {
    const auto alpha = synthetic_alpha(r + 1, n_clients, rng);
    for (ClientId i = 0; i < n_clients; ++i)
      if (crypto::vrf_hash(keys[i].secret_key, alpha).beta < z) ++wins[i], ++total;
  }
  out.mean_committee = static_cast<double>(total) / static_cast<double>(rounds);
  for (auto w : wins) {
    const double rate = static_cast<double>(w) / static_cast<double>(rounds);
    out.rates.push_back(rate);
    if (std::abs(rate - out.expected) > 3.0 * out.standard_error) ++out.outside_3se;
  }
  return out;
}

struct PoolQualityResult {
  vrf::CommitteeSolution solution;
  std::size_t draws = 0;
  std::size_t bad_events = 0;  // committees with exactly one honest member
  double frequency() const { return draws ? static_cast<double>(bad_events) / static_cast<double>(draws) : 0.0; }
};

/// Draws the K lowest-beta committee over `draws` fresh alphas; clients
/// 0..honest-1 are honest, the rest collude.
inline PoolQualityResult pool_quality_experiment(std::size_t n, double honest_fraction, double p_max, std::size_t draws,
                                                 std::uint64_t seed) {
  PoolQualityResult out;
  out.solution = vrf::required_committee_size(n, honest_fraction, 1.0 - honest_fraction, p_max);
  out.draws = draws;
  std::vector<crypto::KeyPair> keys;
  for (ClientId i = 0; i < n; ++i) keys.push_back(client_keys(seed, i));
  std::mt19937_64 rng(derive_seed(seed, 0x9001));
  std::vector<vrf::VrfTicket> tickets(n);
  for (std::size_t d = 0; d < draws; ++d) {
    const auto alpha = synthetic_alpha(d + 1, n, rng);
    for (ClientId i = 0; i < n; ++i) {
      tickets[i].client = i;
      tickets[i].beta = crypto::vrf_hash(keys[i].secret_key, alpha).beta;
    }
    const auto committee = vrf::lowest_beta_committee(tickets, out.solution.k);
    std::size_t honest_members = 0;
    for (ClientId id : committee)
      if (id < out.solution.honest) ++honest_members;
    if (honest_members == 1) ++out.bad_events;
  }
  return out;
}

struct GrindingResult {
  double expected = 0.0;      // Z / 2^512
  std::size_t ground_keys = 0;  // keys that win under the stale alpha
  std::size_t fresh_trials = 0;
  std::size_t fresh_wins = 0;
  double fresh_rate() const { return fresh_trials ? static_cast<double>(fresh_wins) / static_cast<double>(fresh_trials) : 0.0; }
  double standard_error() const { return std::sqrt(expected * (1.0 - expected) / static_cast<double>(fresh_trials)); }
};

/// Keys ground against the previous round's alpha, then entered in
/// `fresh_rounds` later rounds whose alpha was unknown at grinding time.
inline GrindingResult grinding_experiment(std::uint64_t seed, std::size_t wanted = 100, std::size_t fresh_rounds = 20,
                                          std::size_t n = 100, std::size_t k = 20) {
  std::mt19937_64 rng(seed);
  const auto z = vrf::selection_threshold(k, n, 1);
  GrindingResult out;
  out.expected = static_cast<double>(vrf::Rational(z, crypto::beta_space()));
  const auto stale = synthetic_alpha(1, n, rng);
  const auto ground = adversary::grind_keys(stale, z, wanted, 100 * wanted, seed);
  out.ground_keys = ground.size();
  for (std::size_t r = 0; r < fresh_rounds; ++r) {
    const auto fresh = synthetic_alpha(r + 2, n, rng);
    for (const auto& kp : ground) {
      ++out.fresh_trials;
      if (crypto::vrf_hash(kp.secret_key, fresh).beta < z) ++out.fresh_wins;
    }
  }
  return out;
}

}  // namespace fedselect::sim
