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

// The adversarial aggregator: biased selection attacks against secure
// aggregation, broadcast tampering, and Sybil identities.
//
// Non-colluding BSA: victim V is in the committee at round t and removed at
// t+1; with the other members' updates unchanged, S_t - S_{t+1} = x_V.
// Colluding BSA: colluders hand over their updates; S - sum(colluders) = x_V
// when V is the only honest member.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fedselect/cluster_protocol.hpp"
#include "fedselect/common.hpp"
#include "fedselect/crypto.hpp"
#include "fedselect/secure_aggregation.hpp"
#include "fedselect/vrf_protocol.hpp"

namespace fedselect::adversary {

/// Relative L2 error below which an estimate counts as a reconstruction.
inline constexpr double kReconstructionThreshold = 1e-3;

enum class AttackKind { non_colluding, colluding, sybil_cluster, broadcast_tamper };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::non_colluding: return "non_colluding";
    case AttackKind::colluding: return "colluding";
    case AttackKind::sybil_cluster: return "sybil_cluster";
    case AttackKind::broadcast_tamper: return "broadcast_tamper";
  }
  return "?";
}

inline AttackKind attack_kind_from_string(const std::string& s) {
  for (auto k : {AttackKind::non_colluding, AttackKind::colluding, AttackKind::sybil_cluster,
                 AttackKind::broadcast_tamper})
    if (to_string(k) == s) return k;
  throw DomainError("unknown attack kind '" + s + "'");
}

struct AttackScenario {
  AttackKind kind = AttackKind::non_colluding;
  ClientId victim = 0;
  std::set<ClientId> colluders;
  bool freeze_model = true;  // same global model at t and t+1
  bool freeze_data = true;   // clients reuse the same batch at t and t+1

  void validate() const {
    if (colluders.contains(victim)) throw DomainError("the victim cannot be a colluder");
    if (kind == AttackKind::colluding && colluders.empty()) throw DomainError("colluding attack needs colluders");
  }
};

struct AttackOutcome {
  std::vector<double> estimate;
  std::vector<double> truth;
  double relative_l2_error = 0.0;
  bool succeeded = false;
};

inline double relative_l2_error(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) throw DomainError("estimate and truth differ in length");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    num += (estimate[i] - truth[i]) * (estimate[i] - truth[i]);
    den += truth[i] * truth[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

inline AttackOutcome assess(std::vector<double> estimate, std::vector<double> truth,
                            double threshold = kReconstructionThreshold) {
  AttackOutcome o;
  o.relative_l2_error = relative_l2_error(estimate, truth);
  o.succeeded = o.relative_l2_error < threshold;
  o.estimate = std::move(estimate);
  o.truth = std::move(truth);
  return o;
}

/// S_t - S_{t+1}: the victim sits in round t's committee only.
inline sa::RingVector noncolluding_bsa(std::span<const std::uint64_t> sum_t, std::span<const std::uint64_t> sum_t1) {
  return sa::ring_sub(sum_t, sum_t1);
}

inline std::vector<double> noncolluding_bsa(std::span<const double> sum_t, std::span<const double> sum_t1) {
  if (sum_t.size() != sum_t1.size()) throw DomainError("sums differ in length");
  std::vector<double> out(sum_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sum_t[i] - sum_t1[i];
  return out;
}

inline sa::RingVector colluding_bsa(std::span<const std::uint64_t> sum, std::span<const sa::EncodedUpdate> colluders) {
  sa::RingVector est(sum.begin(), sum.end());
  for (const auto& c : colluders) est = sa::ring_sub(est, c.values);
  return est;
}

inline std::vector<double> colluding_bsa(std::span<const double> sum, std::span<const std::vector<double>> colluders) {
  std::vector<double> est(sum.begin(), sum.end());
  for (const auto& c : colluders) {
    if (c.size() != est.size()) throw DomainError("colluder update length mismatch");
    for (std::size_t i = 0; i < est.size(); ++i) est[i] -= c[i];
  }
  return est;
}

// ---------------------------------------------------------------------------
// Broadcast tampering

enum class TamperStrategy { inflate, reorder, drop, forge_signature };

inline constexpr TamperStrategy kAllTamperStrategies[] = {TamperStrategy::inflate, TamperStrategy::reorder,
                                                          TamperStrategy::drop, TamperStrategy::forge_signature};

inline std::string to_string(TamperStrategy s) {
  switch (s) {
    case TamperStrategy::inflate: return "inflate";
    case TamperStrategy::reorder: return "reorder";
    case TamperStrategy::drop: return "drop";
    case TamperStrategy::forge_signature: return "forge_signature";
  }
  return "?";
}

/// A well-formed but dishonest broadcast. `target_rank` names the entry the
/// aggregator manipulates:
///   inflate          raise its utility above the current top and move it first
///   reorder          swap it with the next entry
///   drop             remove it
///   forge_signature  replace its signature with the aggregator's own
inline vrf::RankedBroadcast tamper_broadcast(const vrf::RankedBroadcast& honest, TamperStrategy strategy,
                                             std::size_t target_rank, const crypto::KeyPair& aggregator_key) {
  if (target_rank >= honest.size()) throw DomainError("target rank outside the broadcast");
  auto ids = honest.ids;
  auto utilities = honest.utilities;
  auto sigs = vrf::unpack_signatures(honest);
  const auto r = static_cast<std::ptrdiff_t>(target_rank);

  switch (strategy) {
    case TamperStrategy::inflate: {
      const double boosted = utilities.front() + 1.0;
      const ClientId id = ids[target_rank];
      const auto sig = sigs[target_rank];
      ids.erase(ids.begin() + r);
      utilities.erase(utilities.begin() + r);
      sigs.erase(sigs.begin() + r);
      ids.insert(ids.begin(), id);
      utilities.insert(utilities.begin(), boosted);
      sigs.insert(sigs.begin(), sig);
      break;
    }
    case TamperStrategy::reorder: {
      if (honest.size() < 2) throw DomainError("reorder needs two entries");
      const std::size_t a = std::min(target_rank, honest.size() - 2);
      std::swap(ids[a], ids[a + 1]);
      std::swap(utilities[a], utilities[a + 1]);
      std::swap(sigs[a], sigs[a + 1]);
      break;
    }
    case TamperStrategy::drop:
      ids.erase(ids.begin() + r);
      utilities.erase(utilities.begin() + r);
      sigs.erase(sigs.begin() + r);
      break;
    case TamperStrategy::forge_signature:
      sigs[target_rank] =
          crypto::sign(aggregator_key.secret_key, vrf::utility_message(honest.round, utilities[target_rank]));
      break;
  }

  vrf::RankedBroadcast out;
  out.round = honest.round;
  out.chunk_size = honest.chunk_size;
  out.ids = std::move(ids);
  out.utilities = std::move(utilities);
  out.chunks = vrf::pack_signature_chunks(sigs, honest.chunk_size);
  return out;
}

struct TamperDetection {
  bool detected = false;
  bool by_broadcast_check = false;  // some verifier's verify_ranked_broadcast failed
  std::vector<ClientId> complaining_clients;  // clients whose own entry is missing or altered
};

/// Runs every honest submitter's checks against a (possibly tampered) broadcast.
inline TamperDetection detect_tampering(const vrf::RankedBroadcast& received,
                                        std::span<const vrf::SignedUtility> submissions, const vrf::KeyRegistry& keys) {
  TamperDetection d;
  d.by_broadcast_check = !vrf::verify_ranked_broadcast(received, keys).ok;
  for (const auto& s : submissions)
    if (!vrf::audit_inclusion(received, s.client, s.utility)) d.complaining_clients.push_back(s.client);
  d.detected = d.by_broadcast_check || !d.complaining_clients.empty();
  return d;
}

// ---------------------------------------------------------------------------
// Sybils

struct SybilClient {
  ClientId id = 0;
  crypto::KeyPair keys;
};

/// `n` adversary-controlled identities with ids first_id, first_id + 1, ...
inline std::vector<SybilClient> spawn_sybil_clients(std::size_t n, ClientId first_id, std::uint64_t seed) {
  if (n < 1) throw DomainError("need at least one Sybil");
  std::vector<SybilClient> out;
  for (std::size_t k = 0; k < n; ++k) {
    const ClientId id = first_id + k;
    out.push_back({id, crypto::keygen(crypto::seed_from_u64(derive_seed(seed, 0x5B11, id), "fedselect/sybil"), id)});
  }
  return out;
}

struct SybilCluster {
  cluster::Cluster cluster;
  std::vector<SybilClient> members;
};

inline SybilCluster spawn_sybil_cluster(std::size_t n, std::uint32_t cluster_id, ClientId first_id,
                                        std::uint64_t seed) {
  SybilCluster sc;
  sc.members = spawn_sybil_clients(n, first_id, seed);
  sc.cluster.id = cluster_id;
  for (const auto& s : sc.members) sc.cluster.members.push_back(s.id);
  return sc;
}

/// Key grinding against a known alpha: keeps generating keys until
/// `wanted` of them win under `alpha` (or attempts run out).
inline std::vector<crypto::KeyPair> grind_keys(std::span<const std::uint8_t> alpha, const crypto::BigUint& z,
                                               std::size_t wanted, std::size_t max_attempts, std::uint64_t seed) {
  std::vector<crypto::KeyPair> out;
  for (std::size_t a = 0; a < max_attempts && out.size() < wanted; ++a) {
    auto kp = crypto::keygen(crypto::seed_from_u64(derive_seed(seed, 0x6E1D, a), "fedselect/grind"), a);
    if (crypto::vrf_hash(kp.secret_key, alpha).beta < z) out.push_back(kp);
  }
  return out;
}

}  // namespace fedselect::adversary
