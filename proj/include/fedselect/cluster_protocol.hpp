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

// Cluster-oriented selection: the aggregator ranks deadline survivors by
// utility (per cluster or globally) and publishes S; each cluster head
// admits S ∩ n_j only if it has at least C members, otherwise the whole
// cluster withholds. The minimum C for a collusion probability phi and risk
// tolerance delta is the least C with phi^C + C phi^(C-1) (1 - phi) <= delta.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fedselect/client_utility.hpp"
#include "fedselect/common.hpp"

namespace fedselect::cluster {

struct Cluster {
  std::uint32_t id = 0;
  std::vector<ClientId> members;
};

/// Contiguous id blocks: cluster j owns the next sizes[j] client ids.
inline std::vector<Cluster> clusters_from_sizes(std::span<const std::size_t> sizes) {
  std::vector<Cluster> out;
  ClientId next = 0;
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    if (sizes[j] < 1) throw DomainError("every cluster needs at least one member");
    Cluster c;
    c.id = static_cast<std::uint32_t>(j);
    for (std::size_t k = 0; k < sizes[j]; ++k) c.members.push_back(next++);
    out.push_back(std::move(c));
  }
  return out;
}

/// client id -> cluster id; throws if the clusters overlap.
inline std::map<ClientId, std::uint32_t> membership(std::span<const Cluster> clusters) {
  std::map<ClientId, std::uint32_t> out;
  for (const auto& c : clusters)
    for (ClientId id : c.members)
      if (!out.emplace(id, c.id).second) throw DomainError("client " + std::to_string(id) + " is in two clusters");
  return out;
}

enum class Scope { local, global };

struct SelectionPlan {
  std::uint64_t round = 0;
  Scope scope = Scope::local;
  std::vector<ClientId> selected;
  std::map<std::uint32_t, std::size_t> per_cluster;
  std::size_t budget = 0;
};

struct ParticipationDecision {
  std::map<std::uint32_t, std::vector<ClientId>> per_cluster;  // W_j, admitted clusters only
  std::vector<ClientId> participants;                          // W, ascending ids
  std::vector<std::uint32_t> withheld;
};

/// P(X < 2) for X ~ Binomial(c, 1 - phi).
inline double fewer_than_two_honest(double phi, std::size_t c) {
  const double cd = static_cast<double>(c);
  return std::pow(phi, cd) + cd * std::pow(phi, cd - 1.0) * (1.0 - phi);
}

/// Least C >= 2 with P(fewer than two honest among C) <= delta.
inline std::size_t min_cluster_threshold(double phi, double delta) {
  if (!(phi >= 0.0)) throw DomainError("phi must be >= 0");
  if (phi >= 1.0) throw InfeasibleParameters("phi >= 1: no finite threshold exists");
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must be in (0, 1)");
  // The tail decays geometrically once C exceeds 1/(1-phi); the bound is generous.
  for (std::size_t c = 2; c < 1'000'000; ++c)
    if (fewer_than_two_honest(phi, c) <= delta) return c;
  throw InfeasibleParameters("no threshold below 10^6 for the requested (phi, delta)");
}

/// Deterministic alternative: tolerate up to `colluders_per_cluster` known
/// colluders in any cluster.
inline std::size_t collusion_tolerant_threshold(std::size_t colluders_per_cluster) {
  return colluders_per_cluster + 2;
}

struct ThresholdTable {
  std::vector<double> phis;
  std::vector<double> deltas;
  std::vector<std::vector<std::size_t>> cells;  // [delta][phi]
};

inline ThresholdTable build_threshold_table(std::span<const double> phis, std::span<const double> deltas) {
  ThresholdTable t{{phis.begin(), phis.end()}, {deltas.begin(), deltas.end()}, {}};
  for (double d : deltas) {
    auto& row = t.cells.emplace_back();
    for (double p : phis) row.push_back(min_cluster_threshold(p, d));
  }
  return t;
}

/// Budget split into equal per-cluster quotas; the remainder goes one each
/// to the largest clusters (ties to the lower cluster id).
inline std::map<std::uint32_t, std::size_t> local_quotas(std::span<const Cluster> clusters, std::size_t budget) {
  std::map<std::uint32_t, std::size_t> out;
  if (clusters.empty()) return out;
  const std::size_t base = budget / clusters.size();
  std::size_t rem = budget % clusters.size();
  std::vector<std::size_t> order(clusters.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return clusters[a].members.size() > clusters[b].members.size();
  });
  for (const auto& c : clusters) out[c.id] = base;
  for (std::size_t k = 0; k < rem; ++k) ++out[clusters[order[k]].id];
  return out;
}

namespace detail {

inline void sort_by_utility(std::vector<utility::UtilityRecord>& records) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    if (a.utility != b.utility) return a.utility > b.utility;
    return a.client < b.client;
  });
}

}  // namespace detail

/// Ranks survivors by utility, descending, ties to the lower id.
/// Local scope takes the top quota within each cluster; global scope takes
/// the top budget over all survivors. Clients outside every cluster are
/// ignored.
inline SelectionPlan select_clients(Scope scope, std::span<const utility::UtilityRecord> survivors,
                                    std::span<const Cluster> clusters, std::size_t budget,
                                    const std::map<std::uint32_t, std::size_t>& quotas = {},
                                    std::uint64_t round = 0) {
  if (budget < 1) throw DomainError("budget must be >= 1");
  const auto owner = membership(clusters);
  SelectionPlan plan;
  plan.round = round;
  plan.scope = scope;
  plan.budget = budget;

  if (scope == Scope::global) {
    std::vector<utility::UtilityRecord> ranked;
    for (const auto& r : survivors)
      if (owner.contains(r.client)) ranked.push_back(r);
    detail::sort_by_utility(ranked);
    for (std::size_t k = 0; k < ranked.size() && k < budget; ++k) plan.selected.push_back(ranked[k].client);
  } else {
    const auto q = quotas.empty() ? local_quotas(clusters, budget) : quotas;
    std::map<std::uint32_t, std::vector<utility::UtilityRecord>> grouped;
    for (const auto& r : survivors) {
      auto it = owner.find(r.client);
      if (it != owner.end()) grouped[it->second].push_back(r);
    }
    for (auto& [cid, records] : grouped) {
      auto qit = q.find(cid);
      const std::size_t quota = qit == q.end() ? 0 : qit->second;
      detail::sort_by_utility(records);
      for (std::size_t k = 0; k < records.size() && k < quota; ++k) plan.selected.push_back(records[k].client);
    }
  }
  for (ClientId id : plan.selected) ++plan.per_cluster[owner.at(id)];
  return plan;
}

inline std::map<std::uint32_t, std::vector<ClientId>> intersect_clusters(std::span<const ClientId> selected,
                                                                         std::span<const Cluster> clusters) {
  std::set<ClientId> chosen(selected.begin(), selected.end());
  std::map<std::uint32_t, std::vector<ClientId>> out;
  for (const auto& c : clusters)
    for (ClientId id : c.members)
      if (chosen.contains(id)) out[c.id].push_back(id);
  return out;
}

/// Cluster-head check: W_j = S ∩ n_j if |S ∩ n_j| >= C, else the cluster
/// withholds.
inline ParticipationDecision verify_and_withhold(std::span<const ClientId> selected, std::span<const Cluster> clusters,
                                                 std::size_t threshold) {
  if (threshold < 2) throw DomainError("privacy threshold C must be >= 2");
  ParticipationDecision d;
  for (auto& [cid, members] : intersect_clusters(selected, clusters)) {
    if (members.size() >= threshold) {
      d.participants.insert(d.participants.end(), members.begin(), members.end());
      d.per_cluster.emplace(cid, std::move(members));
    } else {
      d.withheld.push_back(cid);
    }
  }
  std::sort(d.participants.begin(), d.participants.end());
  return d;
}

inline ParticipationDecision verify_and_withhold(const SelectionPlan& plan, std::span<const Cluster> clusters,
                                                 std::size_t threshold) {
  return verify_and_withhold(plan.selected, clusters, threshold);
}

/// Clusters with 1 <= |S ∩ n_j| < C.
inline std::size_t count_vulnerable_clusters(std::span<const ClientId> selected, std::span<const Cluster> clusters,
                                             std::size_t threshold) {
  std::size_t n = 0;
  for (const auto& [cid, members] : intersect_clusters(selected, clusters))
    if (!members.empty() && members.size() < threshold) ++n;
  return n;
}

inline std::size_t count_vulnerable_clusters(const SelectionPlan& plan, std::span<const Cluster> clusters,
                                             std::size_t threshold) {
  return count_vulnerable_clusters(plan.selected, clusters, threshold);
}

/// Every cluster contributes 0 or at least C participants.
inline bool satisfies_threshold(std::span<const ClientId> participants, std::span<const Cluster> clusters,
                                std::size_t threshold) {
  return count_vulnerable_clusters(participants, clusters, threshold) == 0;
}

}  // namespace fedselect::cluster
