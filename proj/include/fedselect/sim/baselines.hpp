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

// Uninformed random selection and a loss-based informed baseline.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fedselect/common.hpp"

namespace fedselect::sim {

/// Uniform sample without replacement, returned in ascending id order.
inline std::vector<ClientId> baseline_random_select(std::span<const ClientId> candidates, std::size_t budget,
                                                    std::uint64_t seed) {
  std::vector<ClientId> pool(candidates.begin(), candidates.end());
  if (budget < pool.size()) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < budget; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(budget);
  }
  std::sort(pool.begin(), pool.end());
  return pool;
}

struct LossProxyReport {
  ClientId client = 0;
  std::size_t local_samples = 0;         // |S_local|
  std::vector<double> per_sample_losses;  // over the client's training batch
};

/// |S_local| * sqrt(mean of squared per-sample losses).
inline double lossproxy_score(const LossProxyReport& r) {
  if (r.per_sample_losses.empty()) return 0.0;
  double sq = 0.0;
  for (double l : r.per_sample_losses) sq += l * l;
  return static_cast<double>(r.local_samples) * std::sqrt(sq / static_cast<double>(r.per_sample_losses.size()));
}

/// Top `budget` clients by lossproxy_score, ties to the lower id. Returned in
/// rank order.
inline std::vector<ClientId> baseline_lossproxy_select(std::span<const LossProxyReport> reports, std::size_t budget) {
  std::vector<std::pair<double, ClientId>> scored;
  for (const auto& r : reports) scored.emplace_back(lossproxy_score(r), r.client);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<ClientId> out;
  for (std::size_t k = 0; k < scored.size() && k < budget; ++k) out.push_back(scored[k].second);
  return out;
}

}  // namespace fedselect::sim
