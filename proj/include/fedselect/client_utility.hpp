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

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fedselect/common.hpp"

namespace fedselect::utility {

/// H(omega) = omega * loss + (1 - omega) * grad_norm * s_local / s_total.
/// Only the gradient term is weighted by the client's sample fraction.
inline double compute_utility(double loss, double grad_norm, std::size_t s_local, std::size_t s_total,
                              double omega) {
  if (!(omega >= 0.0 && omega <= 1.0)) throw DomainError("omega must be in [0, 1]");
  if (s_local < 1 || s_total < s_local) throw DomainError("need s_total >= s_local >= 1");
  if (!(loss >= 0.0) || !(grad_norm >= 0.0)) throw DomainError("loss and grad_norm must be nonnegative");
  const double fraction = static_cast<double>(s_local) / static_cast<double>(s_total);
  return omega * loss + (1.0 - omega) * grad_norm * fraction;
}

struct ChannelModel {
  double bandwidth_hz = 1e6;
  double power_watts = 0.1;
  double snr_db_low = 0.0;
  double snr_db_high = 30.0;

  /// One SNR draw (dB), uniform over the configured range.
  double sample_snr_db(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(snr_db_low, snr_db_high);
    return dist(rng);
  }
};

inline double snr_linear(double snr_db) { return std::pow(10.0, snr_db / 10.0); }

/// Shannon rate B * log2(1 + SNR) in bits per second.
inline double channel_rate(double bandwidth_hz, double snr_db) {
  if (!(bandwidth_hz > 0.0)) throw DomainError("bandwidth must be positive");
  return bandwidth_hz * std::log2(1.0 + snr_linear(snr_db));
}

inline double transmission_time(std::uint64_t payload_bits, double rate_bps) {
  if (!(rate_bps > 0.0)) throw DomainError("rate must be positive");
  return static_cast<double>(payload_bits) / rate_bps;
}

inline double energy(double power_watts, double seconds) { return power_watts * seconds; }

struct UtilityRecord {
  ClientId client = 0;
  double utility = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double sample_fraction = 0.0;
  double transmission_time_s = 0.0;
  std::uint64_t payload_bits = 0;
};

/// Records with transmission_time_s <= deadline_s, order preserved.
inline std::vector<UtilityRecord> deadline_filter(std::span<const UtilityRecord> records, double deadline_s) {
  if (!(deadline_s > 0.0)) throw DomainError("deadline must be positive");
  std::vector<UtilityRecord> out;
  for (const auto& r : records)
    if (r.transmission_time_s <= deadline_s) out.push_back(r);
  return out;
}

}  // namespace fedselect::utility
