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

// Run outputs:
//   rounds.csv        one row per round; deterministic given config and seed
//   participants.csv  one row per (round, participant) with the channel costs
//   summary.json      rounds-to-target, best accuracy, energy and bit totals

#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fedselect/sim/simulator.hpp"

namespace fedselect::sim {

/// Shortest text that round-trips the double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join_ids(const std::vector<ClientId>& ids) {
  std::string out;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (k) out += ';';
    out += std::to_string(ids[k]);
  }
  return out;
}

inline void write_rounds_csv(std::ostream& os, const RunResult& r) {
  os << "round,mode,selected,participants,survivors,withheld_clusters,vulnerable_clusters,deadline_violations,"
        "committee_target,aggregated,global_loss,test_accuracy,bits,energy_j,attack_kind,attack_error,"
        "attack_succeeded,tamper_detected,descent_slack\n";
  for (const auto& l : r.rounds) {
    os << l.round << ',' << to_string(l.mode) << ',' << join_ids(l.selected) << ',' << join_ids(l.participants) << ','
       << l.survivors << ',' << l.withheld_clusters << ',' << l.vulnerable_clusters << ',' << l.deadline_violations
       << ',' << l.committee_target << ',' << (l.aggregated ? 1 : 0) << ',' << format_double(l.global_loss) << ','
       << format_double(l.test_accuracy) << ',' << l.bits << ',' << format_double(l.energy_j) << ',';
    if (l.attack)
      os << adversary::to_string(l.attack->kind) << ',' << format_double(l.attack->outcome.relative_l2_error) << ','
         << (l.attack->outcome.succeeded ? 1 : 0);
    else if (l.tamper)
      os << "broadcast_tamper,,";
    else
      os << ",,";
    os << ',';
    if (l.tamper) os << (l.tamper->detected ? 1 : 0);
    os << ',';
    if (l.descent_slack) os << format_double(*l.descent_slack);
    os << '\n';
  }
}

inline void write_participants_csv(std::ostream& os, const RunResult& r) {
  os << "round,client,snr_db,transmission_time_s,energy_j,payload_bits\n";
  for (const auto& l : r.rounds)
    for (const auto& e : l.entries)
      os << l.round << ',' << e.client << ',' << format_double(e.snr_db) << ','
         << format_double(e.transmission_time_s) << ',' << format_double(e.energy_j) << ',' << e.payload_bits << '\n';
}

inline nlohmann::json summary_json(const RunResult& r) {
  using nlohmann::json;
  json s;
  s["mode"] = to_string(r.config.mode);
  s["seed"] = r.config.seed;
  s["rounds"] = r.rounds.size();
  s["parameter_count"] = r.parameter_count;
  s["payload_bits_per_client"] = r.payload_bits_per_client;
  s["deadline_s"] = r.deadline_s;
  if (r.privacy_threshold) s["privacy_threshold"] = r.privacy_threshold;
  if (r.committee) {
    s["committee_size"] = r.committee->k;
    s["isolation_probability"] = static_cast<double>(r.committee->probability);
  }

  auto targets = [&](const std::vector<double>& ts, bool accuracy) {
    json out = json::array();
    for (double t : ts) {
      const auto hit = accuracy ? rounds_to_accuracy(r, t) : rounds_to_loss(r, t);
      out.push_back({{"target", t}, {"round", hit ? json(*hit) : json(nullptr)}});
    }
    return out;
  };
  s["rounds_to_accuracy"] = targets(r.config.accuracy_targets, true);
  s["rounds_to_loss"] = targets(r.config.loss_targets, false);

  double best = r.initial_accuracy, energy = 0.0;
  std::uint64_t bits = 0;
  std::size_t vulnerable_rounds = 0, violations = 0, skipped = 0;
  for (const auto& l : r.rounds) {
    best = std::max(best, l.test_accuracy);
    energy += l.energy_j;
    bits += l.bits;
    if (l.vulnerable_clusters > 0) ++vulnerable_rounds;
    violations += l.deadline_violations;
    if (!l.aggregated) ++skipped;
  }
  const double n = r.rounds.empty() ? 1.0 : static_cast<double>(r.rounds.size());
  s["initial_accuracy"] = r.initial_accuracy;
  s["best_accuracy"] = best;
  s["final_accuracy"] = r.rounds.empty() ? r.initial_accuracy : r.rounds.back().test_accuracy;
  s["final_loss"] = r.rounds.empty() ? r.initial_loss : r.rounds.back().global_loss;
  s["total_energy_j"] = energy;
  s["mean_energy_j_per_round"] = energy / n;
  s["total_bits"] = bits;
  s["mean_bits_per_round"] = static_cast<double>(bits) / n;
  s["rounds_with_vulnerable_clusters"] = vulnerable_rounds;
  s["deadline_violations"] = violations;
  s["rounds_without_update"] = skipped;
  s["invariant_violations"] = r.violations;
  s["wall_time_s"] = r.wall_time_s;
  return s;
}

/// Writes rounds.csv, participants.csv and summary.json into `dir`.
inline void emit_reports(const RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("rounds.csv");
    write_rounds_csv(f, r);
  }
  {
    auto f = open("participants.csv");
    write_participants_csv(f, r);
  }
  {
    auto f = open("summary.json");
    f << summary_json(r).dump(2) << '\n';
  }
}

}  // namespace fedselect::sim
