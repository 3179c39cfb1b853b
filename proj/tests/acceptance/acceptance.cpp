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


// Acceptance suite: one PASS/FAIL line per criterion, details indented
// below it. Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "fedselect/fedselect.hpp"

namespace {

using namespace fedselect;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Detail lines are held back and printed under the criterion's verdict.
std::vector<std::string> g_details;

void detail(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  g_details.emplace_back(buf);
}

int failures = 0;

struct Verdict {
  int id = 0;
  std::string title;
  bool ok = false;
};
std::optional<Verdict> g_verdict;

// Criteria may record their verdict before their last detail lines; flush() prints both.
void report(int id, const char* title, bool ok) { g_verdict = Verdict{id, title, ok}; }

void flush() {
  if (!g_verdict) return;
  std::printf("[%s] criterion %d: %s\n", g_verdict->ok ? "PASS" : "FAIL", g_verdict->id, g_verdict->title.c_str());
  for (const auto& d : g_details) std::printf("      %s\n", d.c_str());
  g_details.clear();
  std::fflush(stdout);
  if (!g_verdict->ok) ++failures;
  g_verdict.reset();
}

// Runs shared by several criteria, keyed by (mode, seed).
const std::vector<sim::Mode> kEfficiencyModes{sim::Mode::cluster_local, sim::Mode::cluster_global, sim::Mode::vrf,
                                              sim::Mode::baseline_random};
constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};
std::map<std::pair<sim::Mode, std::uint64_t>, sim::RunResult> g_runs;

sim::ExperimentConfig shipped_config(sim::Mode mode, std::uint64_t seed) {
  auto c = sim::load_config(std::string(FEDSELECT_CONFIG_DIR) + "/" + sim::to_string(mode) + ".json");
  c.seed = seed;
  return c;
}

const sim::RunResult& run_for(sim::Mode mode, std::uint64_t seed) {
  auto key = std::pair{mode, seed};
  auto it = g_runs.find(key);
  if (it == g_runs.end()) it = g_runs.emplace(key, sim::run_experiment(shipped_config(mode, seed))).first;
  return it->second;
}

std::string rounds_csv(const sim::RunResult& r) {
  std::ostringstream os;
  sim::write_rounds_csv(os, r);
  return os.str();
}

// ---------------------------------------------------------------------------

void criterion_1() {
  const auto t0 = Clock::now();
  const std::vector<double> phis{0.1, 0.2, 0.3, 0.4, 0.5}, deltas{0.05, 0.01, 0.001};
  const auto t = cluster::build_threshold_table(phis, deltas);
  const double dt = seconds_since(t0);
  const std::vector<std::vector<std::size_t>> reference{{3, 4, 5, 6, 8}, {4, 5, 7, 8, 11}, {5, 7, 9, 11, 14}};
  std::size_t matching = 0;
  for (std::size_t d = 0; d < 3; ++d)
    for (std::size_t p = 0; p < 5; ++p) matching += t.cells[d][p] == reference[d][p];
  report(1, "minimum cluster threshold table", matching == 15 && dt < 1.0);
  for (std::size_t d = 0; d < 3; ++d)
    detail("delta %-6g: %zu %zu %zu %zu %zu", deltas[d], t.cells[d][0], t.cells[d][1], t.cells[d][2], t.cells[d][3],
           t.cells[d][4]);
  detail("%zu/15 cells match, %.4f s", matching, dt);
  detail("(phi 0.3, delta 0.01) -> %zu; the tail probability at C = 12 would be %.3g", t.cells[1][2],
         cluster::fewer_than_two_honest(0.3, 12));
}

void criterion_2() {
  using vrf::BigUint;
  using vrf::Rational;
  const auto t0 = Clock::now();
  const auto s = vrf::required_committee_size(100, 0.9, 0.1, 0.001);
  const auto z = vrf::selection_threshold(s.k, 100, 1);
  const double dt = seconds_since(t0);
  // Oracle: Pascal's triangle, then a linear scan over K.
  std::vector<std::vector<BigUint>> pascal(101, std::vector<BigUint>(101, 0));
  for (std::size_t n = 0; n <= 100; ++n) {
    pascal[n][0] = 1;
    for (std::size_t k = 1; k <= n; ++k) pascal[n][k] = pascal[n - 1][k - 1] + (k <= n - 1 ? pascal[n - 1][k] : 0);
  }
  std::uint64_t oracle_k = 0;
  Rational oracle_p;
  for (std::uint64_t k = 2; k <= 100 && !oracle_k; ++k) {
    const Rational p(pascal[90][1] * pascal[10][k - 1], pascal[100][k]);
    if (p <= Rational(1, 1000)) oracle_k = k, oracle_p = p;
  }
  const BigUint oracle_z = (BigUint(1) << 512) / 20;
  const bool ok = s.k == 5 && oracle_k == 5 && s.probability == oracle_p && z == oracle_z && dt < 1.0;
  report(2, "committee size and sortition threshold", ok);
  detail("K = %llu (oracle %llu), P(K) = %s ~ %.4g", static_cast<unsigned long long>(s.k),
         static_cast<unsigned long long>(oracle_k), s.probability.str().c_str(), static_cast<double>(s.probability));
  detail("Z == floor(2^512 / 20): %s, %.4f s", z == oracle_z ? "yes" : "no", dt);
}

void criterion_3() {
  const auto t0 = Clock::now();
  bool ok = true;
  for (auto kind : {adversary::AttackKind::non_colluding, adversary::AttackKind::colluding}) {
    std::size_t exact = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      const auto o = sim::run_simulated_attack({kind, false, true}, seed);
      worst = std::max(worst, o.relative_l2_error);
      exact += o.succeeded && o.relative_l2_error < 1e-9;
    }
    ok = ok && exact == 100;
    detail("%s: %zu/100 reconstructions below 1e-9, worst error %.3g", adversary::to_string(kind).c_str(), exact, worst);
  }
  const double dt = seconds_since(t0);
  detail("%.2f s", dt);
  report(3, "attack soundness without defenses", ok && dt < 10.0);
}

void criterion_4() {
  bool ok = true;
  for (auto kind : {adversary::AttackKind::non_colluding, adversary::AttackKind::colluding}) {
    std::size_t failed = 0;
    double best = 1e300;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      const auto o = sim::run_simulated_attack({kind, true, true}, seed);
      best = std::min(best, o.relative_l2_error);
      failed += !o.succeeded && o.relative_l2_error > 0.1;
    }
    ok = ok && failed == 100;
    detail("%s under C = 2: %zu/100 failed with error > 0.1, smallest error %.3f", adversary::to_string(kind).c_str(),
           failed, best);
  }
  std::size_t bitwise = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto t = sim::cluster_defense_trace(seed);
    bitwise += t.noncolluding_equals_pair && t.colluding_equals_pair && !t.noncolluding.succeeded &&
               !t.colluding.succeeded;
  }
  ok = ok && bitwise == 100;
  detail("ring trace: estimate == x_M1 + x_M2 bitwise in %zu/100 traces", bitwise);

  std::size_t bad_rounds = 0, checked = 0;
  for (auto mode : {sim::Mode::cluster_local, sim::Mode::cluster_global})
    for (auto seed : kSeeds) {
      const auto& r = run_for(mode, seed);
      const auto clusters = cluster::clusters_from_sizes(r.config.cluster_sizes);
      for (const auto& l : r.rounds) {
        ++checked;
        bad_rounds += l.vulnerable_clusters != 0 ||
                      cluster::count_vulnerable_clusters(l.participants, clusters, r.privacy_threshold) != 0;
      }
    }
  ok = ok && bad_rounds == 0;
  detail("cluster modes: %zu of %zu rounds with a vulnerable cluster", bad_rounds, checked);

  double total_fraction = 0.0;
  for (auto seed : kSeeds) {
    const auto r = sim::run_experiment(shipped_config(sim::Mode::insecure_global, seed));
    std::size_t v = 0;
    for (const auto& l : r.rounds) v += l.vulnerable_clusters > 0;
    const double frac = static_cast<double>(v) / static_cast<double>(r.rounds.size());
    total_fraction += frac;
    detail("insecure_global seed %llu: %zu/%zu rounds with a vulnerable cluster (%.1f%%)",
           static_cast<unsigned long long>(seed), v, r.rounds.size(), 100 * frac);
  }
  const double mean = total_fraction / 5.0;
  ok = ok && mean >= 0.10;
  detail("insecure_global mean fraction %.1f%% (needs >= 10%%)", 100 * mean);

  // For the record: the same defended attack with sample-weighted updates.
  double best_weighted = 1e300;
  std::size_t weighted_success = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto cfg = sim::attack_config({adversary::AttackKind::non_colluding, true, true}, seed);
    cfg.weighting = sim::Weighting::samples;
    for (const auto& l : sim::run_experiment(cfg).rounds)
      if (l.attack) {
        best_weighted = std::min(best_weighted, l.attack->outcome.relative_l2_error);
        weighted_success += l.attack->outcome.succeeded;
      }
  }
  detail("info: defended non_colluding with sample weighting: %zu/100 succeeded, smallest error %.3f",
         weighted_success, best_weighted);
  report(4, "cluster defense", ok);
}

void criterion_5() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> size(2, 50);
  constexpr std::size_t kDim = 32;
  std::size_t exact = 0;
  for (std::size_t trial = 0; trial < 1000; ++trial) {
    const std::size_t n = size(rng);
    std::vector<ClientId> ids;
    for (ClientId i = 0; ids.size() < n; ++i)
      if (rng() % 3 == 0) ids.push_back(i);
    sa::SecureAggregationRound round(trial, ids, kDim, rng());
    sa::RingVector plain(kDim, 0);
    for (ClientId id : ids) {
      sa::EncodedUpdate e{id, 1.0, sa::RingVector(kDim)};
      for (auto& v : e.values) v = rng();
      for (std::size_t k = 0; k < kDim; ++k) plain[k] += e.values[k];
      round.submit(std::move(e));
    }
    exact += round.aggregate() == plain;
  }
  const double dt = seconds_since(t0);
  report(5, "secure aggregation exactness", exact == 1000 && dt < 5.0);
  detail("%zu/1000 committees (sizes 2..50) bit-exact, %.2f s", exact, dt);
}

void criterion_6() {
  const auto t0 = Clock::now();
  bool ok = true;

  // Determinism and audit round trip.
  std::size_t det = 0, audits = 0;
  const Bytes alpha{0, 0, 0, 0, 0, 0, 0, 1, 0x3f, 0xf0, 0, 0, 0, 0, 0, 0};
  const auto z = vrf::selection_threshold(5, 20, 1);
  for (ClientId i = 0; i < 100; ++i) {
    const auto kp = sim::client_keys(6, i);
    const auto a = vrf::draw_ticket(kp, i, alpha), b = vrf::draw_ticket(kp, i, alpha);
    det += a.beta == b.beta && a.proof == b.proof;
    auto forged = a;
    forged.beta += 1;
    const bool expected = a.beta < z;
    audits += vrf::audit_winner(a, kp.public_key, alpha, z) == expected &&
              !vrf::audit_winner(forged, kp.public_key, alpha, crypto::beta_space());
  }
  ok = ok && det == 100 && audits == 100;
  detail("determinism %zu/100, audit round trip %zu/100", det, audits);

  for (auto s : adversary::kAllTamperStrategies) {
    std::size_t detected = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) detected += sim::tamper_trial(seed, s).detection.detected;
    ok = ok && detected == 100;
    detail("tamper %-15s detected %zu/100", adversary::to_string(s).c_str(), detected);
  }

  const auto rate = sim::selection_rate_experiment(20, 5, 2000, 1);
  const auto [lo, hi] = std::minmax_element(rate.rates.begin(), rate.rates.end());
  ok = ok && rate.outside_3se == 0;
  detail("selection rate over 2000 rounds: expected %.4f, clients in [%.4f, %.4f], SE %.4f, %zu outside 3 SE",
         rate.expected, *lo, *hi, rate.standard_error, rate.outside_3se);
  const bool size_ok = std::abs(rate.mean_committee - rate.expected_committee) <= 0.05 * rate.expected_committee;
  ok = ok && size_ok;
  detail("mean committee %.3f vs expected %.3f", rate.mean_committee, rate.expected_committee);

  const double p_max = 0.05;
  const auto pool = sim::pool_quality_experiment(10, 0.6, p_max, 100000, 1);
  const double p = static_cast<double>(pool.solution.probability);
  const double se = std::sqrt(p * (1 - p) / static_cast<double>(pool.draws));
  ok = ok && pool.frequency() <= 2 * p_max && std::abs(pool.frequency() - p) <= 4 * se;
  detail("pool quality (N = 10, X = 0.6, p_max = %.2f, K = %llu): bad events %.5f over %zu draws, exact P = %.5f",
         p_max, static_cast<unsigned long long>(pool.solution.k), pool.frequency(), pool.draws, p);

  const double dt = seconds_since(t0);
  detail("%.1f s", dt);
  report(6, "sortition protocol properties", ok && dt < 120.0);
}

void criterion_7() {
  std::map<sim::Mode, std::vector<double>> hits;
  for (auto seed : kSeeds) {
    const auto env = sim::build_environment(shipped_config(sim::Mode::baseline_random, seed));
    const double target = 1.1 * sim::central_baseline_loss(env.initial_model, env.train, 2000);
    std::string line;
    for (auto mode : kEfficiencyModes) {
      const auto& r = run_for(mode, seed);
      const auto hit = sim::rounds_to_loss(r, target);
      const double rounds = hit ? static_cast<double>(*hit) : static_cast<double>(r.rounds.size() + 1);
      hits[mode].push_back(rounds);
      line += " " + sim::to_string(mode) + "=" + (hit ? std::to_string(*hit) : std::string("none"));
    }
    detail("seed %llu, target loss %.5f:%s", static_cast<unsigned long long>(seed), target, line.c_str());
  }
  const double random_median = sim::median(hits[sim::Mode::baseline_random]);
  bool some_better = false, none_much_worse = true;
  for (auto mode : {sim::Mode::cluster_local, sim::Mode::cluster_global, sim::Mode::vrf}) {
    const double m = sim::median(hits[mode]);
    some_better = some_better || m <= random_median;
    none_much_worse = none_much_worse && m <= 1.2 * random_median;
    detail("median rounds %-15s %.0f (%.2fx random)", sim::to_string(mode).c_str(), m, m / random_median);
  }
  detail("median rounds %-15s %.0f", "baseline_random", random_median);
  report(7, "training efficiency against random selection", some_better && none_much_worse);
}

void criterion_8() {
  bool ok = true;
  const std::size_t p = 10000;
  const std::uint64_t q = p * 8 + fl::kScaleOverheadBits, f = fl::float32_payload_bits(p);
  const double ratio = static_cast<double>(q) / static_cast<double>(f);
  ok = ok && std::abs(ratio / 0.25 - 1.0) <= 0.01;
  detail("10^4 parameters: %llu vs %llu bits, ratio %.6f (overhead %llu bits)", static_cast<unsigned long long>(q),
         static_cast<unsigned long long>(f), ratio, static_cast<unsigned long long>(fl::kScaleOverheadBits));

  const auto& quant = run_for(sim::Mode::cluster_local, 1);
  const auto& plain = run_for(sim::Mode::baseline_random, 1);
  ok = ok && quant.payload_bits_per_client == quant.parameter_count * 8 + fl::kScaleOverheadBits &&
       plain.payload_bits_per_client == plain.parameter_count * 32;
  detail("runs: %zu parameters, quantized %llu bits, float32 %llu bits per client", quant.parameter_count,
         static_cast<unsigned long long>(quant.payload_bits_per_client),
         static_cast<unsigned long long>(plain.payload_bits_per_client));

  double worst = 0.0;
  std::size_t rounds = 0;
  bool constants = true;
  for (const auto& [key, r] : g_runs) {
    constants = constants && r.config.channel.power_watts == 0.1 && r.config.channel.bandwidth_hz == 1e6;
    for (const auto& l : r.rounds) {
      double sum = 0.0;
      for (const auto& e : l.entries) {
        const double t = static_cast<double>(e.payload_bits) / utility::channel_rate(1e6, e.snr_db);
        sum += 0.1 * t;
      }
      worst = std::max(worst, std::abs(l.energy_j - sum) / std::max(sum, 1e-300));
      ++rounds;
    }
  }
  ok = ok && constants && worst <= 1e-9;
  detail("round energy vs sum of 0.1 W x T over %zu rounds: worst relative gap %.3g", rounds, worst);
  report(8, "communication and energy accounting", ok);
}

void criterion_9() {
  const std::vector<double> eig{0.05, 0.3, 0.7, 1.2, 2.5, 3.0, 5.0};
  const auto f = sim::QuadraticObjective::with_spectrum(eig, 9);
  const double l = f.smoothness();
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(7, 2.0);
  const auto exact = sim::quadratic_descent_slacks(f, theta, 1.0 / l, 200, l);
  const auto halved = sim::quadratic_descent_slacks(f, theta, 1.0 / l, 200, l / 2);
  const double min_exact = *std::min_element(exact.begin(), exact.end());
  const auto flagged = std::count_if(halved.begin(), halved.end(), [](double s) { return s < sim::kDescentTolerance; });
  report(9, "descent-inequality diagnostic", min_exact >= sim::kDescentTolerance && flagged > 0);
  detail("L = %.6f (largest eigenvalue 5); 200 rounds, smallest slack %.3g", l, min_exact);
  detail("with L / 2: %ld of 200 rounds flagged", static_cast<long>(flagged));
}

void criterion_10() {
  bool ok = true;
  for (auto mode : sim::kAllModes) {
    auto c = shipped_config(mode, 3);
    c.rounds = std::min<std::size_t>(c.rounds, 60);
    const auto a = rounds_csv(sim::run_experiment(c)), b = rounds_csv(sim::run_experiment(c));
    ok = ok && a == b;
    detail("%-18s rerun byte-identical: %s (%zu bytes)", sim::to_string(mode).c_str(), a == b ? "yes" : "no", a.size());
  }
  const auto again = rounds_csv(sim::run_experiment(shipped_config(sim::Mode::cluster_local, 1)));
  const bool full = again == rounds_csv(run_for(sim::Mode::cluster_local, 1));
  ok = ok && full;
  detail("cluster_local 300 rounds rerun byte-identical: %s", full ? "yes" : "no");
  report(10, "determinism", ok);
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const std::vector<std::function<void()>> criteria{criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                                                    criterion_6, criterion_7, criterion_8, criterion_9, criterion_10};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      detail("exception: %s", e.what());
      report(static_cast<int>(i + 1), "aborted", false);
    }
    flush();
  }
  std::printf("%d of 10 criteria failed, %.1f s\n", failures, seconds_since(t0));
  return failures;
}
