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


#include <gtest/gtest.h>

#include <cmath>

#include "fedselect/client_utility.hpp"
#include "fedselect/fl_engine.hpp"

namespace fedselect::utility {
namespace {

TEST(Utility, Limits) {
  EXPECT_DOUBLE_EQ(compute_utility(2.5, 7.0, 3, 9, 1.0), 2.5);
  EXPECT_DOUBLE_EQ(compute_utility(9.0, 2.0, 5, 10, 0.0), 1.0);
}

TEST(Utility, MixedExample) { EXPECT_NEAR(compute_utility(2.0, 3.0, 10, 100, 0.4), 0.98, 1e-12); }

TEST(Utility, RecomputableFromComponents) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int i = 0; i < 100; ++i) {
    const double loss = u(rng), norm = u(rng), omega = u(rng) / 5.0;
    const std::size_t s = 1 + i, total = 1000;
    const double expected = omega * loss + (1 - omega) * norm * static_cast<double>(s) / static_cast<double>(total);
    EXPECT_NEAR(compute_utility(loss, norm, s, total, omega), expected, 1e-12);
  }
}

TEST(Utility, RejectsBadInputs) {
  EXPECT_THROW(compute_utility(1.0, 1.0, 1, 10, 1.5), DomainError);
  EXPECT_THROW(compute_utility(1.0, 1.0, 0, 10, 0.5), DomainError);
  EXPECT_THROW(compute_utility(1.0, 1.0, 11, 10, 0.5), DomainError);
  EXPECT_THROW(compute_utility(-1.0, 1.0, 1, 10, 0.5), DomainError);
}

TEST(Channel, Rates) {
  EXPECT_DOUBLE_EQ(channel_rate(1e6, 0.0), 1e6);
  EXPECT_NEAR(channel_rate(1e6, 30.0), 1e6 * std::log(1001.0) / std::log(2.0), 1e-3);
  EXPECT_NEAR(channel_rate(1e6, 30.0), 9.9672e6, 1e2);
  for (double snr : {0.0, 7.5, 30.0}) EXPECT_DOUBLE_EQ(channel_rate(2e6, snr), 2.0 * channel_rate(1e6, snr));
  EXPECT_THROW(channel_rate(0.0, 1.0), DomainError);
}

TEST(Channel, SnrDrawsInRange) {
  ChannelModel ch;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const double db = ch.sample_snr_db(s);
    EXPECT_GE(db, ch.snr_db_low);
    EXPECT_LE(db, ch.snr_db_high);
    EXPECT_GT(snr_linear(db), 0.0);
  }
  EXPECT_EQ(ch.sample_snr_db(5), ch.sample_snr_db(5));
}

TEST(Transmission, TimeAndEnergy) {
  EXPECT_DOUBLE_EQ(transmission_time(1'000'000, 1e6), 1.0);
  EXPECT_DOUBLE_EQ(energy(0.1, 1.0), 0.1);
  EXPECT_EQ(transmission_time(0, 1e6), 0.0);
  EXPECT_EQ(energy(0.1, 0.0), 0.0);
}

TEST(Transmission, QuantizedToFloatRatio) {
  const std::vector<double> g(10'000, 0.5);
  const auto q = fl::quantize(g);
  const double rate = channel_rate(1e6, 12.0);
  const double ratio = transmission_time(q.payload_bits(), rate) / transmission_time(fl::float32_payload_bits(g.size()), rate);
  EXPECT_NEAR(ratio, 0.25 + static_cast<double>(fl::kScaleOverheadBits) / (32.0 * 10'000), 1e-12);
  EXPECT_LE(ratio / 0.25 - 1.0, 0.01);
}

std::vector<UtilityRecord> with_times(std::vector<double> times) {
  std::vector<UtilityRecord> out;
  for (std::size_t i = 0; i < times.size(); ++i) out.push_back({i, 1.0, 0, 0, 0, times[i], 0});
  return out;
}

TEST(Deadline, Filter) {
  auto all = with_times({0.1, 0.2, 0.3});
  EXPECT_EQ(deadline_filter(all, 0.5).size(), 3u);
  EXPECT_TRUE(deadline_filter(all, 0.05).empty());
  auto two = with_times({0.4, 0.6});
  const auto kept = deadline_filter(two, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].client, 0u);
  EXPECT_THROW(deadline_filter(two, 0.0), DomainError);
}

}  // namespace
}  // namespace fedselect::utility
