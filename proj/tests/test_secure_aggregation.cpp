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

#include <random>

#include "fedselect/secure_aggregation.hpp"

namespace fedselect::sa {
namespace {

constexpr std::uint64_t kMinus(std::uint64_t v) { return std::uint64_t{0} - v; }

TEST(Encode, RoundTrip) {
  const std::vector<double> g{0.0, 1.0, -2.0, 0.25};
  const auto q = fl::quantize(g);
  const auto e = encode(3, q);
  EXPECT_EQ(e.values.size(), g.size());
  const auto codes = decode_signed(e.values);
  for (std::size_t i = 0; i < codes.size(); ++i) EXPECT_EQ(codes[i], q.codes[i]);
  const auto real = decode_real(e.values, q.scale);
  EXPECT_EQ(real, fl::dequantize(q));
}

TEST(Masks, Antisymmetric) {
  const auto t = setup_masks({4, 9, 17}, 8, 42);
  const auto a = t.pair_mask(4, 9), b = t.pair_mask(9, 4);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(a[k] + b[k], 0u);
}

TEST(Masks, DeterministicInSeed) {
  EXPECT_EQ(setup_masks({1, 2}, 4, 7).mask_row(1), setup_masks({1, 2}, 4, 7).mask_row(1));
  EXPECT_NE(setup_masks({1, 2}, 4, 7).mask_row(1), setup_masks({1, 2}, 4, 8).mask_row(1));
}

TEST(Masks, RowsTelescopeToZero) {
  const auto t = setup_masks({0, 1, 2}, 5, 3);
  RingVector total(5, 0);
  for (ClientId i : {0, 1, 2}) total = ring_add(total, t.mask_row(i));
  EXPECT_EQ(total, RingVector(5, 0));
}

TEST(Masks, NeedTwoDistinctParticipants) {
  EXPECT_THROW(setup_masks({1}, 4, 1), DomainError);
  EXPECT_THROW(setup_masks({1, 1}, 4, 1), DomainError);
}

TEST(Aggregate, HandExample) {
  const EncodedUpdate u1{0, 1.0, {3, 5}}, u2{1, 1.0, {7, 1}};
  const RingVector m1{4, 9}, m2{kMinus(4), kMinus(9)};
  const auto x1 = mask_update(u1, m1), x2 = mask_update(u2, m2);
  EXPECT_EQ(x1.values, (RingVector{7, 14}));
  EXPECT_EQ(x2.values, (RingVector{3, kMinus(8)}));
  const std::vector<MaskedUpdate> all{x1, x2};
  const std::vector<ClientId> ids{0, 1};
  EXPECT_EQ(aggregate(all, ids), (RingVector{10, 6}));
}

TEST(Aggregate, HugeMasksCancel) {
  const EncodedUpdate u1{0, 1.0, {1, 2}}, u2{1, 1.0, {3, 4}};
  const RingVector m{~std::uint64_t{0}, std::uint64_t{1} << 63};
  const std::vector<MaskedUpdate> all{mask_update(u1, m), mask_update(u2, ring_negate(m))};
  const std::vector<ClientId> ids{0, 1};
  EXPECT_EQ(aggregate(all, ids), (RingVector{4, 6}));
}

TEST(Aggregate, TwentyRandomParticipantsMatchPlainSum) {
  std::mt19937_64 rng(20);
  std::vector<ClientId> ids;
  for (ClientId i = 0; i < 20; ++i) ids.push_back(i * 7 + 1);
  SecureAggregationRound round(1, ids, 32, 99);
  RingVector plain(32, 0);
  for (ClientId id : ids) {
    EncodedUpdate e{id, 0.5, RingVector(32)};
    for (auto& v : e.values) v = rng();
    plain = ring_add(plain, e.values);
    round.submit(e);
  }
  EXPECT_EQ(round.aggregate(), plain);
  for (const auto& m : round.masked_updates()) EXPECT_EQ(m.round, 1u);
}

TEST(Aggregate, MissingDuplicateOrForeignRejected) {
  const auto t = setup_masks({0, 1, 2}, 2, 1);
  std::vector<MaskedUpdate> masked;
  for (ClientId i : {0, 1}) masked.push_back(mask_update({i, 1.0, {1, 1}}, t.mask_row(i)));
  const std::vector<ClientId> committed{0, 1, 2};
  EXPECT_THROW(aggregate(masked, committed), ProtocolError);
  masked.push_back(masked.front());
  const std::vector<ClientId> two{0, 1};
  EXPECT_THROW(aggregate(masked, two), ProtocolError);
  masked.pop_back();
  masked.push_back(mask_update({5, 1.0, {1, 1}}, RingVector{0, 0}));
  EXPECT_THROW(aggregate(masked, two), ProtocolError);
}

TEST(Round, RejectsMismatchedSubmissions) {
  SecureAggregationRound round(1, {0, 1}, 2, 1);
  round.submit({0, 0.5, {1, 2}});
  EXPECT_THROW(round.submit({0, 0.5, {1, 2}}), ProtocolError);
  EXPECT_THROW(round.submit({1, 0.25, {1, 2}}), ProtocolError);
  EXPECT_THROW(round.submit({1, 0.5, {1}}), ProtocolError);
}

TEST(Leak, ColludersHandOverExactlyTheirUpdates) {
  SecureAggregationRound round(1, {0, 1, 2}, 2, 1);
  for (ClientId i : {0, 1, 2}) round.submit({i, 1.0, {i, 10 + i}});
  EXPECT_TRUE(round.leak_to_adversary({}).empty());
  const auto one = round.leak_to_adversary({1});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].values, (RingVector{1, 11}));
  EXPECT_EQ(round.leak_to_adversary({0, 1, 2}).size(), 3u);
  EXPECT_THROW(round.leak_to_adversary({7}), DomainError);
}

TEST(Decode, SumOfCodesIsExactForLargeCommittees) {
  EXPECT_TRUE(decoded_sum_is_exact(50));
  EXPECT_TRUE(decoded_sum_is_exact(kMaxParticipants));
  EXPECT_FALSE(decoded_sum_is_exact(kMaxParticipants + 1));
  std::vector<std::uint64_t> ring(1, 0);
  for (int i = 0; i < 1000; ++i) ring[0] += static_cast<std::uint64_t>(std::int64_t{-127});
  EXPECT_EQ(decode_signed(ring)[0], -127000);
}

}  // namespace
}  // namespace fedselect::sa
