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

// Pairwise-masking secure aggregation over Z_{2^64}.
//
// Every unordered pair {i, j} of committed participants shares a mask
// m_ij = -m_ji drawn from a seeded PRG. Client i adds sum_{j != i} m_ij to
// its encoded update, so the masks cancel in the sum over the full
// participant set. There is no dropout recovery: every committed participant
// must deliver.

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fedselect/common.hpp"
#include "fedselect/fl_engine.hpp"

namespace fedselect::sa {

using RingVector = std::vector<std::uint64_t>;

/// Quantized codes lifted into the ring (two's complement). The scale is the
/// public quantization step shared by the round.
struct EncodedUpdate {
  ClientId owner = 0;
  double scale = 1.0;
  RingVector values;

  friend bool operator==(const EncodedUpdate&, const EncodedUpdate&) = default;
};

struct MaskedUpdate {
  ClientId owner = 0;
  std::uint64_t round = 0;
  RingVector values;
};

/// Largest committee for which a sum of 8-bit codes provably fits in int64.
inline constexpr std::uint64_t kMaxParticipants = std::uint64_t{1} << 20;

inline bool decoded_sum_is_exact(std::uint64_t participants, int bits = 8) {
  if (participants > kMaxParticipants) return false;
  const auto bound = static_cast<unsigned __int128>(participants) * static_cast<unsigned __int128>(fl::max_code(bits));
  return bound < static_cast<unsigned __int128>(std::numeric_limits<std::int64_t>::max());
}

inline EncodedUpdate encode(ClientId owner, const fl::QuantizedPayload& q) {
  EncodedUpdate e;
  e.owner = owner;
  e.scale = q.scale;
  e.values.reserve(q.codes.size());
  for (std::int8_t c : q.codes) e.values.push_back(static_cast<std::uint64_t>(static_cast<std::int64_t>(c)));
  return e;
}

/// Ring elements back to signed integers (two's complement).
inline std::vector<std::int64_t> decode_signed(std::span<const std::uint64_t> ring) {
  std::vector<std::int64_t> out(ring.size());
  for (std::size_t i = 0; i < ring.size(); ++i) out[i] = static_cast<std::int64_t>(ring[i]);
  return out;
}

/// Signed ring integers times the public scale.
inline std::vector<double> decode_real(std::span<const std::uint64_t> ring, double scale) {
  std::vector<double> out(ring.size());
  for (std::size_t i = 0; i < ring.size(); ++i) out[i] = static_cast<double>(static_cast<std::int64_t>(ring[i])) * scale;
  return out;
}

inline RingVector ring_add(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) throw DomainError("ring vectors differ in length");
  RingVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline RingVector ring_sub(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) throw DomainError("ring vectors differ in length");
  RingVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline RingVector ring_negate(std::span<const std::uint64_t> a) {
  RingVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::uint64_t{0} - a[i];
  return out;
}

/// Pairwise masks for one committed participant set.
class MaskTable {
 public:
  MaskTable(std::vector<ClientId> participants, std::size_t length, std::uint64_t seed)
      : participants_(std::move(participants)), length_(length), seed_(seed) {
    std::set<ClientId> unique(participants_.begin(), participants_.end());
    if (unique.size() != participants_.size()) throw DomainError("duplicate participant id");
    if (participants_.size() < 2) throw DomainError("secure aggregation needs at least 2 participants");
  }

  const std::vector<ClientId>& participants() const { return participants_; }
  std::size_t length() const { return length_; }

  /// m_ij; the PRG is keyed by the unordered pair, the sign by the order.
  RingVector pair_mask(ClientId i, ClientId j) const {
    require_member(i);
    require_member(j);
    if (i == j) throw DomainError("no self mask");
    const ClientId lo = std::min(i, j), hi = std::max(i, j);
    std::mt19937_64 prg(derive_seed(seed_, 0x3A5C, lo, hi));
    RingVector m(length_);
    for (auto& v : m) v = prg();
    return i < j ? m : ring_negate(m);
  }

  /// sum_{j != i} m_ij, the mask client i adds to its update.
  RingVector mask_row(ClientId i) const {
    require_member(i);
    RingVector row(length_, 0);
    for (ClientId j : participants_) {
      if (j == i) continue;
      auto m = pair_mask(i, j);
      for (std::size_t k = 0; k < length_; ++k) row[k] += m[k];
    }
    return row;
  }

 private:
  void require_member(ClientId id) const {
    if (std::find(participants_.begin(), participants_.end(), id) == participants_.end())
      throw ProtocolError("client " + std::to_string(id) + " is not a committed participant");
  }

  std::vector<ClientId> participants_;
  std::size_t length_;
  std::uint64_t seed_;
};

inline MaskTable setup_masks(std::vector<ClientId> participants, std::size_t length, std::uint64_t seed) {
  return MaskTable(std::move(participants), length, seed);
}

inline MaskedUpdate mask_update(const EncodedUpdate& encoded, std::span<const std::uint64_t> mask_row,
                                std::uint64_t round = 0) {
  MaskedUpdate m;
  m.owner = encoded.owner;
  m.round = round;
  m.values = ring_add(encoded.values, mask_row);
  return m;
}

/// Modular sum of the masked updates. Fails unless the list covers the
/// committed set exactly once each.
inline RingVector aggregate(std::span<const MaskedUpdate> masked, std::span<const ClientId> committed) {
  std::set<ClientId> expected(committed.begin(), committed.end());
  std::set<ClientId> seen;
  for (const auto& m : masked) {
    if (!expected.contains(m.owner))
      throw ProtocolError("masked update from uncommitted client " + std::to_string(m.owner));
    if (!seen.insert(m.owner).second) throw ProtocolError("duplicate masked update from " + std::to_string(m.owner));
  }
  for (ClientId id : expected)
    if (!seen.contains(id)) throw ProtocolError("missing masked update from participant " + std::to_string(id));
  if (masked.empty()) return {};
  RingVector sum(masked.front().values.size(), 0);
  for (const auto& m : masked) {
    if (m.values.size() != sum.size()) throw ProtocolError("masked update length mismatch");
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += m.values[k];
  }
  return sum;
}

inline std::string ring_to_hex(std::span<const std::uint64_t> values) {
  Bytes buf;
  buf.reserve(values.size() * 8);
  for (auto v : values) append_u64_be(buf, v);
  return to_hex(buf);
}

/// One round of SA as seen from both sides. Clients submit encoded updates,
/// which are masked on submission; the unmasked values stay on the client
/// side. The aggregator-facing surface returns masked vectors, the modular
/// sum, and whatever colluding clients choose to hand over.
class SecureAggregationRound {
 public:
  SecureAggregationRound(std::uint64_t round, std::vector<ClientId> participants, std::size_t length,
                         std::uint64_t seed)
      : round_(round), table_(std::move(participants), length, seed) {}

  void submit(EncodedUpdate encoded) {
    if (encoded.values.size() != table_.length()) throw ProtocolError("encoded update length mismatch");
    if (client_side_.contains(encoded.owner)) throw ProtocolError("client submitted twice");
    auto row = table_.mask_row(encoded.owner);
    if (!client_side_.empty() && client_side_.begin()->second.scale != encoded.scale)
      throw ProtocolError("participants disagree on the quantization scale");
    masked_.push_back(mask_update(encoded, row, round_));
    client_side_.emplace(encoded.owner, std::move(encoded));
  }

  const std::vector<ClientId>& participants() const { return table_.participants(); }
  std::uint64_t round() const { return round_; }

  // Aggregator role.
  const std::vector<MaskedUpdate>& masked_updates() const { return masked_; }
  RingVector aggregate() const { return sa::aggregate(masked_, table_.participants()); }
  double scale() const { return client_side_.empty() ? 1.0 : client_side_.begin()->second.scale; }

  /// Updates that colluding clients hand to the aggregator.
  std::vector<EncodedUpdate> leak_to_adversary(const std::set<ClientId>& colluders) const {
    std::vector<EncodedUpdate> out;
    for (ClientId id : colluders) {
      auto it = client_side_.find(id);
      if (it == client_side_.end()) throw DomainError("colluder " + std::to_string(id) + " is not a participant");
      out.push_back(it->second);
    }
    return out;
  }

 private:
  std::uint64_t round_;
  MaskTable table_;
  std::vector<MaskedUpdate> masked_;
  std::map<ClientId, EncodedUpdate> client_side_;
};

}  // namespace fedselect::sa
