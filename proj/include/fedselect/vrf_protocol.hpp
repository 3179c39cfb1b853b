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

// Two-level selection for clients without clusters.
//
// Level one: deadline survivors sign their utilities; the aggregator ranks
// them (descending, ties to the lower id) and broadcasts the utility list
// with the signatures packed into independently zlib-compressed chunks.
// Anyone can check every entry and the order. The top ceil(0.8 m) entries
// are eligible.
//
// Level two: alpha = round || encodings of the eligible utilities in rank
// order. Each eligible client evaluates the VRF on alpha and wins iff
// beta < Z, with Z = min(floor(f K 2^512 / N), 2^512) and K the least
// committee size whose one-honest-rest-colluding probability is <= p_max.

#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fedselect/common.hpp"
#include "fedselect/crypto.hpp"

namespace fedselect::vrf {

using crypto::BigUint;
using Rational = boost::multiprecision::cpp_rational;

inline constexpr std::string_view kUtilityDomain = "fedselect/utility/v1";
inline constexpr int kChunkCompressionLevel = Z_BEST_COMPRESSION;

// ---------------------------------------------------------------------------
// Utility encoding and signing

using UtilityEncoding = std::array<std::uint8_t, 8>;

/// 8-byte big-endian IEEE-754 binary64.
inline UtilityEncoding canonical_utility_encoding(double utility) {
  if (!std::isfinite(utility)) throw DomainError("utility must be finite");
  const auto bits = std::bit_cast<std::uint64_t>(utility);
  UtilityEncoding out{};
  for (std::size_t i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(bits >> (56 - 8 * i));
  return out;
}

inline double decode_utility(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw DomainError("utility encoding needs 8 bytes");
  return std::bit_cast<double>(read_u64_be(bytes));
}

/// Message a client signs: domain tag || round (u64 BE) || encoding.
/// Binding the round prevents replay of an earlier round's signed utility.
inline Bytes utility_message(std::uint64_t round, double utility) {
  Bytes msg(kUtilityDomain.begin(), kUtilityDomain.end());
  append_u64_be(msg, round);
  const auto enc = canonical_utility_encoding(utility);
  msg.insert(msg.end(), enc.begin(), enc.end());
  return msg;
}

struct SignedUtility {
  ClientId client = 0;
  double utility = 0.0;
  crypto::Signature signature;
};

inline SignedUtility sign_utility(const crypto::KeyPair& kp, ClientId client, std::uint64_t round, double utility) {
  return {client, utility, crypto::sign(kp.secret_key, utility_message(round, utility))};
}

using KeyRegistry = std::map<ClientId, crypto::PublicKey>;

// ---------------------------------------------------------------------------
// Chunk compression

inline Bytes compress_chunk(std::span<const std::uint8_t> raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  Bytes out(bound);
  if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), kChunkCompressionLevel) != Z_OK)
    throw std::runtime_error("zlib compression failed");
  out.resize(bound);
  return out;
}

/// nullopt unless the chunk inflates to exactly `expected_size` bytes.
inline std::optional<Bytes> decompress_chunk(std::span<const std::uint8_t> compressed, std::size_t expected_size) {
  Bytes out(expected_size + 1);
  uLongf len = static_cast<uLongf>(out.size());
  if (uncompress(out.data(), &len, compressed.data(), static_cast<uLong>(compressed.size())) != Z_OK)
    return std::nullopt;
  if (len != expected_size) return std::nullopt;
  out.resize(len);
  return out;
}

// ---------------------------------------------------------------------------
// First level

struct RankedBroadcast {
  std::uint64_t round = 0;
  std::uint32_t chunk_size = 0;
  std::vector<ClientId> ids;      // rank order
  std::vector<double> utilities;  // rank order, descending
  std::vector<Bytes> chunks;      // chunk k holds signatures of ranks [k*chunk_size, (k+1)*chunk_size)

  std::size_t size() const { return ids.size(); }

  std::size_t entries_in_chunk(std::size_t k) const {
    const std::size_t start = k * chunk_size;
    return start >= ids.size() ? 0 : std::min<std::size_t>(chunk_size, ids.size() - start);
  }

  friend bool operator==(const RankedBroadcast&, const RankedBroadcast&) = default;
};

inline std::size_t chunk_count(std::size_t m, std::size_t chunk_size) { return (m + chunk_size - 1) / chunk_size; }

/// Packs `signatures` (rank order) into compressed chunks.
inline std::vector<Bytes> pack_signature_chunks(std::span<const crypto::Signature> signatures, std::size_t chunk_size) {
  std::vector<Bytes> chunks;
  for (std::size_t start = 0; start < signatures.size(); start += chunk_size) {
    Bytes raw;
    const std::size_t end = std::min(signatures.size(), start + chunk_size);
    for (std::size_t r = start; r < end; ++r) raw.insert(raw.end(), signatures[r].bytes.begin(), signatures[r].bytes.end());
    chunks.push_back(compress_chunk(raw));
  }
  return chunks;
}

/// Signature of the entry at `rank`, read by inflating only its chunk.
inline std::optional<crypto::Signature> signature_at(const RankedBroadcast& b, std::size_t rank) {
  if (b.chunk_size == 0 || rank >= b.size()) return std::nullopt;
  const std::size_t k = rank / b.chunk_size;
  if (k >= b.chunks.size()) return std::nullopt;
  auto raw = decompress_chunk(b.chunks[k], b.entries_in_chunk(k) * crypto::kSignatureBytes);
  if (!raw) return std::nullopt;
  crypto::Signature sig;
  const std::size_t offset = (rank % b.chunk_size) * crypto::kSignatureBytes;
  std::copy_n(raw->begin() + static_cast<std::ptrdiff_t>(offset), crypto::kSignatureBytes, sig.bytes.begin());
  return sig;
}

inline std::vector<crypto::Signature> unpack_signatures(const RankedBroadcast& b) {
  std::vector<crypto::Signature> out;
  for (std::size_t r = 0; r < b.size(); ++r) {
    auto s = signature_at(b, r);
    if (!s) throw DomainError("broadcast chunk " + std::to_string(r / b.chunk_size) + " does not decompress");
    out.push_back(*s);
  }
  return out;
}

/// True if entry (ua, ia) must precede (ub, ib).
inline bool ranks_before(double ua, ClientId ia, double ub, ClientId ib) { return ua != ub ? ua > ub : ia < ib; }

inline RankedBroadcast first_level_rank(std::span<const SignedUtility> submissions, std::uint64_t round,
                                        std::size_t chunk_size) {
  if (submissions.empty()) throw DomainError("first-level ranking needs at least one submission");
  if (chunk_size < 1) throw DomainError("chunk_size must be >= 1");
  std::vector<SignedUtility> sorted(submissions.begin(), submissions.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return ranks_before(a.utility, a.client, b.utility, b.client);
  });
  RankedBroadcast b;
  b.round = round;
  b.chunk_size = static_cast<std::uint32_t>(chunk_size);
  std::vector<crypto::Signature> sigs;
  for (const auto& s : sorted) {
    b.ids.push_back(s.client);
    b.utilities.push_back(s.utility);
    sigs.push_back(s.signature);
  }
  b.chunks = pack_signature_chunks(sigs, chunk_size);
  return b;
}

struct BroadcastVerdict {
  bool ok = true;
  std::optional<std::size_t> first_failing_rank;
  std::string reason;

  explicit operator bool() const { return ok; }
};

/// Checks structure, per-entry signatures and the descending order. The
/// verdict names the lowest failing rank.
inline BroadcastVerdict verify_ranked_broadcast(const RankedBroadcast& b, const KeyRegistry& keys) {
  auto fail = [](std::optional<std::size_t> rank, std::string reason) {
    return BroadcastVerdict{false, rank, std::move(reason)};
  };
  if (b.chunk_size == 0) return fail(std::nullopt, "zero chunk size");
  if (b.ids.size() != b.utilities.size()) return fail(std::nullopt, "id and utility lists differ in length");
  if (b.chunks.size() != chunk_count(b.size(), b.chunk_size)) return fail(std::nullopt, "wrong number of chunks");

  std::set<ClientId> seen;
  std::optional<Bytes> raw;
  std::size_t raw_chunk = static_cast<std::size_t>(-1);
  for (std::size_t r = 0; r < b.size(); ++r) {
    const std::size_t k = r / b.chunk_size;
    if (k != raw_chunk) {
      raw = decompress_chunk(b.chunks[k], b.entries_in_chunk(k) * crypto::kSignatureBytes);
      raw_chunk = k;
      if (!raw) return fail(r, "chunk " + std::to_string(k) + " does not decompress to its declared size");
    }
    const ClientId id = b.ids[r];
    if (!seen.insert(id).second) return fail(r, "client " + std::to_string(id) + " listed twice");
    if (!std::isfinite(b.utilities[r])) return fail(r, "non-finite utility");
    if (r > 0 && !ranks_before(b.utilities[r - 1], b.ids[r - 1], b.utilities[r], id))
      return fail(r, "order violation between ranks " + std::to_string(r - 1) + " and " + std::to_string(r));
    auto key = keys.find(id);
    if (key == keys.end()) return fail(r, "unknown client " + std::to_string(id));
    const auto offset = static_cast<std::ptrdiff_t>((r % b.chunk_size) * crypto::kSignatureBytes);
    std::span<const std::uint8_t> sig(raw->data() + offset, crypto::kSignatureBytes);
    if (!crypto::verify_sig(key->second, utility_message(b.round, b.utilities[r]), sig))
      return fail(r, "signature of client " + std::to_string(id) + " does not verify");
  }
  return {};
}

/// A client's own check that its submission is listed unaltered.
inline bool audit_inclusion(const RankedBroadcast& b, ClientId self, double submitted_utility) {
  auto it = std::find(b.ids.begin(), b.ids.end(), self);
  if (it == b.ids.end()) return false;
  return b.utilities[static_cast<std::size_t>(it - b.ids.begin())] == submitted_utility;
}

/// ceil(0.8 m).
inline std::size_t eligible_count(std::size_t m) { return (4 * m + 4) / 5; }

inline std::vector<ClientId> eligible_cut(const RankedBroadcast& b) {
  return {b.ids.begin(), b.ids.begin() + static_cast<std::ptrdiff_t>(eligible_count(b.size()))};
}

/// round (u64 BE) || encodings of the eligible utilities in rank order.
inline Bytes build_alpha(const RankedBroadcast& b) {
  Bytes alpha;
  append_u64_be(alpha, b.round);
  const std::size_t n = eligible_count(b.size());
  for (std::size_t r = 0; r < n; ++r) {
    const auto enc = canonical_utility_encoding(b.utilities[r]);
    alpha.insert(alpha.end(), enc.begin(), enc.end());
  }
  return alpha;
}

// ---------------------------------------------------------------------------
// Broadcast wire format (all integers big-endian):
//
//   u64 round | u32 m | u32 chunk_size
//   m x u64 client id                 (rank order)
//   m x f64 utility                   (IEEE-754 binary64, rank order)
//   n_chunks x (u64 offset, u32 len)  offset relative to the first chunk byte
//   chunk bytes
//
// with n_chunks = ceil(m / chunk_size).

inline Bytes serialize_broadcast(const RankedBroadcast& b) {
  Bytes out;
  append_u64_be(out, b.round);
  append_u32_be(out, static_cast<std::uint32_t>(b.size()));
  append_u32_be(out, b.chunk_size);
  for (ClientId id : b.ids) append_u64_be(out, id);
  for (double u : b.utilities) {
    const auto enc = canonical_utility_encoding(u);
    out.insert(out.end(), enc.begin(), enc.end());
  }
  std::uint64_t offset = 0;
  for (const auto& c : b.chunks) {
    append_u64_be(out, offset);
    append_u32_be(out, static_cast<std::uint32_t>(c.size()));
    offset += c.size();
  }
  for (const auto& c : b.chunks) out.insert(out.end(), c.begin(), c.end());
  return out;
}

inline RankedBroadcast deserialize_broadcast(std::span<const std::uint8_t> in) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (in.size() - pos < n) throw DomainError("truncated broadcast");
  };
  need(16);
  RankedBroadcast b;
  b.round = read_u64_be(in.subspan(pos));
  const std::uint32_t m = read_u32_be(in.subspan(pos + 8));
  b.chunk_size = read_u32_be(in.subspan(pos + 12));
  pos += 16;
  if (b.chunk_size == 0) throw DomainError("broadcast declares zero chunk size");
  need(static_cast<std::size_t>(m) * 16);
  for (std::uint32_t r = 0; r < m; ++r, pos += 8) b.ids.push_back(read_u64_be(in.subspan(pos)));
  for (std::uint32_t r = 0; r < m; ++r, pos += 8) b.utilities.push_back(decode_utility(in.subspan(pos)));
  const std::size_t n_chunks = chunk_count(m, b.chunk_size);
  need(n_chunks * 12);
  std::vector<std::pair<std::uint64_t, std::uint32_t>> dir;
  for (std::size_t k = 0; k < n_chunks; ++k, pos += 12)
    dir.emplace_back(read_u64_be(in.subspan(pos)), read_u32_be(in.subspan(pos + 8)));
  const std::size_t base = pos;
  for (const auto& [offset, len] : dir) {
    if (offset > in.size() - base || len > in.size() - base - offset) throw DomainError("chunk outside the broadcast");
    auto first = in.begin() + static_cast<std::ptrdiff_t>(base + offset);
    b.chunks.emplace_back(first, first + len);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Second level

inline BigUint binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  BigUint r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// C(honest, 1) C(colluding, K - 1) / C(honest + colluding, K), exact.
inline Rational isolation_probability(std::uint64_t honest, std::uint64_t colluding, std::uint64_t k) {
  const BigUint den = binomial(honest + colluding, k);
  if (den == 0) return Rational(0);
  return Rational(binomial(honest, 1) * binomial(colluding, k - 1), den);
}

struct CommitteeSolution {
  std::uint64_t k = 0;
  Rational probability;
  std::uint64_t honest = 0;
  std::uint64_t colluding = 0;
  bool rounded = false;  // N*X was not integral and was rounded to nearest
};

inline CommitteeSolution required_committee_size(std::uint64_t n, double honest_fraction, double colluding_fraction,
                                                 double p_max) {
  if (n < 2) throw DomainError("N must be >= 2");
  if (!(honest_fraction >= 0.0 && colluding_fraction >= 0.0) ||
      std::abs(honest_fraction + colluding_fraction - 1.0) > 1e-9)
    throw DomainError("honest and colluding fractions must be nonnegative and sum to 1");
  if (!(p_max >= 0.0 && p_max < 1.0)) throw DomainError("p_max must be in [0, 1)");
  const double exact_honest = static_cast<double>(n) * honest_fraction;
  CommitteeSolution s;
  s.honest = static_cast<std::uint64_t>(std::llround(exact_honest));
  s.honest = std::min(s.honest, n);
  s.colluding = n - s.honest;
  s.rounded = std::abs(exact_honest - std::round(exact_honest)) > 1e-9;
  const Rational bound(p_max);  // exact binary value of the double
  for (std::uint64_t k = 2; k <= n; ++k) {
    auto p = isolation_probability(s.honest, s.colluding, k);
    if (p <= bound) {
      s.k = k;
      s.probability = p;
      return s;
    }
  }
  throw InfeasibleParameters("no committee size K <= N meets the requested attack probability");
}

/// min(floor(f K 2^512 / N), 2^512).
inline BigUint selection_threshold(std::uint64_t k, std::uint64_t n, std::uint64_t f) {
  if (n < 1 || k < 1 || k > n) throw DomainError("need 1 <= K <= N");
  if (f < 1) throw DomainError("conservative factor f must be >= 1");
  BigUint z = (BigUint(f) * BigUint(k) * crypto::beta_space()) / BigUint(n);
  return z > crypto::beta_space() ? crypto::beta_space() : z;
}

struct VrfTicket {
  ClientId client = 0;
  Bytes alpha;
  BigUint beta;
  crypto::Signature proof;
  crypto::PublicKey public_key{};
};

inline VrfTicket draw_ticket(const crypto::KeyPair& kp, ClientId client, std::span<const std::uint8_t> alpha) {
  auto out = crypto::vrf_hash(kp.secret_key, alpha);
  return {client, Bytes(alpha.begin(), alpha.end()), std::move(out.beta), out.proof, kp.public_key};
}

/// Full peer audit of a claimed win.
inline bool audit_winner(const VrfTicket& t, const crypto::PublicKey& pk, std::span<const std::uint8_t> alpha,
                         const BigUint& z) {
  if (t.public_key != pk) return false;
  if (!std::equal(t.alpha.begin(), t.alpha.end(), alpha.begin(), alpha.end())) return false;
  if (!crypto::vrf_verify(pk, alpha, t.beta, t.proof.bytes)) return false;
  if (crypto::proof_to_hash(t.proof) != t.beta) return false;
  return t.beta < z;
}

struct WinnerSet {
  std::vector<ClientId> winners;   // ascending id
  std::vector<ClientId> rejected;  // tickets that failed verification
};

/// W = {i : beta_i < Z} over tickets that verify against the registry key
/// and the round's alpha.
inline WinnerSet winner_set(std::span<const VrfTicket> tickets, std::span<const std::uint8_t> alpha, const BigUint& z,
                            const KeyRegistry& keys) {
  WinnerSet w;
  for (const auto& t : tickets) {
    auto key = keys.find(t.client);
    const bool valid = key != keys.end() && key->second == t.public_key &&
                       std::equal(t.alpha.begin(), t.alpha.end(), alpha.begin(), alpha.end()) &&
                       crypto::vrf_verify(key->second, alpha, t.beta, t.proof.bytes);
    if (!valid) {
      w.rejected.push_back(t.client);
      continue;
    }
    if (t.beta < z) w.winners.push_back(t.client);
  }
  std::sort(w.winners.begin(), w.winners.end());
  std::sort(w.rejected.begin(), w.rejected.end());
  return w;
}

/// The K tickets with the smallest beta. Conditioned on |W| = K the
/// threshold rule yields exactly this set, which is a uniform K-subset of
/// the eligible clients.
inline std::vector<ClientId> lowest_beta_committee(std::span<const VrfTicket> tickets, std::size_t k) {
  std::vector<const VrfTicket*> order;
  for (const auto& t : tickets) order.push_back(&t);
  std::sort(order.begin(), order.end(), [](const VrfTicket* a, const VrfTicket* b) {
    return a->beta != b->beta ? a->beta < b->beta : a->client < b->client;
  });
  std::vector<ClientId> out;
  for (std::size_t i = 0; i < k && i < order.size(); ++i) out.push_back(order[i]->client);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace fedselect::vrf
