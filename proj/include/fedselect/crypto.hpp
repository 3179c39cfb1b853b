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

// Deterministic signatures and a signature-based VRF.
//
// Signatures are Ed25519 (RFC 8032, deterministic nonces) via libsodium.
// The VRF proof for input alpha is the Ed25519 signature over
// kVrfDomain || alpha, and beta is SHA-512 of the proof read as a 512-bit
// big-endian integer. Anyone holding the public key can check the proof and
// recompute beta from it.

#pragma once

#include <sodium.h>

#include <algorithm>
#include <array>
#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "fedselect/common.hpp"

namespace fedselect::crypto {

using BigUint = boost::multiprecision::cpp_int;

inline constexpr std::size_t kSeedBytes = crypto_sign_SEEDBYTES;
inline constexpr std::size_t kPublicKeyBytes = crypto_sign_PUBLICKEYBYTES;
inline constexpr std::size_t kSecretKeyBytes = crypto_sign_SECRETKEYBYTES;
inline constexpr std::size_t kSignatureBytes = crypto_sign_BYTES;
inline constexpr std::size_t kBetaBits = 512;
inline constexpr std::size_t kBetaBytes = kBetaBits / 8;
inline constexpr std::string_view kVrfDomain = "fedselect/vrf/v1";

static_assert(kSignatureBytes == 64 && kPublicKeyBytes == 32);

using Seed = std::array<std::uint8_t, kSeedBytes>;
using PublicKey = std::array<std::uint8_t, kPublicKeyBytes>;
using SecretKey = std::array<std::uint8_t, kSecretKeyBytes>;

struct KeyPair {
  SecretKey secret_key{};
  PublicKey public_key{};
  std::uint64_t key_id = 0;

  friend bool operator==(const KeyPair&, const KeyPair&) = default;
};

struct Signature {
  std::array<std::uint8_t, kSignatureBytes> bytes{};

  friend bool operator==(const Signature&, const Signature&) = default;
};

struct VrfOutput {
  BigUint beta;
  Signature proof;
};

class MalformedProof : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void ensure_sodium() {
  static const bool ready = [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
    return true;
  }();
  (void)ready;
}

inline Bytes vrf_message(std::span<const std::uint8_t> alpha) {
  Bytes msg(kVrfDomain.size() + alpha.size());
  std::copy(kVrfDomain.begin(), kVrfDomain.end(), msg.begin());
  std::copy(alpha.begin(), alpha.end(), msg.begin() + static_cast<std::ptrdiff_t>(kVrfDomain.size()));
  return msg;
}

}  // namespace detail

/// 2^512, one past the largest beta.
inline const BigUint& beta_space() {
  static const BigUint kSpace = BigUint(1) << kBetaBits;
  return kSpace;
}

/// Expands a 64-bit seed into the 32-byte keygen seed (SHA-256 of a tagged
/// encoding), so simulations can name keys by integers.
inline Seed seed_from_u64(std::uint64_t value, std::string_view tag = "fedselect/keygen") {
  detail::ensure_sodium();
  Bytes buf(tag.begin(), tag.end());
  append_u64_be(buf, value);
  Seed seed{};
  crypto_hash_sha256(seed.data(), buf.data(), buf.size());
  return seed;
}

inline KeyPair keygen(const Seed& seed, std::uint64_t key_id = 0) {
  detail::ensure_sodium();
  KeyPair kp;
  kp.key_id = key_id;
  crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), seed.data());
  return kp;
}

inline Signature sign(const SecretKey& sk, std::span<const std::uint8_t> message) {
  if (message.empty()) throw DomainError("cannot sign an empty message");
  detail::ensure_sodium();
  Signature sig;
  crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(), sk.data());
  return sig;
}

inline Signature sign(const SecretKey& sk, std::string_view message) {
  return sign(sk, std::span(reinterpret_cast<const std::uint8_t*>(message.data()), message.size()));
}

/// Accepts a raw byte span so that wrong-length signatures are rejected
/// rather than treated as a fault.
inline bool verify_sig(const PublicKey& pk, std::span<const std::uint8_t> message,
                       std::span<const std::uint8_t> signature) {
  if (signature.size() != kSignatureBytes || message.empty()) return false;
  detail::ensure_sodium();
  return crypto_sign_verify_detached(signature.data(), message.data(), message.size(), pk.data()) == 0;
}

inline bool verify_sig(const PublicKey& pk, std::span<const std::uint8_t> message, const Signature& sig) {
  return verify_sig(pk, message, std::span<const std::uint8_t>(sig.bytes));
}

inline bool verify_sig(const PublicKey& pk, std::string_view message, const Signature& sig) {
  return verify_sig(pk, std::span(reinterpret_cast<const std::uint8_t*>(message.data()), message.size()), sig);
}

inline BigUint beta_from_bytes(std::span<const std::uint8_t> digest) {
  BigUint beta;
  boost::multiprecision::import_bits(beta, digest.begin(), digest.end(), 8, true);
  return beta;
}

/// Lowercase 128-digit big-endian hex, zero padded.
inline std::string beta_to_hex(const BigUint& beta) {
  std::array<std::uint8_t, kBetaBytes> out{};
  BigUint v = beta;
  for (std::size_t i = 0; i < kBetaBytes; ++i) {
    out[kBetaBytes - 1 - i] = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
  }
  return to_hex(out);
}

inline BigUint proof_to_hash(std::span<const std::uint8_t> proof) {
  if (proof.size() != kSignatureBytes) {
    throw MalformedProof("proof must be " + std::to_string(kSignatureBytes) + " bytes, got " +
                         std::to_string(proof.size()));
  }
  detail::ensure_sodium();
  std::array<std::uint8_t, kBetaBytes> digest{};
  crypto_hash_sha512(digest.data(), proof.data(), proof.size());
  return beta_from_bytes(digest);
}

inline BigUint proof_to_hash(const Signature& proof) {
  return proof_to_hash(std::span<const std::uint8_t>(proof.bytes));
}

inline VrfOutput vrf_hash(const SecretKey& sk, std::span<const std::uint8_t> alpha) {
  if (alpha.empty()) throw DomainError("VRF input alpha must be non-empty");
  VrfOutput out;
  out.proof = sign(sk, detail::vrf_message(alpha));
  out.beta = proof_to_hash(out.proof);
  return out;
}

inline bool vrf_verify(const PublicKey& pk, std::span<const std::uint8_t> alpha, const BigUint& beta,
                       std::span<const std::uint8_t> proof) {
  if (alpha.empty() || proof.size() != kSignatureBytes) return false;
  if (!verify_sig(pk, detail::vrf_message(alpha), proof)) return false;
  return proof_to_hash(proof) == beta;
}

inline bool vrf_verify(const PublicKey& pk, std::span<const std::uint8_t> alpha, const VrfOutput& out) {
  return vrf_verify(pk, alpha, out.beta, std::span<const std::uint8_t>(out.proof.bytes));
}

}  // namespace fedselect::crypto
