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

#include <set>

#include "fedselect/crypto.hpp"

namespace fedselect::crypto {
namespace {

Bytes bytes_of(std::string_view s) { return Bytes(s.begin(), s.end()); }

KeyPair key(std::uint64_t s) { return keygen(seed_from_u64(s), s); }

TEST(Keygen, SameSeedSameKeys) { EXPECT_EQ(key(7), key(7)); }

TEST(Keygen, ThousandSeedsGiveDistinctKeys) {
  std::set<PublicKey> seen;
  for (std::uint64_t s = 0; s < 1000; ++s) seen.insert(key(s).public_key);
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Keygen, PublicKeyIsFunctionOfSecretKey) {
  // The Ed25519 secret key embeds the seed; re-deriving the public key from it must agree.
  const auto kp = key(3);
  PublicKey pk{};
  crypto_sign_ed25519_sk_to_pk(pk.data(), kp.secret_key.data());
  EXPECT_EQ(pk, kp.public_key);
}

TEST(Signature, RoundTrip) {
  const auto a = key(1), b = key(2);
  const auto sig = sign(a.secret_key, "3.14");
  EXPECT_TRUE(verify_sig(a.public_key, "3.14", sig));
  auto flipped = sig;
  flipped.bytes[0] ^= 0x01;
  EXPECT_FALSE(verify_sig(a.public_key, "3.14", flipped));
  EXPECT_FALSE(verify_sig(b.public_key, "3.14", sig));
  EXPECT_FALSE(verify_sig(a.public_key, "3.15", sig));
}

TEST(Signature, FixedLengthAndDeterministic) {
  const auto a = key(1);
  const auto s1 = sign(a.secret_key, "x");
  const auto s2 = sign(a.secret_key, std::string(5000, 'y'));
  EXPECT_EQ(s1.bytes.size(), s2.bytes.size());
  EXPECT_EQ(s1, sign(a.secret_key, "x"));
}

TEST(Signature, EmptyMessageRejected) { EXPECT_THROW(sign(key(1).secret_key, ""), DomainError); }

TEST(Vrf, Deterministic) {
  const auto a = key(5);
  const auto alpha = bytes_of("round-1");
  const auto o1 = vrf_hash(a.secret_key, alpha), o2 = vrf_hash(a.secret_key, alpha);
  EXPECT_EQ(o1.beta, o2.beta);
  EXPECT_EQ(o1.proof, o2.proof);
}

TEST(Vrf, BetaIsSha512OfProof) {
  const auto a = key(5);
  const auto out = vrf_hash(a.secret_key, bytes_of("alpha"));
  std::array<std::uint8_t, crypto_hash_sha512_BYTES> digest{};
  crypto_hash_sha512(digest.data(), out.proof.bytes.data(), out.proof.bytes.size());
  BigUint oracle;
  boost::multiprecision::import_bits(oracle, digest.begin(), digest.end(), 8, true);
  EXPECT_EQ(out.beta, oracle);
  EXPECT_EQ(proof_to_hash(out.proof), out.beta);
  EXPECT_LT(out.beta, beta_space());
}

TEST(Vrf, HalfOfTenThousandTicketsBelowMidpoint) {
  const auto alpha = bytes_of("uniformity");
  const BigUint mid = BigUint(1) << 511;
  std::size_t below = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) below += vrf_hash(key(s).secret_key, alpha).beta < mid;
  const double frac = static_cast<double>(below) / 10000.0;
  EXPECT_GE(frac, 0.49);
  EXPECT_LE(frac, 0.51);
}

TEST(Vrf, DistinctAlphasDistinctBetas) {
  const auto a = key(9);
  std::set<BigUint> betas;
  for (int r = 0; r < 200; ++r) betas.insert(vrf_hash(a.secret_key, bytes_of("alpha-" + std::to_string(r))).beta);
  EXPECT_EQ(betas.size(), 200u);
}

TEST(Vrf, ProofToHashFailures) {
  const auto a = key(5);
  const auto out = vrf_hash(a.secret_key, bytes_of("alpha"));
  auto tampered = out.proof;
  tampered.bytes[10] ^= 0x80;
  EXPECT_NE(proof_to_hash(tampered), out.beta);
  const Bytes truncated(out.proof.bytes.begin(), out.proof.bytes.begin() + 63);
  EXPECT_THROW(proof_to_hash(truncated), MalformedProof);
}

TEST(Vrf, VerifyAcceptsHonestRejectsAltered) {
  const auto a = key(5), b = key(6);
  const auto alpha = bytes_of("round-7");
  const auto out = vrf_hash(a.secret_key, alpha);
  EXPECT_TRUE(vrf_verify(a.public_key, alpha, out));
  EXPECT_FALSE(vrf_verify(a.public_key, alpha, out.beta + 1, out.proof.bytes));
  EXPECT_FALSE(vrf_verify(a.public_key, bytes_of("round-6"), out));
  EXPECT_FALSE(vrf_verify(b.public_key, alpha, out));
  EXPECT_THROW(vrf_hash(a.secret_key, Bytes{}), DomainError);
}

}  // namespace
}  // namespace fedselect::crypto
