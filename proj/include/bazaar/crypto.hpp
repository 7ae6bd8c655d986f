/*
 * Copyright 2026 The Bazaar Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Cryptographic primitives shared by every module.
//
// Sizes are fixed so that byte accounting is exact:
//   digest / commitment / symmetric key / coin   32 bytes
//   public key                                   64 bytes (Ed25519 || X25519)
//   signature                                    70 bytes (tag || key hint || Ed25519)
//
// Failures that a protocol must react to (bad tag, wrong key) are reported
// through return values, never by throwing.

#ifndef BAZAAR_CRYPTO_HPP_
#define BAZAAR_CRYPTO_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>

#include "bazaar/bytes.hpp"
#include "bazaar/rng.hpp"

namespace bazaar {

struct DigestTag {};
struct CoinTag {};
struct SymmetricKeyTag {};
struct PublicKeyTag {};
struct SignatureTag {};
struct KeySeedTag {};

using Digest = FixedBytes<32, DigestTag>;
using Coin = FixedBytes<32, CoinTag>;
using SymmetricKey = FixedBytes<32, SymmetricKeyTag>;
using PublicKey = FixedBytes<64, PublicKeyTag>;
using Signature = FixedBytes<70, SignatureTag>;
using KeySeed = FixedBytes<32, KeySeedTag>;

/// Throws if libsodium cannot be initialised. Idempotent; every entry point
/// below calls it.
void crypto_init();

/// SHA-256.
Digest hash(ByteView bytes);
inline Digest hash(std::string_view text) { return hash(as_bytes(text)); }

/// hash(msg || r). Binding and hiding under the usual random-oracle view.
struct Commitment {
  Digest value;
  friend bool operator==(const Commitment&, const Commitment&) = default;
};

Commitment commit(ByteView message, const Coin& coin);
bool open(const Commitment& com, ByteView message, const Coin& coin);

class SecretKey;

struct KeyPair;

/// Secret half of a key pair. Move-only and wiped on destruction; copying
/// would let key material escape an enclave boundary by accident.
class SecretKey {
 public:
  SecretKey(const SecretKey&) = delete;
  SecretKey& operator=(const SecretKey&) = delete;
  SecretKey(SecretKey&& other) noexcept;
  SecretKey& operator=(SecretKey&& other) noexcept;
  ~SecretKey();

 private:
  SecretKey() = default;
  friend KeyPair generate_keypair(const KeySeed& seed);
  friend Signature sign(const SecretKey& sk, ByteView message);
  friend std::optional<SymmetricKey> adec(const SecretKey& sk, ByteView ciphertext);
  friend std::pair<SymmetricKey, Coin> prf(const SecretKey& sk, ByteView input);

  std::array<std::uint8_t, 64> sign_sk_{};
  std::array<std::uint8_t, 32> box_sk_{};
  std::array<std::uint8_t, 32> prf_key_{};
};

struct KeyPair {
  PublicKey pk;
  SecretKey sk;
};

KeyPair generate_keypair(const KeySeed& seed);
inline KeyPair generate_keypair(Rng& rng) { return generate_keypair(rng.draw<KeySeed>()); }

Signature sign(const SecretKey& sk, ByteView message);
bool verify(const PublicKey& pk, ByteView message, const Signature& sig);

/// XChaCha20-Poly1305. Output layout: nonce(24) || ciphertext || tag(16).
Bytes enc(const SymmetricKey& key, ByteView plaintext, Rng& rng);
std::optional<Bytes> dec(const SymmetricKey& key, ByteView ciphertext);

/// X25519 box under the recipient's encryption key with an ephemeral key
/// drawn from rng. Output layout: ephemeral pk(32) || box. Encrypting a
/// 32-byte secret yields 80 bytes.
Bytes aenc(const PublicKey& recipient, ByteView plaintext, Rng& rng);
std::optional<SymmetricKey> adec(const SecretKey& sk, ByteView ciphertext);
/// Size of aenc() output for a plaintext of n bytes.
constexpr std::size_t aenc_size(std::size_t n) { return 32 + 16 + n; }

/// Deterministic key/coin derivation: HMAC-SHA256 under a key-pair-private
/// PRF key, domain separated into a symmetric key and a 32-byte coin.
std::pair<SymmetricKey, Coin> prf(const SecretKey& sk, ByteView input);

}  // namespace bazaar

#endif  // BAZAAR_CRYPTO_HPP_
