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

#include "bazaar/crypto.hpp"

#include <sodium.h>

#include <stdexcept>

namespace bazaar {
namespace {

constexpr std::uint8_t kSigTag0 = 0x5a;
constexpr std::uint8_t kSigTag1 = 0x01;
constexpr std::size_t kSigHeader = 6;

static_assert(crypto_sign_PUBLICKEYBYTES + crypto_box_PUBLICKEYBYTES == PublicKey::kSize);
static_assert(kSigHeader + crypto_sign_BYTES == Signature::kSize);
static_assert(crypto_sign_SECRETKEYBYTES == 64);

ByteView sign_pk(const PublicKey& pk) { return pk.view().first(crypto_sign_PUBLICKEYBYTES); }
ByteView box_pk(const PublicKey& pk) { return pk.view().last(crypto_box_PUBLICKEYBYTES); }

std::array<std::uint8_t, 32> labelled(const KeySeed& seed, std::string_view label) {
  ByteWriter w;
  w.raw(seed).str(label);
  return hash(w.bytes()).data;
}

}  // namespace

void crypto_init() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw std::runtime_error("libsodium initialisation failed");
}

std::string to_hex(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex string");
  auto nibble = [](char c) -> std::uint8_t {
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw std::invalid_argument("invalid hex digit");
  };
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return out;
}

Digest hash(ByteView bytes) {
  crypto_init();
  Digest out;
  crypto_hash_sha256(out.data.data(), bytes.data(), bytes.size());
  return out;
}

Commitment commit(ByteView message, const Coin& coin) {
  crypto_init();
  crypto_hash_sha256_state st;
  crypto_hash_sha256_init(&st);
  crypto_hash_sha256_update(&st, message.data(), message.size());
  crypto_hash_sha256_update(&st, coin.data.data(), coin.size());
  Commitment com;
  crypto_hash_sha256_final(&st, com.value.data.data());
  return com;
}

bool open(const Commitment& com, ByteView message, const Coin& coin) {
  const Commitment again = commit(message, coin);
  return sodium_memcmp(again.value.data.data(), com.value.data.data(), Digest::kSize) == 0;
}

SecretKey::SecretKey(SecretKey&& other) noexcept
    : sign_sk_(other.sign_sk_), box_sk_(other.box_sk_), prf_key_(other.prf_key_) {
  sodium_memzero(other.sign_sk_.data(), other.sign_sk_.size());
  sodium_memzero(other.box_sk_.data(), other.box_sk_.size());
  sodium_memzero(other.prf_key_.data(), other.prf_key_.size());
}

SecretKey& SecretKey::operator=(SecretKey&& other) noexcept {
  if (this != &other) {
    sign_sk_ = other.sign_sk_;
    box_sk_ = other.box_sk_;
    prf_key_ = other.prf_key_;
    sodium_memzero(other.sign_sk_.data(), other.sign_sk_.size());
    sodium_memzero(other.box_sk_.data(), other.box_sk_.size());
    sodium_memzero(other.prf_key_.data(), other.prf_key_.size());
  }
  return *this;
}

SecretKey::~SecretKey() {
  sodium_memzero(sign_sk_.data(), sign_sk_.size());
  sodium_memzero(box_sk_.data(), box_sk_.size());
  sodium_memzero(prf_key_.data(), prf_key_.size());
}

KeyPair generate_keypair(const KeySeed& seed) {
  crypto_init();
  SecretKey sk;
  PublicKey pk;
  const auto sign_seed = labelled(seed, "sign");
  const auto box_seed = labelled(seed, "box");
  sk.prf_key_ = labelled(seed, "prf");
  crypto_sign_seed_keypair(pk.data.data(), sk.sign_sk_.data(), sign_seed.data());
  crypto_box_seed_keypair(pk.data.data() + crypto_sign_PUBLICKEYBYTES, sk.box_sk_.data(),
                          box_seed.data());
  return KeyPair{pk, std::move(sk)};
}

Signature sign(const SecretKey& sk, ByteView message) {
  crypto_init();
  Signature sig;
  sig.data[0] = kSigTag0;
  sig.data[1] = kSigTag1;
  unsigned long long len = 0;
  crypto_sign_detached(sig.data.data() + kSigHeader, &len, message.data(), message.size(),
                       sk.sign_sk_.data());
  // Key hint: hash of the Ed25519 verify key, which libsodium stores in the
  // upper half of the secret key.
  const Digest h = hash(ByteView(sk.sign_sk_.data() + 32, 32));
  std::copy_n(h.data.begin(), 4, sig.data.begin() + 2);
  return sig;
}

bool verify(const PublicKey& pk, ByteView message, const Signature& sig) {
  crypto_init();
  if (sig.data[0] != kSigTag0 || sig.data[1] != kSigTag1) return false;
  const Digest h = hash(sign_pk(pk));
  if (!std::equal(h.data.begin(), h.data.begin() + 4, sig.data.begin() + 2)) return false;
  return crypto_sign_verify_detached(sig.data.data() + kSigHeader, message.data(),
                                     message.size(), sign_pk(pk).data()) == 0;
}

Bytes enc(const SymmetricKey& key, ByteView plaintext, Rng& rng) {
  crypto_init();
  constexpr std::size_t kNonce = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
  constexpr std::size_t kTag = crypto_aead_xchacha20poly1305_ietf_ABYTES;
  Bytes out(kNonce + plaintext.size() + kTag);
  rng.fill(std::span<std::uint8_t>(out.data(), kNonce));
  unsigned long long clen = 0;
  crypto_aead_xchacha20poly1305_ietf_encrypt(out.data() + kNonce, &clen, plaintext.data(),
                                             plaintext.size(), nullptr, 0, nullptr, out.data(),
                                             key.data.data());
  out.resize(kNonce + clen);
  return out;
}

std::optional<Bytes> dec(const SymmetricKey& key, ByteView ciphertext) {
  crypto_init();
  constexpr std::size_t kNonce = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
  constexpr std::size_t kTag = crypto_aead_xchacha20poly1305_ietf_ABYTES;
  if (ciphertext.size() < kNonce + kTag) return std::nullopt;
  Bytes out(ciphertext.size() - kNonce - kTag);
  unsigned long long mlen = 0;
  if (crypto_aead_xchacha20poly1305_ietf_decrypt(out.data(), &mlen, nullptr,
                                                 ciphertext.data() + kNonce,
                                                 ciphertext.size() - kNonce, nullptr, 0,
                                                 ciphertext.data(), key.data.data()) != 0) {
    return std::nullopt;
  }
  out.resize(mlen);
  return out;
}

namespace {

std::array<std::uint8_t, crypto_box_NONCEBYTES> box_nonce(ByteView ephemeral_pk,
                                                         ByteView recipient_pk) {
  ByteWriter w;
  w.raw(ephemeral_pk).raw(recipient_pk);
  const Digest d = hash(w.bytes());
  std::array<std::uint8_t, crypto_box_NONCEBYTES> n{};
  std::copy_n(d.data.begin(), n.size(), n.begin());
  return n;
}

}  // namespace

Bytes aenc(const PublicKey& recipient, ByteView plaintext, Rng& rng) {
  crypto_init();
  std::array<std::uint8_t, crypto_box_SEEDBYTES> seed{};
  rng.fill(seed);
  std::array<std::uint8_t, crypto_box_PUBLICKEYBYTES> epk{};
  std::array<std::uint8_t, crypto_box_SECRETKEYBYTES> esk{};
  crypto_box_seed_keypair(epk.data(), esk.data(), seed.data());
  const auto nonce = box_nonce(epk, box_pk(recipient));
  Bytes out(aenc_size(plaintext.size()));
  std::copy(epk.begin(), epk.end(), out.begin());
  const int rc = crypto_box_easy(out.data() + epk.size(), plaintext.data(), plaintext.size(),
                                 nonce.data(), box_pk(recipient).data(), esk.data());
  sodium_memzero(esk.data(), esk.size());
  if (rc != 0) throw std::invalid_argument("aenc: recipient key rejected");
  return out;
}

std::optional<SymmetricKey> adec(const SecretKey& sk, ByteView ciphertext) {
  crypto_init();
  if (ciphertext.size() != aenc_size(SymmetricKey::kSize)) return std::nullopt;
  std::array<std::uint8_t, crypto_box_PUBLICKEYBYTES> own_pk{};
  crypto_scalarmult_base(own_pk.data(), sk.box_sk_.data());
  ByteView epk = ciphertext.first(crypto_box_PUBLICKEYBYTES);
  const auto nonce = box_nonce(epk, own_pk);
  SymmetricKey out;
  ByteView body = ciphertext.subspan(crypto_box_PUBLICKEYBYTES);
  if (crypto_box_open_easy(out.data.data(), body.data(), body.size(), nonce.data(), epk.data(),
                           sk.box_sk_.data()) != 0) {
    return std::nullopt;
  }
  return out;
}

std::pair<SymmetricKey, Coin> prf(const SecretKey& sk, ByteView input) {
  crypto_init();
  auto mac = [&](std::uint8_t domain) {
    crypto_auth_hmacsha256_state st;
    crypto_auth_hmacsha256_init(&st, sk.prf_key_.data(), sk.prf_key_.size());
    crypto_auth_hmacsha256_update(&st, &domain, 1);
    crypto_auth_hmacsha256_update(&st, input.data(), input.size());
    std::array<std::uint8_t, crypto_auth_hmacsha256_BYTES> out{};
    crypto_auth_hmacsha256_final(&st, out.data());
    return out;
  };
  SymmetricKey k;
  Coin r;
  k.data = mac(0x01);
  r.data = mac(0x02);
  return {k, r};
}

}  // namespace bazaar
