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

#include "bazaar/rng.hpp"

#include <sodium.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bazaar/crypto.hpp"

namespace bazaar {

Rng::Rng(std::uint64_t seed) {
  ByteWriter w;
  w.str("bazaar.rng.v1").u64(seed);
  key_ = hash(w.bytes()).data;
}

Rng Rng::fork(std::string_view label) const {
  ByteWriter w;
  w.str("bazaar.rng.fork").raw(ByteView(key_.data(), key_.size())).str(label);
  Rng out;
  out.key_ = hash(w.bytes()).data;
  return out;
}

void Rng::refill() {
  crypto_init();
  std::array<std::uint8_t, crypto_stream_chacha20_ietf_NONCEBYTES> nonce{};
  // 32-bit block counter inside libsodium; the high bits of our counter go
  // into the nonce so the stream never wraps.
  const std::uint64_t high = block_ >> 32;
  for (std::size_t i = 0; i < 8; ++i) nonce[i] = static_cast<std::uint8_t>(high >> (8 * i));
  buffer_.fill(0);
  crypto_stream_chacha20_ietf_xor_ic(buffer_.data(), buffer_.data(), buffer_.size(),
                                     nonce.data(), static_cast<std::uint32_t>(block_),
                                     key_.data());
  ++block_;
  offset_ = 0;
}

void Rng::fill(std::span<std::uint8_t> out) {
  for (std::uint8_t& b : out) {
    if (offset_ == buffer_.size()) refill();
    b = buffer_[offset_++];
  }
}

std::uint64_t Rng::next_u64() {
  std::array<std::uint8_t, 8> raw{};
  fill(raw);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(raw[i]) << (8 * i);
  return v;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::below: bound must be positive");
  // Rejection sampling: discard the top partial range.
  const std::uint64_t limit = max() - max() % bound;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % bound;
}

double Rng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace bazaar
