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

#ifndef BAZAAR_RNG_HPP_
#define BAZAAR_RNG_HPP_

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

#include "bazaar/bytes.hpp"

namespace bazaar {

/// Seeded ChaCha20 keystream. The single source of randomness for a
/// scenario: key coins, nonces, dataset noise and GA decisions all come from
/// an Rng (or a labelled fork of one), so a run is a pure function of its
/// seed. Satisfies UniformRandomBitGenerator.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);
  /// Independent stream derived from this stream's key and a label. Does
  /// not advance this stream.
  Rng fork(std::string_view label) const;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64();
  void fill(std::span<std::uint8_t> out);
  template <typename Fixed>
  Fixed draw() {
    Fixed out;
    fill(out.data);
    return out;
  }

  /// Uniform in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Standard normal (Box-Muller, one value per call).
  double normal();

 private:
  Rng() = default;
  void refill();

  std::array<std::uint8_t, 32> key_{};
  std::uint64_t block_ = 0;
  std::array<std::uint8_t, 64> buffer_{};
  std::size_t offset_ = 64;
};

}  // namespace bazaar

#endif  // BAZAAR_RNG_HPP_
