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

#ifndef BAZAAR_BYTES_HPP_
#define BAZAAR_BYTES_HPP_

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bazaar {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Fixed-width byte string. Tag distinguishes otherwise identical widths
/// (a 32-byte digest is not a 32-byte key).
template <std::size_t N, typename Tag>
struct FixedBytes {
  static constexpr std::size_t kSize = N;
  std::array<std::uint8_t, N> data{};

  static FixedBytes from(ByteView bytes) {
    if (bytes.size() != N) {
      throw std::invalid_argument("FixedBytes: expected " + std::to_string(N) +
                                  " bytes, got " + std::to_string(bytes.size()));
    }
    FixedBytes out;
    std::copy(bytes.begin(), bytes.end(), out.data.begin());
    return out;
  }

  ByteView view() const { return {data.data(), data.size()}; }
  Bytes bytes() const { return {data.begin(), data.end()}; }
  constexpr std::size_t size() const { return N; }
  bool is_zero() const {
    return std::all_of(data.begin(), data.end(), [](std::uint8_t b) { return b == 0; });
  }

  friend bool operator==(const FixedBytes&, const FixedBytes&) = default;
  friend auto operator<=>(const FixedBytes&, const FixedBytes&) = default;
};

std::string to_hex(ByteView bytes);
Bytes from_hex(std::string_view hex);

template <std::size_t N, typename Tag>
std::string to_hex(const FixedBytes<N, Tag>& value) {
  return to_hex(value.view());
}

inline ByteView as_bytes(std::string_view text) {
  return {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()};
}

/// Little-endian append-only encoder used for every canonical encoding in
/// the simulator (signed payloads, sealed state, sample bundles).
class ByteWriter {
 public:
  ByteWriter& u8(std::uint8_t v) {
    out_.push_back(v);
    return *this;
  }
  ByteWriter& u16(std::uint16_t v) { return put_le(v); }
  ByteWriter& u32(std::uint32_t v) { return put_le(v); }
  ByteWriter& u64(std::uint64_t v) { return put_le(v); }
  ByteWriter& i64(std::int64_t v) { return put_le(static_cast<std::uint64_t>(v)); }
  ByteWriter& f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    return put_le(bits);
  }
  ByteWriter& f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    return put_le(bits);
  }
  ByteWriter& raw(ByteView bytes);
  template <std::size_t N, typename Tag>
  ByteWriter& raw(const FixedBytes<N, Tag>& value) {
    return raw(value.view());
  }
  /// u32 length prefix followed by the bytes.
  ByteWriter& blob(ByteView bytes) {
    u32(static_cast<std::uint32_t>(bytes.size()));
    return raw(bytes);
  }
  ByteWriter& str(std::string_view text) { return blob(as_bytes(text)); }

  const Bytes& bytes() const& { return out_; }
  Bytes take() && { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  template <typename T>
  ByteWriter& put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    return *this;
  }

  Bytes out_;
};

/// Bounds-checked reader matching ByteWriter. Throws DecodeError on overrun.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ByteReader {
 public:
  explicit ByteReader(ByteView bytes) : in_(bytes) {}

  std::uint8_t u8() { return get_le<std::uint8_t>(); }
  std::uint16_t u16() { return get_le<std::uint16_t>(); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  std::int64_t i64() { return static_cast<std::int64_t>(get_le<std::uint64_t>()); }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  ByteView raw(std::size_t n) {
    need(n);
    ByteView out = in_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  template <typename Fixed>
  Fixed fixed() {
    return Fixed::from(raw(Fixed::kSize));
  }
  Bytes blob() {
    const std::uint32_t n = u32();
    ByteView v = raw(n);
    return {v.begin(), v.end()};
  }
  std::string str() {
    const std::uint32_t n = u32();
    ByteView v = raw(n);
    return {reinterpret_cast<const char*>(v.data()), v.size()};
  }

  std::size_t remaining() const { return in_.size() - pos_; }
  bool done() const { return pos_ == in_.size(); }
  void expect_done() const {
    if (!done()) throw DecodeError("trailing bytes after decode");
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DecodeError("truncated input");
  }
  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<T>(in_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return v;
  }

  ByteView in_;
  std::size_t pos_ = 0;
};

}  // namespace bazaar

#endif  // BAZAAR_BYTES_HPP_
