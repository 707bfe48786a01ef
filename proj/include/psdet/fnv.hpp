#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

#include <fmt/format.h>

namespace psdet {

// 64-bit FNV-1a. Integers and doubles are fed as little-endian 8-byte words
// (doubles by bit pattern), strings as a length word followed by the bytes.
class Fnv1a64 {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  Fnv1a64& byte(unsigned char b) {
    state_ ^= b;
    state_ *= kPrime;
    return *this;
  }
  Fnv1a64& u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      byte(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
    }
    return *this;
  }
  Fnv1a64& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
  Fnv1a64& f64(double v) { return u64(std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v)); }
  Fnv1a64& str(std::string_view s) {
    u64(s.size());
    for (char c : s) {
      byte(static_cast<unsigned char>(c));
    }
    return *this;
  }

  std::uint64_t value() const { return state_; }
  std::string hex() const { return fmt::format("{:016x}", state_); }

 private:
  std::uint64_t state_ = kOffset;
};

}  // namespace psdet
