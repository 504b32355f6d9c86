#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>

namespace apssmt::gf256 {

// GF(2^8) with the reduction polynomial x^8+x^4+x^3+x^2+1 (0x11d), for which
// 2 is a primitive element. Addition is XOR; multiplication goes through
// log/exp tables built at compile time. The exp table is doubled so that
// log[a] + log[b] never needs a modular reduction.
struct Tables {
  std::array<std::uint8_t, 512> exp{};
  std::array<std::uint8_t, 256> log{};
};

constexpr Tables make_tables() {
  Tables t{};
  unsigned x = 1;
  for (int i = 0; i < 255; ++i) {
    t.exp[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(x);
    t.log[x] = static_cast<std::uint8_t>(i);
    x <<= 1;
    if (x & 0x100u) {
      x ^= 0x11du;
    }
  }
  for (int i = 255; i < 512; ++i) {
    t.exp[static_cast<std::size_t>(i)] = t.exp[static_cast<std::size_t>(i - 255)];
  }
  t.log[0] = 0;  // log(0) is undefined; mul/div guard the zero cases
  return t;
}

inline constexpr Tables tables = make_tables();

inline std::uint8_t add(std::uint8_t a, std::uint8_t b) {
  return static_cast<std::uint8_t>(a ^ b);
}

inline std::uint8_t mul(std::uint8_t a, std::uint8_t b) {
  if (a == 0 || b == 0) {
    return 0;
  }
  return tables.exp[static_cast<std::size_t>(tables.log[a]) + tables.log[b]];
}

inline std::uint8_t inv(std::uint8_t a) {
  if (a == 0) {
    throw std::domain_error("gf256: zero has no inverse");
  }
  return tables.exp[static_cast<std::size_t>(255 - tables.log[a])];
}

inline std::uint8_t div(std::uint8_t a, std::uint8_t b) {
  if (b == 0) {
    throw std::domain_error("gf256: division by zero");
  }
  if (a == 0) {
    return 0;
  }
  return tables.exp[static_cast<std::size_t>(tables.log[a]) + 255 - tables.log[b]];
}

}  // namespace apssmt::gf256
