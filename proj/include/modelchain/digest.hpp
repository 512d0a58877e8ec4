#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <functional>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "modelchain/bytes.hpp"
#include "modelchain/errors.hpp"

namespace modelchain {

// 32-byte SHA-256 output. Rendered as lowercase hex in every text format.
struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  static Digest zero() { return {}; }

  static std::optional<Digest> from_hex(std::string_view hex) {
    auto raw = modelchain::from_hex(hex);
    if (!raw || raw->size() != 32) return std::nullopt;
    Digest d;
    std::copy(raw->begin(), raw->end(), d.bytes.begin());
    return d;
  }

  std::string hex() const { return to_hex(bytes); }
  bool is_zero() const { return *this == Digest{}; }

  // Number of leading zero bits, 0..256.
  unsigned leading_zero_bits() const {
    unsigned n = 0;
    for (auto b : bytes) {
      if (b == 0) {
        n += 8;
        continue;
      }
      n += static_cast<unsigned>(std::countl_zero(b));
      break;
    }
    return n;
  }

  auto operator<=>(const Digest&) const = default;
};

// SHA-256, single application.
inline Digest hash_bytes(ByteView data) {
  Digest d;
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), d.bytes.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != d.bytes.size()) {
    throw Error("SHA-256 computation failed");
  }
  return d;
}

inline Digest hash_bytes(std::string_view text) {
  return hash_bytes(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace modelchain

template <>
struct std::hash<modelchain::Digest> {
  std::size_t operator()(const modelchain::Digest& d) const noexcept {
    std::size_t h = 0;
    for (int i = 0; i < 8; ++i) h = (h << 8) | d.bytes[i];
    return h;
  }
};
