#include "glados/seeds.hpp"

#include <array>
#include <cstdio>

#include <sodium.h>

namespace glados {

namespace {

std::array<unsigned char, crypto_hash_sha256_BYTES> sha256(std::string_view data) {
  std::array<unsigned char, crypto_hash_sha256_BYTES> out;
  crypto_hash_sha256(out.data(), reinterpret_cast<const unsigned char*>(data.data()),
                     data.size());
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  const auto digest = sha256(data);
  std::string hex(digest.size() * 2 + 1, '\0');
  sodium_bin2hex(hex.data(), hex.size(), digest.data(), digest.size());
  hex.pop_back();
  return hex;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  const auto digest = sha256(std::to_string(seed) + ":" + std::string(name));
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= static_cast<std::uint64_t>(digest[i]) << (8 * i);
  return out;
}

}  // namespace glados
