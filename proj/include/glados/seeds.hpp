#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace glados {

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

// Independent substream seed for a named consumer of the run seed, so stages
// do not depend on each other's draw counts.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

// Uniform double in [0, 1) from 53 random bits; unlike the standard
// distributions its output is identical across standard libraries.
inline double unit_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace glados
