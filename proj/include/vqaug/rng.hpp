#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vqaug {

using Rng = std::mt19937_64;

/// Stable sub-seed for (root, purpose, id). Independent of platform hashing so
/// runs reproduce across builds.
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose, std::uint64_t id = 0);

inline Rng make_rng(std::uint64_t root, std::string_view purpose, std::uint64_t id = 0) {
  return Rng(derive_seed(root, purpose, id));
}

}  // namespace vqaug
