#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <vector>

#include "cobev/rng.hpp"
#include "cobev/tensor.hpp"

namespace testutil {

/// FNV-1a over the raw float bits; used to pin oracle outputs.
inline std::uint64_t fnv1a64(std::span<const float> values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (float v : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int b = 0; b < 4; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline cobev::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                                   double lo = -1.0, double hi = 1.0) {
  cobev::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(cobev::uniform_range(rng, lo, hi));
  return t;
}

}  // namespace testutil
