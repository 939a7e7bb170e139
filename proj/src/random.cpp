// SPDX-License-Identifier: Apache-2.0

#include "wdgnas/random.hpp"

#include <array>
#include <vector>

namespace wdgnas {

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (auto id : ids) {
    words.push_back(static_cast<std::uint32_t>(id));
    words.push_back(static_cast<std::uint32_t>(id >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) { return Rng(derive_seed(seed, ids)); }

}  // namespace wdgnas
