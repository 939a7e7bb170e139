// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace wdgnas {

using Rng = std::mt19937_64;

/// Seed of an independent stream identified by `ids` under a run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);
Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);

}  // namespace wdgnas
