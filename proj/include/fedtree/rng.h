#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedtree {

using Rng = std::mt19937_64;

// Derives an independent generator for a named purpose. Every stochastic
// decision in the library draws from a stream created here, so two runs with
// the same root seed replay exactly.
Rng MakeStream(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0);

// Uniform double in [0, 1).
double UniformUnit(Rng& rng);

// Uniform integer in [lo, hi] (inclusive).
std::uint64_t UniformInt(Rng& rng, std::uint64_t lo, std::uint64_t hi);

}  // namespace fedtree
