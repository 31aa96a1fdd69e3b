#include "fedtree/rng.h"

#include <array>
#include <limits>

namespace fedtree {
namespace {

std::uint64_t Fnv1a(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace

Rng MakeStream(std::uint64_t seed, std::string_view purpose, std::uint64_t index) {
  const std::uint64_t tag = Fnv1a(purpose);
  std::array<std::uint32_t, 6> words = {
      static_cast<std::uint32_t>(seed),  static_cast<std::uint32_t>(seed >> 32),
      static_cast<std::uint32_t>(tag),   static_cast<std::uint32_t>(tag >> 32),
      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
  };
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

double UniformUnit(Rng& rng) {
  // 53 random mantissa bits; independent of the standard library's
  // distribution implementation.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t UniformInt(Rng& rng, std::uint64_t lo, std::uint64_t hi) {
  const std::uint64_t span = hi - lo + 1;
  if (span == 0) return rng();  // full 64-bit range
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return lo + draw % span;
}

}  // namespace fedtree
