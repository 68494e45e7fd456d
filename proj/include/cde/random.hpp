#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cde {

using Rng = std::mt19937_64;

// 64-bit FNV-1a over the bytes of `text`, continued from `state`.
constexpr std::uint64_t fnv1a(std::string_view text, std::uint64_t state = 0xcbf29ce484222325ULL) {
  for (char c : text) {
    state ^= static_cast<std::uint8_t>(c);
    state *= 0x100000001b3ULL;
  }
  return state;
}

// SplitMix64 finalizer; decorrelates nearby integer seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stable sub-seed for a named purpose; identical on every platform.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view key) {
  return mix64(fnv1a(key, mix64(master)));
}

}  // namespace cde
