#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gevbf {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Child seed of `parent` for the stream named `tag`. Every random draw in the
// library hangs off a root seed through this function, so subcommands never
// read the clock.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : tag) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  return splitmix64(splitmix64(parent ^ h) + index);
}

}  // namespace gevbf
