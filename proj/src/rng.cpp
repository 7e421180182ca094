#include "fedsis/rng.hpp"

namespace fedsis {

namespace {

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

Rng Rng::derive(uint64_t master, std::string_view tag, uint64_t index) {
  // FNV-1a over the tag, then splitmix to decorrelate nearby seeds.
  uint64_t h = 1469598103934665603ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  uint64_t state = master ^ h;
  state ^= 0x632be59bd9b4e019ull * (index + 1);
  uint64_t seed = splitmix64(state);
  seed ^= splitmix64(state);
  return Rng(seed);
}

}  // namespace fedsis
