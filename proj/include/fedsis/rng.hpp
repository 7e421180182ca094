#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fedsis {

// mt19937_64 core with hand-rolled draws. The std distributions are
// implementation-defined, so uniform/normal/shuffle are spelled out here to
// keep every run reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Inclusive integer range. Modulo bias is < range/2^64, irrelevant here.
  uint64_t uniform_int(uint64_t lo, uint64_t hi) {
    return lo + gen_() % (hi - lo + 1);
  }

  // Box-Muller, one value per call (the spare is kept).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Normal(0, std) resampled until within [-2*std, 2*std].
  double truncated_normal(double std_dev) {
    for (;;) {
      double v = normal();
      if (v >= -2.0 && v <= 2.0) return v * std_dev;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, i - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derive an independent stream from a master seed and a purpose tag, so
  // e.g. the block sampler and each client's data loader never share state.
  static Rng derive(uint64_t master, std::string_view tag, uint64_t index = 0);

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fedsis
