#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace cloudtomo {

// Counter-based generator: every draw is a pure function of (key, counter),
// so seeds can be fanned out to named streams and results do not depend on
// thread count or evaluation order.
class CounterRng {
 public:
  CounterRng() : key_(mix(0x9e3779b97f4a7c15ull)), counter_(0) {}
  explicit CounterRng(uint64_t seed, uint64_t stream = 0)
      : key_(mix(mix(seed) ^ mix(stream + 0x632be59bd9b4e019ull))), counter_(0) {}

  // Derived stream, independent of draws made on this one.
  CounterRng stream(uint64_t id) const { return CounterRng(key_, id); }
  CounterRng stream(std::string_view name) const { return CounterRng(key_, hash(name)); }

  uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

  // Uniform in [0,1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }
  int range_int(int lo, int hi) {  // inclusive bounds
    return lo + int(below(uint64_t(hi - lo + 1)));
  }

  double normal() {
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  static uint64_t hash(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : s) {
      h ^= uint8_t(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

 private:
  static uint64_t mix(uint64_t z) {  // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t key_;
  uint64_t counter_;
};

}  // namespace cloudtomo
