#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <utility>

namespace panovid {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based generator: every draw is a pure function of
// (seed, key..., counter), so parallel evaluation order cannot change results.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
    state_ = splitmix64(seed ^ 0x5851f42d4c957f2dULL);
    for (std::uint64_t k : key) state_ = splitmix64(state_ ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  }

  std::uint64_t bits(std::uint64_t counter) const {
    return splitmix64(state_ ^ splitmix64(counter));
  }

  // Uniform in the open interval (0, 1).
  double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  // Two independent standard normals from one counter (Box-Muller).
  std::pair<double, double> normal_pair(std::uint64_t counter) const {
    const std::uint64_t b = bits(counter);
    const std::uint64_t c = splitmix64(b ^ 0xd1b54a32d192ed03ULL);
    const double u1 = (static_cast<double>(b >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = (static_cast<double>(c >> 11) + 0.5) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586 * u2;
    return {r * std::cos(a), r * std::sin(a)};
  }

  double normal(std::uint64_t counter) const { return normal_pair(counter).first; }

 private:
  std::uint64_t state_ = 0;
};

}  // namespace panovid
