#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace surgirl {

// Deterministic RNG with named sub-streams. Every source of randomness in a
// run derives from the single run seed through Rng::substream, so runs are
// reproducible end to end.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static std::uint64_t mix(std::uint64_t seed, std::string_view name) {
    // FNV-1a over the name, then splitmix64 finalizer.
    std::uint64_t h = 14695981039346656037ull;
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull + h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static Rng substream(std::uint64_t seed, std::string_view name) {
    return Rng(mix(seed, name));
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * unit();
  }

  // Standard normal via Box-Muller, one value per draw (no cached state,
  // keeps serialization trivial).
  double normal() {
    double u1 = unit_open();
    double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double gumbel() {
    return -std::log(-std::log(unit_open()));
  }

  // Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n) {
    // Rejection sampling for exact uniformity.
    std::uint64_t bound = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = gen_();
    } while (r >= bound);
    return static_cast<std::size_t>(r % n);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
  }

 private:
  double unit() {  // [0, 1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  double unit_open() {  // (0, 1]
    return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
  }

  std::mt19937_64 gen_;
};

}  // namespace surgirl
