#ifndef GCM_RNG_HPP
#define GCM_RNG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

namespace gcm {

// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic random source. The distributions are implemented on top of
// the raw 64-bit stream rather than <random>'s distribution classes, whose
// output is implementation-defined; a given seed therefore produces the same
// values on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream `index` under a common root seed. Replication studies
  // give each replication its own stream so results do not depend on how the
  // replications are scheduled.
  static Rng substream(std::uint64_t root, std::uint64_t index) {
    return Rng(mix_seed(root + 0x9e3779b97f4a7c15ULL * (index + 1)));
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform on {0, ..., n - 1}.
  int uniform_int(int n) {
    return std::min(n - 1, static_cast<int>(uniform() * static_cast<double>(n)));
  }

  double rademacher() { return uniform() < 0.5 ? -1.0 : 1.0; }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace gcm

#endif  // GCM_RNG_HPP
