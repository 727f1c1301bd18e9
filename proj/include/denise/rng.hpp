#pragma once

#include <cstdint>
#include <cmath>

namespace denise {

// SplitMix64 stream with substream derivation. Substreams are derived by
// mixing (seed, sample index, stream id) through the output function, so a
// sample's draws do not depend on generation order or worker count.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed)) {}

  static Rng substream(std::uint64_t seed, std::uint64_t index,
                       std::uint64_t stream) {
    std::uint64_t s = mix(seed + 0x9e3779b97f4a7c15ULL * (index + 1));
    s = mix(s ^ (0xbf58476d1ce4e5b9ULL * (stream + 1)));
    return Rng(raw_state{s});
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // uniform on [0,1)
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal, Box-Muller; one spare cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Student-t via normal / sqrt(chi2/dof); raw draws, no variance scaling
  double student_t(int dof) {
    double z = normal();
    double chi2 = 0.0;
    for (int i = 0; i < dof; ++i) {
      double g = normal();
      chi2 += g * g;
    }
    return z / std::sqrt(chi2 / dof);
  }

 private:
  struct raw_state {
    std::uint64_t s;
  };
  explicit Rng(raw_state r) : state_(r.s) {}

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a 64-bit, used for file and buffer fingerprints in run manifests.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace denise
