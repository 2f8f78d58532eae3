#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace mswa {

// Seedable 64-bit generator (splitmix64). Streams are split by name: the
// child stream for "layers.0.attn.wq" is seeded from the parent state mixed
// with an FNV-1a hash of that name, so every parameter draws from its own
// deterministic stream regardless of initialization order.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  uint64_t uniform_below(uint64_t bound) {
    // Modulo bias is negligible for the corpus offsets this is used for.
    return bound == 0 ? 0 : next_u64() % bound;
  }

  // Box-Muller; self-contained so streams are identical across platforms
  // (std::normal_distribution is implementation-defined).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Normal(0, std) with resampling outside two standard deviations.
  double truncated_normal(double stddev) {
    double z = normal();
    while (z < -2.0 || z > 2.0) z = normal();
    return z * stddev;
  }

  Rng child(std::string_view name) const {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the stream name
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    Rng r(state_ ^ h);
    r.next_u64();  // decorrelate from the raw seed
    return r;
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) {
    state_ = s;
    have_spare_ = false;
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace mswa
