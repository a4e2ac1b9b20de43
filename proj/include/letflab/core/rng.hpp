#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace letflab {

/// Deterministic counter-keyed random streams.
///
/// Every consumer of randomness derives its own substream from
/// (global seed, module tag, index). Streams never share state, so results
/// are reproducible regardless of how work is split across threads.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t state) : state_(state) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t hash_tag(std::string_view tag) {
    // FNV-1a 64
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001B3ULL;
    }
    return h;
  }

  /// Substream key derivation: seed -> module tag -> stream index.
  static RandomStream derive(std::uint64_t seed, std::string_view tag,
                             std::uint64_t index) {
    std::uint64_t s = mix(seed ^ hash_tag(tag));
    s = mix(s + 0x9E3779B97F4A7C15ULL * (index + 1));
    return RandomStream(s);
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on (0, 1]: never returns 0, safe under log().
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller. Draws two uniforms per pair.
  void next_normal_pair(double& z0, double& z1) {
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    z0 = r * std::cos(a);
    z1 = r * std::sin(a);
  }

  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double z0, z1;
    next_normal_pair(z0, z1);
    spare_ = z1;
    have_spare_ = true;
    return z0;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace letflab
