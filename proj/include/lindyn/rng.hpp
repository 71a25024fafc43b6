#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace lindyn {

/// Fixed sub-stream offsets. Each matrix family draws from its own stream so
/// that, for example, changing the width never perturbs the task.
enum class Stream : std::uint64_t {
  TargetFactors = 1,
  Noise = 2,
  FirstLayer = 3,
  SecondLayer = 4,
  CellInit = 1000,
};

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream,
                                 std::uint64_t index = 0) noexcept {
  return mix64(mix64(seed) ^ mix64(static_cast<std::uint64_t>(stream) + (index << 16)));
}

/// mt19937_64 with a Box-Muller standard-normal sampler. The sampler is
/// written out here rather than using std::normal_distribution, whose
/// algorithm differs between standard libraries; with this one a seed
/// reproduces the same matrices on every toolchain.
///
///   u1 = (k1 + 1) / 2^53 in (0, 1],  u2 = k2 / 2^53 in [0, 1)
///   z0 = sqrt(-2 ln u1) cos(2 pi u2),  z1 = sqrt(-2 ln u1) sin(2 pi u2)
///
/// where k1, k2 are the top 53 bits of consecutive engine outputs. z0 is
/// returned first, z1 is cached for the next call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
    const double u1 = static_cast<double>((engine_() >> 11) + 1) * kScale;
    const double u2 = static_cast<double>(engine_() >> 11) * kScale;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lindyn
