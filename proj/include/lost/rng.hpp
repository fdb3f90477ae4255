#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace lost {

/// splitmix64 finalizer; used for seeding and for deriving child streams.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// FNV-1a, 64-bit.
std::uint64_t hash_tag(std::string_view tag) noexcept;

/// Seeded generator: xoshiro256** whose state is expanded from the seed with
/// splitmix64. Normal draws use Box-Muller with both outputs consumed in
/// order. Child streams are keyed by seed ^ hash(tag), so adding a stream never
/// shifts the draws of another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  double normal() noexcept;

  Rng derive(std::string_view tag) const noexcept;
  Rng derive(std::uint64_t index) const noexcept;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lost
