#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace han {

// Counter-based generator. Draw n of a stream with key K is
//   splitmix64_mix(K + (n + 1) * 0x9E3779B97F4A7C15)
// and K is derived from (seed, stream words) by repeated mixing. The output
// only depends on integer arithmetic, so streams are identical across
// platforms and compilers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : Rng(seed, {}) {}
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

  // Named stream, e.g. Rng::named(seed, "dropout", {epoch, batch}).
  static Rng named(std::uint64_t seed, std::string_view name,
                   std::initializer_list<std::uint64_t> stream = {});

  static std::uint64_t mix(std::uint64_t z);
  static std::uint64_t hash_name(std::string_view name);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller; both halves of each pair are used.
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace han
