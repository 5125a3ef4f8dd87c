#include "han/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace han {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
}

std::uint64_t Rng::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t Rng::hash_name(std::string_view name) {
  // FNV-1a, 64 bit
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

Rng::Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream)
    : seed_(seed), key_(mix(seed + kGolden)) {
  for (std::uint64_t word : stream) key_ = mix(key_ ^ mix(word + kGolden));
}

Rng Rng::named(std::uint64_t seed, std::string_view name,
               std::initializer_list<std::uint64_t> stream) {
  Rng rng(seed, {hash_name(name)});
  for (std::uint64_t word : stream) rng.key_ = mix(rng.key_ ^ mix(word + kGolden));
  return rng;
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix(key_ + counter_ * kGolden);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
  // rejection sampling removes modulo bias
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

}  // namespace han
