// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/rng.hpp"

#include <cmath>
#include <numbers>

namespace dpgm {

namespace {

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kSplitSalt = 0xd1b54a32d192ed03ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix64(seed + kGamma)) {}

std::uint64_t Rng::next_u64() {
  const std::uint64_t c = counter_++;
  return mix64(key_ ^ mix64(c * kGamma + kGamma));
}

double Rng::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(angle);
  has_spare_ = true;
  return r * std::cos(angle);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw DomainError("rng: below(0)");
  // Lemire's multiply-shift; bias is below 2^-64 * n, fine for our sizes.
  __extension__ using u128 = unsigned __int128;
  const u128 m = static_cast<u128>(next_u64()) * static_cast<u128>(n);
  return static_cast<std::size_t>(m >> 64);
}

Tensor Rng::normal(Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = normal();
  return t;
}

Tensor Rng::uniform(Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = lo + (hi - lo) * uniform();
  return t;
}

Rng Rng::split() {
  Rng child(0);
  child.key_ = mix64(key_ ^ mix64((counter_++) * kSplitSalt + kSplitSalt));
  return child;
}

}  // namespace dpgm
