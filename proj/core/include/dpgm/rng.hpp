// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <limits>

#include "dpgm/tensor.hpp"

namespace dpgm {

/// Counter-based 64-bit generator. Every draw is a keyed hash of
/// (key, counter), so a stream is fully determined by its key and position.
/// split() derives an independent child stream; experiments thread one Rng
/// from a single seed through every sampling call.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  result_type operator()() { return next_u64(); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  Tensor normal(Shape shape);
  Tensor uniform(Shape shape, double lo, double hi);

  Rng split();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dpgm
