#pragma once

#include <cstdint>
#include <string_view>

namespace s2pnm {

// Counter-based generator: the i-th draw of a stream is a bijective mix of
// (key, i), so streams are reproducible and independent of draw order in
// other streams. `split` derives child streams (init, shuffling, dropout,
// negative sampling) from a parent key.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();

  Rng split(std::uint64_t stream) const;
  Rng split(std::string_view name) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace s2pnm
