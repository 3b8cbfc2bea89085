#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace icld {

// Deterministic random stream with purpose-keyed forking. Every consumer of
// randomness takes its own fork, so adding a draw in one place never shifts
// the sequence seen by another. Draw primitives are hand-rolled on top of
// splitmix64 state advancing, which keeps results identical across standard
// library implementations (std::uniform_int_distribution is not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ kInit)) {}

  // Child stream derived from (this stream's key, label, index). Forking does
  // not consume draws from the parent.
  Rng fork(std::string_view label, std::uint64_t index = 0) const;

  std::uint64_t next_u64();

  // Uniform integer in [0, n), n >= 1. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Uniform in [0, 1) with 53-bit resolution.
  double unit();

  // Box-Muller normal draw.
  double normal(double mean, double stddev);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::uint64_t i = v.size(); i > 1; --i) {
      std::uint64_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // First k of a random permutation of [0, n). k <= n.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  static constexpr std::uint64_t kInit = 0x9e3779b97f4a7c15ull;
  static std::uint64_t mix(std::uint64_t z);
  struct Key {};
  Rng(Key, std::uint64_t raw_state) : state_(raw_state) {}

  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace icld
