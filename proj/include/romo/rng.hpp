#pragma once

#include <cstdint>
#include <vector>

namespace romo {

// Counter-based 64-bit generator (SplitMix64). The i-th output is a pure
// function of (seed, stream, i):
//
//   base   = finalize(seed) ^ rotate-mixed stream salt
//   out_i  = finalize(base + (i+1) * 0x9E3779B97F4A7C15)
//
// where finalize() is the SplitMix64 finalizer. No hidden state beyond the
// counter, so sequences are bit-exact across platforms and restartable.
class CounterRng {
public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : base_(finalize(seed) ^ (finalize(stream ^ 0x5851F42D4C957F2DULL) | 1ULL)),
        counter_(0) {}

  static std::uint64_t finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    ++counter_;
    return finalize(base_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  // Uniform on the open interval (0, 1): (mantissa + 0.5) / 2^53.
  double next_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_open01();
  }

  // Bounded draw in [0, n). Modulo bias is negligible for the n used here.
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::uint64_t base_;
  std::uint64_t counter_;
};

}  // namespace romo
