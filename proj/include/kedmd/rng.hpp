#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace kedmd {

/// Independent random stream keyed by (seed, tags...).
///
/// Each stream is a std::mt19937_64 seeded through std::seed_seq, both of
/// which are fully specified by the standard, so the sequence is portable.
/// Uniform doubles and bounded integers are derived by hand because the
/// standard distributions are implementation-defined.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n);
  std::uint64_t next() { return engine_(); }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

// Stream tags, kept stable so stored seeds keep reproducing the same data.
namespace stream_tag {
inline constexpr std::uint64_t kInitialCondition = 0x1c;
inline constexpr std::uint64_t kCenters = 0xce;
inline constexpr std::uint64_t kBatches = 0xba;
inline constexpr std::uint64_t kFineTune = 0xf7;
inline constexpr std::uint64_t kOracle = 0x0c;
}  // namespace stream_tag

}  // namespace kedmd
