#pragma once

#include <cstdint>

namespace maxmix {

// Counter-based generator: output r = mix(key + r*GAMMA), where the key is
// derived from (seed, stream id).  Draw r is a pure function of
// (seed, stream, counter), so a chain can be checkpointed by storing the
// counter and independent streams never collide regardless of how many
// variates each one consumes.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream) {
    key_ = mix(mix(seed + kGamma) ^ mix(stream * kGamma + 0x1D8AF066A5F4D2CDULL));
    ctr_ = 0;
  }

  std::uint64_t next_u64() { return mix(key_ + (++ctr_) * kGamma); }

  // uniform on the open interval (0,1); 53-bit resolution, never 0 or 1
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t counter() const { return ctr_; }
  std::uint64_t key() const { return key_; }
  void restore(std::uint64_t key, std::uint64_t ctr) {
    key_ = key;
    ctr_ = ctr;
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t ctr_;
};

}  // namespace maxmix
