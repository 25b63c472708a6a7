#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace gap {

// splitmix64; used both as a mixer for seed derivation and to seed the
// main generator.
inline std::uint64_t splitmix64(std::uint64_t &state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministically derives a sub-stream seed from a master seed and a path
// of stream ids (e.g. {kStreamShuffle, step, epoch}). Two distinct paths give
// independent-looking streams.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = master ^ 0x6a09e667f3bcc909ULL;
  for (std::uint64_t p : path) {
    s ^= splitmix64(s) ^ (p + 0x9e3779b97f4a7c15ULL);
    (void)splitmix64(s);
  }
  return splitmix64(s);
}

// Seed-stream ids. Every consumer of randomness in a run names its stream so
// that re-running a config reproduces results bit-for-bit.
enum StreamId : std::uint64_t {
  kStreamInitWeights = 1,
  kStreamInitMask = 2,
  kStreamShuffle = 3,
  kStreamPartition = 4,
  kStreamProbe = 5,
  kStreamExplore = 6,
  kStreamWorker = 7,
  kStreamTeacher = 8,
  kStreamLabelNoise = 9,
  kStreamValSplit = 10,
  kStreamFeatures = 11,
};

// xoshiro256** — self-contained so results do not depend on the standard
// library's distribution implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto &word : state_) word = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Fisher-Yates; deterministic across platforms.
  template <typename T>
  void shuffle(std::vector<T> &items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

} // namespace gap
