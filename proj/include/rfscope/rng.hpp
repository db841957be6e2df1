// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace rfscope {

// Counter-based 64-bit generator (SplitMix64). Each draw advances the state
// by a fixed odd constant and hashes it, so a stream is a pure function of
// (seed, draw index): the same seed yields the same sequence on every
// platform, and independent streams are derived by mixing a label into the
// seed rather than by sharing state.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1) with 53 significant bits. Exact binary arithmetic, no
  // libm involved, so results are bit-stable across platforms.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Zero-mean, unit-variance draw as a sum of 12 uniform variates
  // (Irwin-Hall). Uses only additions of exactly-representable values,
  // keeping the stream platform-stable; the distribution is bell-shaped and
  // bounded in [-6, 6].
  double next_normal() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += next_unit();
    return s - 6.0;
  }

 private:
  uint64_t state_;
};

// FNV-1a hash, used to derive per-name substreams and to fingerprint input
// files in run manifests.
uint64_t fnv1a64(std::string_view bytes);

// Seed for the substream identified by `label` under a master seed.
inline uint64_t substream_seed(uint64_t seed, std::string_view label) {
  return seed ^ (fnv1a64(label) | 1ull);
}

}  // namespace rfscope
