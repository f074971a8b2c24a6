// Copyright (c) 2026 The spkembed Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPKEMBED_RNG_H_
#define SPKEMBED_RNG_H_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace spkembed {

// Folds a tag into a seed (FNV-1a over the tag bytes, mixed with the seed).
// Keyed streams make generation order-independent: every speaker, recording
// and parameter draws from its own stream, so adding or removing one entity
// never shifts the values of another.
inline uint64_t FoldSeed(uint64_t seed, const std::string& tag) {
  uint64_t h = 1469598103934665603ULL ^ seed;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  h ^= seed >> 32;
  h *= 1099511628211ULL;
  return h;
}

inline uint64_t FoldSeed(uint64_t seed, const std::string& tag, uint64_t index) {
  return FoldSeed(FoldSeed(seed, tag) + 0x9e3779b97f4a7c15ULL * (index + 1), tag);
}

// splitmix64 stream with an explicit Box-Muller gaussian transform.
// The sequences are fixed by the implementation, not by the standard
// library, so corpora and checkpoints are byte-stable across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  using result_type = uint64_t;
  static constexpr uint64_t min() { return 0; }
  static constexpr uint64_t max() { return ~0ULL; }
  uint64_t operator()() { return Next(); }

  uint64_t Next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), rejection-sampled so the draw is unbiased.
  uint64_t Below(uint64_t n) {
    uint64_t threshold = (~0ULL - n + 1) % n;  // = 2^64 mod n
    for (;;) {
      uint64_t r = Next();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller; one value per call.
  double Gaussian() {
    double u1 = Uniform();
    while (u1 <= 0.0) u1 = Uniform();
    double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void FillGaussian(std::vector<T>& out, double scale) {
    for (auto& v : out) v = static_cast<T>(Gaussian() * scale);
  }

  // Fisher-Yates; fixed algorithm for the same portability reason as above.
  template <typename T>
  void Shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(Below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  uint64_t state_;
};

}  // namespace spkembed

#endif  // SPKEMBED_RNG_H_
