// Copyright 2026 tts4p authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TTS4P_RNG_HPP_
#define TTS4P_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace tts4p {

// Deterministic PRNG (splitmix64 core). Standard-library distributions are
// implementation-defined, so all sampling goes through this class to keep
// runs reproducible byte-for-byte.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed + kGamma) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += kGamma);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Derives an independent stream; used for per-item / per-worker seeding.
  Rng split(uint64_t key) {
    uint64_t s = next_u64();
    return Rng(s ^ (key * 0x9e3779b97f4a7c15ULL + 0x165667b19e3779f9ULL));
  }
  static Rng from_keys(uint64_t a, uint64_t b, uint64_t c = 0) {
    Rng r(a);
    r.state_ ^= b * 0xd1342543de82ef95ULL;
    r.state_ += c * 0x2545f4914f6cdd1dULL;
    r.next_u64();
    return r;
  }

  // Uniform in [0, n). n must be > 0.
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }
  // Uniform in [lo, hi] inclusive.
  int uniform_range(int lo, int hi) { return lo + uniform_int(hi - lo + 1); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (one draw per call, cached pair).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static constexpr uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace tts4p

#endif  // TTS4P_RNG_HPP_
