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

#ifndef TTS4P_FEATURES_HPP_
#define TTS4P_FEATURES_HPP_

#include <string>
#include <utility>
#include <vector>

#include "tts4p/rng.hpp"
#include "tts4p/tensor.hpp"

namespace tts4p::features {

enum class FeatureSource { kReal, kSynthesized };

// Log-mel frames, [T x D] row-major.
struct FeatureMatrix {
  numerics::Tensor<float> values;
  FeatureSource source = FeatureSource::kReal;

  int frames() const { return values.rows(); }
  int dims() const { return values.cols(); }
};

struct LogMelConfig {
  double sample_rate = 16000.0;
  int n_mels = 80;
  double window_ms = 25.0;
  double hop_ms = 10.0;
};

// 25 ms Hann window, 10 ms hop, power spectrum through an HTK-style
// triangular mel filterbank, then ln(energy + 1e-10).
FeatureMatrix logmel(const std::vector<float>& samples, const LogMelConfig& cfg);

// Peak frequency of each triangular filter.
std::vector<double> mel_band_centers_hz(const LogMelConfig& cfg);

enum class MaskFill { kZero, kMean };

struct AugmentPolicy {
  double time_mask_fraction = 0.2;
  int n_time_masks = 2;
  double freq_mask_fraction = 0.2;
  int n_freq_masks = 2;
  bool use_freq_warp = true;
  int warp_max_shift = 4;
  bool warp_before_mask = true;
  MaskFill mask_fill = MaskFill::kZero;
};

void validate_policy(const AugmentPolicy& p);

// Random time and frequency masks plus optional frequency warp, for the
// auxiliary-loss path. Per mask, length is drawn from
// U{cap/2 .. cap} with cap = floor(fraction * extent / n_masks), so the
// masked total stays at or under fraction * extent.
FeatureMatrix specaugment(const FeatureMatrix& f, const AugmentPolicy& p, Rng& rng);

// Piecewise-linear remap along the frequency axis with a random integer shift
// in [-max_shift_bands, max_shift_bands] at the middle band.
FeatureMatrix freq_warp(const FeatureMatrix& f, int max_shift_bands, Rng& rng);

// Deterministic warp at a given shift; freq_warp draws the shift.
FeatureMatrix freq_warp_apply(const FeatureMatrix& f, int shift);

// Union of random spans covering roughly `fraction` of the frames, for the
// contrastive path. Sampled spans are appended to `spans_out` when given.
std::vector<uint8_t> contrastive_time_mask(int frames, double fraction, int span, Rng& rng,
                                           std::vector<std::pair<int, int>>* spans_out = nullptr);

// Binary container: magic "MELF", u32 version=1, u32 T, u32 D, f32 payload.
void write_features(const FeatureMatrix& f, const std::string& path);
FeatureMatrix read_features(const std::string& path);

}  // namespace tts4p::features

#endif  // TTS4P_FEATURES_HPP_
