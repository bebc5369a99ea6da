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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include "doctest.h"
#include "tts4p/features.hpp"
#include "tts4p/rng.hpp"

using tts4p::Rng;
using namespace tts4p::features;

namespace {

FeatureMatrix random_features(int t, int d, Rng& rng, float offset = 5.0f) {
  FeatureMatrix f;
  f.values = tts4p::numerics::Tensor<float>({t, d});
  for (int64_t i = 0; i < f.values.size(); ++i)
    f.values[i] = static_cast<float>(rng.normal()) + offset;
  return f;
}

bool bitwise_equal(const FeatureMatrix& a, const FeatureMatrix& b) {
  return a.values.same_shape(b.values) &&
         std::memcmp(a.values.data(), b.values.data(),
                     sizeof(float) * static_cast<size_t>(a.values.size())) == 0;
}

}  // namespace

TEST_CASE("silence maps to the log floor with the documented frame count") {
  LogMelConfig cfg;
  std::vector<float> samples(16000, 0.0f);
  FeatureMatrix f = logmel(samples, cfg);
  CHECK(f.frames() == 98);
  CHECK(f.dims() == 80);
  const float floor_val = std::log(1e-10f);
  for (int64_t i = 0; i < f.values.size(); ++i)
    CHECK(f.values[i] == doctest::Approx(floor_val).epsilon(1e-6));
}

TEST_CASE("logmel rejects bad input") {
  LogMelConfig cfg;
  CHECK_THROWS_AS(logmel(std::vector<float>(100, 0.0f), cfg), std::runtime_error);
  std::vector<float> bad(16000, 0.0f);
  bad[5] = std::nanf("");
  CHECK_THROWS_AS(logmel(bad, cfg), std::runtime_error);
  LogMelConfig wrong;
  wrong.sample_rate = 44100.0;
  CHECK_THROWS_AS(logmel(std::vector<float>(44100, 0.0f), wrong), std::invalid_argument);
}

TEST_CASE("a sine at a filter center peaks in that band") {
  LogMelConfig cfg;
  cfg.n_mels = 40;
  auto centers = mel_band_centers_hz(cfg);
  for (int band : {10, 20, 30}) {
    const double hz = centers[static_cast<size_t>(band)];
    std::vector<float> samples(8000);
    for (size_t i = 0; i < samples.size(); ++i)
      samples[i] = static_cast<float>(std::sin(2.0 * 3.14159265358979 * hz * i / cfg.sample_rate));
    FeatureMatrix f = logmel(samples, cfg);
    for (int t = 0; t < f.frames(); ++t) {
      int argmax = 0;
      for (int d = 1; d < f.dims(); ++d)
        if (f.values.at(t, d) > f.values.at(t, argmax)) argmax = d;
      CHECK(argmax == band);
    }
  }
}

TEST_CASE("doubling the amplitude adds ln 4 of band energy") {
  LogMelConfig cfg;
  cfg.n_mels = 40;
  auto centers = mel_band_centers_hz(cfg);
  const double hz = centers[20];
  std::vector<float> one(8000), two(8000);
  for (size_t i = 0; i < one.size(); ++i) {
    const double s = std::sin(2.0 * 3.14159265358979 * hz * i / cfg.sample_rate);
    one[i] = static_cast<float>(0.5 * s);
    two[i] = static_cast<float>(1.0 * s);
  }
  FeatureMatrix fa = logmel(one, cfg), fb = logmel(two, cfg);
  const int t = fa.frames() / 2;
  CHECK(fb.values.at(t, 20) - fa.values.at(t, 20) == doctest::Approx(std::log(4.0)).epsilon(1e-3));
}

TEST_CASE("augmentation with zeroed policy is the identity") {
  Rng rng(1);
  FeatureMatrix f = random_features(50, 20, rng);
  AugmentPolicy p;
  p.time_mask_fraction = 0;
  p.freq_mask_fraction = 0;
  p.use_freq_warp = false;
  Rng aug(2);
  CHECK(bitwise_equal(specaugment(f, p, aug), f));
}

TEST_CASE("time masking stays near the configured budget") {
  Rng rng(3);
  FeatureMatrix f = random_features(200, 16, rng);
  AugmentPolicy p;
  p.time_mask_fraction = 0.2;
  p.n_time_masks = 2;
  p.freq_mask_fraction = 0;
  p.n_freq_masks = 0;
  p.use_freq_warp = false;
  Rng aug(4);
  double total_fraction = 0;
  const int trials = 2000;
  for (int trial = 0; trial < trials; ++trial) {
    FeatureMatrix g = specaugment(f, p, aug);
    int masked = 0;
    for (int t = 0; t < f.frames(); ++t) {
      bool row_changed = true;
      for (int d = 0; d < f.dims(); ++d)
        if (g.values.at(t, d) == f.values.at(t, d)) {
          row_changed = false;
          break;
        }
      if (row_changed) ++masked;
    }
    CHECK(masked <= p.time_mask_fraction * f.frames() + p.n_time_masks);
    total_fraction += static_cast<double>(masked) / f.frames();
  }
  const double mean = total_fraction / trials;
  CHECK(mean >= 0.10);
  CHECK(mean <= 0.20);
}

TEST_CASE("frequency masking touches whole columns only") {
  Rng rng(5);
  FeatureMatrix f = random_features(30, 24, rng);
  AugmentPolicy p;
  p.time_mask_fraction = 0;
  p.n_time_masks = 0;
  p.freq_mask_fraction = 0.25;
  p.n_freq_masks = 2;
  p.use_freq_warp = false;
  Rng aug(6);
  FeatureMatrix g = specaugment(f, p, aug);
  std::set<int> changed_cols;
  for (int t = 0; t < f.frames(); ++t)
    for (int d = 0; d < f.dims(); ++d)
      if (g.values.at(t, d) != f.values.at(t, d)) changed_cols.insert(d);
  CHECK(!changed_cols.empty());
  CHECK(static_cast<int>(changed_cols.size()) <= 6);
  for (int d : changed_cols)
    for (int t = 0; t < f.frames(); ++t) CHECK(g.values.at(t, d) == 0.0f);
}

TEST_CASE("augmentation is reproducible, keeps shape, stays finite") {
  Rng rng(7);
  FeatureMatrix f = random_features(64, 32, rng);
  AugmentPolicy p;
  Rng a(99), b(99);
  FeatureMatrix ga = specaugment(f, p, a);
  FeatureMatrix gb = specaugment(f, p, b);
  CHECK(bitwise_equal(ga, gb));
  CHECK(ga.frames() == f.frames());
  CHECK(ga.dims() == f.dims());
  for (int64_t i = 0; i < ga.values.size(); ++i) CHECK(std::isfinite(ga.values[i]));
  Rng c(100);
  AugmentPolicy mean_fill = p;
  mean_fill.mask_fill = MaskFill::kMean;
  FeatureMatrix gm = specaugment(f, mean_fill, c);
  for (int64_t i = 0; i < gm.values.size(); ++i) CHECK(std::isfinite(gm.values[i]));
}

TEST_CASE("frequency warp basics") {
  Rng rng(8);
  FeatureMatrix f = random_features(10, 32, rng);
  CHECK(bitwise_equal(freq_warp_apply(f, 0), f));
  Rng zero_rng(1);
  CHECK(bitwise_equal(freq_warp(f, 0, zero_rng), f));
  CHECK_THROWS_AS(freq_warp(f, 9, zero_rng), std::invalid_argument);

  FeatureMatrix hot;
  hot.values = tts4p::numerics::Tensor<float>({3, 32});
  for (int t = 0; t < 3; ++t) hot.values.at(t, 16) = 1.0f;
  FeatureMatrix shifted = freq_warp_apply(hot, 1);
  for (int t = 0; t < 3; ++t) {
    CHECK(shifted.values.at(t, 17) == doctest::Approx(1.0f));
    int argmax = 0;
    for (int d = 1; d < 32; ++d)
      if (shifted.values.at(t, d) > shifted.values.at(t, argmax)) argmax = d;
    CHECK(argmax == 17);
  }

  FeatureMatrix smooth;
  smooth.values = tts4p::numerics::Tensor<float>({4, 32});
  for (int t = 0; t < 4; ++t)
    for (int d = 0; d < 32; ++d)
      smooth.values.at(t, d) = static_cast<float>(std::exp(-0.01 * (d - 15) * (d - 15)) + 1.0);
  FeatureMatrix warped = freq_warp_apply(smooth, 3);
  for (int t = 0; t < 4; ++t) {
    double before = 0, after = 0;
    for (int d = 0; d < 32; ++d) {
      before += smooth.values.at(t, d);
      after += warped.values.at(t, d);
    }
    CHECK(std::abs(after - before) / before <= 0.05);
  }
}

TEST_CASE("contrastive mask covers about the requested fraction") {
  Rng rng(9);
  std::vector<uint8_t> empty = contrastive_time_mask(100, 0.0, 10, rng);
  for (uint8_t m : empty) CHECK(m == 0);

  double total = 0;
  const int trials = 1000;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<std::pair<int, int>> spans;
    std::vector<uint8_t> mask = contrastive_time_mask(1000, 0.5, 10, rng, &spans);
    int covered = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      ++covered;
      bool inside = false;
      for (auto [s, e] : spans)
        if (static_cast<int>(i) >= s && static_cast<int>(i) < e) {
          inside = true;
          break;
        }
      CHECK(inside);
    }
    total += covered / 1000.0;
  }
  const double mean = total / trials;
  CHECK(mean >= 0.45);
  CHECK(mean <= 0.55);

  CHECK_THROWS_AS(contrastive_time_mask(10, 1.0, 2, rng), std::invalid_argument);
  CHECK_THROWS_AS(contrastive_time_mask(10, 0.5, 0, rng), std::invalid_argument);
  CHECK_THROWS_AS(contrastive_time_mask(0, 0.5, 2, rng), std::invalid_argument);
}

TEST_CASE("feature files round-trip bit-exactly and reject corruption") {
  Rng rng(10);
  FeatureMatrix f = random_features(17, 13, rng);
  f.values[3] = -0.0f;
  const std::string path = "melf_roundtrip_test.bin";
  write_features(f, path);
  FeatureMatrix g = read_features(path);
  CHECK(bitwise_equal(f, g));

  {
    std::ifstream is(path, std::ios::binary);
    std::vector<char> all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    std::ofstream os("melf_truncated_test.bin", std::ios::binary);
    os.write(all.data(), static_cast<std::streamsize>(all.size() - 7));
  }
  CHECK_THROWS_AS(read_features("melf_truncated_test.bin"), std::runtime_error);
  {
    std::ofstream os("melf_trailing_test.bin", std::ios::binary);
    std::ifstream is(path, std::ios::binary);
    os << is.rdbuf();
    os.write("XX", 2);
  }
  CHECK_THROWS_AS(read_features("melf_trailing_test.bin"), std::runtime_error);
  {
    std::ofstream os("melf_badmagic_test.bin", std::ios::binary);
    os.write("MELX", 4);
  }
  CHECK_THROWS_AS(read_features("melf_badmagic_test.bin"), std::runtime_error);
  CHECK_THROWS_AS(read_features("melf_missing_test.bin"), std::runtime_error);

  std::remove(path.c_str());
  std::remove("melf_truncated_test.bin");
  std::remove("melf_trailing_test.bin");
  std::remove("melf_badmagic_test.bin");
}
