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

#include "tts4p/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "tts4p/bytes.hpp"

namespace tts4p::features {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLogFloor = 1e-10;

void fft_inplace(std::vector<double>& re, std::vector<double>& im) {
  const size_t n = re.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t base = 0; base < n; base += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t k = 0; k < len / 2; ++k) {
        const size_t a = base + k, b = base + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_edges_hz(const LogMelConfig& cfg) {
  const double lo = hz_to_mel(0.0), hi = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> edges(static_cast<size_t>(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[static_cast<size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (cfg.n_mels + 1));
  return edges;
}

void validate_logmel_config(const LogMelConfig& cfg) {
  if (cfg.sample_rate != 8000.0 && cfg.sample_rate != 16000.0)
    throw std::invalid_argument("logmel: sample rate must be 8000 or 16000");
  if (cfg.n_mels < 2) throw std::invalid_argument("logmel: need at least 2 mel bands");
  if (cfg.window_ms <= 0 || cfg.hop_ms <= 0)
    throw std::invalid_argument("logmel: window and hop must be positive");
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

std::vector<double> mel_band_centers_hz(const LogMelConfig& cfg) {
  validate_logmel_config(cfg);
  const std::vector<double> edges = mel_edges_hz(cfg);
  return {edges.begin() + 1, edges.end() - 1};
}

FeatureMatrix logmel(const std::vector<float>& samples, const LogMelConfig& cfg) {
  validate_logmel_config(cfg);
  const int window = static_cast<int>(std::lround(cfg.sample_rate * cfg.window_ms / 1000.0));
  const int hop = static_cast<int>(std::lround(cfg.sample_rate * cfg.hop_ms / 1000.0));
  const int n = static_cast<int>(samples.size());
  if (n < window)
    throw std::runtime_error("logmel: signal shorter than one analysis window");
  for (float s : samples)
    if (!std::isfinite(s)) throw std::runtime_error("logmel: non-finite sample");

  const int frames = 1 + (n - window) / hop;
  const int nfft = next_pow2(window);
  const int bins = nfft / 2 + 1;

  std::vector<double> hann(static_cast<size_t>(window));
  for (int i = 0; i < window; ++i)
    hann[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (window - 1));

  const std::vector<double> edges = mel_edges_hz(cfg);
  std::vector<double> weights(static_cast<size_t>(cfg.n_mels) * bins, 0.0);
  for (int d = 0; d < cfg.n_mels; ++d) {
    const double lo = edges[static_cast<size_t>(d)];
    const double mid = edges[static_cast<size_t>(d) + 1];
    const double hi = edges[static_cast<size_t>(d) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / nfft;
      double w = 0.0;
      if (f >= lo && f <= mid && mid > lo)
        w = (f - lo) / (mid - lo);
      else if (f > mid && f <= hi && hi > mid)
        w = (hi - f) / (hi - mid);
      weights[static_cast<size_t>(d) * bins + k] = w;
    }
  }

  FeatureMatrix out;
  out.values = numerics::Tensor<float>({frames, cfg.n_mels});
  std::vector<double> re(static_cast<size_t>(nfft)), im(static_cast<size_t>(nfft));
  for (int t = 0; t < frames; ++t) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    for (int i = 0; i < window; ++i)
      re[static_cast<size_t>(i)] =
          static_cast<double>(samples[static_cast<size_t>(t) * hop + i]) * hann[static_cast<size_t>(i)];
    fft_inplace(re, im);
    for (int d = 0; d < cfg.n_mels; ++d) {
      double energy = 0.0;
      const double* w = weights.data() + static_cast<size_t>(d) * bins;
      for (int k = 0; k < bins; ++k) {
        if (w[k] == 0.0) continue;
        energy += w[k] * (re[static_cast<size_t>(k)] * re[static_cast<size_t>(k)] +
                          im[static_cast<size_t>(k)] * im[static_cast<size_t>(k)]);
      }
      out.values.at(t, d) = static_cast<float>(std::log(energy + kLogFloor));
    }
  }
  return out;
}

void validate_policy(const AugmentPolicy& p) {
  if (p.time_mask_fraction < 0 || p.time_mask_fraction >= 1)
    throw std::invalid_argument("augment policy: time_mask_fraction must be in [0, 1)");
  if (p.freq_mask_fraction < 0 || p.freq_mask_fraction >= 1)
    throw std::invalid_argument("augment policy: freq_mask_fraction must be in [0, 1)");
  if (p.n_time_masks < 0 || p.n_freq_masks < 0)
    throw std::invalid_argument("augment policy: mask counts must be >= 0");
  if (p.warp_max_shift < 0)
    throw std::invalid_argument("augment policy: warp_max_shift must be >= 0");
}

namespace {

// Masks `count` random stretches of rows (axis 0) or columns (axis 1).
void apply_masks(numerics::Tensor<float>& v, double fraction, int count, int axis, float fill,
                 Rng& rng) {
  const int extent = (axis == 0) ? v.rows() : v.cols();
  if (count < 1 || fraction <= 0) return;
  const int cap = static_cast<int>(fraction * extent / count);
  if (cap < 1) return;
  for (int m = 0; m < count; ++m) {
    const int lo = cap / 2;
    const int len = lo + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cap - lo + 1)));
    if (len < 1) continue;
    const int start = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(extent - len + 1)));
    if (axis == 0) {
      for (int t = start; t < start + len; ++t)
        for (int d = 0; d < v.cols(); ++d) v.at(t, d) = fill;
    } else {
      for (int t = 0; t < v.rows(); ++t)
        for (int d = start; d < start + len; ++d) v.at(t, d) = fill;
    }
  }
}

}  // namespace

FeatureMatrix specaugment(const FeatureMatrix& f, const AugmentPolicy& p, Rng& rng) {
  validate_policy(p);
  FeatureMatrix out = f;
  if (p.use_freq_warp && p.warp_before_mask) out = freq_warp(out, p.warp_max_shift, rng);
  float fill = 0.0f;
  if (p.mask_fill == MaskFill::kMean) {
    double s = 0;
    for (int64_t i = 0; i < out.values.size(); ++i) s += out.values[i];
    fill = static_cast<float>(s / static_cast<double>(out.values.size()));
  }
  apply_masks(out.values, p.time_mask_fraction, p.n_time_masks, 0, fill, rng);
  apply_masks(out.values, p.freq_mask_fraction, p.n_freq_masks, 1, fill, rng);
  if (p.use_freq_warp && !p.warp_before_mask) out = freq_warp(out, p.warp_max_shift, rng);
  return out;
}

FeatureMatrix freq_warp_apply(const FeatureMatrix& f, int shift) {
  const int d = f.dims();
  if (shift == 0) return f;
  const int anchor_src = d / 2;
  const int anchor_dst = anchor_src + shift;
  if (anchor_dst < 1 || anchor_dst > d - 2)
    throw std::invalid_argument("freq_warp: shift moves the anchor out of range");
  FeatureMatrix out = f;
  for (int j = 0; j < d; ++j) {
    double src;
    if (j <= anchor_dst)
      src = static_cast<double>(j) * anchor_src / anchor_dst;
    else
      src = anchor_src +
            static_cast<double>(j - anchor_dst) * (d - 1 - anchor_src) / (d - 1 - anchor_dst);
    const int lo = static_cast<int>(src);
    const int hi = std::min(lo + 1, d - 1);
    const float frac = static_cast<float>(src - lo);
    for (int t = 0; t < f.frames(); ++t)
      out.values.at(t, j) = (1.0f - frac) * f.values.at(t, lo) + frac * f.values.at(t, hi);
  }
  return out;
}

FeatureMatrix freq_warp(const FeatureMatrix& f, int max_shift_bands, Rng& rng) {
  const int d = f.dims();
  if (max_shift_bands < 0) throw std::invalid_argument("freq_warp: negative max shift");
  if (max_shift_bands > d / 4)
    throw std::invalid_argument("freq_warp: max shift exceeds a quarter of the bands");
  if (max_shift_bands == 0) return f;
  int shift = -max_shift_bands +
              static_cast<int>(rng.uniform_int(static_cast<uint64_t>(2 * max_shift_bands + 1)));
  const int anchor = d / 2;
  shift = std::clamp(shift, 1 - anchor, d - 2 - anchor);
  return freq_warp_apply(f, shift);
}

std::vector<uint8_t> contrastive_time_mask(int frames, double fraction, int span, Rng& rng,
                                           std::vector<std::pair<int, int>>* spans_out) {
  if (frames < 1) throw std::invalid_argument("contrastive_time_mask: need at least one frame");
  if (fraction < 0 || fraction >= 1)
    throw std::invalid_argument("contrastive_time_mask: fraction must be in [0, 1)");
  if (span < 1) throw std::invalid_argument("contrastive_time_mask: span must be >= 1");
  std::vector<uint8_t> mask(static_cast<size_t>(frames), 0);
  const int target = static_cast<int>(std::lround(fraction * frames));
  if (target == 0) return mask;
  const int s = std::min(span, frames);
  int covered = 0;
  while (covered < target) {
    const int start = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(frames - s + 1)));
    for (int i = start; i < start + s; ++i) {
      if (!mask[static_cast<size_t>(i)]) {
        mask[static_cast<size_t>(i)] = 1;
        ++covered;
      }
    }
    if (spans_out) spans_out->emplace_back(start, start + s);
  }
  return mask;
}

void write_features(const FeatureMatrix& f, const std::string& path) {
  if (f.frames() < 1 || f.dims() < 1)
    throw std::invalid_argument("write_features: empty feature matrix");
  for (int64_t i = 0; i < f.values.size(); ++i)
    if (!std::isfinite(f.values[i])) throw std::invalid_argument("write_features: non-finite value");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_features: cannot open " + path);
  os.write("MELF", 4);
  bytes::put_u32(os, 1u);
  bytes::put_u32(os, static_cast<uint32_t>(f.frames()));
  bytes::put_u32(os, static_cast<uint32_t>(f.dims()));
  for (int64_t i = 0; i < f.values.size(); ++i) bytes::put_f32(os, f.values[i]);
  if (!os) throw std::runtime_error("write_features: write failed for " + path);
}

FeatureMatrix read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_features: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MELF", 4) != 0)
    throw std::runtime_error("read_features: bad magic in " + path);
  const uint32_t version = bytes::get_u32(is);
  if (!is || version != 1) throw std::runtime_error("read_features: unsupported version");
  const uint32_t t = bytes::get_u32(is);
  const uint32_t d = bytes::get_u32(is);
  if (!is || t < 1 || d < 1 || static_cast<uint64_t>(t) * d > (1u << 30))
    throw std::runtime_error("read_features: implausible header in " + path);
  FeatureMatrix f;
  f.values = numerics::Tensor<float>({static_cast<int>(t), static_cast<int>(d)});
  for (int64_t i = 0; i < f.values.size(); ++i) f.values[i] = bytes::get_f32(is);
  if (!is) throw std::runtime_error("read_features: truncated payload in " + path);
  is.peek();
  if (!is.eof()) throw std::runtime_error("read_features: trailing bytes in " + path);
  for (int64_t i = 0; i < f.values.size(); ++i)
    if (!std::isfinite(f.values[i]))
      throw std::runtime_error("read_features: non-finite value in " + path);
  return f;
}

}  // namespace tts4p::features
