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

#include "tts4p/encoder.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "tts4p/gradcheck.hpp"

namespace tts4p::encoder {

namespace {

constexpr double kLayerNormEps = 1e-5;

std::string layer_prefix(int layer) { return "enc.l" + std::to_string(layer) + "."; }

}  // namespace

void EncoderConfig::validate() const {
  if (d_model < 1) throw std::invalid_argument("encoder config: d_model must be positive");
  if (n_heads < 1) throw std::invalid_argument("encoder config: n_heads must be positive");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("encoder config: d_model must be divisible by n_heads");
  if (n_layers < 1) throw std::invalid_argument("encoder config: n_layers must be positive");
  if (conv_kernel < 1 || conv_kernel % 2 == 0)
    throw std::invalid_argument("encoder config: conv_kernel must be odd and positive");
  if (ffn_expansion < 1) throw std::invalid_argument("encoder config: ffn_expansion must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw std::invalid_argument("encoder config: dropout must lie in [0, 1)");
  if (subsample_channels < 1)
    throw std::invalid_argument("encoder config: subsample_channels must be positive");
  if (feature_dims < 1) throw std::invalid_argument("encoder config: feature_dims must be positive");
}

int subsampled_length(int frames) {
  if (frames < 1) throw std::invalid_argument("subsampled_length: frames must be positive");
  int once = (frames + 1) / 2;
  return (once + 1) / 2;
}

ModelParams init_encoder_params(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams params;
  const auto p = numerics::Partition::kEncoder;
  const int d = cfg.d_model;
  const int c = cfg.subsample_channels;
  const int e = cfg.ffn_expansion * d;

  auto matrix = [&](const std::string& name, std::vector<int> shape, int fan_in) {
    params.add(name, Tensor<float>::randn(shape, rng, 1.0f / std::sqrt(static_cast<float>(fan_in))),
               p);
  };
  auto zeros = [&](const std::string& name, std::vector<int> shape) {
    params.add(name, Tensor<float>(std::move(shape)), p);
  };
  auto ones = [&](const std::string& name, std::vector<int> shape) {
    params.add(name, Tensor<float>::full(std::move(shape), 1.0f), p);
  };

  matrix("enc.sub1.k", {3, 3, 1, c}, 9);
  zeros("enc.sub1.b", {c});
  matrix("enc.sub2.k", {3, 3, c, c}, 9 * c);
  zeros("enc.sub2.b", {c});
  const int flattened = subsampled_length(cfg.feature_dims) * c;
  matrix("enc.proj.w", {flattened, d}, flattened);
  zeros("enc.proj.b", {d});
  params.add("enc.mask_embed", Tensor<float>::randn({d}, rng, 0.1f), p);
  if (cfg.separate_target_projection) {
    matrix("enc.tproj.w", {d, d}, d);
    zeros("enc.tproj.b", {d});
  }

  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string lp = layer_prefix(i);
    for (const char* ffn : {"ffn1.", "ffn2."}) {
      ones(lp + ffn + std::string("ln.g"), {d});
      zeros(lp + ffn + std::string("ln.b"), {d});
      matrix(lp + ffn + std::string("w1"), {d, e}, d);
      zeros(lp + ffn + std::string("b1"), {e});
      matrix(lp + ffn + std::string("w2"), {e, d}, e);
      zeros(lp + ffn + std::string("b2"), {d});
    }
    ones(lp + "attn.ln.g", {d});
    zeros(lp + "attn.ln.b", {d});
    for (const char* m : {"wq", "wk", "wv", "wo"}) matrix(lp + "attn." + m, {d, d}, d);
    for (const char* b : {"bq", "bk", "bv", "bo"}) zeros(lp + "attn." + b, {d});
    ones(lp + "conv.ln.g", {d});
    zeros(lp + "conv.ln.b", {d});
    matrix(lp + "conv.pw1.w", {d, 2 * d}, d);
    zeros(lp + "conv.pw1.b", {2 * d});
    matrix(lp + "conv.dw.k", {cfg.conv_kernel, d}, cfg.conv_kernel);
    ones(lp + "conv.ln2.g", {d});
    zeros(lp + "conv.ln2.b", {d});
    matrix(lp + "conv.pw2.w", {d, d}, d);
    zeros(lp + "conv.pw2.b", {d});
    ones(lp + "final_ln.g", {d});
    zeros(lp + "final_ln.b", {d});
  }
  return params;
}

template <typename T>
Tensor<T> sinusoidal_positions(int frames, int d_model) {
  if (frames < 1 || d_model < 1)
    throw std::invalid_argument("sinusoidal_positions: bad dimensions");
  Tensor<T> pe({frames, d_model});
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < d_model; i += 2) {
      double angle = t * std::exp(-std::log(10000.0) * i / d_model);
      pe.at(t, i) = static_cast<T>(std::sin(angle));
      if (i + 1 < d_model) pe.at(t, i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
typename Tape<T>::Var lookup(const ParamMap<T>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("encoder: missing parameter " + name);
  return it->second;
}

namespace {

template <typename T>
typename Tape<T>::Var channel_bias_swish(Tape<T>& tape, typename Tape<T>::Var x,
                                         typename Tape<T>::Var bias) {
  const Tensor<T>& v = tape.value_of(x.id);
  int t = v.dim(0), f = v.dim(1), c = v.dim(2);
  auto flat = tape.reshape(x, {t * f, c});
  flat = tape.swish(tape.add_rowvec(flat, bias));
  return tape.reshape(flat, {t, f, c});
}

template <typename T>
typename Tape<T>::Var maybe_dropout(Tape<T>& tape, typename Tape<T>::Var x,
                                    const EncoderConfig& cfg, Rng* rng) {
  if (cfg.dropout <= 0.0 || rng == nullptr) return x;
  const Tensor<T>& v = tape.value_of(x.id);
  const T keep = static_cast<T>(1.0 - cfg.dropout);
  Tensor<T> m(v.shape());
  for (int64_t i = 0; i < m.size(); ++i) m[i] = rng->bernoulli(1.0 - cfg.dropout) ? T(1) / keep : T(0);
  return tape.mul(x, tape.constant(std::move(m)));
}

template <typename T>
typename Tape<T>::Var ffn_sublayer(Tape<T>& tape, typename Tape<T>::Var x,
                                   const ParamMap<T>& params, const std::string& prefix) {
  auto y = tape.layer_norm(x, lookup<T>(params, prefix + "ln.g"), lookup<T>(params, prefix + "ln.b"),
                           static_cast<T>(kLayerNormEps));
  y = tape.add_rowvec(tape.matmul(y, lookup<T>(params, prefix + "w1")), lookup<T>(params, prefix + "b1"));
  y = tape.swish(y);
  return tape.add_rowvec(tape.matmul(y, lookup<T>(params, prefix + "w2")),
                         lookup<T>(params, prefix + "b2"));
}

template <typename T>
typename Tape<T>::Var conv_sublayer(Tape<T>& tape, typename Tape<T>::Var x,
                                    const ParamMap<T>& params, const std::string& prefix,
                                    const EncoderConfig& cfg) {
  const int d = cfg.d_model;
  auto y = tape.layer_norm(x, lookup<T>(params, prefix + "ln.g"), lookup<T>(params, prefix + "ln.b"),
                           static_cast<T>(kLayerNormEps));
  y = tape.add_rowvec(tape.matmul(y, lookup<T>(params, prefix + "pw1.w")),
                      lookup<T>(params, prefix + "pw1.b"));
  auto gate = tape.sigmoid(tape.slice_cols(y, d, d));
  y = tape.mul(tape.slice_cols(y, 0, d), gate);
  y = tape.depthwise_conv1d(y, lookup<T>(params, prefix + "dw.k"));
  y = tape.layer_norm(y, lookup<T>(params, prefix + "ln2.g"), lookup<T>(params, prefix + "ln2.b"),
                      static_cast<T>(kLayerNormEps));
  y = tape.swish(y);
  return tape.add_rowvec(tape.matmul(y, lookup<T>(params, prefix + "pw2.w")),
                         lookup<T>(params, prefix + "pw2.b"));
}

}  // namespace

template <typename T>
typename Tape<T>::Var subsample(Tape<T>& tape, typename Tape<T>::Var features,
                                const ParamMap<T>& params, const EncoderConfig& cfg) {
  const Tensor<T>& f = tape.value_of(features.id);
  if (f.rank() != 2) throw std::invalid_argument("subsample: features must be rank 2");
  if (f.dim(1) != cfg.feature_dims)
    throw std::invalid_argument("subsample: feature dimension does not match config");
  auto x = tape.reshape(features, {f.dim(0), f.dim(1), 1});
  x = tape.conv2d(x, lookup<T>(params, "enc.sub1.k"), 2, 2);
  x = channel_bias_swish(tape, x, lookup<T>(params, "enc.sub1.b"));
  x = tape.conv2d(x, lookup<T>(params, "enc.sub2.k"), 2, 2);
  x = channel_bias_swish(tape, x, lookup<T>(params, "enc.sub2.b"));
  const Tensor<T>& v = tape.value_of(x.id);
  x = tape.reshape(x, {v.dim(0), v.dim(1) * v.dim(2)});
  x = tape.matmul(x, lookup<T>(params, "enc.proj.w"));
  return tape.add_rowvec(x, lookup<T>(params, "enc.proj.b"));
}

template <typename T>
typename Tape<T>::Var apply_latent_mask(Tape<T>& tape, typename Tape<T>::Var latents,
                                        const std::vector<uint8_t>& mask,
                                        typename Tape<T>::Var mask_embedding) {
  return tape.replace_rows(latents, mask, mask_embedding);
}

template <typename T>
typename Tape<T>::Var mhsa_forward(Tape<T>& tape, typename Tape<T>::Var x,
                                   const ParamMap<T>& params, const std::string& prefix,
                                   const EncoderConfig& cfg) {
  const int dh = cfg.d_model / cfg.n_heads;
  auto proj = [&](const char* w, const char* b) {
    return tape.add_rowvec(tape.matmul(x, lookup<T>(params, prefix + w)), lookup<T>(params, prefix + b));
  };
  auto q = proj("wq", "bq");
  auto k = proj("wk", "bk");
  auto v = proj("wv", "bv");
  std::vector<typename Tape<T>::Var> heads;
  heads.reserve(static_cast<size_t>(cfg.n_heads));
  for (int h = 0; h < cfg.n_heads; ++h) {
    auto qh = tape.slice_cols(q, h * dh, dh);
    auto kh = tape.slice_cols(k, h * dh, dh);
    auto vh = tape.slice_cols(v, h * dh, dh);
    auto scores = tape.scale(tape.matmul_nt(qh, kh), T(1) / std::sqrt(static_cast<T>(dh)));
    heads.push_back(tape.matmul(tape.softmax(scores), vh));
  }
  auto merged = cfg.n_heads == 1 ? heads[0] : tape.concat_cols(heads);
  return tape.add_rowvec(tape.matmul(merged, lookup<T>(params, prefix + "wo")),
                         lookup<T>(params, prefix + "bo"));
}

template <typename T>
typename Tape<T>::Var conformer_forward(Tape<T>& tape, typename Tape<T>::Var x,
                                        const ParamMap<T>& params, const EncoderConfig& cfg,
                                        Rng* dropout_rng) {
  cfg.validate();
  const Tensor<T>& v = tape.value_of(x.id);
  if (v.rank() != 2 || v.dim(1) != cfg.d_model)
    throw std::invalid_argument("conformer_forward: input must be frames x d_model");
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string lp = layer_prefix(i);
    x = tape.add(x, tape.scale(maybe_dropout(tape, ffn_sublayer(tape, x, params, lp + "ffn1."),
                                             cfg, dropout_rng),
                               T(0.5)));
    auto pre = tape.layer_norm(x, lookup<T>(params, lp + "attn.ln.g"),
                               lookup<T>(params, lp + "attn.ln.b"), static_cast<T>(kLayerNormEps));
    x = tape.add(x, maybe_dropout(tape, mhsa_forward(tape, pre, params, lp + "attn.", cfg), cfg,
                                  dropout_rng));
    x = tape.add(x, maybe_dropout(tape, conv_sublayer(tape, x, params, lp + "conv.", cfg), cfg,
                                  dropout_rng));
    x = tape.add(x, tape.scale(maybe_dropout(tape, ffn_sublayer(tape, x, params, lp + "ffn2."),
                                             cfg, dropout_rng),
                               T(0.5)));
    x = tape.layer_norm(x, lookup<T>(params, lp + "final_ln.g"), lookup<T>(params, lp + "final_ln.b"),
                        static_cast<T>(kLayerNormEps));
  }
  return x;
}

template <typename T>
EncodedUtterance<T> encode(Tape<T>& tape, typename Tape<T>::Var features,
                           const ParamMap<T>& params, const EncoderConfig& cfg,
                           const std::vector<uint8_t>& mask_plan, Rng* dropout_rng) {
  cfg.validate();
  auto latents = subsample(tape, features, params, cfg);
  const int frames = tape.value_of(latents.id).dim(0);
  if (static_cast<int>(mask_plan.size()) != frames)
    throw std::invalid_argument("encode: mask plan length does not match subsampled frames");

  auto targets = cfg.target_stop_gradient ? tape.detach(latents) : latents;
  if (cfg.separate_target_projection)
    targets = tape.add_rowvec(tape.matmul(targets, lookup<T>(params, "enc.tproj.w")),
                              lookup<T>(params, "enc.tproj.b"));

  auto x = apply_latent_mask(tape, latents, mask_plan, lookup<T>(params, "enc.mask_embed"));
  x = tape.add(x, tape.constant(sinusoidal_positions<T>(frames, cfg.d_model)));
  x = conformer_forward(tape, x, params, cfg, dropout_rng);
  return {targets, x, mask_plan};
}

}  // namespace tts4p::encoder

namespace tts4p::numerics {

void append_encoder_gradient_cases(std::vector<GradCase>& cases) {
  using encoder::EncoderConfig;
  using encoder::ParamMap;
  EncoderConfig cfg;
  cfg.d_model = 4;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.conv_kernel = 3;
  cfg.ffn_expansion = 2;
  cfg.subsample_channels = 2;
  cfg.feature_dims = 6;
  cfg.target_stop_gradient = false;
  const int frames = 5;
  auto names = std::make_shared<std::vector<std::string>>();

  GradCase c;
  c.name = "encoder_encode";
  c.make_inputs = [cfg, names](Rng& rng) {
    ModelParams p = encoder::init_encoder_params(cfg, rng);
    names->clear();
    std::vector<Tensor<double>> out;
    for (const auto& [name, entry] : p.entries()) {
      names->push_back(name);
      out.push_back(entry.value.template cast<double>());
    }
    out.push_back(Tensor<double>::randn({frames, cfg.feature_dims}, rng, 1.0));
    return out;
  };
  c.build = [cfg, names](Tape<double>& tape, const std::vector<Tape<double>::Var>& leaves) {
    ParamMap<double> pm;
    for (size_t i = 0; i < names->size(); ++i) pm[(*names)[i]] = leaves[i];
    std::vector<uint8_t> plan = {1, 0};
    auto enc = encoder::encode(tape, leaves.back(), pm, cfg, plan, nullptr);
    return tape.add(tape.sum(tape.swish(enc.contexts)), tape.sum(tape.tanh_op(enc.targets)));
  };
  cases.push_back(std::move(c));
}

}  // namespace tts4p::numerics

namespace tts4p::encoder {

#define TTS4P_ENCODER_INSTANTIATE(T)                                                          \
  template Tensor<T> sinusoidal_positions<T>(int, int);                                       \
  template Tape<T>::Var lookup<T>(const ParamMap<T>&, const std::string&);                    \
  template Tape<T>::Var subsample<T>(Tape<T>&, Tape<T>::Var, const ParamMap<T>&,              \
                                     const EncoderConfig&);                                   \
  template Tape<T>::Var apply_latent_mask<T>(Tape<T>&, Tape<T>::Var,                          \
                                             const std::vector<uint8_t>&, Tape<T>::Var);      \
  template Tape<T>::Var mhsa_forward<T>(Tape<T>&, Tape<T>::Var, const ParamMap<T>&,           \
                                        const std::string&, const EncoderConfig&);            \
  template Tape<T>::Var conformer_forward<T>(Tape<T>&, Tape<T>::Var, const ParamMap<T>&,      \
                                             const EncoderConfig&, Rng*);                     \
  template EncodedUtterance<T> encode<T>(Tape<T>&, Tape<T>::Var, const ParamMap<T>&,          \
                                         const EncoderConfig&, const std::vector<uint8_t>&,   \
                                         Rng*);

TTS4P_ENCODER_INSTANTIATE(float)
TTS4P_ENCODER_INSTANTIATE(double)

#undef TTS4P_ENCODER_INSTANTIATE

}  // namespace tts4p::encoder
