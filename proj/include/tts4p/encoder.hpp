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

#ifndef TTS4P_ENCODER_HPP_
#define TTS4P_ENCODER_HPP_

#include <map>
#include <string>
#include <vector>

#include "tts4p/params.hpp"
#include "tts4p/rng.hpp"
#include "tts4p/tape.hpp"

namespace tts4p::encoder {

using numerics::ModelParams;
using numerics::Tape;
using numerics::Tensor;

template <typename T>
using ParamMap = std::map<std::string, typename Tape<T>::Var>;

struct EncoderConfig {
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 2;
  int conv_kernel = 7;
  int ffn_expansion = 4;
  double dropout = 0.0;
  int subsample_channels = 32;
  int feature_dims = 80;
  bool target_stop_gradient = true;
  bool separate_target_projection = true;

  void validate() const;
};

// Two stride-2 stages of ceil division.
int subsampled_length(int frames);

ModelParams init_encoder_params(const EncoderConfig& cfg, Rng& rng);

template <typename T>
Tensor<T> sinusoidal_positions(int frames, int d_model);

template <typename T>
typename Tape<T>::Var lookup(const ParamMap<T>& params, const std::string& name);

// Conv subsampling: two stride-(2,2) 2-D convolutions with swish, flatten,
// linear projection to d_model.
template <typename T>
typename Tape<T>::Var subsample(Tape<T>& tape, typename Tape<T>::Var features,
                                const ParamMap<T>& params, const EncoderConfig& cfg);

// Masked rows replaced by the learned mask embedding.
template <typename T>
typename Tape<T>::Var apply_latent_mask(Tape<T>& tape, typename Tape<T>::Var latents,
                                        const std::vector<uint8_t>& mask,
                                        typename Tape<T>::Var mask_embedding);

// One multi-headed self-attention sublayer without the residual, exposed for
// the context network and for equivariance checks.
template <typename T>
typename Tape<T>::Var mhsa_forward(Tape<T>& tape, typename Tape<T>::Var x,
                                   const ParamMap<T>& params, const std::string& prefix,
                                   const EncoderConfig& cfg);

// Macaron blocks: half FFN, MHSA, depthwise-conv module, half FFN, layer norm.
template <typename T>
typename Tape<T>::Var conformer_forward(Tape<T>& tape, typename Tape<T>::Var x,
                                        const ParamMap<T>& params, const EncoderConfig& cfg,
                                        Rng* dropout_rng = nullptr);

template <typename T>
struct EncodedUtterance {
  typename Tape<T>::Var targets;
  typename Tape<T>::Var contexts;
  std::vector<uint8_t> mask;
};

// Full path: subsample, capture targets, mask latents, add positions, run the
// context network. Targets never see the mask.
template <typename T>
EncodedUtterance<T> encode(Tape<T>& tape, typename Tape<T>::Var features,
                           const ParamMap<T>& params, const EncoderConfig& cfg,
                           const std::vector<uint8_t>& mask_plan, Rng* dropout_rng = nullptr);

}  // namespace tts4p::encoder

#endif  // TTS4P_ENCODER_HPP_
