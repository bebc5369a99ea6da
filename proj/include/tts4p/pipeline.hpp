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

#ifndef TTS4P_PIPELINE_HPP_
#define TTS4P_PIPELINE_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tts4p/encoder.hpp"
#include "tts4p/features.hpp"
#include "tts4p/lm.hpp"
#include "tts4p/losses.hpp"
#include "tts4p/params.hpp"
#include "tts4p/pseudotts.hpp"
#include "tts4p/rng.hpp"

namespace tts4p::pipeline {

using features::AugmentPolicy;
using features::FeatureMatrix;
using losses::AuxObjective;
using losses::LabelSeq;
using numerics::ModelParams;
using numerics::Partition;
using numerics::Tensor;

enum class Phase { kPretrainSpeechOnly, kPretrainJoint, kFinetune };

std::string phase_name(Phase p);
Phase phase_from_name(const std::string& name);

// One mixed-batch element. Labels are keyed by head name and exist for every
// synthesized item; real items carry them only during fine-tuning.
struct BatchItem {
  FeatureMatrix features;
  bool synthesized = false;
  std::map<std::string, LabelSeq> labels;
};

void validate_batch_item(const BatchItem& item);

struct TrainConfig {
  int batch_size = 8;
  double synth_ratio = 0.5;
  double peak_lr = 2e-3;
  int warmup_steps = 25000;
  double clip_norm = 20.0;
  double ema_decay = 0.9999;
  double lambda_aux = 1.0;
  uint64_t seed = 0;
  Phase phase = Phase::kPretrainSpeechOnly;
  // Contrastive task settings.
  int distractors = 8;
  double kappa = 0.1;
  double mask_fraction = 0.5;
  int mask_span = 10;

  void validate() const;
};

// A CTC or transducer readout attached to encoder contexts. Parameters live
// in a ModelParams under "<prefix>." names so heads can be created, restored
// and discarded as a unit.
struct HeadSpec {
  std::string name;
  int vocab_size = 0;
  AuxObjective objective = AuxObjective::kCtc;
  int hidden = 16;
};

// "aux.<name>." for auxiliary heads, "dec.<name>." for the fine-tune decoder.
std::string head_prefix(Partition partition, const std::string& name);

void init_head_params(ModelParams& params, const HeadSpec& spec, int d_model,
                      Partition partition, Rng& rng);
void drop_partition(ModelParams& params, Partition partition);

template <typename T>
losses::AuxHead<T> head_on_tape(const encoder::ParamMap<T>& pmap, const HeadSpec& spec,
                                Partition partition);

// peak * min(step / warmup, sqrt(warmup / step)); linear ramp, then decay.
double lr_schedule(int64_t step, double peak, int warmup);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, Tensor<float>> m;
  std::map<std::string, Tensor<float>> v;
  int64_t step = 0;
};

// Scales all grads by clip_norm / max(clip_norm, global_norm), then applies
// one bias-corrected Adam update per named gradient. Returns the pre-clip
// global norm.
double apply_updates(ModelParams& params, std::map<std::string, Tensor<float>>& grads,
                     AdamState& state, const AdamConfig& acfg, double lr, double clip_norm);

// ema <- decay * ema + (1 - decay) * current, entry by entry.
void ema_update(ModelParams& ema, const ModelParams& current, double decay);

// round(batch_size * synth_ratio) fresh synthesized items, remainder sampled
// from the real pool, order shuffled.
std::vector<BatchItem> make_batch(const std::vector<FeatureMatrix>& real_pool,
                                  const std::vector<std::string>& text_pool, int batch_size,
                                  double synth_ratio, const pseudotts::Lexicon& lexicon,
                                  const pseudotts::SynthConfig& synth_cfg, Rng& rng);

// One metrics row.
struct StepRecord {
  int64_t step = 0;
  Phase phase = Phase::kPretrainSpeechOnly;
  double j_speech = 0;
  double j_text = 0;
  double j_aux = 0;
  double total = 0;
  double lr = 0;
  double grad_norm = 0;
};

struct TrainState {
  AdamState adam;
  ModelParams ema;
  int64_t step = 0;
};

// One optimizer step on the mixed objective. Contrastive loss runs on clean
// features with latent time masking; synthesized items additionally run a
// SpecAugmented pass feeding the auxiliary heads. Utterances with fewer than
// two masked latent frames are skipped.
StepRecord pretrain_step(const std::vector<BatchItem>& batch, ModelParams& params,
                         const std::vector<HeadSpec>& aux_heads, TrainState& state,
                         const TrainConfig& tcfg, const encoder::EncoderConfig& ecfg,
                         const AugmentPolicy& augment, Rng& rng);

struct FinetuneConfig {
  double encoder_peak_lr = 3e-4;
  int encoder_warmup = 5000;
  double decoder_peak_lr = 1e-3;
  int decoder_warmup = 1500;
  double clip_norm = 20.0;
  double ema_decay = 0.9999;
  bool freeze_encoder = false;
  bool augment = false;
  HeadSpec decoder;

  FinetuneConfig();
  void validate() const;
};

struct FinetuneState {
  AdamState encoder_adam;
  AdamState decoder_adam;
  ModelParams ema;
  int64_t step = 0;
};

// Supervised step on labeled items with separate encoder and decoder
// optimizers. The loss lands in j_text; j_speech and j_aux stay zero.
StepRecord finetune_step(const std::vector<BatchItem>& batch, ModelParams& params,
                         FinetuneState& state, const FinetuneConfig& fcfg,
                         const encoder::EncoderConfig& ecfg, const AugmentPolicy& augment,
                         Rng& rng);

struct DecodeConfig {
  enum class Mode { kGreedy, kBeam };
  Mode mode = Mode::kGreedy;
  int beam_width = 4;
  double fusion_beta = 0.0;
  const lm::NGramLM* lm = nullptr;

  void validate() const;
};

// Per-frame label log-posteriors under the decoder head, [T' x V].
Tensor<float> decoder_posteriors(const FeatureMatrix& features, const ModelParams& params,
                                 const encoder::EncoderConfig& ecfg, const HeadSpec& decoder);

// Greedy: per-frame argmax, collapse repeats, drop blanks. Beam: width-best
// search over collapsed prefixes scored by their best alignment, with
// beta * ln p_lm added per completed word when a language model is given.
std::vector<int> decode(const FeatureMatrix& features, const ModelParams& params,
                        const encoder::EncoderConfig& ecfg, const HeadSpec& decoder,
                        const DecodeConfig& dcfg);

std::vector<int> greedy_labels(const Tensor<float>& log_posteriors);
std::vector<int> beam_labels(const Tensor<float>& log_posteriors, const DecodeConfig& dcfg);

// Levenshtein distance over words divided by reference length.
double wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

struct ManifestEntry {
  std::string id;
  std::optional<std::string> features;
  std::optional<std::string> audio;
  std::optional<std::string> text;
};

// JSON lines, one object per utterance with keys id, features, audio, text.
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// CSV plumbing for training metrics and evaluation results.
std::string metrics_header();
std::string metrics_row(const StepRecord& r);
std::string eval_header();
std::string eval_row(const std::string& checkpoint, const std::string& set_name, double wer);

}  // namespace tts4p::pipeline

#endif  // TTS4P_PIPELINE_HPP_
