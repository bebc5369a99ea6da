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

#include "tts4p/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

namespace tts4p::pipeline {

using encoder::ParamMap;
using numerics::Tape;

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::kPretrainSpeechOnly:
      return "pretrain_speech_only";
    case Phase::kPretrainJoint:
      return "pretrain_joint";
    case Phase::kFinetune:
      return "finetune";
  }
  throw std::logic_error("phase_name: bad phase");
}

Phase phase_from_name(const std::string& name) {
  if (name == "pretrain_speech_only") return Phase::kPretrainSpeechOnly;
  if (name == "pretrain_joint") return Phase::kPretrainJoint;
  if (name == "finetune") return Phase::kFinetune;
  throw std::invalid_argument("phase_from_name: unknown phase " + name);
}

void validate_batch_item(const BatchItem& item) {
  const bool src_synth = item.features.source == features::FeatureSource::kSynthesized;
  if (item.synthesized != src_synth)
    throw std::invalid_argument("batch item: sigma tag disagrees with feature source");
  if (item.synthesized && item.labels.empty())
    throw std::invalid_argument("batch item: synthesized item without labels");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be positive");
  if (synth_ratio < 0 || synth_ratio > 1)
    throw std::invalid_argument("train config: synth_ratio must lie in [0, 1]");
  if (peak_lr <= 0) throw std::invalid_argument("train config: peak_lr must be positive");
  if (warmup_steps < 1) throw std::invalid_argument("train config: warmup_steps must be >= 1");
  if (clip_norm <= 0) throw std::invalid_argument("train config: clip_norm must be positive");
  if (ema_decay <= 0 || ema_decay >= 1)
    throw std::invalid_argument("train config: ema_decay must lie in (0, 1)");
  if (lambda_aux < 0) throw std::invalid_argument("train config: lambda_aux must be >= 0");
  if (distractors < 1) throw std::invalid_argument("train config: distractors must be >= 1");
  if (kappa <= 0) throw std::invalid_argument("train config: kappa must be positive");
  if (mask_fraction < 0 || mask_fraction >= 1)
    throw std::invalid_argument("train config: mask_fraction must lie in [0, 1)");
  if (mask_span < 1) throw std::invalid_argument("train config: mask_span must be >= 1");
}

std::string head_prefix(Partition partition, const std::string& name) {
  switch (partition) {
    case Partition::kAuxDecoder:
      return "aux." + name + ".";
    case Partition::kFinetuneDecoder:
      return "dec." + name + ".";
    case Partition::kEncoder:
      break;
  }
  throw std::invalid_argument("head_prefix: heads live in a decoder partition");
}

void init_head_params(ModelParams& params, const HeadSpec& spec, int d_model,
                      Partition partition, Rng& rng) {
  if (spec.name.empty()) throw std::invalid_argument("head: name must not be empty");
  if (spec.vocab_size < 2) throw std::invalid_argument("head: vocab_size must be >= 2");
  if (d_model < 1) throw std::invalid_argument("head: d_model must be positive");
  const std::string prefix = head_prefix(partition, spec.name);
  auto randn = [&](std::vector<int> shape, int fan_in) {
    return Tensor<float>::randn(std::move(shape), rng,
                                1.0f / std::sqrt(static_cast<float>(fan_in)));
  };
  params.add(prefix + "w_out", randn({d_model, spec.vocab_size}, d_model), partition);
  params.add(prefix + "b_out", Tensor<float>({spec.vocab_size}), partition);
  if (spec.objective == AuxObjective::kRnnt) {
    const int h = spec.hidden;
    if (h < 1) throw std::invalid_argument("head: hidden must be positive");
    params.add(prefix + "embed", randn({spec.vocab_size, h}, h), partition);
    params.add(prefix + "w_rec", randn({h, h}, h), partition);
    params.add(prefix + "b_rec", Tensor<float>({h}), partition);
    params.add(prefix + "w_joint_enc", randn({d_model, h}, d_model), partition);
    params.add(prefix + "w_joint_pred", randn({h, h}, h), partition);
    params.add(prefix + "b_joint", Tensor<float>({h}), partition);
    params.add(prefix + "w_joint_out", randn({h, spec.vocab_size}, h), partition);
  }
}

void drop_partition(ModelParams& params, Partition partition) {
  auto& entries = params.entries();
  for (auto it = entries.begin(); it != entries.end();) {
    if (it->second.partition == partition)
      it = entries.erase(it);
    else
      ++it;
  }
}

template <typename T>
losses::AuxHead<T> head_on_tape(const ParamMap<T>& pmap, const HeadSpec& spec,
                                Partition partition) {
  const std::string prefix = head_prefix(partition, spec.name);
  auto get = [&](const std::string& leaf) {
    auto it = pmap.find(prefix + leaf);
    if (it == pmap.end())
      throw std::out_of_range("head: missing parameter " + prefix + leaf);
    return it->second;
  };
  losses::AuxHead<T> head;
  head.name = spec.name;
  head.vocab_size = spec.vocab_size;
  head.objective = spec.objective;
  head.w_out = get("w_out");
  head.b_out = get("b_out");
  if (spec.objective == AuxObjective::kRnnt) {
    head.embed = get("embed");
    head.w_rec = get("w_rec");
    head.b_rec = get("b_rec");
    head.w_joint_enc = get("w_joint_enc");
    head.w_joint_pred = get("w_joint_pred");
    head.b_joint = get("b_joint");
    head.w_joint_out = get("w_joint_out");
  }
  return head;
}

template losses::AuxHead<float> head_on_tape<float>(const ParamMap<float>&, const HeadSpec&,
                                                    Partition);
template losses::AuxHead<double> head_on_tape<double>(const ParamMap<double>&, const HeadSpec&,
                                                      Partition);

double lr_schedule(int64_t step, double peak, int warmup) {
  if (step < 1) throw std::invalid_argument("lr_schedule: step must be >= 1");
  if (warmup < 1) throw std::invalid_argument("lr_schedule: warmup must be >= 1");
  if (peak <= 0) throw std::invalid_argument("lr_schedule: peak must be positive");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return peak * std::min(s / w, std::sqrt(w / s));
}

double apply_updates(ModelParams& params, std::map<std::string, Tensor<float>>& grads,
                     AdamState& state, const AdamConfig& acfg, double lr, double clip_norm) {
  if (clip_norm <= 0) throw std::invalid_argument("adam: clip_norm must be positive");
  if (lr <= 0) throw std::invalid_argument("adam: lr must be positive");
  double sq = 0;
  for (const auto& [name, g] : grads) {
    const Tensor<float>& w = params.at(name);
    if (g.shape() != w.shape())
      throw std::invalid_argument("adam: gradient shape mismatch for " + name);
    for (int64_t i = 0; i < g.size(); ++i) sq += static_cast<double>(g[i]) * g[i];
  }
  const double norm = std::sqrt(sq);
  const double scale = norm > clip_norm ? clip_norm / norm : 1.0;

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(acfg.beta1, t);
  const double bc2 = 1.0 - std::pow(acfg.beta2, t);
  for (auto& [name, g] : grads) {
    Tensor<float>& w = params.at(name);
    auto mit = state.m.find(name);
    if (mit == state.m.end()) {
      mit = state.m.emplace(name, Tensor<float>(g.shape())).first;
      state.v.emplace(name, Tensor<float>(g.shape()));
    }
    Tensor<float>& m = mit->second;
    Tensor<float>& v = state.v.at(name);
    if (m.shape() != g.shape())
      throw std::invalid_argument("adam: state shape mismatch for " + name);
    for (int64_t i = 0; i < g.size(); ++i) {
      const double gi = static_cast<double>(g[i]) * scale;
      const double mi = acfg.beta1 * m[i] + (1.0 - acfg.beta1) * gi;
      const double vi = acfg.beta2 * v[i] + (1.0 - acfg.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      w[i] = static_cast<float>(w[i] - lr * mhat / (std::sqrt(vhat) + acfg.eps));
    }
  }
  return norm;
}

void ema_update(ModelParams& ema, const ModelParams& current, double decay) {
  if (decay <= 0 || decay > 1) throw std::invalid_argument("ema: decay must lie in (0, 1]");
  if (ema.size() != current.size())
    throw std::invalid_argument("ema: parameter sets differ in size");
  for (const auto& [name, entry] : current.entries()) {
    if (!ema.contains(name)) throw std::invalid_argument("ema: missing parameter " + name);
    Tensor<float>& e = ema.at(name);
    const Tensor<float>& w = entry.value;
    if (e.shape() != w.shape())
      throw std::invalid_argument("ema: shape mismatch for " + name);
    for (int64_t i = 0; i < w.size(); ++i)
      e[i] = static_cast<float>(decay * e[i] + (1.0 - decay) * w[i]);
  }
}

std::vector<BatchItem> make_batch(const std::vector<FeatureMatrix>& real_pool,
                                  const std::vector<std::string>& text_pool, int batch_size,
                                  double synth_ratio, const pseudotts::Lexicon& lexicon,
                                  const pseudotts::SynthConfig& synth_cfg, Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("make_batch: batch_size must be positive");
  if (synth_ratio < 0 || synth_ratio > 1)
    throw std::invalid_argument("make_batch: synth_ratio must lie in [0, 1]");
  const int n_synth = static_cast<int>(std::lround(batch_size * synth_ratio));
  const int n_real = batch_size - n_synth;
  if (n_synth > 0 && text_pool.empty())
    throw std::invalid_argument("make_batch: synth_ratio > 0 with an empty text pool");
  if (n_real > 0 && real_pool.empty())
    throw std::invalid_argument("make_batch: real share > 0 with an empty real pool");

  std::vector<BatchItem> batch;
  batch.reserve(static_cast<size_t>(batch_size));
  for (int i = 0; i < n_synth; ++i) {
    const std::string& text = text_pool[static_cast<size_t>(
        rng.uniform_int(static_cast<int>(text_pool.size())))];
    pseudotts::SynthResult r = pseudotts::synth_on_the_fly(text, lexicon, synth_cfg, rng);
    BatchItem item;
    item.features = std::move(r.features);
    item.synthesized = true;
    item.labels.emplace(r.phonemes.vocab, std::move(r.phonemes));
    item.labels.emplace(r.wordpieces.vocab, std::move(r.wordpieces));
    batch.push_back(std::move(item));
  }
  for (int i = 0; i < n_real; ++i) {
    BatchItem item;
    item.features = real_pool[static_cast<size_t>(
        rng.uniform_int(static_cast<int>(real_pool.size())))];
    item.synthesized = false;
    batch.push_back(std::move(item));
  }
  for (int i = batch_size - 1; i > 0; --i)
    std::swap(batch[static_cast<size_t>(i)], batch[static_cast<size_t>(rng.uniform_int(i + 1))]);
  return batch;
}

namespace {

// Gradients for every trainable parameter, zeros where the loss never
// touched the leaf, so optimizer state stays aligned across steps.
std::map<std::string, Tensor<float>> collect_grads(Tape<float>& tape,
                                                   const ParamMap<float>& pmap,
                                                   const ModelParams& params,
                                                   const std::vector<Partition>& trainable) {
  std::map<std::string, Tensor<float>> grads;
  for (const auto& [name, entry] : params.entries()) {
    if (std::find(trainable.begin(), trainable.end(), entry.partition) == trainable.end())
      continue;
    const Tensor<float>* g = tape.grad(pmap.at(name));
    grads.emplace(name, g ? *g : Tensor<float>(entry.value.shape()));
  }
  return grads;
}

ModelParams clone_params(const ModelParams& params) {
  ModelParams out;
  for (const auto& [name, entry] : params.entries()) out.add(name, entry.value, entry.partition);
  return out;
}

}  // namespace

StepRecord pretrain_step(const std::vector<BatchItem>& batch, ModelParams& params,
                         const std::vector<HeadSpec>& aux_heads, TrainState& state,
                         const TrainConfig& tcfg, const encoder::EncoderConfig& ecfg,
                         const AugmentPolicy& augment, Rng& rng) {
  tcfg.validate();
  ecfg.validate();
  if (batch.empty()) throw std::invalid_argument("pretrain_step: empty batch");
  if (tcfg.phase == Phase::kFinetune)
    throw std::invalid_argument("pretrain_step: finetune phase not handled here");
  const bool joint = tcfg.phase == Phase::kPretrainJoint;
  for (const BatchItem& item : batch) {
    validate_batch_item(item);
    if (!joint && item.synthesized)
      throw std::invalid_argument("pretrain_step: synthesized item in the speech-only phase");
  }

  std::vector<Partition> trainable = {Partition::kEncoder};
  if (joint) trainable.push_back(Partition::kAuxDecoder);

  Tape<float> tape;
  ParamMap<float> pmap = numerics::params_on_tape<float>(tape, params, trainable);
  std::vector<losses::AuxHead<float>> heads;
  if (joint)
    for (const HeadSpec& spec : aux_heads)
      heads.push_back(head_on_tape<float>(pmap, spec, Partition::kAuxDecoder));

  std::vector<losses::ItemLosses<float>> items;
  for (const BatchItem& item : batch) {
    auto fv = tape.constant(item.features.values);
    const int latent_frames = encoder::subsampled_length(item.features.frames());
    const std::vector<uint8_t> plan = features::contrastive_time_mask(
        latent_frames, tcfg.mask_fraction, tcfg.mask_span, rng);
    auto enc = encoder::encode(tape, fv, pmap, ecfg, plan, &rng);
    auto j_main = losses::contrastive_loss(tape, enc.contexts, enc.targets, enc.mask,
                                           tcfg.distractors, static_cast<float>(tcfg.kappa), rng);
    if (!j_main) continue;
    losses::ItemLosses<float> il;
    il.synthesized = item.synthesized;
    il.j_main = *j_main;
    if (item.synthesized && !heads.empty()) {
      FeatureMatrix aug = features::specaugment(item.features, augment, rng);
      auto av = tape.constant(aug.values);
      const std::vector<uint8_t> no_mask(static_cast<size_t>(latent_frames), 0);
      auto enc_aux = encoder::encode(tape, av, pmap, ecfg, no_mask, &rng);
      for (const losses::AuxHead<float>& head : heads) {
        auto lit = item.labels.find(head.name);
        if (lit == item.labels.end())
          throw std::invalid_argument("pretrain_step: missing label for head " + head.name);
        il.j_aux.emplace_back(head.name,
                              losses::aux_head_loss(tape, enc_aux.contexts, head, lit->second));
      }
    }
    items.push_back(std::move(il));
  }

  auto breakdown = losses::total_loss(tape, items, static_cast<float>(tcfg.lambda_aux));
  tape.backward(breakdown.total);
  auto grads = collect_grads(tape, pmap, params, trainable);

  if (state.ema.size() == 0) state.ema = clone_params(params);
  const double lr = lr_schedule(state.step + 1, tcfg.peak_lr, tcfg.warmup_steps);
  AdamConfig acfg;
  const double grad_norm = apply_updates(params, grads, state.adam, acfg, lr, tcfg.clip_norm);
  ema_update(state.ema, params, tcfg.ema_decay);
  state.step += 1;

  StepRecord rec;
  rec.step = state.step;
  rec.phase = tcfg.phase;
  rec.j_speech = breakdown.j_speech;
  rec.j_text = breakdown.j_text;
  rec.j_aux = breakdown.j_aux;
  rec.total = breakdown.total_value;
  rec.lr = lr;
  rec.grad_norm = grad_norm;
  return rec;
}

FinetuneConfig::FinetuneConfig() {
  decoder.name = "wordpiece";
  decoder.vocab_size = pseudotts::kWordpieceVocabSize;
  decoder.objective = AuxObjective::kCtc;
}

void FinetuneConfig::validate() const {
  if (encoder_peak_lr <= 0 || decoder_peak_lr <= 0)
    throw std::invalid_argument("finetune config: peak learning rates must be positive");
  if (encoder_warmup < 1 || decoder_warmup < 1)
    throw std::invalid_argument("finetune config: warmups must be >= 1");
  if (clip_norm <= 0) throw std::invalid_argument("finetune config: clip_norm must be positive");
  if (ema_decay <= 0 || ema_decay >= 1)
    throw std::invalid_argument("finetune config: ema_decay must lie in (0, 1)");
  if (decoder.name.empty() || decoder.vocab_size < 2)
    throw std::invalid_argument("finetune config: decoder head is malformed");
}

StepRecord finetune_step(const std::vector<BatchItem>& batch, ModelParams& params,
                         FinetuneState& state, const FinetuneConfig& fcfg,
                         const encoder::EncoderConfig& ecfg, const AugmentPolicy& augment,
                         Rng& rng) {
  fcfg.validate();
  ecfg.validate();
  if (batch.empty()) throw std::invalid_argument("finetune_step: empty batch");
  for (const BatchItem& item : batch)
    if (!item.labels.count(fcfg.decoder.name))
      throw std::invalid_argument("finetune_step: item lacks a " + fcfg.decoder.name + " label");

  std::vector<Partition> trainable = {Partition::kFinetuneDecoder};
  if (!fcfg.freeze_encoder) trainable.push_back(Partition::kEncoder);

  Tape<float> tape;
  ParamMap<float> pmap = numerics::params_on_tape<float>(tape, params, trainable);
  auto head = head_on_tape<float>(pmap, fcfg.decoder, Partition::kFinetuneDecoder);

  auto loss = tape.constant(Tensor<float>::scalar(0.0f));
  for (const BatchItem& item : batch) {
    FeatureMatrix feats = fcfg.augment ? features::specaugment(item.features, augment, rng)
                                       : item.features;
    auto fv = tape.constant(feats.values);
    const int latent_frames = encoder::subsampled_length(feats.frames());
    const std::vector<uint8_t> no_mask(static_cast<size_t>(latent_frames), 0);
    auto enc = encoder::encode(tape, fv, pmap, ecfg, no_mask, &rng);
    loss = tape.add(loss, losses::aux_head_loss(tape, enc.contexts, head,
                                                item.labels.at(fcfg.decoder.name)));
  }
  loss = tape.scale(loss, 1.0f / static_cast<float>(batch.size()));
  const double loss_value = tape.val(loss)[0];
  if (!std::isfinite(loss_value)) throw std::runtime_error("finetune_step: non-finite loss");
  tape.backward(loss);

  auto enc_grads = collect_grads(tape, pmap, params, {Partition::kEncoder});
  auto dec_grads = collect_grads(tape, pmap, params, {Partition::kFinetuneDecoder});

  if (state.ema.size() == 0) state.ema = clone_params(params);
  AdamConfig acfg;
  const double dec_lr = lr_schedule(state.step + 1, fcfg.decoder_peak_lr, fcfg.decoder_warmup);
  double enc_norm = 0;
  if (!fcfg.freeze_encoder) {
    const double enc_lr =
        lr_schedule(state.step + 1, fcfg.encoder_peak_lr, fcfg.encoder_warmup);
    enc_norm = apply_updates(params, enc_grads, state.encoder_adam, acfg, enc_lr, fcfg.clip_norm);
  }
  const double dec_norm =
      apply_updates(params, dec_grads, state.decoder_adam, acfg, dec_lr, fcfg.clip_norm);
  ema_update(state.ema, params, fcfg.ema_decay);
  state.step += 1;

  StepRecord rec;
  rec.step = state.step;
  rec.phase = Phase::kFinetune;
  rec.j_text = loss_value;
  rec.total = loss_value;
  rec.lr = dec_lr;
  rec.grad_norm = std::sqrt(enc_norm * enc_norm + dec_norm * dec_norm);
  return rec;
}

void DecodeConfig::validate() const {
  if (beam_width < 1) throw std::invalid_argument("decode config: beam_width must be >= 1");
  if (fusion_beta < 0) throw std::invalid_argument("decode config: fusion beta must be >= 0");
  if (fusion_beta > 0 && lm == nullptr)
    throw std::invalid_argument("decode config: fusion beta > 0 needs a language model");
}

Tensor<float> decoder_posteriors(const FeatureMatrix& feats, const ModelParams& params,
                                 const encoder::EncoderConfig& ecfg, const HeadSpec& decoder) {
  if (decoder.objective != AuxObjective::kCtc)
    throw std::invalid_argument("decode: only the ctc objective is decodable");
  Tape<float> tape;
  ParamMap<float> pmap = numerics::params_on_tape<float>(tape, params, {});
  auto head = head_on_tape<float>(pmap, decoder, Partition::kFinetuneDecoder);
  auto fv = tape.constant(feats.values);
  const int latent_frames = encoder::subsampled_length(feats.frames());
  const std::vector<uint8_t> no_mask(static_cast<size_t>(latent_frames), 0);
  auto enc = encoder::encode(tape, fv, pmap, ecfg, no_mask, nullptr);
  auto logits = tape.add_rowvec(tape.matmul(enc.contexts, head.w_out), head.b_out);
  return tape.val(tape.log_softmax(logits));
}

std::vector<int> greedy_labels(const Tensor<float>& log_posteriors) {
  if (log_posteriors.rank() != 2)
    throw std::invalid_argument("greedy: posteriors must be rank 2");
  std::vector<int> out;
  int prev = 0;
  for (int t = 0; t < log_posteriors.rows(); ++t) {
    int best = 0;
    for (int v = 1; v < log_posteriors.cols(); ++v)
      if (log_posteriors.at(t, v) > log_posteriors.at(t, best)) best = v;
    if (best != 0 && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

namespace {

// Beam state: a collapsed prefix plus the symbol occupying the latest frame.
// Paths merging into the same state keep the better score, so width one
// follows the per-frame argmax exactly.
struct BeamHyp {
  std::vector<int> prefix;
  int last = 0;
  double score = 0;
};

std::vector<std::string> completed_words(const std::vector<int>& prefix) {
  std::vector<std::string> words;
  std::string cur;
  for (int id : prefix) {
    if (id == 27) {
      if (!cur.empty()) words.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(static_cast<char>('a' + id - 1));
    }
  }
  words.push_back(cur);
  return words;
}

// beta * ln p(word | words so far) when emitting a boundary closes the open
// partial word of `prefix`.
double boundary_lm_term(const std::vector<int>& prefix, const DecodeConfig& dcfg) {
  if (dcfg.lm == nullptr || dcfg.fusion_beta == 0) return 0;
  std::vector<std::string> words = completed_words(prefix);
  const std::string closing = words.back();
  words.pop_back();
  if (closing.empty()) return 0;
  return lm::fusion_score(*dcfg.lm, words, closing, dcfg.fusion_beta);
}

double final_lm_term(const std::vector<int>& prefix, const DecodeConfig& dcfg) {
  if (dcfg.lm == nullptr || dcfg.fusion_beta == 0) return 0;
  std::vector<std::string> words = completed_words(prefix);
  const std::string open = words.back();
  words.pop_back();
  double term = 0;
  if (!open.empty()) {
    term += lm::fusion_score(*dcfg.lm, words, open, dcfg.fusion_beta);
    words.push_back(open);
  }
  term += lm::fusion_score(*dcfg.lm, words, lm::kEos, dcfg.fusion_beta);
  return term;
}

}  // namespace

std::vector<int> beam_labels(const Tensor<float>& log_posteriors, const DecodeConfig& dcfg) {
  dcfg.validate();
  if (log_posteriors.rank() != 2)
    throw std::invalid_argument("beam: posteriors must be rank 2");
  const int tn = log_posteriors.rows();
  const int vn = log_posteriors.cols();
  if (dcfg.lm != nullptr && dcfg.fusion_beta > 0 && vn != pseudotts::kWordpieceVocabSize)
    throw std::invalid_argument("beam: word fusion expects the wordpiece vocabulary");

  std::vector<BeamHyp> beam = {BeamHyp{}};
  for (int t = 0; t < tn; ++t) {
    std::map<std::pair<std::vector<int>, int>, double> next;
    auto merge = [&next](std::vector<int> prefix, int last, double score) {
      auto key = std::make_pair(std::move(prefix), last);
      auto it = next.find(key);
      if (it == next.end())
        next.emplace(std::move(key), score);
      else if (score > it->second)
        it->second = score;
    };
    for (const BeamHyp& hyp : beam) {
      for (int s = 0; s < vn; ++s) {
        const double step_score = hyp.score + log_posteriors.at(t, s);
        if (s == 0) {
          merge(hyp.prefix, 0, step_score);
        } else if (s == hyp.last) {
          merge(hyp.prefix, s, step_score);
        } else {
          const double lm_term = s == 27 ? boundary_lm_term(hyp.prefix, dcfg) : 0;
          std::vector<int> ext = hyp.prefix;
          ext.push_back(s);
          merge(std::move(ext), s, step_score + lm_term);
        }
      }
    }
    std::vector<BeamHyp> pruned;
    pruned.reserve(next.size());
    for (auto& [key, score] : next)
      pruned.push_back(BeamHyp{key.first, key.second, score});
    std::stable_sort(pruned.begin(), pruned.end(),
                     [](const BeamHyp& a, const BeamHyp& b) { return a.score > b.score; });
    if (static_cast<int>(pruned.size()) > dcfg.beam_width)
      pruned.resize(static_cast<size_t>(dcfg.beam_width));
    beam = std::move(pruned);
  }

  const BeamHyp* best = nullptr;
  double best_score = 0;
  for (const BeamHyp& hyp : beam) {
    const double final_score = hyp.score + final_lm_term(hyp.prefix, dcfg);
    if (best == nullptr || final_score > best_score) {
      best = &hyp;
      best_score = final_score;
    }
  }
  return best ? best->prefix : std::vector<int>{};
}

std::vector<int> decode(const FeatureMatrix& feats, const ModelParams& params,
                        const encoder::EncoderConfig& ecfg, const HeadSpec& decoder,
                        const DecodeConfig& dcfg) {
  dcfg.validate();
  const Tensor<float> post = decoder_posteriors(feats, params, ecfg, decoder);
  if (dcfg.mode == DecodeConfig::Mode::kGreedy) return greedy_labels(post);
  return beam_labels(post, dcfg);
}

double wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw std::invalid_argument("wer: empty reference");
  const size_t n = ref.size();
  const size_t m = hyp.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(n);
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("manifest: cannot open " + path + " for writing");
  for (const ManifestEntry& e : entries) {
    nlohmann::json obj;
    obj["id"] = e.id;
    obj["features"] = e.features ? nlohmann::json(*e.features) : nlohmann::json(nullptr);
    obj["audio"] = e.audio ? nlohmann::json(*e.audio) : nlohmann::json(nullptr);
    obj["text"] = e.text ? nlohmann::json(*e.text) : nlohmann::json(nullptr);
    out << obj.dump() << '\n';
  }
  if (!out) throw std::runtime_error("manifest: write to " + path + " failed");
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& err) {
      throw std::runtime_error("manifest: " + path + " line " + std::to_string(line_no) + ": " +
                               err.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string())
      throw std::runtime_error("manifest: " + path + " line " + std::to_string(line_no) +
                               ": missing string id");
    ManifestEntry e;
    e.id = obj["id"].get<std::string>();
    auto opt_field = [&](const char* key) -> std::optional<std::string> {
      if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
      if (!obj[key].is_string())
        throw std::runtime_error("manifest: " + path + " line " + std::to_string(line_no) +
                                 ": field " + key + " must be a string or null");
      return obj[key].get<std::string>();
    };
    e.features = opt_field("features");
    e.audio = opt_field("audio");
    e.text = opt_field("text");
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string metrics_header() { return "step,phase,j_speech,j_text,j_aux,total,lr,grad_norm"; }

namespace {

std::string format_metric(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string metrics_row(const StepRecord& r) {
  std::ostringstream out;
  out << r.step << ',' << phase_name(r.phase) << ',' << format_metric(r.j_speech) << ','
      << format_metric(r.j_text) << ',' << format_metric(r.j_aux) << ','
      << format_metric(r.total) << ',' << format_metric(r.lr) << ','
      << format_metric(r.grad_norm);
  return out.str();
}

std::string eval_header() { return "checkpoint,set,wer"; }

std::string eval_row(const std::string& checkpoint, const std::string& set_name, double w) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4f", w);
  return checkpoint + "," + set_name + "," + buf;
}

}  // namespace tts4p::pipeline
