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

#include "tts4p/runner.hpp"

#include <cmath>
#include <sstream>

#include "tts4p/encoder.hpp"

namespace tts4p::runner {

namespace {

constexpr uint64_t kInitKey = 0x696e697400ULL;
constexpr uint64_t kSpeechKey = 0x7370636800ULL;
constexpr uint64_t kJointKey = 0x6a6f696e00ULL;
constexpr uint64_t kFinetuneKey = 0x66746e6500ULL;
constexpr uint64_t kDecoderInitKey = 0x6674686400ULL;
constexpr uint64_t kNormKey = 0x6e6f726d00ULL;
constexpr int kNormProbes = 64;

std::vector<pipeline::ManifestEntry> manifest_or_throw(const config::CorpusPaths& paths,
                                                       const std::string& manifest) {
  try {
    return pipeline::read_manifest(paths.path(manifest));
  } catch (const std::exception& e) {
    throw DataError(std::string("corpus: ") + e.what());
  }
}

features::FeatureMatrix features_or_throw(const config::CorpusPaths& paths,
                                          const pipeline::ManifestEntry& e) {
  if (!e.features.has_value())
    throw DataError("corpus: utterance " + e.id + " has no features path");
  try {
    return features::read_features(paths.path(*e.features));
  } catch (const std::exception& err) {
    throw DataError("corpus: utterance " + e.id + ": " + err.what());
  }
}

bool params_have_prefix(const numerics::ModelParams& params, const std::string& prefix) {
  for (const auto& [name, value] : params.entries())
    if (name.rfind(prefix, 0) == 0) return true;
  return false;
}

std::vector<pipeline::HeadSpec> resolved_aux_heads(const config::ExperimentConfig& cfg,
                                                   const pseudotts::Lexicon& lex) {
  std::vector<pipeline::HeadSpec> heads = cfg.aux_heads;
  for (pipeline::HeadSpec& h : heads) h.vocab_size = config::head_vocab_size(h, lex);
  return heads;
}

void require_finite(const pipeline::StepRecord& rec) {
  if (!std::isfinite(rec.total) || !std::isfinite(rec.grad_norm))
    throw NumericError("training: non-finite loss at step " + std::to_string(rec.step));
}

}  // namespace

std::vector<features::FeatureMatrix> load_feature_split(const config::CorpusPaths& paths,
                                                        const std::string& manifest) {
  std::vector<features::FeatureMatrix> out;
  for (const auto& e : manifest_or_throw(paths, manifest))
    out.push_back(features_or_throw(paths, e));
  return out;
}

std::vector<LabeledUtterance> load_labeled_split(const config::CorpusPaths& paths,
                                                 const std::string& manifest) {
  std::vector<LabeledUtterance> out;
  for (const auto& e : manifest_or_throw(paths, manifest)) {
    if (!e.text.has_value())
      throw DataError("corpus: utterance " + e.id + " in " + manifest + " has no transcript");
    out.push_back({e.id, features_or_throw(paths, e), *e.text});
  }
  return out;
}

std::vector<std::string> load_text_split(const config::CorpusPaths& paths,
                                         const std::string& manifest) {
  std::vector<std::string> out;
  for (const auto& e : manifest_or_throw(paths, manifest)) {
    if (!e.text.has_value())
      throw DataError("corpus: entry " + e.id + " in " + manifest + " has no text");
    out.push_back(*e.text);
  }
  return out;
}

pseudotts::Lexicon load_lexicon(const config::CorpusPaths& paths) {
  try {
    return pseudotts::load_lexicon(paths.path(paths.lexicon), paths.path(paths.inventory));
  } catch (const std::exception& e) {
    throw DataError(std::string("corpus: ") + e.what());
  }
}

FeatureStats compute_feature_stats(const std::vector<const features::FeatureMatrix*>& mats) {
  if (mats.empty()) throw DataError("normalize: no features to take statistics from");
  const int d = mats.front()->dims();
  std::vector<double> sum(static_cast<size_t>(d), 0.0);
  std::vector<double> sumsq(static_cast<size_t>(d), 0.0);
  int64_t n = 0;
  for (const features::FeatureMatrix* m : mats) {
    if (m->dims() != d) throw DataError("normalize: feature dims differ across utterances");
    for (int t = 0; t < m->frames(); ++t)
      for (int b = 0; b < d; ++b) {
        const double v = m->values.at(t, b);
        sum[static_cast<size_t>(b)] += v;
        sumsq[static_cast<size_t>(b)] += v * v;
      }
    n += m->frames();
  }
  if (n == 0) throw DataError("normalize: no frames to take statistics from");
  FeatureStats stats;
  stats.mean.resize(static_cast<size_t>(d));
  stats.inv_std.resize(static_cast<size_t>(d));
  for (int b = 0; b < d; ++b) {
    const double mean = sum[static_cast<size_t>(b)] / static_cast<double>(n);
    const double var = sumsq[static_cast<size_t>(b)] / static_cast<double>(n) - mean * mean;
    stats.mean[static_cast<size_t>(b)] = static_cast<float>(mean);
    stats.inv_std[static_cast<size_t>(b)] =
        var > 1e-12 ? static_cast<float>(1.0 / std::sqrt(var)) : 0.0f;
  }
  return stats;
}

void apply_feature_stats(features::FeatureMatrix& f, const FeatureStats& stats) {
  const int d = f.dims();
  if (d != static_cast<int>(stats.mean.size()))
    throw DataError("normalize: statistics dims do not match features");
  for (int t = 0; t < f.frames(); ++t)
    for (int b = 0; b < d; ++b)
      f.values.at(t, b) =
          (f.values.at(t, b) - stats.mean[static_cast<size_t>(b)]) *
          stats.inv_std[static_cast<size_t>(b)];
}

FeatureStats synth_feature_stats(const pseudotts::SynthConfig& synth,
                                 const std::vector<std::string>& texts,
                                 const pseudotts::Lexicon& lex) {
  if (texts.empty()) throw DataError("normalize: no text to probe the synthesizer with");
  Rng stream = Rng::from_keys(kNormKey, 0);
  const int n = std::min<int>(kNormProbes, static_cast<int>(texts.size()));
  std::vector<features::FeatureMatrix> probes;
  probes.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng draw = stream.split(static_cast<uint64_t>(i));
    probes.push_back(
        pseudotts::synth_on_the_fly(texts[static_cast<size_t>(i)], lex, synth, draw).features);
  }
  std::vector<const features::FeatureMatrix*> ptrs;
  ptrs.reserve(probes.size());
  for (const auto& p : probes) ptrs.push_back(&p);
  return compute_feature_stats(ptrs);
}

Corpus load_corpus(const config::CorpusPaths& paths) {
  Corpus c;
  c.lexicon = load_lexicon(paths);
  c.pretrain = load_feature_split(paths, paths.pretrain);
  c.finetune = load_labeled_split(paths, paths.finetune);
  c.test = load_labeled_split(paths, paths.test);
  c.text_pool = load_text_split(paths, paths.text_pool);
  if (paths.normalize) {
    std::vector<const features::FeatureMatrix*> ptrs;
    for (const auto& f : c.pretrain) ptrs.push_back(&f);
    if (ptrs.empty())
      for (const auto& u : c.finetune) ptrs.push_back(&u.features);
    if (ptrs.empty())
      for (const auto& u : c.test) ptrs.push_back(&u.features);
    const FeatureStats stats = compute_feature_stats(ptrs);
    for (auto& f : c.pretrain) apply_feature_stats(f, stats);
    for (auto& u : c.finetune) apply_feature_stats(u.features, stats);
    for (auto& u : c.test) apply_feature_stats(u.features, stats);
  }
  return c;
}

losses::LabelSeq labels_for_head(const std::string& head_name, const std::string& text,
                                 const pseudotts::Lexicon& lex) {
  if (head_name == pseudotts::kWordpieceVocabName) return pseudotts::text_to_wordpieces(text);
  if (head_name == pseudotts::kPhonemeVocabName) return pseudotts::g2p(text, lex);
  throw DataError("labels: no label encoder for head \"" + head_name + "\"");
}

TrainOutcome run_pretrain(const config::ExperimentConfig& cfg, const Corpus& corpus,
                          pipeline::Phase phase, const numerics::ModelParams* init) {
  const bool joint = (phase == pipeline::Phase::kPretrainJoint);
  if (!joint && phase != pipeline::Phase::kPretrainSpeechOnly)
    throw std::invalid_argument("run_pretrain: phase must be a pretraining phase");
  const config::PhaseRun& run = joint ? cfg.joint : cfg.pretrain;
  if (corpus.pretrain.empty()) throw DataError("pretrain: empty speech pool");
  for (const auto& f : corpus.pretrain)
    if (f.dims() != cfg.encoder.feature_dims)
      throw DataError("pretrain: feature dims do not match encoder.feature_dims");

  numerics::ModelParams params;
  if (init != nullptr) {
    params = *init;
  } else {
    Rng init_rng = Rng::from_keys(cfg.seed, kInitKey);
    params = encoder::init_encoder_params(cfg.encoder, init_rng);
  }

  std::vector<pipeline::HeadSpec> aux;
  if (joint) {
    aux = resolved_aux_heads(cfg, corpus.lexicon);
    Rng head_rng = Rng::from_keys(cfg.seed, kInitKey, 1);
    for (const pipeline::HeadSpec& h : aux)
      if (!params_have_prefix(params,
                              pipeline::head_prefix(numerics::Partition::kAuxDecoder, h.name)))
        init_head_params(params, h, cfg.encoder.d_model, numerics::Partition::kAuxDecoder,
                         head_rng);
  }

  FeatureStats synth_stats;
  const bool scale_synth = cfg.corpus.normalize && run.train.synth_ratio > 0.0;
  if (scale_synth)
    synth_stats = synth_feature_stats(cfg.synth, corpus.text_pool, corpus.lexicon);

  Rng stream = Rng::from_keys(cfg.seed, joint ? kJointKey : kSpeechKey);
  pipeline::TrainState state;
  TrainOutcome out;
  out.records.reserve(static_cast<size_t>(run.steps));
  for (int step = 0; step < run.steps; ++step) {
    auto batch =
        pipeline::make_batch(corpus.pretrain, corpus.text_pool, run.train.batch_size,
                             run.train.synth_ratio, corpus.lexicon, cfg.synth, stream);
    if (scale_synth)
      for (auto& item : batch)
        if (item.synthesized) apply_feature_stats(item.features, synth_stats);
    const pipeline::StepRecord rec =
        pipeline::pretrain_step(batch, params, aux, state, run.train, cfg.encoder, cfg.augment,
                                stream);
    require_finite(rec);
    out.records.push_back(rec);
  }
  out.params = std::move(params);
  out.ema = state.ema;
  return out;
}

TrainOutcome run_finetune(const config::ExperimentConfig& cfg,
                          const std::vector<LabeledUtterance>& labeled,
                          const pseudotts::Lexicon& lex, const numerics::ModelParams* init) {
  if (labeled.empty()) throw DataError("finetune: empty labeled set");
  for (const auto& u : labeled)
    if (u.features.dims() != cfg.encoder.feature_dims)
      throw DataError("finetune: feature dims do not match encoder.feature_dims");

  numerics::ModelParams params;
  if (init != nullptr) {
    params = *init;
    pipeline::drop_partition(params, numerics::Partition::kAuxDecoder);
  } else {
    Rng init_rng = Rng::from_keys(cfg.seed, kInitKey);
    params = encoder::init_encoder_params(cfg.encoder, init_rng);
  }

  pipeline::FinetuneConfig fcfg = cfg.finetune.train;
  fcfg.decoder.vocab_size = config::head_vocab_size(fcfg.decoder, lex);
  pipeline::drop_partition(params, numerics::Partition::kFinetuneDecoder);
  {
    Rng head_rng = Rng::from_keys(cfg.seed, kDecoderInitKey);
    init_head_params(params, fcfg.decoder, cfg.encoder.d_model,
                     numerics::Partition::kFinetuneDecoder, head_rng);
  }

  std::vector<losses::LabelSeq> labels;
  labels.reserve(labeled.size());
  for (const auto& u : labeled) labels.push_back(labels_for_head(fcfg.decoder.name, u.text, lex));

  Rng stream = Rng::from_keys(cfg.seed, kFinetuneKey);
  pipeline::FinetuneState state;
  TrainOutcome out;
  out.records.reserve(static_cast<size_t>(cfg.finetune.steps));
  for (int step = 0; step < cfg.finetune.steps; ++step) {
    std::vector<pipeline::BatchItem> batch;
    batch.reserve(static_cast<size_t>(cfg.finetune.batch_size));
    for (int i = 0; i < cfg.finetune.batch_size; ++i) {
      const int pick = stream.uniform_int(static_cast<int>(labeled.size()));
      pipeline::BatchItem item;
      item.features = labeled[static_cast<size_t>(pick)].features;
      item.synthesized = false;
      item.labels[fcfg.decoder.name] = labels[static_cast<size_t>(pick)];
      batch.push_back(std::move(item));
    }
    const pipeline::StepRecord rec =
        pipeline::finetune_step(batch, params, state, fcfg, cfg.encoder, cfg.augment, stream);
    require_finite(rec);
    out.records.push_back(rec);
  }
  out.params = std::move(params);
  out.ema = state.ema;
  return out;
}

DecodeOutcome run_decode(const config::ExperimentConfig& cfg,
                         const std::vector<LabeledUtterance>& split,
                         const numerics::ModelParams& params, const lm::NGramLM* fusion_lm) {
  if (split.empty()) throw DataError("decode: empty split");
  pipeline::HeadSpec decoder = cfg.finetune.train.decoder;
  if (decoder.name != pseudotts::kWordpieceVocabName)
    throw DataError("decode: text output requires the wordpiece decoder head");
  decoder.vocab_size = pseudotts::kWordpieceVocabSize;

  pipeline::DecodeConfig dcfg;
  dcfg.mode = cfg.decode.mode;
  dcfg.beam_width = cfg.decode.beam_width;
  dcfg.fusion_beta = cfg.decode.fusion_beta;
  dcfg.lm = fusion_lm;
  dcfg.validate();

  DecodeOutcome out;
  for (const auto& u : split) {
    const std::vector<int> ids =
        pipeline::decode(u.features, params, cfg.encoder, decoder, dcfg);
    const std::string hyp_text = pseudotts::wordpieces_to_text(ids);
    out.hypotheses.emplace_back(u.id, hyp_text);
    const std::vector<std::string> ref = split_words(u.text);
    const std::vector<std::string> hyp = split_words(hyp_text);
    if (ref.empty()) throw DataError("decode: empty reference for " + u.id);
    const double rate = pipeline::wer(ref, hyp);
    out.edit_distance += std::llround(rate * static_cast<double>(ref.size()));
    out.ref_words += static_cast<int64_t>(ref.size());
  }
  out.wer = static_cast<double>(out.edit_distance) / static_cast<double>(out.ref_words);
  return out;
}

std::string metrics_csv(const std::vector<pipeline::StepRecord>& records) {
  std::ostringstream out;
  out << pipeline::metrics_header() << "\n";
  for (const auto& r : records) out << pipeline::metrics_row(r) << "\n";
  return out.str();
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

}  // namespace tts4p::runner
