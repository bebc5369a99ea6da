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

#ifndef TTS4P_RUNNER_HPP_
#define TTS4P_RUNNER_HPP_

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tts4p/config.hpp"
#include "tts4p/features.hpp"
#include "tts4p/lm.hpp"
#include "tts4p/params.hpp"
#include "tts4p/pipeline.hpp"
#include "tts4p/pseudotts.hpp"

namespace tts4p::runner {

// Missing or malformed inputs (manifests, feature files, labels).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite losses and similar breakdowns during optimization.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LabeledUtterance {
  std::string id;
  features::FeatureMatrix features;
  std::string text;
};

struct Corpus {
  pseudotts::Lexicon lexicon;
  std::vector<features::FeatureMatrix> pretrain;
  std::vector<LabeledUtterance> finetune;
  std::vector<LabeledUtterance> test;
  std::vector<std::string> text_pool;
};

std::vector<features::FeatureMatrix> load_feature_split(const config::CorpusPaths& paths,
                                                        const std::string& manifest);
std::vector<LabeledUtterance> load_labeled_split(const config::CorpusPaths& paths,
                                                 const std::string& manifest);
std::vector<std::string> load_text_split(const config::CorpusPaths& paths,
                                         const std::string& manifest);
pseudotts::Lexicon load_lexicon(const config::CorpusPaths& paths);

// Per-dim affine map to zero mean and unit variance; constant dims map to 0.
struct FeatureStats {
  std::vector<float> mean;
  std::vector<float> inv_std;
};

FeatureStats compute_feature_stats(const std::vector<const features::FeatureMatrix*>& mats);

void apply_feature_stats(features::FeatureMatrix& f, const FeatureStats& stats);

// Synthesizer output statistics under the latent prior, estimated from probe
// renderings of pool sentences with a fixed stream.
FeatureStats synth_feature_stats(const pseudotts::SynthConfig& synth,
                                 const std::vector<std::string>& texts,
                                 const pseudotts::Lexicon& lex);

// Loads every split; with paths.normalize the recorded splits are scaled by
// shared statistics taken from the pretrain pool, falling back to the
// finetune then test split when earlier ones are empty.
Corpus load_corpus(const config::CorpusPaths& paths);

// Label sequence a head trains on: "wordpiece" encodes characters, "phoneme"
// runs the lexicon front end.
losses::LabelSeq labels_for_head(const std::string& head_name, const std::string& text,
                                 const pseudotts::Lexicon& lex);

struct TrainOutcome {
  numerics::ModelParams params;
  numerics::ModelParams ema;
  std::vector<pipeline::StepRecord> records;
};

// Runs cfg.pretrain or cfg.joint for its configured number of steps. init
// carries the starting encoder (the speech-only checkpoint for the joint
// phase); null starts fresh. Joint auxiliary heads missing from init are
// created fresh.
TrainOutcome run_pretrain(const config::ExperimentConfig& cfg, const Corpus& corpus,
                          pipeline::Phase phase, const numerics::ModelParams* init);

// Supervised fine-tuning on `labeled`. init supplies pretrained encoder
// weights (auxiliary heads are dropped); null trains from scratch. The
// decoder head always starts fresh.
TrainOutcome run_finetune(const config::ExperimentConfig& cfg,
                          const std::vector<LabeledUtterance>& labeled,
                          const pseudotts::Lexicon& lex, const numerics::ModelParams* init);

struct DecodeOutcome {
  std::vector<std::pair<std::string, std::string>> hypotheses;
  double wer = 0.0;
  int64_t edit_distance = 0;
  int64_t ref_words = 0;
};

// Decodes every utterance and pools word errors corpus-wide. fusion_lm, when
// given, joins beam search at cfg.decode.fusion_beta.
DecodeOutcome run_decode(const config::ExperimentConfig& cfg,
                         const std::vector<LabeledUtterance>& split,
                         const numerics::ModelParams& params, const lm::NGramLM* fusion_lm);

std::string metrics_csv(const std::vector<pipeline::StepRecord>& records);

std::vector<std::string> split_words(const std::string& text);

}  // namespace tts4p::runner

#endif  // TTS4P_RUNNER_HPP_
