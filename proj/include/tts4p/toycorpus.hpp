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

#ifndef TTS4P_TOYCORPUS_HPP_
#define TTS4P_TOYCORPUS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "tts4p/features.hpp"
#include "tts4p/pseudotts.hpp"
#include "tts4p/rng.hpp"

namespace tts4p::toycorpus {

struct LanguageConfig {
  int n_words = 40;
  int min_syllables = 1;
  int max_syllables = 3;

  void validate() const;
};

// Words are consonant-vowel syllable chains over a fixed letter set, so no
// word ever contains two equal adjacent letters and every letter has a
// single-phoneme spelling rule.
struct ToyLanguage {
  pseudotts::Lexicon lexicon;
  std::vector<std::string> words;
};

ToyLanguage make_language(const LanguageConfig& cfg, uint64_t seed);

std::string sample_sentence(const ToyLanguage& lang, int min_words, int max_words, Rng& rng);

// Harmonic source-filter renderer for the "real" recordings. It shares
// nothing with the template-based feature synthesizer: phonemes become
// formant pairs shaping a pitched harmonic stack plus noise, and features
// come out of the waveform analysis front end.
struct RealVoiceConfig {
  double sample_rate = 8000.0;
  int n_mels = 40;
  double phoneme_ms = 80.0;
  double boundary_ms = 50.0;
  double duration_jitter = 0.25;
  double edge_ms = 8.0;
  double noise_level = 0.01;
  double f0_base_hz = 95.0;
  double f0_step_hz = 14.0;
  double formant_bw_hz = 140.0;
  double target_rms = 0.22;

  void validate() const;
};

// Formant pair of a phoneme: the canonical template anchors mapped through
// the mel filterbank, so waveform and template renderings of the same phoneme
// put energy in the same bands. The boundary phoneme renders as a noise-only
// gap instead.
std::pair<double, double> phoneme_formants(int phoneme_id, const RealVoiceConfig& cfg);

std::vector<float> render_real_audio(const losses::LabelSeq& phonemes, int speaker_id,
                                     const RealVoiceConfig& cfg, Rng& rng);

// render_real_audio followed by the log-mel front end, tagged as real.
features::FeatureMatrix real_features(const std::string& text, const ToyLanguage& lang,
                                      int speaker_id, const RealVoiceConfig& cfg, Rng& rng,
                                      std::vector<float>* audio_out = nullptr);

void write_pcm16(const std::vector<float>& samples, const std::string& path);
std::vector<float> read_pcm16(const std::string& path);

struct CorpusConfig {
  LanguageConfig language;
  RealVoiceConfig voice;
  pseudotts::LatentPrior prior;
  int n_pretrain = 2000;
  int n_finetune = 100;
  int n_test = 200;
  int n_text = 2000;
  int min_words = 2;
  int max_words = 5;
  int n_train_speakers = 6;
  int n_test_speakers = 3;
  uint64_t seed = 0;
  bool write_audio = true;

  void validate() const;
};

// First id of each recorded-speaker block; pseudo-TTS speakers occupy
// [0, prior.n_speakers) so the blocks never overlap.
constexpr int kTrainSpeakerBase = 1000;
constexpr int kTestSpeakerBase = 2000;

struct CorpusLayout {
  std::string meta;
  std::string inventory;
  std::string lexicon;
  std::string pretrain;
  std::string finetune;
  std::string test;
  std::string text_pool;

  static CorpusLayout at(const std::string& out_dir);
};

// Writes meta, lexicon files, per-utterance features (and optionally PCM
// audio) and the four split manifests under out_dir. Same config, same tree.
CorpusLayout build_corpus(const CorpusConfig& cfg, const std::string& out_dir);

}  // namespace tts4p::toycorpus

#endif  // TTS4P_TOYCORPUS_HPP_
