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

#ifndef TTS4P_PSEUDOTTS_HPP_
#define TTS4P_PSEUDOTTS_HPP_

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tts4p/features.hpp"
#include "tts4p/losses.hpp"
#include "tts4p/rng.hpp"

namespace tts4p::pseudotts {

constexpr const char* kPhonemeVocabName = "phoneme";
constexpr const char* kWordpieceVocabName = "wordpiece";

// Character stand-in for wordpieces: blank, 'a'..'z', space.
constexpr int kWordpieceVocabSize = 28;

struct G2PError : std::runtime_error {
  explicit G2PError(const std::string& character)
      : std::runtime_error("g2p: no rule for \"" + character + "\""), character(character) {}
  std::string character;
};

// Phoneme ids are 1-based line numbers; 0 stays free for the blank label.
struct PhonemeInventory {
  std::vector<std::string> names;

  int size() const { return static_cast<int>(names.size()); }
  int id_of(const std::string& name) const;
  const std::string& name_of(int id) const;
};

PhonemeInventory load_phoneme_inventory(const std::string& path);
void save_phoneme_inventory(const PhonemeInventory& inv, const std::string& path);

// Word entries carry explicit pronunciations; single-letter entries double as
// the fallback spelling rules for words missing from the map.
struct Lexicon {
  PhonemeInventory inventory;
  std::map<std::string, std::vector<int>> entries;
  int boundary_id = 0;

  void validate() const;
};

Lexicon load_lexicon(const std::string& lexicon_path, const std::string& inventory_path);
void save_lexicon(const Lexicon& lex, const std::string& path);

// Lowercases, strips everything but letters, digits and spaces, collapses runs
// of whitespace.
std::string normalize_text(const std::string& text);

losses::LabelSeq g2p(const std::string& text, const Lexicon& lex);

losses::LabelSeq text_to_wordpieces(const std::string& text);

// Inverse of text_to_wordpieces over its output range.
std::string wordpieces_to_text(const std::vector<int>& ids);

struct LatentPrior {
  int n_speakers = 4;
  int global_dim = 4;
  int local_dim = 2;
  double duration_scale = 0.3;
  double energy_scale = 0.5;

  void validate() const;
};

struct SynthesisLatent {
  int speaker_id = 0;
  std::vector<float> global_latent;
  std::vector<std::vector<float>> local_latents;
  uint64_t noise_seed = 0;
};

// Two-second chunks advancing one second per step, at least one chunk.
int local_chunk_count(double duration_s);

SynthesisLatent sample_latent(const LatentPrior& prior, double duration_s, Rng& rng);

struct SynthConfig {
  LatentPrior prior;
  int n_mels = 80;
  int base_duration_frames = 8;
  double frame_rate_hz = 100.0;
  double noise_floor_db = -40.0;
  int crossfade_frames = 2;
  double template_floor = -8.0;
  double template_peak = 9.0;

  void validate() const;
};

// Fixed log-mel signature of one phoneme: a low floor plus two smooth bumps
// whose placement is a pure function of the id.
std::vector<float> phoneme_template(int phoneme_id, const SynthConfig& cfg);

// Fractional mel bins of the two template bumps, the canonical spectral
// anchors of a phoneme that any renderer of this language should respect.
std::pair<double, double> template_centers(int phoneme_id, const SynthConfig& cfg);

// Per-speaker linear spectral tilt, small against the template bumps.
std::vector<float> speaker_tilt(int speaker_id, const SynthConfig& cfg);

// Frames each phoneme is held for after duration jitter from the global latent.
std::vector<int> segment_durations(const losses::LabelSeq& phonemes, const SynthesisLatent& z,
                                   const SynthConfig& cfg);

features::FeatureMatrix synthesize(const losses::LabelSeq& phonemes, const SynthesisLatent& z,
                                   const SynthConfig& cfg);

struct SynthResult {
  features::FeatureMatrix features;
  losses::LabelSeq phonemes;
  losses::LabelSeq wordpieces;
  SynthesisLatent latent;
};

// Fresh latent per call: repeated texts give new realizations with identical
// label sequences.
SynthResult synth_on_the_fly(const std::string& text, const Lexicon& lex, const SynthConfig& cfg,
                             Rng& rng);

}  // namespace tts4p::pseudotts

#endif  // TTS4P_PSEUDOTTS_HPP_
