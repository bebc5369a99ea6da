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

#ifndef TTS4P_CONFIG_HPP_
#define TTS4P_CONFIG_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tts4p/encoder.hpp"
#include "tts4p/features.hpp"
#include "tts4p/pipeline.hpp"
#include "tts4p/pseudotts.hpp"

namespace tts4p::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorpusPaths {
  std::string dir = ".";
  std::string pretrain = "pretrain.jsonl";
  std::string finetune = "finetune.jsonl";
  std::string test = "test.jsonl";
  std::string text_pool = "text_pool.jsonl";
  std::string lexicon = "lexicon.txt";
  std::string inventory = "inventory.txt";
  // Scale every split to zero-mean unit-variance per mel dim, real and
  // synthesized statistics estimated separately.
  bool normalize = false;

  std::string path(const std::string& file) const { return dir + "/" + file; }
};

struct PhaseRun {
  pipeline::TrainConfig train;
  int steps = 1000;
};

struct FinetuneRun {
  pipeline::FinetuneConfig train;
  int steps = 500;
  int batch_size = 8;
};

struct DecodeSettings {
  pipeline::DecodeConfig::Mode mode = pipeline::DecodeConfig::Mode::kGreedy;
  int beam_width = 4;
  double fusion_beta = 0.0;
  std::string lm_path;
};

struct LmSettings {
  int order = 3;
  int min_count = 1;
};

struct ExperimentConfig {
  uint64_t seed = 0;
  CorpusPaths corpus;
  encoder::EncoderConfig encoder;
  pseudotts::SynthConfig synth;
  features::AugmentPolicy augment;
  std::vector<pipeline::HeadSpec> aux_heads;
  PhaseRun pretrain;
  PhaseRun joint;
  FinetuneRun finetune;
  DecodeSettings decode;
  LmSettings lm;
};

// Complete skeleton with every accepted key at its default. joint.peak_lr
// starts null and resolves to pretrain.peak_lr / 5 unless explicitly set.
nlohmann::json default_config_json();

// defaults <- file <- overrides, rejecting unknown keys and malformed
// values; overrides are dotted "a.b.c=value" assignments whose value text is
// parsed as JSON when possible and taken as a string otherwise. The result
// has every key materialized, ready to echo.
nlohmann::json resolve(const nlohmann::json& file, const std::vector<std::string>& overrides);

// resolve() on the parsed file at `path` (empty path = defaults only).
nlohmann::json resolve_file(const std::string& path, const std::vector<std::string>& overrides);

// Typed view of a resolved document. Field validation failures surface as
// std::invalid_argument from the embedded structs; shape problems and
// cross-field conflicts throw ConfigError.
ExperimentConfig from_json(const nlohmann::json& resolved);

// Head vocabulary: explicit size wins, otherwise "phoneme" covers the
// inventory plus blank and "wordpiece" the character set.
int head_vocab_size(const pipeline::HeadSpec& head, const pseudotts::Lexicon& lex);

}  // namespace tts4p::config

#endif  // TTS4P_CONFIG_HPP_
