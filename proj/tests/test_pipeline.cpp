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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "tts4p/encoder.hpp"
#include "tts4p/lm.hpp"
#include "tts4p/pipeline.hpp"
#include "tts4p/pseudotts.hpp"
#include "tts4p/rng.hpp"

using tts4p::Rng;
using namespace tts4p::pipeline;
using tts4p::encoder::EncoderConfig;
using tts4p::features::FeatureSource;
using tts4p::losses::LabelSeq;
using tts4p::numerics::ModelParams;
using tts4p::numerics::Tensor;

namespace {

tts4p::pseudotts::Lexicon toy_lexicon() {
  tts4p::pseudotts::Lexicon lex;
  lex.inventory.names = {"a", "b", "d", "i", "t", "u", "|"};
  lex.boundary_id = 7;
  lex.entries["a"] = {1};
  lex.entries["b"] = {2};
  lex.entries["d"] = {3};
  lex.entries["i"] = {4};
  lex.entries["t"] = {5};
  lex.entries["u"] = {6};
  return lex;
}

tts4p::pseudotts::SynthConfig small_synth(int n_mels) {
  tts4p::pseudotts::SynthConfig cfg;
  cfg.n_mels = n_mels;
  cfg.base_duration_frames = 6;
  cfg.prior.n_speakers = 2;
  cfg.prior.global_dim = 2;
  cfg.prior.local_dim = 2;
  return cfg;
}

EncoderConfig small_encoder(int n_mels) {
  EncoderConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.conv_kernel = 3;
  cfg.ffn_expansion = 2;
  cfg.subsample_channels = 4;
  cfg.feature_dims = n_mels;
  return cfg;
}

TrainConfig small_train(Phase phase) {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.peak_lr = 3e-4;
  cfg.warmup_steps = 10;
  cfg.ema_decay = 0.5;
  cfg.phase = phase;
  cfg.distractors = 4;
  cfg.mask_span = 2;
  return cfg;
}

FeatureMatrix random_real(int frames, int dims, Rng& rng) {
  FeatureMatrix f;
  f.values = Tensor<float>::randn({frames, dims}, rng);
  f.source = FeatureSource::kReal;
  return f;
}

std::vector<FeatureMatrix> real_pool(int n, int frames, int dims, Rng& rng) {
  std::vector<FeatureMatrix> pool;
  for (int i = 0; i < n; ++i) pool.push_back(random_real(frames, dims, rng));
  return pool;
}

std::vector<HeadSpec> toy_aux_heads() {
  HeadSpec ph{"phoneme", 8, AuxObjective::kCtc, 8};
  HeadSpec wp{"wordpiece", tts4p::pseudotts::kWordpieceVocabSize, AuxObjective::kCtc, 8};
  return {ph, wp};
}

ModelParams toy_model(const EncoderConfig& ecfg, bool with_aux, uint64_t seed) {
  Rng rng(seed);
  ModelParams params = tts4p::encoder::init_encoder_params(ecfg, rng);
  if (with_aux)
    for (const HeadSpec& spec : toy_aux_heads())
      init_head_params(params, spec, ecfg.d_model, tts4p::numerics::Partition::kAuxDecoder, rng);
  return params;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, entry] : a.entries()) {
    if (!b.contains(name)) return false;
    const Tensor<float>& other = b.at(name);
    if (entry.value.shape() != other.shape()) return false;
    if (std::memcmp(entry.value.data(), other.data(),
                    sizeof(float) * static_cast<size_t>(other.size())) != 0)
      return false;
  }
  return true;
}

ModelParams copy_params(const ModelParams& src) {
  ModelParams out;
  for (const auto& [name, entry] : src.entries()) out.add(name, entry.value, entry.partition);
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) words.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

}  // namespace

TEST_CASE("learning rate schedule ramps then decays") {
  CHECK(lr_schedule(25000, 2e-3, 25000) == doctest::Approx(2e-3).epsilon(1e-12));
  CHECK(lr_schedule(100000, 2e-3, 25000) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(lr_schedule(1, 2e-3, 25000) == doctest::Approx(2e-3 / 25000).epsilon(1e-12));
  CHECK(lr_schedule(5, 1.0, 10) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(lr_schedule(0, 2e-3, 25000), std::invalid_argument);
  CHECK_THROWS_AS(lr_schedule(1, 2e-3, 0), std::invalid_argument);
  CHECK_THROWS_AS(lr_schedule(1, 0.0, 10), std::invalid_argument);
}

TEST_CASE("ema update follows the geometric recursion") {
  ModelParams ema;
  ema.add("w", Tensor<float>({2}), tts4p::numerics::Partition::kEncoder);
  ModelParams cur;
  cur.add("w", Tensor<float>::full({2}, 1.0f), tts4p::numerics::Partition::kEncoder);

  ema_update(ema, cur, 0.9);
  ema_update(ema, cur, 0.9);
  CHECK(ema.at("w")[0] == doctest::Approx(0.19).epsilon(1e-6));

  SUBCASE("decay one leaves the average untouched") {
    ModelParams frozen;
    frozen.add("w", Tensor<float>::full({2}, 0.25f), tts4p::numerics::Partition::kEncoder);
    ema_update(frozen, cur, 1.0);
    CHECK(frozen.at("w")[0] == 0.25f);
  }

  SUBCASE("constant weights give the closed form") {
    ModelParams acc;
    acc.add("w", Tensor<float>({2}), tts4p::numerics::Partition::kEncoder);
    const double decay = 0.8;
    for (int n = 1; n <= 6; ++n) {
      ema_update(acc, cur, decay);
      CHECK(acc.at("w")[0] == doctest::Approx(1.0 - std::pow(decay, n)).epsilon(1e-5));
    }
  }

  SUBCASE("shape and size mismatches are rejected") {
    ModelParams bad;
    bad.add("w", Tensor<float>({3}), tts4p::numerics::Partition::kEncoder);
    CHECK_THROWS_AS(ema_update(bad, cur, 0.9), std::invalid_argument);
    ModelParams extra;
    CHECK_THROWS_AS(ema_update(extra, cur, 0.9), std::invalid_argument);
  }
}

TEST_CASE("adam clips the gradient to the requested norm") {
  ModelParams params;
  params.add("w", Tensor<float>({2}), tts4p::numerics::Partition::kEncoder);
  std::map<std::string, Tensor<float>> grads;
  grads.emplace("w", Tensor<float>({2}, {3.0f, 4.0f}));

  AdamState state;
  AdamConfig acfg;
  const double lr = 0.01;
  const double norm = apply_updates(params, grads, state, acfg, lr, 1.0);
  CHECK(norm == doctest::Approx(5.0).epsilon(1e-7));

  // First step with clipped gradient g' = g / 5: mhat = g', vhat = g'^2.
  for (int i = 0; i < 2; ++i) {
    const double g = grads.at("w")[i] / 5.0;
    const double expect = -lr * g / (std::abs(g) + acfg.eps);
    CHECK(params.at("w")[i] == doctest::Approx(expect).epsilon(1e-6));
  }
  CHECK(state.step == 1);

  SUBCASE("below the clip the gradient is untouched") {
    ModelParams p2;
    p2.add("w", Tensor<float>({1}, {0.0f}), tts4p::numerics::Partition::kEncoder);
    std::map<std::string, Tensor<float>> g2;
    g2.emplace("w", Tensor<float>({1}, {0.3f}));
    AdamState s2;
    const double n2 = apply_updates(p2, g2, s2, acfg, lr, 1.0);
    CHECK(n2 == doctest::Approx(0.3).epsilon(1e-7));
    CHECK(p2.at("w")[0] == doctest::Approx(-lr * 0.3 / (0.3 + acfg.eps)).epsilon(1e-6));
  }

  SUBCASE("shape mismatch is rejected") {
    std::map<std::string, Tensor<float>> bad;
    bad.emplace("w", Tensor<float>({3}));
    AdamState s3;
    CHECK_THROWS_AS(apply_updates(params, bad, s3, acfg, lr, 1.0), std::invalid_argument);
  }
}

TEST_CASE("batch construction mixes synthesized and real items") {
  Rng rng(11);
  auto lex = toy_lexicon();
  auto synth_cfg = small_synth(16);
  auto pool = real_pool(3, 30, 16, rng);
  std::vector<std::string> texts = {"ba di", "tu", "abi du"};

  SUBCASE("ratio zero gives only real items") {
    auto batch = make_batch(pool, texts, 6, 0.0, lex, synth_cfg, rng);
    REQUIRE(batch.size() == 6);
    for (const auto& item : batch) {
      CHECK_FALSE(item.synthesized);
      CHECK(item.labels.empty());
      CHECK_NOTHROW(validate_batch_item(item));
    }
  }

  SUBCASE("ratio one gives only labeled synthesized items") {
    auto batch = make_batch(pool, texts, 6, 1.0, lex, synth_cfg, rng);
    REQUIRE(batch.size() == 6);
    for (const auto& item : batch) {
      CHECK(item.synthesized);
      REQUIRE(item.labels.count("phoneme") == 1);
      REQUIRE(item.labels.count("wordpiece") == 1);
      CHECK(item.features.source == FeatureSource::kSynthesized);
      CHECK_NOTHROW(validate_batch_item(item));
    }
  }

  SUBCASE("half ratio splits the batch exactly") {
    auto batch = make_batch(pool, texts, 8, 0.5, lex, synth_cfg, rng);
    REQUIRE(batch.size() == 8);
    int n_synth = 0;
    for (const auto& item : batch) n_synth += item.synthesized ? 1 : 0;
    CHECK(n_synth == 4);
  }

  SUBCASE("order is shuffled rather than synth-first") {
    bool saw_real_before_synth = false;
    for (int trial = 0; trial < 20 && !saw_real_before_synth; ++trial) {
      auto batch = make_batch(pool, texts, 8, 0.5, lex, synth_cfg, rng);
      for (size_t i = 0; i + 1 < batch.size(); ++i)
        if (!batch[i].synthesized && batch[i + 1].synthesized) saw_real_before_synth = true;
    }
    CHECK(saw_real_before_synth);
  }

  SUBCASE("empty pools are rejected only when their share is used") {
    std::vector<FeatureMatrix> no_real;
    std::vector<std::string> no_text;
    CHECK_THROWS_AS(make_batch(no_real, texts, 4, 0.5, lex, synth_cfg, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_batch(pool, no_text, 4, 0.5, lex, synth_cfg, rng),
                    std::invalid_argument);
    CHECK_NOTHROW(make_batch(no_real, texts, 4, 1.0, lex, synth_cfg, rng));
    CHECK_NOTHROW(make_batch(pool, no_text, 4, 0.0, lex, synth_cfg, rng));
  }
}

TEST_CASE("batch item validation catches inconsistent tags") {
  Rng rng(3);
  BatchItem item;
  item.features = random_real(10, 8, rng);
  item.synthesized = true;
  CHECK_THROWS_AS(validate_batch_item(item), std::invalid_argument);
  item.features.source = FeatureSource::kSynthesized;
  CHECK_THROWS_AS(validate_batch_item(item), std::invalid_argument);
  item.labels.emplace("phoneme", LabelSeq{{1, 2}, "phoneme"});
  CHECK_NOTHROW(validate_batch_item(item));
}

TEST_CASE("repeated pretrain steps on one batch reduce its loss") {
  const int n_mels = 16;
  auto ecfg = small_encoder(n_mels);
  auto params = toy_model(ecfg, false, 5);
  auto tcfg = small_train(Phase::kPretrainSpeechOnly);
  tcfg.peak_lr = 1e-3;
  tcfg.warmup_steps = 1;

  Rng pool_rng(21);
  auto pool = real_pool(4, 40, n_mels, pool_rng);
  std::vector<BatchItem> batch;
  for (const auto& f : pool) {
    BatchItem item;
    item.features = f;
    batch.push_back(item);
  }

  TrainState state;
  AugmentPolicy augment;
  double first = 0;
  double last = 0;
  for (int step = 0; step < 5; ++step) {
    Rng rng(7);
    StepRecord rec = pretrain_step(batch, params, {}, state, tcfg, ecfg, augment, rng);
    if (step == 0) first = rec.total;
    last = rec.total;
    CHECK(std::isfinite(rec.total));
    CHECK(rec.grad_norm >= 0);
  }
  CHECK(last < first);
  CHECK(state.step == 5);
  CHECK(state.ema.size() == params.size());
}

TEST_CASE("joint phase leaves decoder parameters alone on real-only batches") {
  const int n_mels = 16;
  auto ecfg = small_encoder(n_mels);
  auto params = toy_model(ecfg, true, 6);
  auto tcfg = small_train(Phase::kPretrainJoint);

  Rng rng(13);
  auto pool = real_pool(2, 32, n_mels, rng);
  std::vector<BatchItem> batch;
  for (const auto& f : pool) {
    BatchItem item;
    item.features = f;
    batch.push_back(item);
  }

  ModelParams before = copy_params(params);
  TrainState state;
  AugmentPolicy augment;
  pretrain_step(batch, params, toy_aux_heads(), state, tcfg, ecfg, augment, rng);

  bool aux_same = true;
  bool encoder_moved = false;
  for (const auto& [name, entry] : params.entries()) {
    const bool same = std::memcmp(entry.value.data(), before.at(name).data(),
                                  sizeof(float) * static_cast<size_t>(entry.value.size())) == 0;
    if (entry.partition == tts4p::numerics::Partition::kAuxDecoder && !same) aux_same = false;
    if (entry.partition == tts4p::numerics::Partition::kEncoder && !same) encoder_moved = true;
  }
  CHECK(aux_same);
  CHECK(encoder_moved);
}

TEST_CASE("joint phase trains auxiliary heads on synthesized items") {
  const int n_mels = 16;
  auto ecfg = small_encoder(n_mels);
  auto params = toy_model(ecfg, true, 8);
  auto tcfg = small_train(Phase::kPretrainJoint);

  Rng rng(17);
  auto lex = toy_lexicon();
  auto synth_cfg = small_synth(n_mels);
  auto pool = real_pool(2, 32, n_mels, rng);
  std::vector<std::string> texts = {"ba di", "tu ba"};
  auto batch = make_batch(pool, texts, 4, 0.5, lex, synth_cfg, rng);

  ModelParams before = copy_params(params);
  TrainState state;
  AugmentPolicy augment;
  StepRecord rec = pretrain_step(batch, params, toy_aux_heads(), state, tcfg, ecfg, augment, rng);

  CHECK(rec.j_text > 0);
  CHECK(rec.j_speech > 0);
  CHECK(rec.j_aux > 0);
  CHECK(std::isfinite(rec.total));

  bool aux_moved = false;
  for (const auto& [name, entry] : params.entries())
    if (entry.partition == tts4p::numerics::Partition::kAuxDecoder &&
        std::memcmp(entry.value.data(), before.at(name).data(),
                    sizeof(float) * static_cast<size_t>(entry.value.size())) != 0)
      aux_moved = true;
  CHECK(aux_moved);
}

TEST_CASE("pretrain survives a one-frame utterance inside a batch") {
  const int n_mels = 16;
  auto ecfg = small_encoder(n_mels);
  auto params = toy_model(ecfg, false, 9);
  auto tcfg = small_train(Phase::kPretrainSpeechOnly);

  Rng rng(23);
  std::vector<BatchItem> batch;
  BatchItem tiny;
  tiny.features = random_real(1, n_mels, rng);
  batch.push_back(tiny);
  BatchItem normal;
  normal.features = random_real(40, n_mels, rng);
  batch.push_back(normal);

  TrainState state;
  AugmentPolicy augment;
  StepRecord rec = pretrain_step(batch, params, {}, state, tcfg, ecfg, augment, rng);
  CHECK(std::isfinite(rec.total));
}

TEST_CASE("speech-only phase rejects synthesized items") {
  const int n_mels = 16;
  auto ecfg = small_encoder(n_mels);
  auto params = toy_model(ecfg, false, 10);
  auto tcfg = small_train(Phase::kPretrainSpeechOnly);

  Rng rng(29);
  auto lex = toy_lexicon();
  auto batch = make_batch({}, {"ba di"}, 1, 1.0, lex, small_synth(n_mels), rng);
  TrainState state;
  AugmentPolicy augment;
  CHECK_THROWS_AS(pretrain_step(batch, params, {}, state, tcfg, ecfg, augment, rng),
                  std::invalid_argument);
}

TEST_CASE("ema tracks the pretrain parameters") {
  const int n_mels = 16;
  auto ecfg = small_encoder(n_mels);
  auto params = toy_model(ecfg, false, 12);
  auto tcfg = small_train(Phase::kPretrainSpeechOnly);
  tcfg.ema_decay = 0.5;

  Rng rng(31);
  std::vector<BatchItem> batch;
  BatchItem item;
  item.features = random_real(36, n_mels, rng);
  batch.push_back(item);

  ModelParams w0 = copy_params(params);
  TrainState state;
  AugmentPolicy augment;
  pretrain_step(batch, params, {}, state, tcfg, ecfg, augment, rng);

  const std::string probe = "enc.proj.w";
  const float expect =
      static_cast<float>(0.5 * w0.at(probe)[0] + 0.5 * params.at(probe)[0]);
  CHECK(state.ema.at(probe)[0] == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("pretraining is bitwise deterministic under a fixed seed") {
  const int n_mels = 16;
  auto ecfg = small_encoder(n_mels);
  auto tcfg = small_train(Phase::kPretrainJoint);
  auto lex = toy_lexicon();
  auto synth_cfg = small_synth(n_mels);

  auto run = [&](uint64_t seed) {
    auto params = toy_model(ecfg, true, 40);
    Rng rng(seed);
    auto pool = real_pool(3, 32, n_mels, rng);
    std::vector<std::string> texts = {"ba di", "tu"};
    TrainState state;
    AugmentPolicy augment;
    std::string rows;
    for (int step = 0; step < 3; ++step) {
      auto batch = make_batch(pool, texts, 4, 0.5, lex, synth_cfg, rng);
      StepRecord rec =
          pretrain_step(batch, params, toy_aux_heads(), state, tcfg, ecfg, augment, rng);
      rows += metrics_row(rec) + "\n";
    }
    return std::make_pair(std::move(params), rows);
  };

  auto [p1, rows1] = run(99);
  auto [p2, rows2] = run(99);
  auto [p3, rows3] = run(100);
  CHECK(params_equal(p1, p2));
  CHECK(rows1 == rows2);
  CHECK_FALSE(params_equal(p1, p3));
}

TEST_CASE("finetune requires labels and honors the encoder freeze") {
  const int n_mels = 16;
  auto ecfg = small_encoder(n_mels);
  auto params = toy_model(ecfg, false, 14);
  FinetuneConfig fcfg;
  Rng rng(37);
  init_head_params(params, fcfg.decoder, ecfg.d_model,
                   tts4p::numerics::Partition::kFinetuneDecoder, rng);

  auto lex = toy_lexicon();
  auto batch = make_batch({}, {"ba di", "tu"}, 2, 1.0, lex, small_synth(n_mels), rng);

  SUBCASE("unlabeled items are rejected") {
    std::vector<BatchItem> bad = batch;
    bad[0].labels.clear();
    bad[0].synthesized = false;
    bad[0].features.source = FeatureSource::kReal;
    FinetuneState state;
    AugmentPolicy augment;
    CHECK_THROWS_AS(finetune_step(bad, params, state, fcfg, ecfg, augment, rng),
                    std::invalid_argument);
  }

  SUBCASE("frozen encoder stays bit-identical while the decoder moves") {
    fcfg.freeze_encoder = true;
    ModelParams before = copy_params(params);
    FinetuneState state;
    AugmentPolicy augment;
    StepRecord rec = finetune_step(batch, params, state, fcfg, ecfg, augment, rng);
    CHECK(std::isfinite(rec.total));
    CHECK(rec.phase == Phase::kFinetune);

    bool encoder_same = true;
    bool decoder_moved = false;
    for (const auto& [name, entry] : params.entries()) {
      const bool same = std::memcmp(entry.value.data(), before.at(name).data(),
                                    sizeof(float) * static_cast<size_t>(entry.value.size())) == 0;
      if (entry.partition == tts4p::numerics::Partition::kEncoder && !same) encoder_same = false;
      if (entry.partition == tts4p::numerics::Partition::kFinetuneDecoder && !same)
        decoder_moved = true;
    }
    CHECK(encoder_same);
    CHECK(decoder_moved);
  }

  SUBCASE("transducer objective is selectable") {
    FinetuneConfig rcfg;
    rcfg.decoder.objective = AuxObjective::kRnnt;
    rcfg.decoder.hidden = 8;
    auto rparams = toy_model(ecfg, false, 15);
    Rng rng2(41);
    init_head_params(rparams, rcfg.decoder, ecfg.d_model,
                     tts4p::numerics::Partition::kFinetuneDecoder, rng2);
    FinetuneState state;
    AugmentPolicy augment;
    StepRecord rec = finetune_step(batch, rparams, state, rcfg, ecfg, augment, rng2);
    CHECK(std::isfinite(rec.total));
  }

  SUBCASE("first step reports the decoder schedule") {
    FinetuneState state;
    AugmentPolicy augment;
    StepRecord rec = finetune_step(batch, params, state, fcfg, ecfg, augment, rng);
    CHECK(rec.lr ==
          doctest::Approx(lr_schedule(1, fcfg.decoder_peak_lr, fcfg.decoder_warmup))
              .epsilon(1e-12));
  }
}

TEST_CASE("auxiliary heads are dropped before fine-tuning") {
  const int n_mels = 16;
  auto ecfg = small_encoder(n_mels);
  auto params = toy_model(ecfg, true, 16);
  const size_t with_aux = params.size();
  drop_partition(params, tts4p::numerics::Partition::kAuxDecoder);
  CHECK(params.size() < with_aux);
  for (const auto& [name, entry] : params.entries())
    CHECK(entry.partition == tts4p::numerics::Partition::kEncoder);

  Rng rng(43);
  FinetuneConfig fcfg;
  init_head_params(params, fcfg.decoder, ecfg.d_model,
                   tts4p::numerics::Partition::kFinetuneDecoder, rng);
  CHECK(params.contains("dec.wordpiece.w_out"));
  CHECK_FALSE(params.contains("aux.phoneme.w_out"));
}

TEST_CASE("greedy labels collapse repeats and drop blanks") {
  // Frames argmax to 1 1 0 2 2 0 1.
  Tensor<float> post({7, 3});
  auto set_peak = [&post](int t, int v) {
    for (int j = 0; j < 3; ++j) post.at(t, j) = j == v ? 0.0f : -8.0f;
  };
  set_peak(0, 1);
  set_peak(1, 1);
  set_peak(2, 0);
  set_peak(3, 2);
  set_peak(4, 2);
  set_peak(5, 0);
  set_peak(6, 1);
  CHECK(greedy_labels(post) == std::vector<int>{1, 2, 1});

  Tensor<float> blanks({4, 3});
  for (int t = 0; t < 4; ++t)
    for (int j = 0; j < 3; ++j) blanks.at(t, j) = j == 0 ? 0.0f : -8.0f;
  CHECK(greedy_labels(blanks).empty());

  DecodeConfig dcfg;
  dcfg.beam_width = 4;
  CHECK(beam_labels(blanks, dcfg).empty());
}

TEST_CASE("width-one beam equals greedy on random posteriors") {
  Rng rng(51);
  DecodeConfig dcfg;
  dcfg.mode = DecodeConfig::Mode::kBeam;
  dcfg.beam_width = 1;
  for (int trial = 0; trial < 60; ++trial) {
    const int tn = 2 + rng.uniform_int(12);
    const int vn = 2 + rng.uniform_int(6);
    Tensor<float> post = Tensor<float>::randn({tn, vn}, rng);
    CHECK(beam_labels(post, dcfg) == greedy_labels(post));
  }
}

TEST_CASE("beam without a language model matches greedy on peaked posteriors") {
  Rng rng(53);
  DecodeConfig dcfg;
  dcfg.beam_width = 4;
  for (int trial = 0; trial < 20; ++trial) {
    const int tn = 3 + rng.uniform_int(8);
    const int vn = 3 + rng.uniform_int(5);
    Tensor<float> post({tn, vn});
    for (int t = 0; t < tn; ++t) {
      const int peak = rng.uniform_int(vn);
      for (int v = 0; v < vn; ++v)
        post.at(t, v) = v == peak ? -0.01f : -12.0f + 0.1f * static_cast<float>(v);
    }
    CHECK(beam_labels(post, dcfg) == greedy_labels(post));
  }
}

TEST_CASE("shallow fusion can overturn the acoustic best path") {
  auto lm = tts4p::lm::train_ngram({"bi", "bi", "bi"}, 2, 1);

  Tensor<float> post = Tensor<float>::full({2, 28}, -15.0f);
  post.at(0, 2) = -0.1f;   // b
  post.at(1, 1) = -0.5f;   // a, acoustically ahead
  post.at(1, 9) = -0.9f;   // i, favored by the language model
  CHECK(greedy_labels(post) == std::vector<int>{2, 1});

  DecodeConfig dcfg;
  dcfg.mode = DecodeConfig::Mode::kBeam;
  dcfg.beam_width = 4;
  dcfg.fusion_beta = 3.0;
  dcfg.lm = &lm;
  CHECK(beam_labels(post, dcfg) == std::vector<int>{2, 9});

  SUBCASE("beta zero restores the acoustic choice") {
    dcfg.fusion_beta = 0.0;
    dcfg.lm = nullptr;
    CHECK(beam_labels(post, dcfg) == std::vector<int>{2, 1});
  }

  SUBCASE("fusion requires the wordpiece vocabulary") {
    Tensor<float> narrow = Tensor<float>::full({2, 5}, -1.0f);
    CHECK_THROWS_AS(beam_labels(narrow, dcfg), std::invalid_argument);
  }
}

TEST_CASE("decode configuration is validated") {
  DecodeConfig dcfg;
  dcfg.beam_width = 0;
  CHECK_THROWS_AS(dcfg.validate(), std::invalid_argument);
  dcfg.beam_width = 2;
  dcfg.fusion_beta = 0.5;
  CHECK_THROWS_AS(dcfg.validate(), std::invalid_argument);
  dcfg.fusion_beta = -0.5;
  CHECK_THROWS_AS(dcfg.validate(), std::invalid_argument);
}

TEST_CASE("decode runs end to end and rejects transducer heads") {
  const int n_mels = 16;
  auto ecfg = small_encoder(n_mels);
  auto params = toy_model(ecfg, false, 18);
  FinetuneConfig fcfg;
  Rng rng(47);
  init_head_params(params, fcfg.decoder, ecfg.d_model,
                   tts4p::numerics::Partition::kFinetuneDecoder, rng);

  FeatureMatrix f = random_real(30, n_mels, rng);
  DecodeConfig dcfg;
  CHECK_NOTHROW(decode(f, params, ecfg, fcfg.decoder, dcfg));

  HeadSpec rnnt = fcfg.decoder;
  rnnt.objective = AuxObjective::kRnnt;
  CHECK_THROWS_AS(decode(f, params, ecfg, rnnt, dcfg), std::invalid_argument);
}

TEST_CASE("word error rate matches hand counts and a quadratic oracle") {
  CHECK(wer({"a", "b", "c"}, {"a", "x", "c"}) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(wer({"a", "b"}, {"a", "b"}) == 0.0);
  CHECK(wer({"a"}, {}) == 1.0);
  CHECK(wer({"a"}, {"a", "b"}) == 1.0);
  CHECK_THROWS_AS(wer({}, {"a"}), std::invalid_argument);

  // Full-matrix reference implementation.
  auto oracle = [](const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
    const size_t n = ref.size();
    const size_t m = hyp.size();
    std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
    for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
    for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
    for (size_t i = 1; i <= n; ++i)
      for (size_t j = 1; j <= m; ++j)
        d[i][j] = std::min({d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1),
                            d[i - 1][j] + 1, d[i][j - 1] + 1});
    return static_cast<double>(d[n][m]) / static_cast<double>(n);
  };

  Rng rng(61);
  const std::vector<std::string> lexicon = {"ba", "di", "tu"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> ref(1 + rng.uniform_int(6));
    std::vector<std::string> hyp(rng.uniform_int(7));
    for (auto& w : ref) w = lexicon[static_cast<size_t>(rng.uniform_int(3))];
    for (auto& w : hyp) w = lexicon[static_cast<size_t>(rng.uniform_int(3))];
    CHECK(wer(ref, hyp) == doctest::Approx(oracle(ref, hyp)).epsilon(1e-12));
  }
}

TEST_CASE("manifest lines round trip including null fields") {
  std::vector<ManifestEntry> entries;
  entries.push_back({"utt1", std::string("feats/utt1.mel"), std::nullopt, std::string("ba di")});
  entries.push_back({"utt2", std::nullopt, std::string("audio/utt2.pcm"), std::nullopt});
  entries.push_back({"quoted \"id\"", std::nullopt, std::nullopt, std::string("tu \"x\" di")});

  const std::string path = "pipeline_test_manifest.jsonl";
  write_manifest(entries, path);
  auto loaded = read_manifest(path);
  std::remove(path.c_str());

  REQUIRE(loaded.size() == entries.size());
  for (size_t i = 0; i < entries.size(); ++i) {
    CHECK(loaded[i].id == entries[i].id);
    CHECK(loaded[i].features == entries[i].features);
    CHECK(loaded[i].audio == entries[i].audio);
    CHECK(loaded[i].text == entries[i].text);
  }

  SUBCASE("malformed lines are rejected with the line number") {
    std::ofstream out(path);
    out << "{\"id\": \"ok\"}\n";
    out << "not json\n";
    out.close();
    CHECK_THROWS_WITH_AS(read_manifest(path), doctest::Contains("line 2"), std::runtime_error);
    std::remove(path.c_str());
  }

  SUBCASE("missing id is rejected") {
    std::ofstream out(path);
    out << "{\"features\": null}\n";
    out.close();
    CHECK_THROWS_AS(read_manifest(path), std::runtime_error);
    std::remove(path.c_str());
  }
}

TEST_CASE("metrics and eval rows use the documented columns") {
  CHECK(metrics_header() == "step,phase,j_speech,j_text,j_aux,total,lr,grad_norm");
  CHECK(eval_header() == "checkpoint,set,wer");

  StepRecord rec;
  rec.step = 3;
  rec.phase = Phase::kPretrainJoint;
  rec.j_speech = 1.5;
  rec.j_text = 0.25;
  rec.j_aux = 2.0;
  rec.total = 3.75;
  rec.lr = 0.0005;
  rec.grad_norm = 12.5;
  CHECK(metrics_row(rec) == "3,pretrain_joint,1.5,0.25,2,3.75,0.0005,12.5");

  CHECK(eval_row("ck-final", "test", 0.0) == "ck-final,test,0.0000");
  CHECK(eval_row("ck-final", "dev", 1.0 / 3) == "ck-final,dev,0.3333");
}

TEST_CASE("phase names round trip") {
  for (Phase p :
       {Phase::kPretrainSpeechOnly, Phase::kPretrainJoint, Phase::kFinetune})
    CHECK(phase_from_name(phase_name(p)) == p);
  CHECK_THROWS_AS(phase_from_name("warmup"), std::invalid_argument);
}

TEST_CASE("fine-tuning overfits a tiny labeled set to zero error") {
  const int n_mels = 16;
  auto ecfg = small_encoder(n_mels);
  auto params = toy_model(ecfg, false, 77);
  FinetuneConfig fcfg;
  fcfg.decoder_peak_lr = 3e-3;
  fcfg.decoder_warmup = 50;
  fcfg.encoder_peak_lr = 1e-3;
  fcfg.encoder_warmup = 50;
  Rng rng(79);
  init_head_params(params, fcfg.decoder, ecfg.d_model,
                   tts4p::numerics::Partition::kFinetuneDecoder, rng);

  auto lex = toy_lexicon();
  auto synth_cfg = small_synth(n_mels);
  const std::vector<std::string> texts = {"ba di", "tu", "di ba", "tu di", "ba"};
  std::vector<BatchItem> batch;
  for (const auto& text : texts) {
    auto r = tts4p::pseudotts::synth_on_the_fly(text, lex, synth_cfg, rng);
    BatchItem item;
    item.features = std::move(r.features);
    item.synthesized = true;
    item.labels.emplace(r.phonemes.vocab, std::move(r.phonemes));
    item.labels.emplace(r.wordpieces.vocab, std::move(r.wordpieces));
    batch.push_back(std::move(item));
  }

  FinetuneState state;
  AugmentPolicy augment;
  DecodeConfig dcfg;
  double err = 1.0;
  for (int step = 0; step < 2000 && err > 0; ++step) {
    finetune_step(batch, params, state, fcfg, ecfg, augment, rng);
    if (state.step % 25 != 0) continue;
    err = 0;
    for (size_t i = 0; i < batch.size(); ++i) {
      auto ids = decode(batch[i].features, params, ecfg, fcfg.decoder, dcfg);
      const std::string hyp = tts4p::pseudotts::wordpieces_to_text(ids);
      err += wer(split_words(texts[i]), split_words(hyp));
    }
  }
  CHECK(err == 0.0);
}
