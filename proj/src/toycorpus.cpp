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

#include "tts4p/toycorpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "tts4p/pipeline.hpp"

namespace tts4p::toycorpus {

namespace {

constexpr const char* kConsonants = "bdgmnt";
constexpr const char* kVowels = "aeiou";
constexpr double kPi = 3.14159265358979323846;

std::string letters_sorted() {
  std::string all = std::string(kConsonants) + kVowels;
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

void LanguageConfig::validate() const {
  if (n_words < 1) throw std::invalid_argument("language: n_words must be >= 1");
  if (min_syllables < 1) throw std::invalid_argument("language: min_syllables must be >= 1");
  if (max_syllables < min_syllables)
    throw std::invalid_argument("language: max_syllables must be >= min_syllables");
}

ToyLanguage make_language(const LanguageConfig& cfg, uint64_t seed) {
  cfg.validate();
  ToyLanguage lang;
  const std::string letters = letters_sorted();
  for (char c : letters) lang.lexicon.inventory.names.push_back(std::string(1, c));
  lang.lexicon.inventory.names.push_back("|");
  lang.lexicon.boundary_id = lang.lexicon.inventory.size();
  for (char c : letters)
    lang.lexicon.entries[std::string(1, c)] = {lang.lexicon.inventory.id_of(std::string(1, c))};
  lang.lexicon.validate();

  const std::string cons = kConsonants;
  const std::string vows = kVowels;
  const int max_distinct = [&] {
    double total = 0;
    for (int s = cfg.min_syllables; s <= cfg.max_syllables; ++s)
      total += std::pow(static_cast<double>(cons.size() * vows.size()), s);
    return total > 1e9 ? 1000000000 : static_cast<int>(total);
  }();
  if (cfg.n_words > max_distinct)
    throw std::invalid_argument("language: n_words exceeds the number of distinct words");

  Rng rng = Rng::from_keys(seed, 0x746f796c616e6775ULL);
  std::set<std::string> seen;
  while (static_cast<int>(lang.words.size()) < cfg.n_words) {
    const int n_syll = rng.uniform_range(cfg.min_syllables, cfg.max_syllables);
    std::string w;
    for (int s = 0; s < n_syll; ++s) {
      w.push_back(cons[static_cast<size_t>(rng.uniform_int(static_cast<int>(cons.size())))]);
      w.push_back(vows[static_cast<size_t>(rng.uniform_int(static_cast<int>(vows.size())))]);
    }
    if (seen.insert(w).second) lang.words.push_back(w);
  }
  return lang;
}

std::string sample_sentence(const ToyLanguage& lang, int min_words, int max_words, Rng& rng) {
  if (lang.words.empty()) throw std::invalid_argument("sample_sentence: empty vocabulary");
  if (min_words < 1 || max_words < min_words)
    throw std::invalid_argument("sample_sentence: need 1 <= min_words <= max_words");
  const int n = rng.uniform_range(min_words, max_words);
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out.push_back(' ');
    out += lang.words[static_cast<size_t>(rng.uniform_int(static_cast<int>(lang.words.size())))];
  }
  return out;
}

void RealVoiceConfig::validate() const {
  if (sample_rate < 2000) throw std::invalid_argument("voice: sample_rate must be >= 2000");
  if (n_mels < 1) throw std::invalid_argument("voice: n_mels must be >= 1");
  if (phoneme_ms <= 0 || boundary_ms <= 0)
    throw std::invalid_argument("voice: durations must be positive");
  if (duration_jitter < 0 || duration_jitter >= 1)
    throw std::invalid_argument("voice: duration_jitter must be in [0, 1)");
  if (noise_level < 0) throw std::invalid_argument("voice: noise_level must be >= 0");
  if (f0_base_hz <= 0 || formant_bw_hz <= 0)
    throw std::invalid_argument("voice: frequencies must be positive");
  if (target_rms <= 0) throw std::invalid_argument("voice: target_rms must be positive");
}

std::pair<double, double> phoneme_formants(int phoneme_id, const RealVoiceConfig& cfg) {
  if (phoneme_id < 1) throw std::invalid_argument("phoneme_formants: ids start at 1");
  pseudotts::SynthConfig synth;
  synth.n_mels = cfg.n_mels;
  const auto [c1, c2] = pseudotts::template_centers(phoneme_id, synth);
  features::LogMelConfig mel;
  mel.sample_rate = cfg.sample_rate;
  mel.n_mels = cfg.n_mels;
  const std::vector<double> centers = features::mel_band_centers_hz(mel);
  auto bin_to_hz = [&](double c) {
    const double b = std::clamp(c, 0.0, static_cast<double>(cfg.n_mels - 1));
    const int i = std::min(static_cast<int>(b), cfg.n_mels - 2);
    const double t = b - i;
    return centers[static_cast<size_t>(i)] +
           t * (centers[static_cast<size_t>(i + 1)] - centers[static_cast<size_t>(i)]);
  };
  const double cap = 0.48 * cfg.sample_rate;
  return {std::min(bin_to_hz(c1), cap), std::min(bin_to_hz(c2), cap)};
}

std::vector<float> render_real_audio(const losses::LabelSeq& phonemes, int speaker_id,
                                     const RealVoiceConfig& cfg, Rng& rng) {
  cfg.validate();
  if (phonemes.ids.empty())
    throw std::invalid_argument("render_real_audio: empty phoneme sequence");
  if (speaker_id < 0) throw std::invalid_argument("render_real_audio: speaker_id must be >= 0");

  const double f0 = cfg.f0_base_hz + cfg.f0_step_hz * (speaker_id % 7);
  const double tilt = 0.12 * ((speaker_id / 7) % 5 - 2);
  const int edge = std::max(1, static_cast<int>(std::lround(cfg.sample_rate * cfg.edge_ms / 1000.0)));

  std::vector<float> out;
  for (int ph : phonemes.ids) {
    const bool is_gap = (ph == 0);
    const double base_ms = (is_gap ? cfg.boundary_ms : cfg.phoneme_ms);
    const double jitter = 1.0 + cfg.duration_jitter * rng.uniform(-1.0, 1.0);
    const int n = std::max(edge * 2, static_cast<int>(std::lround(
                                          cfg.sample_rate * base_ms * jitter / 1000.0)));
    const size_t start = out.size();
    out.resize(start + static_cast<size_t>(n), 0.0f);
    if (!is_gap) {
      const auto [fa, fb] = phoneme_formants(ph, cfg);
      struct Harmonic {
        double freq, amp, phase;
      };
      std::vector<Harmonic> parts;
      const double nyquist_cap = 0.45 * cfg.sample_rate;
      for (int k = 1; k * f0 < nyquist_cap; ++k) {
        const double fk = k * f0;
        const double da = (fk - fa) / cfg.formant_bw_hz;
        const double db = (fk - fb) / cfg.formant_bw_hz;
        double amp = std::exp(-da * da) + 0.8 * std::exp(-db * db);
        amp *= std::pow(static_cast<double>(k), tilt);
        if (amp < 1e-4) continue;
        parts.push_back({fk, amp, rng.uniform(0.0, 2.0 * kPi)});
      }
      double sum_sq = 0.0;
      for (const auto& h : parts) sum_sq += 0.5 * h.amp * h.amp;
      const double gain =
          (sum_sq > 0 ? cfg.target_rms * (1.0 + 0.15 * rng.uniform(-1.0, 1.0)) / std::sqrt(sum_sq)
                      : 0.0);
      for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / cfg.sample_rate;
        double s = 0.0;
        for (const auto& h : parts) s += h.amp * std::sin(2.0 * kPi * h.freq * t + h.phase);
        double env = 1.0;
        if (i < edge) env = 0.5 - 0.5 * std::cos(kPi * i / edge);
        if (n - 1 - i < edge) env = std::min(env, 0.5 - 0.5 * std::cos(kPi * (n - 1 - i) / edge));
        out[start + static_cast<size_t>(i)] = static_cast<float>(gain * env * s);
      }
    }
    for (int i = 0; i < n; ++i)
      out[start + static_cast<size_t>(i)] += static_cast<float>(cfg.noise_level * rng.normal());
  }
  return out;
}

features::FeatureMatrix real_features(const std::string& text, const ToyLanguage& lang,
                                      int speaker_id, const RealVoiceConfig& cfg, Rng& rng,
                                      std::vector<float>* audio_out) {
  losses::LabelSeq phonemes = pseudotts::g2p(text, lang.lexicon);
  for (int& ph : phonemes.ids)
    if (ph == lang.lexicon.boundary_id) ph = 0;
  std::vector<float> audio = render_real_audio(phonemes, speaker_id, cfg, rng);
  features::LogMelConfig mel;
  mel.sample_rate = cfg.sample_rate;
  mel.n_mels = cfg.n_mels;
  features::FeatureMatrix f = features::logmel(audio, mel);
  f.source = features::FeatureSource::kReal;
  if (audio_out != nullptr) *audio_out = std::move(audio);
  return f;
}

void write_pcm16(const std::vector<float>& samples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pcm16: cannot open " + path);
  for (float s : samples) {
    const double clamped = std::max(-1.0, std::min(1.0, static_cast<double>(s)));
    const int16_t q = static_cast<int16_t>(std::lround(clamped * 32767.0));
    const unsigned char bytes[2] = {static_cast<unsigned char>(q & 0xff),
                                    static_cast<unsigned char>((q >> 8) & 0xff)};
    out.write(reinterpret_cast<const char*>(bytes), 2);
  }
  if (!out) throw std::runtime_error("write_pcm16: write failed for " + path);
}

std::vector<float> read_pcm16(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pcm16: cannot open " + path);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() % 2 != 0) throw std::runtime_error("read_pcm16: odd byte count in " + path);
  std::vector<float> out(raw.size() / 2);
  for (size_t i = 0; i < out.size(); ++i) {
    const int16_t q = static_cast<int16_t>(static_cast<unsigned char>(raw[2 * i]) |
                                           (static_cast<unsigned char>(raw[2 * i + 1]) << 8));
    out[i] = static_cast<float>(q) / 32767.0f;
  }
  return out;
}

void CorpusConfig::validate() const {
  language.validate();
  voice.validate();
  prior.validate();
  if (n_pretrain < 0 || n_finetune < 0 || n_test < 0 || n_text < 0)
    throw std::invalid_argument("corpus: split sizes must be >= 0");
  if (min_words < 1 || max_words < min_words)
    throw std::invalid_argument("corpus: need 1 <= min_words <= max_words");
  if (n_train_speakers < 1 || n_test_speakers < 1)
    throw std::invalid_argument("corpus: speaker counts must be >= 1");
}

CorpusLayout CorpusLayout::at(const std::string& out_dir) {
  const std::string base = out_dir + "/";
  CorpusLayout l;
  l.meta = base + "corpus_meta.json";
  l.inventory = base + "inventory.txt";
  l.lexicon = base + "lexicon.txt";
  l.pretrain = base + "pretrain.jsonl";
  l.finetune = base + "finetune.jsonl";
  l.test = base + "test.jsonl";
  l.text_pool = base + "text_pool.jsonl";
  return l;
}

namespace {

struct SplitPlan {
  std::string tag;
  int count = 0;
  int speaker_base = 0;
  int n_speakers = 0;
  bool labeled = false;
  uint64_t stream_key = 0;
};

std::string utt_id(const std::string& tag, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%06d", tag.c_str(), index);
  return buf;
}

}  // namespace

CorpusLayout build_corpus(const CorpusConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "features", ec);
  if (ec) throw std::runtime_error("build_corpus: cannot create " + out_dir + ": " + ec.message());
  if (cfg.write_audio) {
    fs::create_directories(fs::path(out_dir) / "audio", ec);
    if (ec) throw std::runtime_error("build_corpus: cannot create audio dir: " + ec.message());
  }

  const ToyLanguage lang = make_language(cfg.language, cfg.seed);
  const CorpusLayout layout = CorpusLayout::at(out_dir);
  pseudotts::save_phoneme_inventory(lang.lexicon.inventory, layout.inventory);
  pseudotts::save_lexicon(lang.lexicon, layout.lexicon);

  const SplitPlan plans[3] = {
      {"pt", cfg.n_pretrain, kTrainSpeakerBase, cfg.n_train_speakers, false, 1},
      {"ft", cfg.n_finetune, kTrainSpeakerBase, cfg.n_train_speakers, true, 2},
      {"te", cfg.n_test, kTestSpeakerBase, cfg.n_test_speakers, true, 3},
  };
  const std::string manifest_paths[3] = {layout.pretrain, layout.finetune, layout.test};

  for (int p = 0; p < 3; ++p) {
    const SplitPlan& plan = plans[p];
    Rng stream = Rng::from_keys(cfg.seed, 0x7370656563687570ULL, plan.stream_key);
    std::vector<pipeline::ManifestEntry> entries;
    entries.reserve(static_cast<size_t>(plan.count));
    for (int i = 0; i < plan.count; ++i) {
      const std::string id = utt_id(plan.tag, i);
      const std::string text = sample_sentence(lang, cfg.min_words, cfg.max_words, stream);
      const int speaker = plan.speaker_base + stream.uniform_int(plan.n_speakers);
      Rng item = stream.split(static_cast<uint64_t>(i));
      std::vector<float> audio;
      features::FeatureMatrix f =
          real_features(text, lang, speaker, cfg.voice, item, cfg.write_audio ? &audio : nullptr);
      pipeline::ManifestEntry entry;
      entry.id = id;
      entry.features = "features/" + id + ".mel";
      features::write_features(f, out_dir + "/" + *entry.features);
      if (cfg.write_audio) {
        entry.audio = "audio/" + id + ".pcm";
        write_pcm16(audio, out_dir + "/" + *entry.audio);
      }
      if (plan.labeled) entry.text = text;
      entries.push_back(std::move(entry));
    }
    pipeline::write_manifest(entries, manifest_paths[p]);
  }

  {
    Rng stream = Rng::from_keys(cfg.seed, 0x74657874706f6f6cULL);
    std::vector<pipeline::ManifestEntry> entries;
    entries.reserve(static_cast<size_t>(cfg.n_text));
    for (int i = 0; i < cfg.n_text; ++i) {
      pipeline::ManifestEntry entry;
      entry.id = utt_id("tx", i);
      entry.text = sample_sentence(lang, cfg.min_words, cfg.max_words, stream);
      entries.push_back(std::move(entry));
    }
    pipeline::write_manifest(entries, layout.text_pool);
  }

  nlohmann::json meta;
  meta["version"] = 1;
  meta["seed"] = cfg.seed;
  meta["vocab_size"] = static_cast<int>(lang.words.size());
  meta["words"] = lang.words;
  meta["counts"] = {{"pretrain", cfg.n_pretrain},
                    {"finetune", cfg.n_finetune},
                    {"test", cfg.n_test},
                    {"text_pool", cfg.n_text}};
  meta["speakers"] = {
      {"pseudo_tts", {{"base", 0}, {"count", cfg.prior.n_speakers}}},
      {"train", {{"base", kTrainSpeakerBase}, {"count", cfg.n_train_speakers}}},
      {"test", {{"base", kTestSpeakerBase}, {"count", cfg.n_test_speakers}}},
  };
  meta["audio"] = {{"sample_rate", cfg.voice.sample_rate},
                   {"n_mels", cfg.voice.n_mels},
                   {"frame_rate_hz", 100.0}};
  meta["sentence_words"] = {{"min", cfg.min_words}, {"max", cfg.max_words}};
  std::ofstream metaf(layout.meta);
  if (!metaf) throw std::runtime_error("build_corpus: cannot open " + layout.meta);
  metaf << meta.dump(2) << "\n";
  if (!metaf) throw std::runtime_error("build_corpus: write failed for " + layout.meta);
  return layout;
}

}  // namespace tts4p::toycorpus
