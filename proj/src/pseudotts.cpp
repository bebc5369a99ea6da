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

#include "tts4p/pseudotts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace tts4p::pseudotts {

namespace {

constexpr uint64_t kTemplateKey = 0x7e3a91c2d4f5b607ULL;
constexpr uint64_t kTiltKey = 0x51c3a2e49b8d0f16ULL;
constexpr uint64_t kJitterKey = 0x6a5e00d59c21b3e8ULL;

double jitter_fraction(const SynthesisLatent& z, int position, double scale) {
  Rng r(kJitterKey + static_cast<uint64_t>(position));
  double dot = 0.0, norm = 0.0;
  for (float g : z.global_latent) {
    double w = r.normal();
    dot += w * g;
    norm += w * w;
  }
  if (norm <= 0.0) return 0.0;
  return scale * std::tanh(dot / std::sqrt(norm));
}

// Mean of the leading local-latent component over the chunks whose two-second
// window covers the frame; frames past the last window use the last chunk.
double energy_shift(const SynthesisLatent& z, double t_seconds, double scale) {
  const int n = static_cast<int>(z.local_latents.size());
  if (n == 0) return 0.0;
  double sum = 0.0;
  int hits = 0;
  for (int k : {static_cast<int>(std::floor(t_seconds)) - 1, static_cast<int>(std::floor(t_seconds))}) {
    if (k < 0 || k >= n) continue;
    if (t_seconds >= k && t_seconds < k + 2.0) {
      sum += z.local_latents[static_cast<size_t>(k)][0];
      ++hits;
    }
  }
  if (hits == 0) {
    sum = z.local_latents[static_cast<size_t>(n - 1)][0];
    hits = 1;
  }
  return scale * sum / hits;
}

}  // namespace

int PhonemeInventory::id_of(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i) + 1;
  throw std::out_of_range("phoneme inventory: unknown phoneme " + name);
}

const std::string& PhonemeInventory::name_of(int id) const {
  if (id < 1 || id > size()) throw std::out_of_range("phoneme inventory: id out of range");
  return names[static_cast<size_t>(id - 1)];
}

PhonemeInventory load_phoneme_inventory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open phoneme inventory " + path);
  PhonemeInventory inv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw std::runtime_error("phoneme inventory: empty line in " + path);
    inv.names.push_back(line);
  }
  if (inv.names.empty()) throw std::runtime_error("phoneme inventory: no phonemes in " + path);
  return inv;
}

void save_phoneme_inventory(const PhonemeInventory& inv, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write phoneme inventory " + path);
  for (const auto& n : inv.names) out << n << "\n";
  if (!out) throw std::runtime_error("failed writing phoneme inventory " + path);
}

void Lexicon::validate() const {
  if (inventory.size() < 1) throw std::invalid_argument("lexicon: empty phoneme inventory");
  if (boundary_id < 1 || boundary_id > inventory.size())
    throw std::invalid_argument("lexicon: boundary phoneme id out of range");
  for (const auto& [word, ids] : entries) {
    if (word.empty()) throw std::invalid_argument("lexicon: empty word");
    if (ids.empty()) throw std::invalid_argument("lexicon: word \"" + word + "\" has no phonemes");
    for (int id : ids)
      if (id < 1 || id > inventory.size())
        throw std::invalid_argument("lexicon: phoneme id out of range for \"" + word + "\"");
  }
}

Lexicon load_lexicon(const std::string& lexicon_path, const std::string& inventory_path) {
  Lexicon lex;
  lex.inventory = load_phoneme_inventory(inventory_path);
  lex.boundary_id = lex.inventory.id_of("|");
  std::ifstream in(lexicon_path);
  if (!in) throw std::runtime_error("cannot open lexicon " + lexicon_path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("lexicon: missing tab on line " + std::to_string(lineno));
    std::string word = line.substr(0, tab);
    std::istringstream rest(line.substr(tab + 1));
    std::vector<int> ids;
    std::string ph;
    while (rest >> ph) ids.push_back(lex.inventory.id_of(ph));
    if (ids.empty())
      throw std::runtime_error("lexicon: no phonemes on line " + std::to_string(lineno));
    lex.entries[word] = std::move(ids);
  }
  lex.validate();
  return lex;
}

void save_lexicon(const Lexicon& lex, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write lexicon " + path);
  for (const auto& [word, ids] : lex.entries) {
    out << word << '\t';
    for (size_t i = 0; i < ids.size(); ++i) {
      if (i) out << ' ';
      out << lex.inventory.name_of(ids[i]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing lexicon " + path);
}

std::string normalize_text(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool in_space = true;
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
      in_space = false;
    } else if (std::isspace(c) || std::ispunct(c)) {
      if (!in_space && std::isspace(c)) {
        out.push_back(' ');
        in_space = true;
      }
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

losses::LabelSeq g2p(const std::string& text, const Lexicon& lex) {
  lex.validate();
  const std::string norm = normalize_text(text);
  if (norm.empty()) throw std::invalid_argument("g2p: text empty after normalization");
  losses::LabelSeq seq;
  seq.vocab = kPhonemeVocabName;
  std::istringstream words(norm);
  std::string word;
  bool first = true;
  while (words >> word) {
    if (!first) seq.ids.push_back(lex.boundary_id);
    first = false;
    auto it = lex.entries.find(word);
    if (it != lex.entries.end()) {
      seq.ids.insert(seq.ids.end(), it->second.begin(), it->second.end());
      continue;
    }
    for (char c : word) {
      auto letter = lex.entries.find(std::string(1, c));
      if (letter == lex.entries.end()) throw G2PError(std::string(1, c));
      seq.ids.insert(seq.ids.end(), letter->second.begin(), letter->second.end());
    }
  }
  return seq;
}

losses::LabelSeq text_to_wordpieces(const std::string& text) {
  const std::string norm = normalize_text(text);
  if (norm.empty()) throw std::invalid_argument("wordpieces: text empty after normalization");
  losses::LabelSeq seq;
  seq.vocab = kWordpieceVocabName;
  for (char c : norm) {
    if (c >= 'a' && c <= 'z')
      seq.ids.push_back(c - 'a' + 1);
    else if (c == ' ')
      seq.ids.push_back(27);
    else
      throw G2PError(std::string(1, c));
  }
  return seq;
}

std::string wordpieces_to_text(const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (id >= 1 && id <= 26)
      out.push_back(static_cast<char>('a' + id - 1));
    else if (id == 27)
      out.push_back(' ');
    else
      throw std::invalid_argument("wordpieces: id " + std::to_string(id) + " out of range");
  }
  return out;
}

void LatentPrior::validate() const {
  if (n_speakers < 1) throw std::invalid_argument("latent prior: n_speakers must be positive");
  if (global_dim < 1 || local_dim < 1)
    throw std::invalid_argument("latent prior: latent dims must be positive");
  if (!(duration_scale > 0.0) || !(energy_scale > 0.0))
    throw std::invalid_argument("latent prior: modulation scales must be positive");
}

int local_chunk_count(double duration_s) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("local_chunk_count: duration must be positive");
  int by_formula = static_cast<int>(std::floor((duration_s - 2.0) / 1.0)) + 1;
  return std::max(1, by_formula);
}

SynthesisLatent sample_latent(const LatentPrior& prior, double duration_s, Rng& rng) {
  prior.validate();
  SynthesisLatent z;
  z.speaker_id = rng.uniform_int(prior.n_speakers);
  z.global_latent.resize(static_cast<size_t>(prior.global_dim));
  for (auto& g : z.global_latent) g = static_cast<float>(rng.normal());
  const int chunks = local_chunk_count(duration_s);
  z.local_latents.assign(static_cast<size_t>(chunks),
                         std::vector<float>(static_cast<size_t>(prior.local_dim)));
  for (auto& chunk : z.local_latents)
    for (auto& v : chunk) v = static_cast<float>(rng.normal());
  z.noise_seed = rng.next_u64();
  return z;
}

void SynthConfig::validate() const {
  prior.validate();
  if (n_mels < 8) throw std::invalid_argument("synth config: n_mels too small");
  if (base_duration_frames < 1)
    throw std::invalid_argument("synth config: base_duration_frames must be positive");
  if (!(frame_rate_hz > 0.0)) throw std::invalid_argument("synth config: frame rate must be positive");
  if (crossfade_frames < 0) throw std::invalid_argument("synth config: crossfade must be nonnegative");
  if (!(template_peak > template_floor))
    throw std::invalid_argument("synth config: template peak must exceed the floor");
}

namespace {

struct TemplateParams {
  double c1, c2, s1, s2, amp;
};

TemplateParams draw_template_params(int phoneme_id, const SynthConfig& cfg) {
  if (phoneme_id < 1) throw std::invalid_argument("phoneme_template: id must be positive");
  const int d = cfg.n_mels;
  Rng r(kTemplateKey + static_cast<uint64_t>(phoneme_id));
  TemplateParams p;
  p.c1 = r.uniform(2.0, 0.45 * d);
  p.c2 = r.uniform(0.5 * d, d - 3.0);
  p.s1 = r.uniform(2.0, 5.0);
  p.s2 = r.uniform(2.0, 5.0);
  p.amp = r.uniform(0.75, 1.0) * (cfg.template_peak - cfg.template_floor);
  return p;
}

}  // namespace

std::pair<double, double> template_centers(int phoneme_id, const SynthConfig& cfg) {
  const TemplateParams p = draw_template_params(phoneme_id, cfg);
  return {p.c1, p.c2};
}

std::vector<float> phoneme_template(int phoneme_id, const SynthConfig& cfg) {
  const int d = cfg.n_mels;
  const TemplateParams p = draw_template_params(phoneme_id, cfg);
  std::vector<float> tpl(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i) {
    const double b1 = std::exp(-0.5 * (i - p.c1) * (i - p.c1) / (p.s1 * p.s1));
    const double b2 = 0.8 * std::exp(-0.5 * (i - p.c2) * (i - p.c2) / (p.s2 * p.s2));
    tpl[static_cast<size_t>(i)] =
        static_cast<float>(cfg.template_floor + p.amp * std::max(b1, b2));
  }
  return tpl;
}

std::vector<float> speaker_tilt(int speaker_id, const SynthConfig& cfg) {
  if (speaker_id < 0) throw std::invalid_argument("speaker_tilt: id must be nonnegative");
  const int d = cfg.n_mels;
  Rng r(kTiltKey + static_cast<uint64_t>(speaker_id));
  const double slope = r.uniform(-0.5, 0.5);
  std::vector<float> tilt(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i)
    tilt[static_cast<size_t>(i)] =
        static_cast<float>(slope * (static_cast<double>(i) / (d - 1) - 0.5));
  return tilt;
}

std::vector<int> segment_durations(const losses::LabelSeq& phonemes, const SynthesisLatent& z,
                                   const SynthConfig& cfg) {
  cfg.validate();
  if (phonemes.ids.empty()) throw std::invalid_argument("segment_durations: no phonemes");
  std::vector<int> out(phonemes.ids.size());
  for (size_t i = 0; i < phonemes.ids.size(); ++i) {
    const double j = jitter_fraction(z, static_cast<int>(i), cfg.prior.duration_scale);
    out[i] = std::max(1, static_cast<int>(std::lround(cfg.base_duration_frames * (1.0 + j))));
  }
  return out;
}

features::FeatureMatrix synthesize(const losses::LabelSeq& phonemes, const SynthesisLatent& z,
                                   const SynthConfig& cfg) {
  cfg.validate();
  if (phonemes.ids.empty()) throw std::invalid_argument("synthesize: no phonemes");
  for (int id : phonemes.ids)
    if (id < 1) throw std::invalid_argument("synthesize: phoneme ids must be positive");
  if (z.speaker_id < 0 || z.speaker_id >= cfg.prior.n_speakers)
    throw std::invalid_argument("synthesize: speaker id outside the prior");
  if (z.global_latent.size() != static_cast<size_t>(cfg.prior.global_dim))
    throw std::invalid_argument("synthesize: global latent dimension mismatch");
  for (const auto& chunk : z.local_latents)
    if (chunk.size() != static_cast<size_t>(cfg.prior.local_dim))
      throw std::invalid_argument("synthesize: local latent dimension mismatch");

  const int d = cfg.n_mels;
  const std::vector<int> frames_per = segment_durations(phonemes, z, cfg);
  int total = 0;
  for (int f : frames_per) total += f;

  std::vector<std::vector<float>> templates(phonemes.ids.size());
  for (size_t i = 0; i < phonemes.ids.size(); ++i)
    templates[i] = phoneme_template(phonemes.ids[i], cfg);
  const std::vector<float> tilt = speaker_tilt(z.speaker_id, cfg);

  features::FeatureMatrix out;
  out.source = features::FeatureSource::kSynthesized;
  out.values = numerics::Tensor<float>({total, d});

  int t = 0;
  for (size_t seg = 0; seg < phonemes.ids.size(); ++seg) {
    const int n = frames_per[seg];
    const int fade = seg == 0 ? 0 : std::min(cfg.crossfade_frames, n);
    for (int j = 0; j < n; ++j, ++t) {
      const double lambda = j < fade ? (j + 1.0) / (fade + 1.0) : 1.0;
      const double shift =
          energy_shift(z, t / cfg.frame_rate_hz, cfg.prior.energy_scale);
      for (int b = 0; b < d; ++b) {
        double v = templates[seg][static_cast<size_t>(b)];
        if (lambda < 1.0)
          v = lambda * v + (1.0 - lambda) * templates[seg - 1][static_cast<size_t>(b)];
        out.values.at(t, b) = static_cast<float>(v + tilt[static_cast<size_t>(b)] + shift);
      }
    }
  }

  if (std::isfinite(cfg.noise_floor_db)) {
    Rng noise(z.noise_seed);
    const double rel = std::pow(10.0, cfg.noise_floor_db / 10.0);
    for (int i = 0; i < total; ++i) {
      double peak = -std::numeric_limits<double>::infinity();
      for (int b = 0; b < d; ++b) peak = std::max(peak, static_cast<double>(out.values.at(i, b)));
      const double amp = rel * std::exp(peak);
      for (int b = 0; b < d; ++b) {
        const double u = noise.uniform();
        const double lin = std::exp(static_cast<double>(out.values.at(i, b))) + amp * u;
        out.values.at(i, b) = static_cast<float>(std::log(lin));
      }
    }
  }
  return out;
}

SynthResult synth_on_the_fly(const std::string& text, const Lexicon& lex, const SynthConfig& cfg,
                             Rng& rng) {
  cfg.validate();
  SynthResult r;
  r.phonemes = g2p(text, lex);
  r.wordpieces = text_to_wordpieces(text);
  const double duration_s =
      static_cast<double>(r.phonemes.ids.size()) * cfg.base_duration_frames / cfg.frame_rate_hz;
  r.latent = sample_latent(cfg.prior, duration_s, rng);
  r.features = synthesize(r.phonemes, r.latent, cfg);
  return r;
}

}  // namespace tts4p::pseudotts
