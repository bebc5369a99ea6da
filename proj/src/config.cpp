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

#include "tts4p/config.hpp"

#include <fstream>
#include <sstream>

namespace tts4p::config {

using nlohmann::json;

namespace {

std::string joined(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

json head_skeleton() {
  return json{{"name", ""}, {"objective", "ctc"}, {"vocab_size", 0}, {"hidden", 16}};
}

// Writes patch values over base, requiring every patched key to exist in the
// skeleton. Arrays are replaced wholesale; aux head elements are normalized
// against the head skeleton afterwards.
void merge_checked(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object())
    throw ConfigError("config: expected an object at " + (path.empty() ? "top level" : path));
  for (const auto& [key, value] : patch.items()) {
    if (!base.contains(key)) throw ConfigError("config: unknown key " + joined(path, key));
    json& slot = base[key];
    if (slot.is_object() && value.is_object())
      merge_checked(slot, value, joined(path, key));
    else if (slot.is_object() && !value.is_object())
      throw ConfigError("config: " + joined(path, key) + " must be an object");
    else
      slot = value;
  }
}

json parse_override_value(const std::string& text) {
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded()) return json(text);
  return v;
}

void apply_override(json& root, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("config: override must look like key.path=value, got \"" + assignment +
                      "\"");
  const std::string dotted = assignment.substr(0, eq);
  const json value = parse_override_value(assignment.substr(eq + 1));

  std::vector<std::string> parts;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty() || dotted.back() == '.')
    throw ConfigError("config: bad override path \"" + dotted + "\"");

  json* node = &root;
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    const std::string& p = parts[i];
    if (node->is_array()) {
      size_t idx = 0;
      try {
        idx = std::stoul(p);
      } catch (const std::exception&) {
        throw ConfigError("config: expected array index at \"" + p + "\" in " + dotted);
      }
      if (idx >= node->size())
        throw ConfigError("config: index " + p + " out of range in " + dotted);
      node = &(*node)[idx];
    } else if (node->is_object() && node->contains(p)) {
      node = &(*node)[p];
    } else {
      throw ConfigError("config: unknown key " + p + " in override " + dotted);
    }
  }
  const std::string& last = parts.back();
  if (node->is_array()) {
    size_t idx = 0;
    try {
      idx = std::stoul(last);
    } catch (const std::exception&) {
      throw ConfigError("config: expected array index at \"" + last + "\" in " + dotted);
    }
    if (idx >= node->size())
      throw ConfigError("config: index " + last + " out of range in " + dotted);
    (*node)[idx] = value;
  } else if (node->is_object() && node->contains(last)) {
    if ((*node)[last].is_object() && !value.is_object())
      throw ConfigError("config: " + dotted + " must be an object");
    (*node)[last] = value;
  } else {
    throw ConfigError("config: unknown key " + last + " in override " + dotted);
  }
}

void normalize_aux_heads(json& root) {
  json& heads = root["aux_heads"];
  if (!heads.is_array()) throw ConfigError("config: aux_heads must be an array");
  for (size_t i = 0; i < heads.size(); ++i) {
    json norm = head_skeleton();
    merge_checked(norm, heads[i], "aux_heads." + std::to_string(i));
    heads[i] = norm;
  }
}

void normalize_decoder_head(json& root) {
  json& dec = root["finetune"]["decoder"];
  json norm = head_skeleton();
  norm["name"] = "wordpiece";
  norm["vocab_size"] = pseudotts::kWordpieceVocabSize;
  merge_checked(norm, dec, "finetune.decoder");
  dec = norm;
}

const json& at_path(const json& root, const std::string& dotted) {
  const json* node = &root;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) node = &node->at(part);
  return *node;
}

double get_double(const json& root, const std::string& dotted) {
  const json& v = at_path(root, dotted);
  if (!v.is_number()) throw ConfigError("config: " + dotted + " must be a number");
  return v.get<double>();
}

int get_int(const json& root, const std::string& dotted) {
  const json& v = at_path(root, dotted);
  if (!v.is_number_integer()) throw ConfigError("config: " + dotted + " must be an integer");
  return v.get<int>();
}

uint64_t get_u64(const json& root, const std::string& dotted) {
  const json& v = at_path(root, dotted);
  if (!v.is_number_integer())
    throw ConfigError("config: " + dotted + " must be a non-negative integer");
  if (!v.is_number_unsigned() && v.get<int64_t>() < 0)
    throw ConfigError("config: " + dotted + " must be a non-negative integer");
  return v.get<uint64_t>();
}

bool get_bool(const json& root, const std::string& dotted) {
  const json& v = at_path(root, dotted);
  if (!v.is_boolean()) throw ConfigError("config: " + dotted + " must be a boolean");
  return v.get<bool>();
}

std::string get_string(const json& root, const std::string& dotted) {
  const json& v = at_path(root, dotted);
  if (!v.is_string()) throw ConfigError("config: " + dotted + " must be a string");
  return v.get<std::string>();
}

features::MaskFill mask_fill_from(const std::string& s, const std::string& where) {
  if (s == "zero") return features::MaskFill::kZero;
  if (s == "mean") return features::MaskFill::kMean;
  throw ConfigError("config: " + where + " must be \"zero\" or \"mean\"");
}

losses::AuxObjective objective_from(const std::string& s, const std::string& where) {
  if (s == "ctc") return losses::AuxObjective::kCtc;
  if (s == "rnnt") return losses::AuxObjective::kRnnt;
  throw ConfigError("config: " + where + " must be \"ctc\" or \"rnnt\"");
}

pipeline::DecodeConfig::Mode mode_from(const std::string& s, const std::string& where) {
  if (s == "greedy") return pipeline::DecodeConfig::Mode::kGreedy;
  if (s == "beam") return pipeline::DecodeConfig::Mode::kBeam;
  throw ConfigError("config: " + where + " must be \"greedy\" or \"beam\"");
}

pipeline::TrainConfig train_from(const json& root, const std::string& block, uint64_t seed,
                                 pipeline::Phase phase) {
  pipeline::TrainConfig t;
  t.batch_size = get_int(root, block + ".batch_size");
  t.synth_ratio = get_double(root, block + ".synth_ratio");
  t.peak_lr = get_double(root, block + ".peak_lr");
  t.warmup_steps = get_int(root, block + ".warmup_steps");
  t.clip_norm = get_double(root, block + ".clip_norm");
  t.ema_decay = get_double(root, block + ".ema_decay");
  t.lambda_aux = get_double(root, block + ".lambda_aux");
  t.distractors = get_int(root, block + ".distractors");
  t.kappa = get_double(root, block + ".kappa");
  t.mask_fraction = get_double(root, block + ".mask_fraction");
  t.mask_span = get_int(root, block + ".mask_span");
  t.seed = seed;
  t.phase = phase;
  t.validate();
  return t;
}

pipeline::HeadSpec head_from(const json& h, const std::string& where,
                             const std::string& default_name) {
  pipeline::HeadSpec spec;
  if (!h.at("name").is_string())
    throw ConfigError("config: " + where + ".name must be a string");
  spec.name = h.at("name").get<std::string>();
  if (spec.name.empty()) spec.name = default_name;
  if (spec.name.empty()) throw ConfigError("config: " + where + ".name must be non-empty");
  if (!h.at("vocab_size").is_number_integer())
    throw ConfigError("config: " + where + ".vocab_size must be an integer");
  spec.vocab_size = h.at("vocab_size").get<int>();
  if (spec.vocab_size < 0) throw ConfigError("config: " + where + ".vocab_size must be >= 0");
  if (!h.at("objective").is_string())
    throw ConfigError("config: " + where + ".objective must be a string");
  spec.objective = objective_from(h.at("objective").get<std::string>(), where + ".objective");
  if (!h.at("hidden").is_number_integer() || h.at("hidden").get<int>() < 1)
    throw ConfigError("config: " + where + ".hidden must be a positive integer");
  spec.hidden = h.at("hidden").get<int>();
  return spec;
}

}  // namespace

json default_config_json() {
  json j;
  j["seed"] = 0;
  j["corpus"] = {{"dir", "."},
                 {"pretrain", "pretrain.jsonl"},
                 {"finetune", "finetune.jsonl"},
                 {"test", "test.jsonl"},
                 {"text_pool", "text_pool.jsonl"},
                 {"lexicon", "lexicon.txt"},
                 {"inventory", "inventory.txt"},
                 {"normalize", false}};
  {
    encoder::EncoderConfig e;
    j["encoder"] = {{"d_model", e.d_model},
                    {"n_layers", e.n_layers},
                    {"n_heads", e.n_heads},
                    {"conv_kernel", e.conv_kernel},
                    {"ffn_expansion", e.ffn_expansion},
                    {"dropout", e.dropout},
                    {"subsample_channels", e.subsample_channels},
                    {"feature_dims", e.feature_dims},
                    {"target_stop_gradient", e.target_stop_gradient},
                    {"separate_target_projection", e.separate_target_projection}};
  }
  {
    pseudotts::SynthConfig s;
    j["synth"] = {{"n_mels", s.n_mels},
                  {"base_duration_frames", s.base_duration_frames},
                  {"frame_rate_hz", s.frame_rate_hz},
                  {"noise_floor_db", s.noise_floor_db},
                  {"crossfade_frames", s.crossfade_frames},
                  {"template_floor", s.template_floor},
                  {"template_peak", s.template_peak},
                  {"prior",
                   {{"n_speakers", s.prior.n_speakers},
                    {"global_dim", s.prior.global_dim},
                    {"local_dim", s.prior.local_dim},
                    {"duration_scale", s.prior.duration_scale},
                    {"energy_scale", s.prior.energy_scale}}}};
  }
  {
    features::AugmentPolicy a;
    j["augment"] = {{"time_mask_fraction", a.time_mask_fraction},
                    {"n_time_masks", a.n_time_masks},
                    {"freq_mask_fraction", a.freq_mask_fraction},
                    {"n_freq_masks", a.n_freq_masks},
                    {"use_freq_warp", a.use_freq_warp},
                    {"warp_max_shift", a.warp_max_shift},
                    {"warp_before_mask", a.warp_before_mask},
                    {"mask_fill", "zero"}};
  }
  {
    json phoneme = head_skeleton();
    phoneme["name"] = "phoneme";
    json wordpiece = head_skeleton();
    wordpiece["name"] = "wordpiece";
    j["aux_heads"] = json::array({phoneme, wordpiece});
  }
  {
    pipeline::TrainConfig t;
    json block = {{"steps", 1000},          {"batch_size", t.batch_size},
                  {"synth_ratio", 0.0},     {"peak_lr", t.peak_lr},
                  {"warmup_steps", t.warmup_steps}, {"clip_norm", t.clip_norm},
                  {"ema_decay", t.ema_decay},       {"lambda_aux", t.lambda_aux},
                  {"distractors", t.distractors},   {"kappa", t.kappa},
                  {"mask_fraction", t.mask_fraction}, {"mask_span", t.mask_span}};
    j["pretrain"] = block;
    block["synth_ratio"] = 0.5;
    block["peak_lr"] = nullptr;
    j["joint"] = block;
  }
  {
    pipeline::FinetuneConfig f;
    json dec = head_skeleton();
    dec["name"] = f.decoder.name;
    dec["vocab_size"] = f.decoder.vocab_size;
    j["finetune"] = {{"steps", 500},
                     {"batch_size", 8},
                     {"encoder_peak_lr", f.encoder_peak_lr},
                     {"encoder_warmup", f.encoder_warmup},
                     {"decoder_peak_lr", f.decoder_peak_lr},
                     {"decoder_warmup", f.decoder_warmup},
                     {"clip_norm", f.clip_norm},
                     {"ema_decay", f.ema_decay},
                     {"freeze_encoder", f.freeze_encoder},
                     {"augment", f.augment},
                     {"decoder", dec}};
  }
  j["decode"] = {{"mode", "greedy"}, {"beam_width", 4}, {"fusion_beta", 0.0}, {"lm", nullptr}};
  j["lm"] = {{"order", 3}, {"min_count", 1}};
  return j;
}

json resolve(const json& file, const std::vector<std::string>& overrides) {
  json out = default_config_json();
  if (!file.is_null()) merge_checked(out, file, "");
  for (const std::string& o : overrides) apply_override(out, o);
  normalize_aux_heads(out);
  normalize_decoder_head(out);
  json& joint_lr = out["joint"]["peak_lr"];
  if (joint_lr.is_null()) {
    if (!out["pretrain"]["peak_lr"].is_number())
      throw ConfigError("config: pretrain.peak_lr must be a number");
    joint_lr = out["pretrain"]["peak_lr"].get<double>() / 5.0;
  }
  return out;
}

json resolve_file(const std::string& path, const std::vector<std::string>& overrides) {
  if (path.empty()) return resolve(json(nullptr), overrides);
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json file = json::parse(in, nullptr, false);
  if (file.is_discarded()) throw ConfigError("config: " + path + " is not valid JSON");
  return resolve(file, overrides);
}

ExperimentConfig from_json(const json& root) {
  ExperimentConfig c;
  c.seed = get_u64(root, "seed");

  c.corpus.dir = get_string(root, "corpus.dir");
  c.corpus.pretrain = get_string(root, "corpus.pretrain");
  c.corpus.finetune = get_string(root, "corpus.finetune");
  c.corpus.test = get_string(root, "corpus.test");
  c.corpus.text_pool = get_string(root, "corpus.text_pool");
  c.corpus.lexicon = get_string(root, "corpus.lexicon");
  c.corpus.inventory = get_string(root, "corpus.inventory");
  c.corpus.normalize = get_bool(root, "corpus.normalize");

  c.encoder.d_model = get_int(root, "encoder.d_model");
  c.encoder.n_layers = get_int(root, "encoder.n_layers");
  c.encoder.n_heads = get_int(root, "encoder.n_heads");
  c.encoder.conv_kernel = get_int(root, "encoder.conv_kernel");
  c.encoder.ffn_expansion = get_int(root, "encoder.ffn_expansion");
  c.encoder.dropout = get_double(root, "encoder.dropout");
  c.encoder.subsample_channels = get_int(root, "encoder.subsample_channels");
  c.encoder.feature_dims = get_int(root, "encoder.feature_dims");
  c.encoder.target_stop_gradient = get_bool(root, "encoder.target_stop_gradient");
  c.encoder.separate_target_projection = get_bool(root, "encoder.separate_target_projection");
  c.encoder.validate();

  c.synth.n_mels = get_int(root, "synth.n_mels");
  c.synth.base_duration_frames = get_int(root, "synth.base_duration_frames");
  c.synth.frame_rate_hz = get_double(root, "synth.frame_rate_hz");
  c.synth.noise_floor_db = get_double(root, "synth.noise_floor_db");
  c.synth.crossfade_frames = get_int(root, "synth.crossfade_frames");
  c.synth.template_floor = get_double(root, "synth.template_floor");
  c.synth.template_peak = get_double(root, "synth.template_peak");
  c.synth.prior.n_speakers = get_int(root, "synth.prior.n_speakers");
  c.synth.prior.global_dim = get_int(root, "synth.prior.global_dim");
  c.synth.prior.local_dim = get_int(root, "synth.prior.local_dim");
  c.synth.prior.duration_scale = get_double(root, "synth.prior.duration_scale");
  c.synth.prior.energy_scale = get_double(root, "synth.prior.energy_scale");
  c.synth.validate();

  c.augment.time_mask_fraction = get_double(root, "augment.time_mask_fraction");
  c.augment.n_time_masks = get_int(root, "augment.n_time_masks");
  c.augment.freq_mask_fraction = get_double(root, "augment.freq_mask_fraction");
  c.augment.n_freq_masks = get_int(root, "augment.n_freq_masks");
  c.augment.use_freq_warp = get_bool(root, "augment.use_freq_warp");
  c.augment.warp_max_shift = get_int(root, "augment.warp_max_shift");
  c.augment.warp_before_mask = get_bool(root, "augment.warp_before_mask");
  c.augment.mask_fill = mask_fill_from(get_string(root, "augment.mask_fill"), "augment.mask_fill");
  features::validate_policy(c.augment);

  const json& heads = root.at("aux_heads");
  if (!heads.is_array()) throw ConfigError("config: aux_heads must be an array");
  for (size_t i = 0; i < heads.size(); ++i)
    c.aux_heads.push_back(head_from(heads[i], "aux_heads." + std::to_string(i), ""));

  c.pretrain.train =
      train_from(root, "pretrain", c.seed, pipeline::Phase::kPretrainSpeechOnly);
  c.pretrain.steps = get_int(root, "pretrain.steps");
  if (c.pretrain.steps < 0) throw ConfigError("config: pretrain.steps must be >= 0");
  if (c.pretrain.train.synth_ratio != 0.0)
    throw ConfigError("config: pretrain.synth_ratio must be 0 (speech-only phase)");

  c.joint.train = train_from(root, "joint", c.seed, pipeline::Phase::kPretrainJoint);
  c.joint.steps = get_int(root, "joint.steps");
  if (c.joint.steps < 0) throw ConfigError("config: joint.steps must be >= 0");

  c.finetune.train.encoder_peak_lr = get_double(root, "finetune.encoder_peak_lr");
  c.finetune.train.encoder_warmup = get_int(root, "finetune.encoder_warmup");
  c.finetune.train.decoder_peak_lr = get_double(root, "finetune.decoder_peak_lr");
  c.finetune.train.decoder_warmup = get_int(root, "finetune.decoder_warmup");
  c.finetune.train.clip_norm = get_double(root, "finetune.clip_norm");
  c.finetune.train.ema_decay = get_double(root, "finetune.ema_decay");
  c.finetune.train.freeze_encoder = get_bool(root, "finetune.freeze_encoder");
  c.finetune.train.augment = get_bool(root, "finetune.augment");
  c.finetune.train.decoder = head_from(root.at("finetune").at("decoder"), "finetune.decoder",
                                       pseudotts::kWordpieceVocabName);
  c.finetune.train.validate();
  c.finetune.steps = get_int(root, "finetune.steps");
  c.finetune.batch_size = get_int(root, "finetune.batch_size");
  if (c.finetune.steps < 0) throw ConfigError("config: finetune.steps must be >= 0");
  if (c.finetune.batch_size < 1) throw ConfigError("config: finetune.batch_size must be >= 1");

  c.decode.mode = mode_from(get_string(root, "decode.mode"), "decode.mode");
  c.decode.beam_width = get_int(root, "decode.beam_width");
  if (c.decode.beam_width < 1) throw ConfigError("config: decode.beam_width must be >= 1");
  c.decode.fusion_beta = get_double(root, "decode.fusion_beta");
  if (c.decode.fusion_beta < 0) throw ConfigError("config: decode.fusion_beta must be >= 0");
  const json& lm_path = at_path(root, "decode.lm");
  if (lm_path.is_string())
    c.decode.lm_path = lm_path.get<std::string>();
  else if (!lm_path.is_null())
    throw ConfigError("config: decode.lm must be a path or null");

  c.lm.order = get_int(root, "lm.order");
  c.lm.min_count = get_int(root, "lm.min_count");
  if (c.lm.order < 1) throw ConfigError("config: lm.order must be >= 1");
  if (c.lm.min_count < 1) throw ConfigError("config: lm.min_count must be >= 1");

  if (c.encoder.feature_dims != c.synth.n_mels)
    throw ConfigError("config: encoder.feature_dims must equal synth.n_mels");
  return c;
}

int head_vocab_size(const pipeline::HeadSpec& head, const pseudotts::Lexicon& lex) {
  if (head.vocab_size > 0) return head.vocab_size;
  if (head.name == pseudotts::kPhonemeVocabName) return lex.inventory.size() + 1;
  if (head.name == pseudotts::kWordpieceVocabName) return pseudotts::kWordpieceVocabSize;
  throw ConfigError("config: cannot infer vocab_size for head \"" + head.name + "\"");
}

}  // namespace tts4p::config
