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

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tts4p/config.hpp"
#include "tts4p/gradcheck.hpp"
#include "tts4p/lm.hpp"
#include "tts4p/params.hpp"
#include "tts4p/pipeline.hpp"
#include "tts4p/pseudotts.hpp"
#include "tts4p/runner.hpp"
#include "tts4p/toycorpus.hpp"

namespace {

using namespace tts4p;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CliError {
  int code;
  std::string category;
  std::string message;
};

// TTS4P_SEED wins over both the config file and --set (documented escape
// hatch for CI sweeps).
void apply_seed_env(json& resolved) {
  const char* env = std::getenv("TTS4P_SEED");
  if (env == nullptr || *env == '\0') return;
  try {
    resolved["seed"] = static_cast<uint64_t>(std::stoull(env));
  } catch (const std::exception&) {
    throw config::ConfigError("config: TTS4P_SEED must be a non-negative integer");
  }
}

json resolve_and_echo(const std::string& config_path, const std::vector<std::string>& sets) {
  json resolved = config::resolve_file(config_path, sets);
  apply_seed_env(resolved);
  std::cout << resolved.dump(2) << "\n";
  return resolved;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw runner::DataError("cannot open " + path + " for writing");
  out << body;
  if (!out) throw runner::DataError("write failed for " + path);
}

// One line to stderr: "tts4p: <category>: <message>", deduplicating a
// category tag the message may already carry.
int fail(int code, const std::string& category, std::string message) {
  const std::string tag = category + ": ";
  if (message.rfind(tag, 0) == 0) message = message.substr(tag.size());
  std::cerr << "tts4p: " << category << ": " << message << "\n";
  return code;
}

void make_run_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw runner::DataError("cannot create " + dir + ": " + ec.message());
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw runner::DataError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void save_run(const std::string& out_dir, const json& resolved,
              const runner::TrainOutcome& outcome) {
  make_run_dir(out_dir);
  write_text_file(out_dir + "/config.json", resolved.dump(2) + "\n");
  write_text_file(out_dir + "/metrics.csv", runner::metrics_csv(outcome.records));
  numerics::save_checkpoint(outcome.params, out_dir + "/ckpt-final.ckpt");
  numerics::save_checkpoint(outcome.ema, out_dir + "/ckpt-ema.ckpt");
}

int cmd_make_toy_corpus(const std::string& out_dir, toycorpus::CorpusConfig cfg) {
  const char* env = std::getenv("TTS4P_SEED");
  if (env != nullptr && *env != '\0') cfg.seed = std::stoull(env);
  json echo;
  echo["out_dir"] = out_dir;
  echo["seed"] = cfg.seed;
  echo["vocab_size"] = cfg.language.n_words;
  echo["counts"] = {{"pretrain", cfg.n_pretrain},
                    {"finetune", cfg.n_finetune},
                    {"test", cfg.n_test},
                    {"text_pool", cfg.n_text}};
  echo["n_mels"] = cfg.voice.n_mels;
  echo["speakers"] = {{"train", cfg.n_train_speakers}, {"test", cfg.n_test_speakers}};
  echo["write_audio"] = cfg.write_audio;
  std::cout << echo.dump(2) << "\n";
  toycorpus::build_corpus(cfg, out_dir);
  std::cout << "corpus written to " << out_dir << "\n";
  return kExitOk;
}

int cmd_pretrain(const json& resolved, const std::string& phase_name, const std::string& init,
                 const std::string& out_dir) {
  const config::ExperimentConfig cfg = config::from_json(resolved);
  const pipeline::Phase phase = pipeline::phase_from_name(phase_name);
  if (phase == pipeline::Phase::kFinetune)
    throw config::ConfigError("config: --phase must be a pretraining phase");
  const runner::Corpus corpus = runner::load_corpus(cfg.corpus);
  std::optional<numerics::ModelParams> start;
  if (!init.empty()) {
    try {
      start = numerics::load_checkpoint(init);
    } catch (const std::exception& e) {
      throw runner::DataError(std::string("checkpoint: ") + e.what());
    }
  }
  const runner::TrainOutcome outcome =
      runner::run_pretrain(cfg, corpus, phase, start ? &*start : nullptr);
  save_run(out_dir, resolved, outcome);
  std::cout << "pretrain " << phase_name << " finished after "
            << outcome.records.size() << " steps, final loss "
            << (outcome.records.empty() ? 0.0 : outcome.records.back().total) << "\n";
  return kExitOk;
}

int cmd_finetune(const json& resolved, const std::string& init, const std::string& out_dir) {
  const config::ExperimentConfig cfg = config::from_json(resolved);
  const pseudotts::Lexicon lex = runner::load_lexicon(cfg.corpus);
  const auto labeled = runner::load_labeled_split(cfg.corpus, cfg.corpus.finetune);
  std::optional<numerics::ModelParams> start;
  if (!init.empty()) {
    try {
      start = numerics::load_checkpoint(init);
    } catch (const std::exception& e) {
      throw runner::DataError(std::string("checkpoint: ") + e.what());
    }
  }
  const runner::TrainOutcome outcome =
      runner::run_finetune(cfg, labeled, lex, start ? &*start : nullptr);
  save_run(out_dir, resolved, outcome);
  std::cout << "finetune finished after " << outcome.records.size() << " steps, final loss "
            << (outcome.records.empty() ? 0.0 : outcome.records.back().total) << "\n";
  return kExitOk;
}

int cmd_decode(const json& resolved, const std::string& ckpt, const std::string& split,
               const std::string& out_dir) {
  const config::ExperimentConfig cfg = config::from_json(resolved);
  if (split != "test" && split != "finetune")
    throw config::ConfigError("config: --split must be test or finetune");
  const auto labeled = runner::load_labeled_split(
      cfg.corpus, split == "test" ? cfg.corpus.test : cfg.corpus.finetune);
  numerics::ModelParams params;
  try {
    params = numerics::load_checkpoint(ckpt);
  } catch (const std::exception& e) {
    throw runner::DataError(std::string("checkpoint: ") + e.what());
  }
  lm::NGramLM fusion;
  const lm::NGramLM* fusion_ptr = nullptr;
  if (!cfg.decode.lm_path.empty()) {
    try {
      fusion = lm::load_ngram(cfg.decode.lm_path);
    } catch (const std::exception& e) {
      throw runner::DataError(std::string("lm: ") + e.what());
    }
    fusion_ptr = &fusion;
  }
  const runner::DecodeOutcome outcome = runner::run_decode(cfg, labeled, params, fusion_ptr);

  make_run_dir(out_dir);
  std::string hyps;
  for (const auto& [id, text] : outcome.hypotheses) hyps += id + "\t" + text + "\n";
  write_text_file(out_dir + "/hyp.txt", hyps);
  const std::string ckpt_name = std::filesystem::path(ckpt).stem().string();
  write_text_file(out_dir + "/eval.csv",
                  pipeline::eval_header() + "\n" +
                      pipeline::eval_row(ckpt_name, split, outcome.wer) + "\n");
  char wer_text[32];
  std::snprintf(wer_text, sizeof(wer_text), "%.4f", outcome.wer);
  std::cout << "wer " << wer_text << " over " << outcome.ref_words << " reference words\n";
  return kExitOk;
}

int cmd_score(const std::string& ref_path, const std::string& hyp_path) {
  const std::vector<std::string> ref_lines = read_lines(ref_path);
  const std::vector<std::string> hyp_lines = read_lines(hyp_path);
  if (ref_lines.size() != hyp_lines.size())
    throw runner::DataError("score: line counts differ (" + std::to_string(ref_lines.size()) +
                            " vs " + std::to_string(hyp_lines.size()) + ")");
  int64_t distance = 0;
  int64_t ref_words = 0;
  for (size_t i = 0; i < ref_lines.size(); ++i) {
    const auto ref = runner::split_words(ref_lines[i]);
    const auto hyp = runner::split_words(hyp_lines[i]);
    if (ref.empty()) throw runner::DataError("score: empty reference at line " +
                                             std::to_string(i + 1));
    const double rate = pipeline::wer(ref, hyp);
    distance += std::llround(rate * static_cast<double>(ref.size()));
    ref_words += static_cast<int64_t>(ref.size());
  }
  std::printf("%.4f\n", static_cast<double>(distance) / static_cast<double>(ref_words));
  return kExitOk;
}

int cmd_select_text(const json& resolved, const std::string& in_domain_path,
                    const std::string& background_path, const std::string& pool_path,
                    const std::string& out_path, int top_k) {
  const config::ExperimentConfig cfg = config::from_json(resolved);
  if (top_k < 1) throw config::ConfigError("config: --top must be >= 1");
  const auto in_lines = read_lines(in_domain_path);
  const auto bg_lines = read_lines(background_path);
  const auto pool = read_lines(pool_path);
  lm::NGramLM in_lm, bg_lm;
  try {
    in_lm = lm::train_ngram(in_lines, cfg.lm.order, cfg.lm.min_count);
    bg_lm = lm::train_ngram(bg_lines, cfg.lm.order, cfg.lm.min_count);
  } catch (const std::exception& e) {
    throw runner::DataError(std::string("lm: ") + e.what());
  }
  const auto ranked = lm::select_text(pool, in_lm, bg_lm, static_cast<size_t>(top_k));
  lm::save_selection(ranked, out_path);
  std::cout << "selected " << ranked.size() << " of " << pool.size() << " lines\n";
  return kExitOk;
}

int cmd_train_lm(const json& resolved, const std::string& text_path, const std::string& out_path) {
  const config::ExperimentConfig cfg = config::from_json(resolved);
  std::vector<std::string> lines;
  if (!text_path.empty()) {
    lines = read_lines(text_path);
  } else {
    lines = runner::load_text_split(cfg.corpus, cfg.corpus.text_pool);
  }
  lm::NGramLM model;
  try {
    model = lm::train_ngram(lines, cfg.lm.order, cfg.lm.min_count);
  } catch (const std::exception& e) {
    throw runner::DataError(std::string("lm: ") + e.what());
  }
  lm::save_ngram(model, out_path);
  std::cout << "trained order-" << cfg.lm.order << " model on " << lines.size() << " lines\n";
  return kExitOk;
}

int cmd_synth(const json& resolved, const std::string& text, const std::string& out_path,
              uint64_t draw) {
  const config::ExperimentConfig cfg = config::from_json(resolved);
  const pseudotts::Lexicon lex = runner::load_lexicon(cfg.corpus);
  Rng rng = Rng::from_keys(cfg.seed, 0x73796e7468ULL, draw);
  pseudotts::SynthResult result;
  try {
    result = pseudotts::synth_on_the_fly(text, lex, cfg.synth, rng);
  } catch (const std::exception& e) {
    throw runner::DataError(std::string("synth: ") + e.what());
  }
  features::write_features(result.features, out_path);
  std::cout << "synthesized " << result.features.frames() << " frames, "
            << result.phonemes.ids.size() << " phonemes\n";
  return kExitOk;
}

int cmd_gradcheck(int n_seeds, double tol) {
  auto cases = numerics::standard_gradient_cases();
  const auto reports = numerics::run_gradient_suite(cases, n_seeds, tol);
  bool all_pass = true;
  for (const auto& r : reports) {
    std::printf("%-40s max_rel_err %.3e seeds %d %s\n", r.name.c_str(), r.max_rel_err,
                r.n_seeds, r.pass ? "ok" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) {
    std::cerr << "tts4p: numeric: gradient check failed\n";
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_report(const std::string& run_dir, const std::string& out_path) {
  const std::vector<std::string> lines = read_lines(run_dir + "/metrics.csv");
  if (lines.empty() || lines[0] != pipeline::metrics_header())
    throw runner::DataError("report: " + run_dir + "/metrics.csv has no metrics header");
  std::string body = "# " + pipeline::metrics_header() + "\n# fields are space separated\n";
  for (size_t i = 1; i < lines.size(); ++i) {
    std::string row = lines[i];
    for (char& c : row)
      if (c == ',') c = ' ';
    body += row + "\n";
  }
  write_text_file(out_path, body);
  std::cout << "wrote " << (lines.size() - 1) << " rows to " << out_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint speech and text pretraining on a desk-scale corpus"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  int workers = 1;
  app.add_option("--config", config_path, "Experiment config JSON")->configurable(false);
  app.add_option("--set", sets, "Dotted key=value override, repeatable");
  app.add_option("--workers", workers, "Worker threads for kernel parallelism");

  auto* c_corpus = app.add_subcommand("make-toy-corpus", "Generate the deterministic toy corpus");
  std::string corpus_out;
  toycorpus::CorpusConfig corpus_cfg;
  corpus_cfg.voice.n_mels = 40;
  c_corpus->add_option("--out", corpus_out, "Output directory")->required();
  c_corpus->add_option("--vocab-size", corpus_cfg.language.n_words, "Toy vocabulary size");
  c_corpus->add_option("--n-utts", corpus_cfg.n_pretrain, "Unlabeled pretraining utterances");
  c_corpus->add_option("--n-finetune", corpus_cfg.n_finetune, "Labeled fine-tuning utterances");
  c_corpus->add_option("--n-test", corpus_cfg.n_test, "Labeled test utterances");
  c_corpus->add_option("--n-text", corpus_cfg.n_text, "Unspoken text pool lines");
  c_corpus->add_option("--n-mels", corpus_cfg.voice.n_mels, "Mel bands in features");
  c_corpus->add_option("--train-speakers", corpus_cfg.n_train_speakers, "Recorded train voices");
  c_corpus->add_option("--test-speakers", corpus_cfg.n_test_speakers, "Held-out test voices");
  c_corpus->add_option("--seed", corpus_cfg.seed, "Corpus seed");
  bool no_audio = false;
  c_corpus->add_flag("--no-audio", no_audio, "Skip PCM files, keep features only");

  auto* c_pretrain = app.add_subcommand("pretrain", "Contrastive pretraining phase");
  std::string phase = "pretrain_speech_only";
  std::string init_ckpt;
  std::string out_dir;
  c_pretrain->add_option("--phase", phase, "pretrain_speech_only or pretrain_joint");
  c_pretrain->add_option("--init", init_ckpt, "Starting checkpoint");
  c_pretrain->add_option("--out", out_dir, "Run directory")->required();

  auto* c_finetune = app.add_subcommand("finetune", "Supervised fine-tuning");
  std::string ft_init;
  std::string ft_out;
  c_finetune->add_option("--init", ft_init, "Pretrained checkpoint (omit to train from scratch)");
  c_finetune->add_option("--out", ft_out, "Run directory")->required();

  auto* c_decode = app.add_subcommand("decode", "Decode a labeled split and report word errors");
  std::string dec_ckpt, dec_split = "test", dec_out;
  c_decode->add_option("--ckpt", dec_ckpt, "Checkpoint to decode with")->required();
  c_decode->add_option("--split", dec_split, "test or finetune");
  c_decode->add_option("--out", dec_out, "Run directory")->required();

  auto* c_score = app.add_subcommand("score", "Word error rate between two transcript files");
  std::string ref_path, hyp_path;
  c_score->add_option("--ref", ref_path, "Reference transcripts, one per line")->required();
  c_score->add_option("--hyp", hyp_path, "Hypothesis transcripts, one per line")->required();

  auto* c_select = app.add_subcommand("select-text", "Rank pool lines by domain contrast");
  std::string sel_in, sel_bg, sel_pool, sel_out;
  int sel_top = 100;
  c_select->add_option("--in-domain", sel_in, "In-domain training text")->required();
  c_select->add_option("--background", sel_bg, "Background training text")->required();
  c_select->add_option("--pool", sel_pool, "Candidate pool")->required();
  c_select->add_option("--out", sel_out, "Ranked output file")->required();
  c_select->add_option("--top", sel_top, "Lines to keep");

  auto* c_lm = app.add_subcommand("train-lm", "Train the n-gram model");
  std::string lm_text, lm_out;
  c_lm->add_option("--text", lm_text, "Training text (defaults to the corpus text pool)");
  c_lm->add_option("--out", lm_out, "Model output path")->required();

  auto* c_synth = app.add_subcommand("synth", "Synthesize one sentence to features");
  std::string synth_text, synth_out;
  uint64_t synth_draw = 0;
  c_synth->add_option("--text", synth_text, "Sentence to synthesize")->required();
  c_synth->add_option("--out", synth_out, "Feature file to write")->required();
  c_synth->add_option("--draw", synth_draw, "Realization index");

  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
  int grad_seeds = 20;
  double grad_tol = 1e-4;
  c_grad->add_option("--seeds", grad_seeds, "Seeds per case");
  c_grad->add_option("--tol", grad_tol, "Relative error tolerance");

  auto* c_report = app.add_subcommand("report", "Convert run metrics to a plot data file");
  std::string rep_run, rep_out;
  c_report->add_option("--run", rep_run, "Run directory with metrics.csv")->required();
  c_report->add_option("--out", rep_out, "Data file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (workers < 1) {
    std::cerr << "tts4p: config: --workers must be >= 1\n";
    return kExitConfig;
  }
#ifdef _OPENMP
  omp_set_num_threads(workers);
#endif

  try {
    if (c_corpus->parsed()) {
      corpus_cfg.write_audio = !no_audio;
      return cmd_make_toy_corpus(corpus_out, corpus_cfg);
    }
    const json resolved = resolve_and_echo(config_path, sets);
    if (c_pretrain->parsed()) return cmd_pretrain(resolved, phase, init_ckpt, out_dir);
    if (c_finetune->parsed()) return cmd_finetune(resolved, ft_init, ft_out);
    if (c_decode->parsed()) return cmd_decode(resolved, dec_ckpt, dec_split, dec_out);
    if (c_score->parsed()) return cmd_score(ref_path, hyp_path);
    if (c_select->parsed())
      return cmd_select_text(resolved, sel_in, sel_bg, sel_pool, sel_out, sel_top);
    if (c_lm->parsed()) return cmd_train_lm(resolved, lm_text, lm_out);
    if (c_synth->parsed()) return cmd_synth(resolved, synth_text, synth_out, synth_draw);
    if (c_grad->parsed()) return cmd_gradcheck(grad_seeds, grad_tol);
    if (c_report->parsed()) return cmd_report(rep_run, rep_out);
    std::cerr << "tts4p: config: no command given\n";
    return kExitConfig;
  } catch (const config::ConfigError& e) {
    return fail(kExitConfig, "config", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kExitConfig, "config", e.what());
  } catch (const runner::NumericError& e) {
    return fail(kExitNumeric, "numeric", e.what());
  } catch (const runner::DataError& e) {
    return fail(kExitData, "data", e.what());
  } catch (const std::exception& e) {
    return fail(kExitData, "data", e.what());
  }
}
