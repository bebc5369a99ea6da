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

#ifndef TTS4P_LM_HPP_
#define TTS4P_LM_HPP_

#include <map>
#include <string>
#include <vector>

namespace tts4p::lm {

inline constexpr const char* kUnk = "<unk>";
inline constexpr const char* kBos = "<s>";
inline constexpr const char* kEos = "</s>";
inline constexpr int kUnkId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;

// Lowercase, strip punctuation, split on whitespace.
std::vector<std::string> tokenize(const std::string& line);

// Witten-Bell smoothed n-gram model stored in backoff form: an n-gram's
// interpolated probability when listed, otherwise the context's backoff
// weight times the shorter history's probability. The unigram table covers
// every predictable symbol, <unk> included, so queries always terminate.
struct NGramLM {
  int order = 1;
  std::vector<std::string> vocab;
  std::map<std::string, int> token_ids;
  std::map<std::vector<int>, double> logp;
  std::map<std::vector<int>, double> backoff;
  int v_eff = 0;

  int id_or_unk(const std::string& token) const;
  // Natural-log p(word | history); history is unpadded recent context.
  double cond_logprob(const std::vector<int>& history, int word) const;
};

NGramLM train_ngram(const std::vector<std::string>& corpus, int order, int vocab_min_count);

// Sum of ln p over every predicted event: each content token plus the
// terminating sentence end, with start padding never predicted.
double logprob(const NGramLM& lm, const std::string& sentence);

// beta * ln p(next | prefix), added to acoustic scores during beam search.
double fusion_score(const NGramLM& lm, const std::vector<std::string>& prefix,
                    const std::string& next, double beta);

struct ScoredSentence {
  std::string text;
  int token_count = 0;
  double score = 0.0;
};

// Per-token log-prob difference between the in-domain and background models,
// ranked descending with stable ties; lines empty after normalization are
// dropped. top_k beyond the pool returns the whole ranked pool.
std::vector<ScoredSentence> select_text(const std::vector<std::string>& pool,
                                        const NGramLM& in_domain, const NGramLM& background,
                                        size_t top_k);

// Text sections per order: "\data\" with counts, then "\N-grams:" blocks of
// "logprob<TAB>tokens[<TAB>backoff]" in natural log, "\end\" last.
void save_ngram(const NGramLM& lm, const std::string& path);
NGramLM load_ngram(const std::string& path);

// "score<TAB>sentence" lines, descending.
void save_selection(const std::vector<ScoredSentence>& ranked, const std::string& path);

}  // namespace tts4p::lm

#endif  // TTS4P_LM_HPP_
