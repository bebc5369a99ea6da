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

#include "tts4p/lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tts4p/pseudotts.hpp"

namespace tts4p::lm {

namespace {

struct ContextStats {
  int total = 0;
  std::map<int, int> next;
};

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream in(pseudotts::normalize_text(line));
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

int NGramLM::id_or_unk(const std::string& token) const {
  auto it = token_ids.find(token);
  return it == token_ids.end() ? kUnkId : it->second;
}

double NGramLM::cond_logprob(const std::vector<int>& history, int word) const {
  const size_t keep = std::min(history.size(), static_cast<size_t>(order - 1));
  std::vector<int> h(history.end() - static_cast<long>(keep), history.end());
  double acc = 0.0;
  int w = word;
  for (;;) {
    std::vector<int> key = h;
    key.push_back(w);
    auto it = logp.find(key);
    if (it != logp.end()) return acc + it->second;
    if (!h.empty()) {
      auto bo = backoff.find(h);
      if (bo != backoff.end()) acc += bo->second;
      h.erase(h.begin());
    } else if (w != kUnkId) {
      w = kUnkId;
    } else {
      throw std::logic_error("lm: unigram table is missing <unk>");
    }
  }
}

NGramLM train_ngram(const std::vector<std::string>& corpus, int order, int vocab_min_count) {
  if (order < 1 || order > 8) throw std::invalid_argument("train_ngram: order must be in [1, 8]");
  if (vocab_min_count < 1) throw std::invalid_argument("train_ngram: vocab_min_count must be >= 1");

  std::vector<std::vector<std::string>> sentences;
  std::map<std::string, int> freq;
  for (const auto& line : corpus) {
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    for (const auto& t : toks) ++freq[t];
    sentences.push_back(std::move(toks));
  }
  if (sentences.empty()) throw std::invalid_argument("train_ngram: corpus has no usable lines");

  NGramLM lm;
  lm.order = order;
  lm.vocab = {kUnk, kBos, kEos};
  for (const auto& [tok, n] : freq)
    if (n >= vocab_min_count) lm.vocab.push_back(tok);
  for (size_t i = 0; i < lm.vocab.size(); ++i) lm.token_ids[lm.vocab[i]] = static_cast<int>(i);

  std::map<std::vector<int>, ContextStats> ctx;
  for (const auto& sent : sentences) {
    std::vector<int> seq(static_cast<size_t>(order - 1), kBosId);
    for (const auto& t : sent) seq.push_back(lm.id_or_unk(t));
    seq.push_back(kEosId);
    for (size_t pos = static_cast<size_t>(order - 1); pos < seq.size(); ++pos) {
      for (int k = 1; k <= order; ++k) {
        std::vector<int> context(seq.begin() + static_cast<long>(pos) - (k - 1),
                                 seq.begin() + static_cast<long>(pos));
        ContextStats& s = ctx[context];
        ++s.total;
        ++s.next[seq[pos]];
      }
    }
  }

  const ContextStats& root = ctx.at({});
  std::set<int> events;
  for (const auto& [w, n] : root.next) events.insert(w);
  events.insert(kUnkId);
  lm.v_eff = static_cast<int>(events.size());

  const double t0 = static_cast<double>(root.next.size());
  const double c0 = static_cast<double>(root.total);
  for (int w : events) {
    auto it = root.next.find(w);
    const double c = it == root.next.end() ? 0.0 : static_cast<double>(it->second);
    lm.logp[{w}] = std::log((c + t0 / lm.v_eff) / (c0 + t0));
  }

  for (int len = 1; len < order; ++len) {
    for (const auto& [context, stats] : ctx) {
      if (static_cast<int>(context.size()) != len) continue;
      const double t = static_cast<double>(stats.next.size());
      const double c = static_cast<double>(stats.total);
      lm.backoff[context] = std::log(t / (c + t));
      const std::vector<int> shorter(context.begin() + 1, context.end());
      for (const auto& [w, n] : stats.next) {
        const double lower = std::exp(lm.cond_logprob(shorter, w));
        std::vector<int> key = context;
        key.push_back(w);
        lm.logp[key] = std::log((static_cast<double>(n) + t * lower) / (c + t));
      }
    }
  }
  return lm;
}

double logprob(const NGramLM& lm, const std::string& sentence) {
  if (lm.v_eff < 1) throw std::invalid_argument("logprob: model is not trained");
  std::vector<int> seq(static_cast<size_t>(lm.order - 1), kBosId);
  for (const auto& t : tokenize(sentence)) seq.push_back(lm.id_or_unk(t));
  seq.push_back(kEosId);
  double sum = 0.0;
  for (size_t pos = static_cast<size_t>(lm.order - 1); pos < seq.size(); ++pos) {
    std::vector<int> history(seq.begin(), seq.begin() + static_cast<long>(pos));
    sum += lm.cond_logprob(history, seq[pos]);
  }
  return sum;
}

double fusion_score(const NGramLM& lm, const std::vector<std::string>& prefix,
                    const std::string& next, double beta) {
  if (beta < 0.0) throw std::invalid_argument("fusion_score: beta must be nonnegative");
  if (beta == 0.0) return 0.0;
  std::vector<int> history(static_cast<size_t>(lm.order - 1), kBosId);
  for (const auto& t : prefix) history.push_back(lm.id_or_unk(t));
  const int w = next == kEos ? kEosId : lm.id_or_unk(next);
  return beta * lm.cond_logprob(history, w);
}

std::vector<ScoredSentence> select_text(const std::vector<std::string>& pool,
                                        const NGramLM& in_domain, const NGramLM& background,
                                        size_t top_k) {
  std::vector<ScoredSentence> ranked;
  ranked.reserve(pool.size());
  for (const auto& line : pool) {
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    ScoredSentence s;
    s.text = line;
    s.token_count = static_cast<int>(toks.size());
    s.score = (logprob(in_domain, line) - logprob(background, line)) / s.token_count;
    if (!std::isfinite(s.score)) throw std::runtime_error("select_text: non-finite score");
    ranked.push_back(std::move(s));
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const ScoredSentence& a, const ScoredSentence& b) { return a.score > b.score; });
  if (ranked.size() > top_k) ranked.resize(top_k);
  return ranked;
}

void save_ngram(const NGramLM& lm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write lm " + path);
  std::vector<size_t> counts(static_cast<size_t>(lm.order), 0);
  for (const auto& [key, p] : lm.logp) ++counts[key.size() - 1];
  out << "\\data\\\n";
  for (int n = 1; n <= lm.order; ++n)
    out << "ngram " << n << "=" << counts[static_cast<size_t>(n - 1)] << "\n";
  for (int n = 1; n <= lm.order; ++n) {
    out << "\\" << n << "-grams:\n";
    auto write_tokens = [&](const std::vector<int>& key) {
      for (size_t i = 0; i < key.size(); ++i) {
        if (i) out << ' ';
        out << lm.vocab[static_cast<size_t>(key[i])];
      }
    };
    for (const auto& [key, p] : lm.logp) {
      if (static_cast<int>(key.size()) != n) continue;
      out << format_double(p) << '\t';
      write_tokens(key);
      auto bo = lm.backoff.find(key);
      if (bo != lm.backoff.end()) out << '\t' << format_double(bo->second);
      out << '\n';
    }
    // Contexts that exist only as histories (start padding) carry their
    // backoff weight on a sentinel line; -99 marks "no probability here".
    for (const auto& [ctx, bo] : lm.backoff) {
      if (static_cast<int>(ctx.size()) != n || lm.logp.count(ctx)) continue;
      out << "-99\t";
      write_tokens(ctx);
      out << '\t' << format_double(bo) << '\n';
    }
  }
  out << "\\end\\\n";
  if (!out) throw std::runtime_error("failed writing lm " + path);
}

NGramLM load_ngram(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lm " + path);
  NGramLM lm;
  lm.vocab = {kUnk, kBos, kEos};
  for (size_t i = 0; i < lm.vocab.size(); ++i) lm.token_ids[lm.vocab[i]] = static_cast<int>(i);

  auto intern = [&lm](const std::string& tok) {
    auto it = lm.token_ids.find(tok);
    if (it != lm.token_ids.end()) return it->second;
    const int id = static_cast<int>(lm.vocab.size());
    lm.vocab.push_back(tok);
    lm.token_ids[tok] = id;
    return id;
  };

  std::string line;
  bool in_data = false;
  int current = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "\\data\\") {
      in_data = true;
      continue;
    }
    if (line == "\\end\\") break;
    if (line.size() > 2 && line.front() == '\\' && line.back() == ':') {
      current = std::stoi(line.substr(1));
      lm.order = std::max(lm.order, current);
      continue;
    }
    if (in_data && line.rfind("ngram ", 0) == 0) {
      lm.order = std::max(lm.order, std::stoi(line.substr(6)));
      continue;
    }
    if (current == 0) throw std::runtime_error("lm file: entry before any section in " + path);
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 2 || fields.size() > 3)
      throw std::runtime_error("lm file: malformed line \"" + line + "\"");
    std::vector<int> key;
    std::istringstream toks(fields[1]);
    std::string tok;
    while (toks >> tok) key.push_back(intern(tok));
    if (static_cast<int>(key.size()) != current)
      throw std::runtime_error("lm file: ngram length mismatch in \"" + line + "\"");
    if (fields[0] != "-99") lm.logp[key] = std::stod(fields[0]);
    if (fields.size() == 3) lm.backoff[key] = std::stod(fields[2]);
  }
  size_t unigrams = 0;
  for (const auto& [key, p] : lm.logp)
    if (key.size() == 1) ++unigrams;
  if (unigrams == 0) throw std::runtime_error("lm file: no unigram section in " + path);
  lm.v_eff = static_cast<int>(unigrams);
  return lm;
}

void save_selection(const std::vector<ScoredSentence>& ranked, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write selection " + path);
  for (const auto& s : ranked) out << format_double(s.score) << '\t' << s.text << '\n';
  if (!out) throw std::runtime_error("failed writing selection " + path);
}

}  // namespace tts4p::lm
