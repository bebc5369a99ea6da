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

// Brute-force path enumeration references for the sequence losses. These
// deliberately share no code with the library DP implementations.

#ifndef TTS4P_TESTS_ORACLES_HPP_
#define TTS4P_TESTS_ORACLES_HPP_

#include <cmath>
#include <limits>
#include <vector>

#include "tts4p/tensor.hpp"

namespace tts4p::testing {

inline std::vector<double> oracle_log_probs(const numerics::Tensor<double>& logits, int v) {
  std::vector<double> lp(static_cast<size_t>(logits.size()));
  const int64_t rows = logits.size() / v;
  for (int64_t r = 0; r < rows; ++r) {
    double mx = logits[r * v];
    for (int j = 1; j < v; ++j) mx = std::max(mx, logits[r * v + j]);
    double z = 0;
    for (int j = 0; j < v; ++j) z += std::exp(logits[r * v + j] - mx);
    for (int j = 0; j < v; ++j)
      lp[static_cast<size_t>(r * v + j)] = logits[r * v + j] - mx - std::log(z);
  }
  return lp;
}

inline double oracle_logsumexp(const std::vector<double>& xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  double mx = xs[0];
  for (double x : xs) mx = std::max(mx, x);
  double z = 0;
  for (double x : xs) z += std::exp(x - mx);
  return mx + std::log(z);
}

// Sum over every alignment in {0..V-1}^T whose collapse (merge repeats, drop
// blanks) equals the target. Returns -ln of the path sum; +inf if no path.
inline double ctc_enumeration(const numerics::Tensor<double>& logits,
                              const std::vector<int>& labels) {
  const int tn = logits.dim(0), vn = logits.dim(1);
  const std::vector<double> lp = oracle_log_probs(logits, vn);
  std::vector<double> matches;
  std::vector<int> path(static_cast<size_t>(tn), 0);
  while (true) {
    std::vector<int> collapsed;
    for (int t = 0; t < tn; ++t) {
      if (t > 0 && path[static_cast<size_t>(t)] == path[static_cast<size_t>(t - 1)]) continue;
      collapsed.push_back(path[static_cast<size_t>(t)]);
    }
    std::vector<int> decoded;
    for (int s : collapsed)
      if (s != 0) decoded.push_back(s);
    if (decoded == labels) {
      double logp = 0;
      for (int t = 0; t < tn; ++t)
        logp += lp[static_cast<size_t>(t * vn + path[static_cast<size_t>(t)])];
      matches.push_back(logp);
    }
    int i = tn - 1;
    while (i >= 0 && path[static_cast<size_t>(i)] == vn - 1) path[static_cast<size_t>(i--)] = 0;
    if (i < 0) break;
    ++path[static_cast<size_t>(i)];
  }
  return -oracle_logsumexp(matches);
}

namespace detail {
inline void rnnt_paths(const std::vector<double>& lp, int tn, int un1, int vn,
                       const std::vector<int>& labels, int t, int u, double logp,
                       std::vector<double>& acc) {
  if (t == tn) {
    if (u == static_cast<int>(labels.size())) acc.push_back(logp);
    return;
  }
  const auto at = [&](int tt, int uu, int vv) {
    return lp[static_cast<size_t>((tt * un1 + uu) * vn + vv)];
  };
  rnnt_paths(lp, tn, un1, vn, labels, t + 1, u, logp + at(t, u, 0), acc);
  if (u < static_cast<int>(labels.size()))
    rnnt_paths(lp, tn, un1, vn, labels, t, u + 1, logp + at(t, u, labels[static_cast<size_t>(u)]),
               acc);
}
}  // namespace detail

// Sum over every monotonic blank/label lattice path. Returns -ln of the sum.
inline double rnnt_enumeration(const numerics::Tensor<double>& logits,
                               const std::vector<int>& labels) {
  const int tn = logits.dim(0), un1 = logits.dim(1), vn = logits.dim(2);
  const std::vector<double> lp = oracle_log_probs(logits, vn);
  std::vector<double> acc;
  detail::rnnt_paths(lp, tn, un1, vn, labels, 0, 0, 0.0, acc);
  return -oracle_logsumexp(acc);
}

}  // namespace tts4p::testing

#endif  // TTS4P_TESTS_ORACLES_HPP_
