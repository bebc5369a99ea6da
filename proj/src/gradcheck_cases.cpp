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

#include <cstdint>
#include <vector>

#include "tts4p/gradcheck.hpp"

namespace tts4p::numerics {

namespace {

using TD = Tensor<double>;
using Tp = Tape<double>;
using V = Tp::Var;

TD randn(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
  TD t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
  return t;
}

// Weighted reduction so per-element gradients stay distinct.
V weighted_sum(Tp& t, V x, V w) { return t.sum(t.mul(x, w)); }

}  // namespace

std::vector<GradCase> standard_gradient_cases() {
  std::vector<GradCase> cases;

  cases.push_back({"add",
                   [](Rng& r) { return std::vector<TD>{randn({3, 4}, r), randn({3, 4}, r), randn({3, 4}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.add(in[0], in[1]), in[2]);
                   }});

  cases.push_back({"add_rowvec",
                   [](Rng& r) { return std::vector<TD>{randn({3, 4}, r), randn({4}, r), randn({3, 4}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.swish(t.add_rowvec(in[0], in[1])), in[2]);
                   }});

  cases.push_back({"mul",
                   [](Rng& r) { return std::vector<TD>{randn({2, 5}, r), randn({2, 5}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return t.sum(t.tanh_op(t.mul(in[0], in[1])));
                   }});

  cases.push_back({"scale",
                   [](Rng& r) { return std::vector<TD>{randn({3, 3}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return t.sum(t.sigmoid(t.scale(in[0], 0.7)));
                   }});

  cases.push_back({"sigmoid",
                   [](Rng& r) { return std::vector<TD>{randn({2, 6}, r)}; },
                   [](Tp& t, const std::vector<V>& in) { return t.sum(t.sigmoid(in[0])); }});

  cases.push_back({"tanh",
                   [](Rng& r) { return std::vector<TD>{randn({2, 6}, r)}; },
                   [](Tp& t, const std::vector<V>& in) { return t.sum(t.tanh_op(in[0])); }});

  cases.push_back({"swish",
                   [](Rng& r) { return std::vector<TD>{randn({2, 6}, r)}; },
                   [](Tp& t, const std::vector<V>& in) { return t.sum(t.swish(in[0])); }});

  cases.push_back({"sum",
                   [](Rng& r) { return std::vector<TD>{randn({7}, r)}; },
                   [](Tp& t, const std::vector<V>& in) { return t.sum(in[0]); }});

  cases.push_back({"matmul",
                   [](Rng& r) { return std::vector<TD>{randn({3, 4}, r), randn({4, 2}, r), randn({3, 2}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.swish(t.matmul(in[0], in[1])), in[2]);
                   }});

  cases.push_back({"matmul_nt",
                   [](Rng& r) { return std::vector<TD>{randn({3, 4}, r), randn({5, 4}, r), randn({3, 5}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.tanh_op(t.matmul_nt(in[0], in[1])), in[2]);
                   }});

  cases.push_back({"log_softmax",
                   [](Rng& r) { return std::vector<TD>{randn({4, 5}, r, 2.0), randn({4, 5}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.log_softmax(in[0]), in[1]);
                   }});

  cases.push_back({"softmax",
                   [](Rng& r) { return std::vector<TD>{randn({4, 5}, r, 2.0), randn({4, 5}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.softmax(in[0]), in[1]);
                   }});

  cases.push_back({"layer_norm",
                   [](Rng& r) {
                     return std::vector<TD>{randn({3, 6}, r), randn({6}, r, 0.5), randn({6}, r, 0.5),
                                            randn({3, 6}, r)};
                   },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.layer_norm(in[0], in[1], in[2], 1e-5), in[3]);
                   }});

  cases.push_back({"l2_normalize_rows",
                   [](Rng& r) { return std::vector<TD>{randn({3, 5}, r), randn({3, 5}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.l2_normalize_rows(in[0]), in[1]);
                   }});

  cases.push_back({"conv2d_stride2",
                   [](Rng& r) {
                     return std::vector<TD>{randn({5, 6, 2}, r), randn({3, 3, 2, 3}, r, 0.5)};
                   },
                   [](Tp& t, const std::vector<V>& in) {
                     return t.sum(t.swish(t.conv2d(in[0], in[1], 2, 2)));
                   }});

  cases.push_back({"conv2d_stride1",
                   [](Rng& r) {
                     return std::vector<TD>{randn({4, 4, 1}, r), randn({2, 3, 1, 2}, r, 0.5)};
                   },
                   [](Tp& t, const std::vector<V>& in) {
                     return t.sum(t.tanh_op(t.conv2d(in[0], in[1], 1, 1)));
                   }});

  cases.push_back({"depthwise_conv1d",
                   [](Rng& r) { return std::vector<TD>{randn({6, 4}, r), randn({3, 4}, r, 0.5)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return t.sum(t.swish(t.depthwise_conv1d(in[0], in[1])));
                   }});

  cases.push_back({"reshape",
                   [](Rng& r) { return std::vector<TD>{randn({2, 6}, r), randn({3, 4}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.reshape(in[0], {3, 4}), in[1]);
                   }});

  cases.push_back({"gather_rows",
                   [](Rng& r) { return std::vector<TD>{randn({5, 3}, r), randn({4, 3}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.gather_rows(in[0], {0, 2, 2, 4}), in[1]);
                   }});

  cases.push_back({"concat_rows",
                   [](Rng& r) { return std::vector<TD>{randn({2, 3}, r), randn({3, 3}, r), randn({5, 3}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.concat_rows({in[0], in[1]}), in[2]);
                   }});

  cases.push_back({"slice_cols",
                   [](Rng& r) { return std::vector<TD>{randn({3, 6}, r), randn({3, 3}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.slice_cols(in[0], 1, 3), in[1]);
                   }});

  cases.push_back({"concat_cols",
                   [](Rng& r) { return std::vector<TD>{randn({3, 2}, r), randn({3, 3}, r), randn({3, 5}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.concat_cols({in[0], in[1]}), in[2]);
                   }});

  cases.push_back({"pairwise_sum",
                   [](Rng& r) { return std::vector<TD>{randn({2, 3}, r), randn({3, 3}, r), randn({6, 3}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.swish(t.pairwise_sum(in[0], in[1])), in[2]);
                   }});

  cases.push_back({"pick",
                   [](Rng& r) { return std::vector<TD>{randn({3, 4}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return t.scale(t.pick(in[0], 5), 2.0);
                   }});

  cases.push_back({"replace_rows",
                   [](Rng& r) { return std::vector<TD>{randn({4, 3}, r), randn({3}, r), randn({4, 3}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return weighted_sum(t, t.replace_rows(in[0], {0, 1, 0, 1}, in[1]), in[2]);
                   }});

  append_loss_gradient_cases(cases);
  append_encoder_gradient_cases(cases);
  return cases;
}

}  // namespace tts4p::numerics
