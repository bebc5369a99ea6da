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

#include "tts4p/gradcheck.hpp"
#include "tts4p/losses.hpp"

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

}  // namespace

void append_loss_gradient_cases(std::vector<GradCase>& cases) {
  using losses::AuxHead;
  using losses::AuxObjective;
  using losses::ItemLosses;
  using losses::LabelSeq;

  cases.push_back({"ctc_loss",
                   [](Rng& r) { return std::vector<TD>{randn({5, 4}, r, 2.0)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return losses::ctc_loss(t, in[0], {1, 2, 1});
                   }});

  cases.push_back({"ctc_loss_repeat",
                   [](Rng& r) { return std::vector<TD>{randn({5, 3}, r, 2.0)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return losses::ctc_loss(t, in[0], {2, 2});
                   }});

  cases.push_back({"ctc_loss_empty_target",
                   [](Rng& r) { return std::vector<TD>{randn({4, 3}, r, 2.0)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return losses::ctc_loss(t, in[0], {});
                   }});

  cases.push_back({"rnnt_loss",
                   [](Rng& r) { return std::vector<TD>{randn({3, 3, 4}, r, 2.0)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return losses::rnnt_loss(t, in[0], {1, 3});
                   }});

  cases.push_back({"rnnt_loss_empty_target",
                   [](Rng& r) { return std::vector<TD>{randn({3, 1, 3}, r, 2.0)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return losses::rnnt_loss(t, in[0], {});
                   }});

  cases.push_back({"contrastive_loss",
                   [](Rng& r) { return std::vector<TD>{randn({6, 4}, r), randn({6, 4}, r)}; },
                   [](Tp& t, const std::vector<V>& in) {
                     return losses::contrastive_loss_with_candidates<double>(
                         t, in[0], in[1], {0, 2, 3, 5},
                         {{0, 2, 3}, {2, 0, 5}, {3, 5, 0}, {5, 3, 2}}, 0.5);
                   }});

  cases.push_back({"aux_head_ctc",
                   [](Rng& r) {
                     return std::vector<TD>{randn({5, 3}, r), randn({3, 4}, r, 0.7), randn({4}, r, 0.3)};
                   },
                   [](Tp& t, const std::vector<V>& in) {
                     AuxHead<double> head;
                     head.name = "phoneme";
                     head.vocab_size = 4;
                     head.objective = AuxObjective::kCtc;
                     head.w_out = in[1];
                     head.b_out = in[2];
                     return losses::aux_head_loss(t, in[0], head, LabelSeq{{1, 2}, "phoneme"});
                   }});

  cases.push_back({"aux_head_rnnt",
                   [](Rng& r) {
                     return std::vector<TD>{randn({3, 3}, r),          randn({4, 3}, r, 0.7),
                                            randn({3, 3}, r, 0.5),    randn({3}, r, 0.3),
                                            randn({3, 3}, r, 0.7),    randn({3, 3}, r, 0.7),
                                            randn({3}, r, 0.3),       randn({3, 4}, r, 0.7)};
                   },
                   [](Tp& t, const std::vector<V>& in) {
                     AuxHead<double> head;
                     head.name = "wordpiece";
                     head.vocab_size = 4;
                     head.objective = AuxObjective::kRnnt;
                     head.embed = in[1];
                     head.w_rec = in[2];
                     head.b_rec = in[3];
                     head.w_joint_enc = in[4];
                     head.w_joint_pred = in[5];
                     head.b_joint = in[6];
                     head.w_joint_out = in[7];
                     return losses::aux_head_loss(t, in[0], head, LabelSeq{{1, 2}, "wordpiece"});
                   }});

  cases.push_back({"total_loss",
                   [](Rng& r) {
                     return std::vector<TD>{randn({2, 3}, r), randn({2, 3}, r), randn({4, 3}, r, 2.0)};
                   },
                   [](Tp& t, const std::vector<V>& in) {
                     ItemLosses<double> real;
                     real.synthesized = false;
                     real.j_main = t.sum(t.swish(in[0]));
                     ItemLosses<double> synth;
                     synth.synthesized = true;
                     synth.j_main = t.sum(t.tanh_op(in[1]));
                     synth.j_aux.emplace_back("phoneme", losses::ctc_loss(t, in[2], {1, 2}));
                     return losses::total_loss<double>(t, {real, synth}, 0.7).total;
                   }});
}

}  // namespace tts4p::numerics
