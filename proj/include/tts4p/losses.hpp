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

#ifndef TTS4P_LOSSES_HPP_
#define TTS4P_LOSSES_HPP_

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tts4p/rng.hpp"
#include "tts4p/tape.hpp"

namespace tts4p::losses {

using numerics::Tape;
using numerics::Tensor;

// Target token sequence for an auxiliary head. Token id 0 is the blank and
// never appears inside ids.
struct LabelSeq {
  std::vector<int> ids;
  std::string vocab;
};

// Target needs more frames than the input provides.
struct InfeasibleAlignment : std::runtime_error {
  explicit InfeasibleAlignment(const std::string& what) : std::runtime_error(what) {}
};

void validate_labels(const std::vector<int>& ids, int vocab_size);

// Alignment-free sequence loss over blank-interleaved targets. Raw logits
// [T x V]; log-softmax applied internally; forward DP in log space.
template <typename T>
typename Tape<T>::Var ctc_loss(Tape<T>& tape, typename Tape<T>::Var logits,
                               const std::vector<int>& labels);

// Transducer lattice loss. Raw joint logits [T x (U+1) x V]; blank advances
// time, a label advances the target position.
template <typename T>
typename Tape<T>::Var rnnt_loss(Tape<T>& tape, typename Tape<T>::Var joint_logits,
                                const std::vector<int>& labels);

// InfoNCE over cosine similarities at explicitly given candidate sets.
// candidates[i] lists target rows scored against context row positions[i];
// entry 0 is the positive.
template <typename T>
typename Tape<T>::Var contrastive_loss_with_candidates(
    Tape<T>& tape, typename Tape<T>::Var contexts, typename Tape<T>::Var targets,
    const std::vector<int>& positions, const std::vector<std::vector<int>>& candidates, T kappa);

// Draws K distractors per masked position uniformly without replacement from
// the other masked positions, then scores candidates. Fewer than 2 masked
// positions: no loss (utterance is skipped). K is reduced when fewer
// distractors exist.
template <typename T>
std::optional<typename Tape<T>::Var> contrastive_loss(Tape<T>& tape,
                                                      typename Tape<T>::Var contexts,
                                                      typename Tape<T>::Var targets,
                                                      const std::vector<uint8_t>& masked,
                                                      int distractors, T kappa, tts4p::Rng& rng);

enum class AuxObjective { kCtc, kRnnt };

// One auxiliary readout over encoder contexts. For the transducer objective
// the head carries a one-layer tanh recurrence over previous labels and a
// tanh joint network.
template <typename T>
struct AuxHead {
  std::string name;
  int vocab_size = 0;
  AuxObjective objective = AuxObjective::kCtc;
  // CTC readout.
  typename Tape<T>::Var w_out, b_out;
  // Transducer extras.
  typename Tape<T>::Var embed, w_rec, b_rec, w_joint_enc, w_joint_pred, b_joint, w_joint_out;
};

template <typename T>
typename Tape<T>::Var aux_head_loss(Tape<T>& tape, typename Tape<T>::Var contexts,
                                    const AuxHead<T>& head, const LabelSeq& target);

// Sum over enabled heads; an empty head list contributes a constant zero.
template <typename T>
typename Tape<T>::Var aux_loss(Tape<T>& tape, typename Tape<T>::Var contexts,
                               const std::vector<AuxHead<T>>& heads,
                               const std::map<std::string, LabelSeq>& targets);

// Per-item losses feeding the mixed batch objective. synthesized selects the
// text branch of the mix; aux terms exist only for synthesized items.
template <typename T>
struct ItemLosses {
  bool synthesized = false;
  typename Tape<T>::Var j_main;
  std::vector<std::pair<std::string, typename Tape<T>::Var>> j_aux;
};

template <typename T>
struct LossBreakdown {
  typename Tape<T>::Var total;
  double total_value = 0;
  double j_speech = 0;
  double j_text = 0;
  double j_aux = 0;
  std::map<std::string, double> j_aux_per_head;
  int n_real = 0;
  int n_synth = 0;
};

// J = mean_i [ sigma_i * J_text_i + (1 - sigma_i) * J_speech_i ]
//     + lambda_aux * sum_i sigma_i * J_aux_i / sum_i sigma_i
template <typename T>
LossBreakdown<T> total_loss(Tape<T>& tape, const std::vector<ItemLosses<T>>& items, T lambda_aux);

}  // namespace tts4p::losses

#endif  // TTS4P_LOSSES_HPP_
