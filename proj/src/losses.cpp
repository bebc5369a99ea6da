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

#include "tts4p/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tts4p::losses {

namespace {

template <typename T>
constexpr T kNegInf = -std::numeric_limits<T>::infinity();

template <typename T>
T lse2(T a, T b) {
  if (a == kNegInf<T>) return b;
  if (b == kNegInf<T>) return a;
  T m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x, int v) {
  Tensor<T> y = x;
  const int64_t rows = x.size() / v;
  for (int64_t r = 0; r < rows; ++r) {
    T* p = y.data() + r * v;
    T mx = p[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, p[j]);
    T z = T(0);
    for (int j = 0; j < v; ++j) z += std::exp(p[j] - mx);
    T lz = std::log(z) + mx;
    for (int j = 0; j < v; ++j) p[j] -= lz;
  }
  return y;
}

}  // namespace

void validate_labels(const std::vector<int>& ids, int vocab_size) {
  for (int id : ids)
    if (id < 1 || id >= vocab_size)
      throw std::invalid_argument("label id " + std::to_string(id) + " outside [1, " +
                                  std::to_string(vocab_size - 1) + "]");
}

template <typename T>
typename Tape<T>::Var ctc_loss(Tape<T>& tape, typename Tape<T>::Var logits,
                               const std::vector<int>& labels) {
  const Tensor<T>& lg = tape.val(logits);
  if (lg.rank() != 2) throw std::invalid_argument("ctc_loss: logits must be rank 2");
  const int tn = lg.dim(0), vn = lg.dim(1);
  if (tn < 1 || vn < 2) throw std::invalid_argument("ctc_loss: degenerate logits shape");
  validate_labels(labels, vn);
  const int u = static_cast<int>(labels.size());
  int repeats = 0;
  for (int i = 1; i < u; ++i)
    if (labels[i] == labels[i - 1]) ++repeats;
  if (tn < u + repeats)
    throw InfeasibleAlignment("ctc_loss: " + std::to_string(tn) + " frames cannot emit " +
                              std::to_string(u) + " labels with " + std::to_string(repeats) +
                              " repeats");

  const int s = 2 * u + 1;
  auto ext = [&labels](int i) { return (i % 2 == 0) ? 0 : labels[static_cast<size_t>(i / 2)]; };
  const Tensor<T> y = log_softmax_rows(lg, vn);

  std::vector<T> alpha(static_cast<size_t>(tn) * s, kNegInf<T>);
  alpha[0] = y.at(0, 0);
  if (s > 1) alpha[1] = y.at(0, ext(1));
  for (int t = 1; t < tn; ++t) {
    for (int i = 0; i < s; ++i) {
      T a = alpha[static_cast<size_t>(t - 1) * s + i];
      if (i >= 1) a = lse2(a, alpha[static_cast<size_t>(t - 1) * s + i - 1]);
      if (i >= 2 && ext(i) != 0 && ext(i) != ext(i - 2))
        a = lse2(a, alpha[static_cast<size_t>(t - 1) * s + i - 2]);
      alpha[static_cast<size_t>(t) * s + i] = (a == kNegInf<T>) ? kNegInf<T> : a + y.at(t, ext(i));
    }
  }
  const size_t last = static_cast<size_t>(tn - 1) * s;
  T log_z = alpha[last + s - 1];
  if (s > 1) log_z = lse2(log_z, alpha[last + s - 2]);
  const T loss = -log_z;

  Tensor<T> dlogits;
  if (tape.needs_grad(logits)) {
    std::vector<T> beta(static_cast<size_t>(tn) * s, kNegInf<T>);
    beta[last + s - 1] = y.at(tn - 1, ext(s - 1));
    if (s > 1) beta[last + s - 2] = y.at(tn - 1, ext(s - 2));
    for (int t = tn - 2; t >= 0; --t) {
      for (int i = 0; i < s; ++i) {
        T b = beta[static_cast<size_t>(t + 1) * s + i];
        if (i + 1 < s) b = lse2(b, beta[static_cast<size_t>(t + 1) * s + i + 1]);
        if (i + 2 < s && ext(i + 2) != 0 && ext(i + 2) != ext(i))
          b = lse2(b, beta[static_cast<size_t>(t + 1) * s + i + 2]);
        beta[static_cast<size_t>(t) * s + i] = (b == kNegInf<T>) ? kNegInf<T> : b + y.at(t, ext(i));
      }
    }
    dlogits = Tensor<T>({tn, vn});
    for (int t = 0; t < tn; ++t) {
      std::vector<T> gamma(static_cast<size_t>(vn), T(0));
      for (int i = 0; i < s; ++i) {
        const T a = alpha[static_cast<size_t>(t) * s + i];
        const T b = beta[static_cast<size_t>(t) * s + i];
        if (a == kNegInf<T> || b == kNegInf<T>) continue;
        gamma[static_cast<size_t>(ext(i))] += std::exp(a + b - y.at(t, ext(i)) - log_z);
      }
      for (int w = 0; w < vn; ++w)
        dlogits.at(t, w) = std::exp(y.at(t, w)) - gamma[static_cast<size_t>(w)];
    }
  }

  const int lid = logits.id;
  return tape.custom(Tensor<T>::scalar(loss), {logits},
                     [lid, dlogits = std::move(dlogits)](Tape<T>& tp, int o) {
                       const T g = tp.grad_out(o)[0];
                       if (!tp.wants(lid)) return;
                       Tensor<T>& gx = tp.acc(lid);
                       for (int64_t i = 0; i < dlogits.size(); ++i) gx[i] += g * dlogits[i];
                     });
}

template <typename T>
typename Tape<T>::Var rnnt_loss(Tape<T>& tape, typename Tape<T>::Var joint_logits,
                                const std::vector<int>& labels) {
  const Tensor<T>& lg = tape.val(joint_logits);
  if (lg.rank() != 3) throw std::invalid_argument("rnnt_loss: logits must be rank 3");
  const int tn = lg.dim(0), un1 = lg.dim(1), vn = lg.dim(2);
  if (tn < 1 || vn < 2) throw std::invalid_argument("rnnt_loss: degenerate logits shape");
  validate_labels(labels, vn);
  const int u = static_cast<int>(labels.size());
  if (un1 != u + 1)
    throw std::invalid_argument("rnnt_loss: logits have " + std::to_string(un1) +
                                " label positions, target needs " + std::to_string(u + 1));

  const Tensor<T> y = log_softmax_rows(lg, vn);
  auto yy = [&](int t, int p, int v) -> T {
    return y[(static_cast<int64_t>(t) * un1 + p) * vn + v];
  };

  std::vector<T> alpha(static_cast<size_t>(tn) * un1, kNegInf<T>);
  alpha[0] = T(0);
  for (int t = 0; t < tn; ++t) {
    for (int p = 0; p <= u; ++p) {
      if (t == 0 && p == 0) continue;
      T a = kNegInf<T>;
      if (t > 0) a = alpha[static_cast<size_t>(t - 1) * un1 + p] + yy(t - 1, p, 0);
      if (p > 0)
        a = lse2(a, alpha[static_cast<size_t>(t) * un1 + p - 1] +
                        yy(t, p - 1, labels[static_cast<size_t>(p - 1)]));
      alpha[static_cast<size_t>(t) * un1 + p] = a;
    }
  }
  const T log_z = alpha[static_cast<size_t>(tn - 1) * un1 + u] + yy(tn - 1, u, 0);
  const T loss = -log_z;

  Tensor<T> dlogits;
  if (tape.needs_grad(joint_logits)) {
    std::vector<T> beta(static_cast<size_t>(tn) * un1, kNegInf<T>);
    beta[static_cast<size_t>(tn - 1) * un1 + u] = yy(tn - 1, u, 0);
    for (int t = tn - 1; t >= 0; --t) {
      for (int p = u; p >= 0; --p) {
        if (t == tn - 1 && p == u) continue;
        T b = kNegInf<T>;
        if (t + 1 < tn) b = yy(t, p, 0) + beta[static_cast<size_t>(t + 1) * un1 + p];
        if (p < u)
          b = lse2(b, yy(t, p, labels[static_cast<size_t>(p)]) +
                          beta[static_cast<size_t>(t) * un1 + p + 1]);
        beta[static_cast<size_t>(t) * un1 + p] = b;
      }
    }
    dlogits = Tensor<T>({tn, un1, vn});
    for (int t = 0; t < tn; ++t) {
      for (int p = 0; p <= u; ++p) {
        const T a = alpha[static_cast<size_t>(t) * un1 + p];
        const T node = std::exp(a + beta[static_cast<size_t>(t) * un1 + p] - log_z);
        T occ_blank = T(0);
        if (t + 1 < tn)
          occ_blank = std::exp(a + yy(t, p, 0) + beta[static_cast<size_t>(t + 1) * un1 + p] - log_z);
        else if (p == u)
          occ_blank = std::exp(a + yy(t, p, 0) - log_z);
        T occ_label = T(0);
        if (p < u)
          occ_label = std::exp(a + yy(t, p, labels[static_cast<size_t>(p)]) +
                               beta[static_cast<size_t>(t) * un1 + p + 1] - log_z);
        for (int w = 0; w < vn; ++w) {
          T occ = (w == 0) ? occ_blank : T(0);
          if (p < u && w == labels[static_cast<size_t>(p)]) occ += occ_label;
          dlogits[(static_cast<int64_t>(t) * un1 + p) * vn + w] = std::exp(yy(t, p, w)) * node - occ;
        }
      }
    }
  }

  const int lid = joint_logits.id;
  return tape.custom(Tensor<T>::scalar(loss), {joint_logits},
                     [lid, dlogits = std::move(dlogits)](Tape<T>& tp, int o) {
                       const T g = tp.grad_out(o)[0];
                       if (!tp.wants(lid)) return;
                       Tensor<T>& gx = tp.acc(lid);
                       for (int64_t i = 0; i < dlogits.size(); ++i) gx[i] += g * dlogits[i];
                     });
}

template <typename T>
typename Tape<T>::Var contrastive_loss_with_candidates(
    Tape<T>& tape, typename Tape<T>::Var contexts, typename Tape<T>::Var targets,
    const std::vector<int>& positions, const std::vector<std::vector<int>>& candidates, T kappa) {
  if (kappa <= T(0)) throw std::invalid_argument("contrastive_loss: temperature must be > 0");
  if (positions.empty() || positions.size() != candidates.size())
    throw std::invalid_argument("contrastive_loss: positions/candidates mismatch");
  typename Tape<T>::Var cn = tape.l2_normalize_rows(contexts);
  typename Tape<T>::Var qn = tape.l2_normalize_rows(targets);
  typename Tape<T>::Var acc{};
  for (size_t i = 0; i < positions.size(); ++i) {
    if (candidates[i].empty()) throw std::invalid_argument("contrastive_loss: empty candidate set");
    typename Tape<T>::Var c = tape.gather_rows(cn, {positions[i]});
    typename Tape<T>::Var q = tape.gather_rows(qn, candidates[i]);
    typename Tape<T>::Var sims = tape.matmul_nt(c, q);
    typename Tape<T>::Var lp = tape.log_softmax(tape.scale(sims, T(1) / kappa));
    typename Tape<T>::Var pos = tape.pick(lp, 0);
    acc = acc.valid() ? tape.add(acc, pos) : pos;
  }
  return tape.scale(acc, -T(1) / static_cast<T>(positions.size()));
}

template <typename T>
std::optional<typename Tape<T>::Var> contrastive_loss(Tape<T>& tape,
                                                      typename Tape<T>::Var contexts,
                                                      typename Tape<T>::Var targets,
                                                      const std::vector<uint8_t>& masked,
                                                      int distractors, T kappa, tts4p::Rng& rng) {
  if (distractors < 1) throw std::invalid_argument("contrastive_loss: need at least 1 distractor");
  if (kappa <= T(0)) throw std::invalid_argument("contrastive_loss: temperature must be > 0");
  const Tensor<T>& cv = tape.val(contexts);
  if (static_cast<int>(masked.size()) != cv.rows())
    throw std::invalid_argument("contrastive_loss: mask length mismatch");
  std::vector<int> mi;
  for (size_t t = 0; t < masked.size(); ++t)
    if (masked[t]) mi.push_back(static_cast<int>(t));
  if (mi.size() < 2) return std::nullopt;
  const int k = std::min<int>(distractors, static_cast<int>(mi.size()) - 1);

  std::vector<int> positions;
  std::vector<std::vector<int>> candidates;
  for (int t : mi) {
    std::vector<int> others;
    others.reserve(mi.size() - 1);
    for (int o : mi)
      if (o != t) others.push_back(o);
    for (int j = 0; j < k; ++j) {
      const int pick = j + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(others.size() - j)));
      std::swap(others[static_cast<size_t>(j)], others[static_cast<size_t>(pick)]);
    }
    std::vector<int> cand;
    cand.reserve(static_cast<size_t>(k) + 1);
    cand.push_back(t);
    cand.insert(cand.end(), others.begin(), others.begin() + k);
    positions.push_back(t);
    candidates.push_back(std::move(cand));
  }
  return contrastive_loss_with_candidates(tape, contexts, targets, positions, candidates, kappa);
}

template <typename T>
typename Tape<T>::Var aux_head_loss(Tape<T>& tape, typename Tape<T>::Var contexts,
                                    const AuxHead<T>& head, const LabelSeq& target) {
  if (head.objective == AuxObjective::kCtc) {
    if (!head.w_out.valid() || !head.b_out.valid())
      throw std::logic_error("aux head " + head.name + ": missing readout parameters");
    typename Tape<T>::Var logits =
        tape.add_rowvec(tape.matmul(contexts, head.w_out), head.b_out);
    return ctc_loss(tape, logits, target.ids);
  }
  if (!head.embed.valid() || !head.w_rec.valid() || !head.b_rec.valid() ||
      !head.w_joint_enc.valid() || !head.w_joint_pred.valid() || !head.b_joint.valid() ||
      !head.w_joint_out.valid())
    throw std::logic_error("aux head " + head.name + ": missing transducer parameters");
  const int u = static_cast<int>(target.ids.size());
  validate_labels(target.ids, head.vocab_size);

  std::vector<int> tokens;
  tokens.reserve(static_cast<size_t>(u) + 1);
  tokens.push_back(0);
  tokens.insert(tokens.end(), target.ids.begin(), target.ids.end());

  std::vector<typename Tape<T>::Var> states;
  typename Tape<T>::Var h{};
  for (int i = 0; i <= u; ++i) {
    typename Tape<T>::Var e = tape.gather_rows(head.embed, {tokens[static_cast<size_t>(i)]});
    typename Tape<T>::Var pre =
        h.valid() ? tape.add(tape.matmul(h, head.w_rec), e) : e;
    h = tape.tanh_op(tape.add_rowvec(pre, head.b_rec));
    states.push_back(h);
  }
  typename Tape<T>::Var pred = tape.concat_rows(states);

  typename Tape<T>::Var enc_proj = tape.matmul(contexts, head.w_joint_enc);
  typename Tape<T>::Var pred_proj = tape.matmul(pred, head.w_joint_pred);
  typename Tape<T>::Var joint =
      tape.tanh_op(tape.add_rowvec(tape.pairwise_sum(enc_proj, pred_proj), head.b_joint));
  typename Tape<T>::Var logits = tape.matmul(joint, head.w_joint_out);
  const int tn = tape.val(contexts).rows();
  typename Tape<T>::Var lattice = tape.reshape(logits, {tn, u + 1, head.vocab_size});
  return rnnt_loss(tape, lattice, target.ids);
}

template <typename T>
typename Tape<T>::Var aux_loss(Tape<T>& tape, typename Tape<T>::Var contexts,
                               const std::vector<AuxHead<T>>& heads,
                               const std::map<std::string, LabelSeq>& targets) {
  typename Tape<T>::Var acc{};
  for (const auto& head : heads) {
    auto it = targets.find(head.name);
    if (it == targets.end())
      throw std::invalid_argument("aux_loss: no target for enabled head " + head.name);
    typename Tape<T>::Var term = aux_head_loss(tape, contexts, head, it->second);
    acc = acc.valid() ? tape.add(acc, term) : term;
  }
  if (!acc.valid()) acc = tape.constant(Tensor<T>::scalar(T(0)));
  return acc;
}

template <typename T>
LossBreakdown<T> total_loss(Tape<T>& tape, const std::vector<ItemLosses<T>>& items, T lambda_aux) {
  if (items.empty()) throw std::invalid_argument("total_loss: empty batch");
  LossBreakdown<T> out;
  typename Tape<T>::Var main_sum{};
  typename Tape<T>::Var aux_sum{};
  for (const auto& item : items) {
    main_sum = main_sum.valid() ? tape.add(main_sum, item.j_main) : item.j_main;
    const double v = static_cast<double>(tape.val(item.j_main)[0]);
    if (item.synthesized) {
      ++out.n_synth;
      out.j_text += v;
      for (const auto& [name, var] : item.j_aux) {
        aux_sum = aux_sum.valid() ? tape.add(aux_sum, var) : var;
        out.j_aux_per_head[name] += static_cast<double>(tape.val(var)[0]);
      }
    } else {
      ++out.n_real;
      out.j_speech += v;
      if (!item.j_aux.empty())
        throw std::invalid_argument("total_loss: aux terms on a real (unlabeled) item");
    }
  }
  out.total = tape.scale(main_sum, T(1) / static_cast<T>(items.size()));
  if (aux_sum.valid()) {
    out.total = tape.add(out.total, tape.scale(aux_sum, lambda_aux / static_cast<T>(out.n_synth)));
    double aux_total = 0;
    for (auto& [name, v] : out.j_aux_per_head) {
      v /= out.n_synth;
      aux_total += v;
    }
    out.j_aux = aux_total;
  }
  if (out.n_real > 0) out.j_speech /= out.n_real;
  if (out.n_synth > 0) out.j_text /= out.n_synth;
  out.total_value = static_cast<double>(tape.val(out.total)[0]);
  if (!std::isfinite(out.total_value))
    throw std::runtime_error("total_loss: non-finite loss");
  return out;
}

#define TTS4P_LOSSES_INSTANTIATE(T)                                                               \
  template Tape<T>::Var ctc_loss<T>(Tape<T>&, Tape<T>::Var, const std::vector<int>&);             \
  template Tape<T>::Var rnnt_loss<T>(Tape<T>&, Tape<T>::Var, const std::vector<int>&);            \
  template Tape<T>::Var contrastive_loss_with_candidates<T>(                                      \
      Tape<T>&, Tape<T>::Var, Tape<T>::Var, const std::vector<int>&,                              \
      const std::vector<std::vector<int>>&, T);                                                   \
  template std::optional<Tape<T>::Var> contrastive_loss<T>(Tape<T>&, Tape<T>::Var, Tape<T>::Var,  \
                                                           const std::vector<uint8_t>&, int, T,   \
                                                           tts4p::Rng&);                          \
  template Tape<T>::Var aux_head_loss<T>(Tape<T>&, Tape<T>::Var, const AuxHead<T>&,               \
                                         const LabelSeq&);                                        \
  template Tape<T>::Var aux_loss<T>(Tape<T>&, Tape<T>::Var, const std::vector<AuxHead<T>>&,       \
                                    const std::map<std::string, LabelSeq>&);                      \
  template LossBreakdown<T> total_loss<T>(Tape<T>&, const std::vector<ItemLosses<T>>&, T);

TTS4P_LOSSES_INSTANTIATE(float)
TTS4P_LOSSES_INSTANTIATE(double)

#undef TTS4P_LOSSES_INSTANTIATE

}  // namespace tts4p::losses
