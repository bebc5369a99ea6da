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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "tts4p/losses.hpp"
#include "tts4p/rng.hpp"
#include "tts4p/tape.hpp"

using tts4p::Rng;
using namespace tts4p::losses;
using tts4p::numerics::Tensor;
using tts4p::testing::ctc_enumeration;
using tts4p::testing::rnnt_enumeration;

namespace {

using Tp = Tape<double>;

double ctc_value(const Tensor<double>& logits, const std::vector<int>& labels) {
  Tp tape;
  auto lg = tape.leaf(logits, false);
  return tape.val(ctc_loss(tape, lg, labels))[0];
}

double rnnt_value(const Tensor<double>& logits, const std::vector<int>& labels) {
  Tp tape;
  auto lg = tape.leaf(logits, false);
  return tape.val(rnnt_loss(tape, lg, labels))[0];
}

Tensor<double> randn(std::vector<int> shape, Rng& rng, double stddev) {
  Tensor<double> t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
  return t;
}

}  // namespace

TEST_CASE("ctc with uniform frames gives ln 3 and ln 9") {
  CHECK(ctc_value(Tensor<double>({2, 3}), {1}) == doctest::Approx(std::log(3.0)).epsilon(1e-9));
  CHECK(ctc_value(Tensor<double>({2, 3}), {1, 2}) == doctest::Approx(std::log(9.0)).epsilon(1e-9));
}

TEST_CASE("ctc rejects targets that cannot fit") {
  Tp tape;
  auto lg = tape.leaf(Tensor<double>({2, 3}), false);
  CHECK_THROWS_AS(ctc_loss(tape, lg, {1, 1}), InfeasibleAlignment);
  CHECK_THROWS_AS(ctc_loss(tape, lg, {1, 2, 1}), InfeasibleAlignment);
}

TEST_CASE("ctc validates label ids") {
  Tp tape;
  auto lg = tape.leaf(Tensor<double>({4, 3}), false);
  CHECK_THROWS_AS(ctc_loss(tape, lg, {0}), std::invalid_argument);
  CHECK_THROWS_AS(ctc_loss(tape, lg, {3}), std::invalid_argument);
  auto bad = tape.leaf(Tensor<double>({4}), false);
  CHECK_THROWS_AS(ctc_loss(tape, bad, {1}), std::invalid_argument);
}

TEST_CASE("ctc matches brute-force enumeration") {
  Rng rng(101);
  for (int tn = 1; tn <= 6; ++tn) {
    for (int vn = 2; vn <= 4; ++vn) {
      for (int draw = 0; draw < 20; ++draw) {
        Tensor<double> logits = randn({tn, vn}, rng, 2.0);
        int u = static_cast<int>(rng.uniform_int(4));
        std::vector<int> labels;
        for (int i = 0; i < u; ++i)
          labels.push_back(1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(vn - 1))));
        int repeats = 0;
        for (size_t i = 1; i < labels.size(); ++i)
          if (labels[i] == labels[i - 1]) ++repeats;
        if (tn < u + repeats) {
          Tp tape;
          auto lg = tape.leaf(logits, false);
          CHECK_THROWS_AS(ctc_loss(tape, lg, labels), InfeasibleAlignment);
          continue;
        }
        double dp = ctc_value(logits, labels);
        double ref = ctc_enumeration(logits, labels);
        CHECK(std::abs(dp - ref) <= 1e-6);
      }
    }
  }
}

TEST_CASE("ctc ignores an appended pure-blank frame") {
  Rng rng(17);
  Tensor<double> logits = randn({4, 3}, rng, 1.5);
  std::vector<int> labels{1, 2};
  double base = ctc_value(logits, labels);
  Tensor<double> extended({5, 3});
  for (int64_t i = 0; i < logits.size(); ++i) extended[i] = logits[i];
  extended.at(4, 0) = 60.0;
  extended.at(4, 1) = -60.0;
  extended.at(4, 2) = -60.0;
  CHECK(std::abs(ctc_value(extended, labels) - base) <= 1e-6);
}

TEST_CASE("transducer two-path lattice gives ln 4") {
  CHECK(rnnt_value(Tensor<double>({2, 2, 2}), {1}) == doctest::Approx(std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("transducer with empty target sums blank log-probs") {
  Rng rng(19);
  Tensor<double> logits = randn({3, 1, 3}, rng, 1.0);
  auto lp = tts4p::testing::oracle_log_probs(logits, 3);
  double expect = -(lp[0] + lp[3] + lp[6]);
  CHECK(rnnt_value(logits, {}) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("transducer rejects mismatched lattice shapes") {
  Tp tape;
  auto lg = tape.leaf(Tensor<double>({2, 2, 3}), false);
  CHECK_THROWS_AS(rnnt_loss(tape, lg, {1, 2}), std::invalid_argument);
  auto r2 = tape.leaf(Tensor<double>({2, 3}), false);
  CHECK_THROWS_AS(rnnt_loss(tape, r2, {1}), std::invalid_argument);
}

TEST_CASE("transducer matches lattice enumeration") {
  Rng rng(102);
  for (int tn = 1; tn <= 4; ++tn) {
    for (int u = 0; u <= 3; ++u) {
      for (int vn = 2; vn <= 4; ++vn) {
        for (int draw = 0; draw < 10; ++draw) {
          Tensor<double> logits = randn({tn, u + 1, vn}, rng, 2.0);
          std::vector<int> labels;
          for (int i = 0; i < u; ++i)
            labels.push_back(1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(vn - 1))));
          double dp = rnnt_value(logits, labels);
          double ref = rnnt_enumeration(logits, labels);
          CHECK(std::abs(dp - ref) <= 1e-6);
        }
      }
    }
  }
}

TEST_CASE("contrastive loss hits the closed-form hand case") {
  Tp tape;
  Tensor<double> contexts({1, 4});
  contexts.at(0, 0) = 1.0;
  Tensor<double> targets({3, 4});
  targets.at(0, 0) = 1.0;
  targets.at(1, 1) = 1.0;
  targets.at(2, 2) = 1.0;
  auto c = tape.leaf(contexts, false);
  auto q = tape.leaf(targets, false);
  auto loss = contrastive_loss_with_candidates<double>(tape, c, q, {0}, {{0, 1, 2}}, 0.1);
  double expect = std::log1p(2.0 * std::exp(-10.0));
  CHECK(std::abs(tape.val(loss)[0] - expect) <= 1e-9);
}

TEST_CASE("contrastive loss with indistinguishable candidates is ln(K+1)") {
  Tp tape;
  Rng rng(7);
  Tensor<double> contexts = randn({4, 5}, rng, 1.0);
  Tensor<double> targets({4, 5});
  for (int r = 0; r < 4; ++r)
    for (int j = 0; j < 5; ++j) targets.at(r, j) = (j == 2) ? 3.0 : 0.5;
  auto c = tape.leaf(contexts, false);
  auto q = tape.leaf(targets, false);
  auto loss = contrastive_loss_with_candidates<double>(tape, c, q, {0, 1}, {{0, 1, 2, 3}, {1, 0, 2, 3}}, 0.2);
  CHECK(tape.val(loss)[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("contrastive loss is invariant to uniform positive scaling") {
  Rng rng(23);
  Tensor<double> contexts = randn({6, 4}, rng, 1.0);
  Tensor<double> targets = randn({6, 4}, rng, 1.0);
  std::vector<uint8_t> masked{1, 0, 1, 1, 0, 1};
  auto run = [&](double s) {
    Tp tape;
    Tensor<double> cs = contexts, qs = targets;
    for (int64_t i = 0; i < cs.size(); ++i) cs[i] *= s;
    for (int64_t i = 0; i < qs.size(); ++i) qs[i] *= s;
    auto c = tape.leaf(cs, false);
    auto q = tape.leaf(qs, false);
    Rng sample(99);
    auto loss = contrastive_loss<double>(tape, c, q, masked, 2, 0.5, sample);
    REQUIRE(loss.has_value());
    return tape.val(*loss)[0];
  };
  CHECK(std::abs(run(1.0) - run(3.7)) <= 1e-5);
  CHECK(std::abs(run(1.0) - run(0.02)) <= 1e-5);
}

TEST_CASE("contrastive loss skips utterances with under two masked frames") {
  Tp tape;
  Rng rng(5);
  auto c = tape.leaf(randn({4, 3}, rng, 1.0), false);
  auto q = tape.leaf(randn({4, 3}, rng, 1.0), false);
  Rng sample(1);
  CHECK(!contrastive_loss<double>(tape, c, q, {0, 1, 0, 0}, 2, 0.5, sample).has_value());
  CHECK(!contrastive_loss<double>(tape, c, q, {0, 0, 0, 0}, 2, 0.5, sample).has_value());
  auto two = contrastive_loss<double>(tape, c, q, {1, 1, 0, 0}, 5, 0.5, sample);
  CHECK(two.has_value());
  CHECK_THROWS_AS(contrastive_loss<double>(tape, c, q, {1, 1, 0, 0}, 0, 0.5, sample),
                  std::invalid_argument);
  CHECK_THROWS_AS(contrastive_loss<double>(tape, c, q, {1, 1, 0, 0}, 2, 0.0, sample),
                  std::invalid_argument);
}

TEST_CASE("contrastive sampling is deterministic for a fixed seed") {
  Rng rng(31);
  Tensor<double> contexts = randn({8, 4}, rng, 1.0);
  Tensor<double> targets = randn({8, 4}, rng, 1.0);
  std::vector<uint8_t> masked{1, 1, 0, 1, 1, 0, 1, 1};
  auto run = [&] {
    Tp tape;
    auto c = tape.leaf(contexts, false);
    auto q = tape.leaf(targets, false);
    Rng sample(424242);
    return tape.val(*contrastive_loss<double>(tape, c, q, masked, 3, 0.3, sample))[0];
  };
  CHECK(run() == run());
}

TEST_CASE("single-candidate scoring has zero loss") {
  Tp tape;
  Rng rng(3);
  auto c = tape.leaf(randn({2, 3}, rng, 1.0), false);
  auto q = tape.leaf(randn({2, 3}, rng, 1.0), false);
  auto loss = contrastive_loss_with_candidates<double>(tape, c, q, {0, 1}, {{0}, {1}}, 0.1);
  CHECK(tape.val(loss)[0] == doctest::Approx(0.0));
}

TEST_CASE("aux loss sums enabled heads and validates targets") {
  Tp tape;
  Rng rng(41);
  auto contexts = tape.leaf(randn({5, 3}, rng, 1.0), false);

  AuxHead<double> ph;
  ph.name = "phoneme";
  ph.vocab_size = 4;
  ph.objective = AuxObjective::kCtc;
  ph.w_out = tape.leaf(randn({3, 4}, rng, 0.5), false);
  ph.b_out = tape.leaf(randn({4}, rng, 0.1), false);

  AuxHead<double> wp = ph;
  wp.name = "wordpiece";
  wp.vocab_size = 5;
  wp.w_out = tape.leaf(randn({3, 5}, rng, 0.5), false);
  wp.b_out = tape.leaf(randn({5}, rng, 0.1), false);

  std::map<std::string, LabelSeq> targets;
  targets["phoneme"] = LabelSeq{{1, 2}, "phoneme"};
  targets["wordpiece"] = LabelSeq{{3, 1, 4}, "wordpiece"};

  double a = tape.val(aux_head_loss(tape, contexts, ph, targets["phoneme"]))[0];
  double b = tape.val(aux_head_loss(tape, contexts, wp, targets["wordpiece"]))[0];
  double both = tape.val(aux_loss<double>(tape, contexts, {ph, wp}, targets))[0];
  CHECK(both == doctest::Approx(a + b).epsilon(1e-12));

  CHECK(tape.val(aux_loss<double>(tape, contexts, {}, targets))[0] == 0.0);
  std::map<std::string, LabelSeq> missing;
  CHECK_THROWS_AS(aux_loss<double>(tape, contexts, {ph}, missing), std::invalid_argument);
}

TEST_CASE("transducer aux head evaluates through the recurrent predictor") {
  Tp tape;
  Rng rng(43);
  auto contexts = tape.leaf(randn({3, 3}, rng, 1.0), false);
  AuxHead<double> head;
  head.name = "wordpiece";
  head.vocab_size = 4;
  head.objective = AuxObjective::kRnnt;
  head.embed = tape.leaf(randn({4, 3}, rng, 0.5), false);
  head.w_rec = tape.leaf(randn({3, 3}, rng, 0.4), false);
  head.b_rec = tape.leaf(randn({3}, rng, 0.1), false);
  head.w_joint_enc = tape.leaf(randn({3, 3}, rng, 0.5), false);
  head.w_joint_pred = tape.leaf(randn({3, 3}, rng, 0.5), false);
  head.b_joint = tape.leaf(randn({3}, rng, 0.1), false);
  head.w_joint_out = tape.leaf(randn({3, 4}, rng, 0.5), false);
  auto loss = aux_head_loss(tape, contexts, head, LabelSeq{{1, 3}, "wordpiece"});
  CHECK(std::isfinite(tape.val(loss)[0]));
  CHECK(tape.val(loss)[0] > 0.0);
}

TEST_CASE("total loss mixes branches by item origin") {
  Tp tape;
  auto mk = [&](double v) { return tape.leaf(Tensor<double>::scalar(v), false); };

  SUBCASE("all real items average the speech branch") {
    std::vector<ItemLosses<double>> items(3);
    items[0].j_main = mk(1.0);
    items[1].j_main = mk(2.0);
    items[2].j_main = mk(6.0);
    auto out = total_loss<double>(tape, items, 1.0);
    CHECK(out.total_value == doctest::Approx(3.0));
    CHECK(out.j_speech == doctest::Approx(3.0));
    CHECK(out.j_text == 0.0);
    CHECK(out.n_real == 3);
    CHECK(out.n_synth == 0);
  }

  SUBCASE("all synthesized with zero aux weight averages the text branch") {
    std::vector<ItemLosses<double>> items(2);
    items[0].synthesized = true;
    items[0].j_main = mk(2.0);
    items[0].j_aux.emplace_back("phoneme", mk(10.0));
    items[1].synthesized = true;
    items[1].j_main = mk(4.0);
    items[1].j_aux.emplace_back("phoneme", mk(20.0));
    auto out = total_loss<double>(tape, items, 0.0);
    CHECK(out.total_value == doctest::Approx(3.0));
    CHECK(out.j_text == doctest::Approx(3.0));
    CHECK(out.j_aux == doctest::Approx(15.0));
  }

  SUBCASE("mixed batch matches the hand-computed weighted mean") {
    std::vector<ItemLosses<double>> items(2);
    items[0].j_main = mk(2.0);
    items[1].synthesized = true;
    items[1].j_main = mk(4.0);
    items[1].j_aux.emplace_back("phoneme", mk(3.0));
    auto out = total_loss<double>(tape, items, 0.5);
    CHECK(out.total_value == doctest::Approx(0.5 * 2.0 + 0.5 * 4.0 + 0.5 * 3.0));
    CHECK(out.j_speech == doctest::Approx(2.0));
    CHECK(out.j_text == doctest::Approx(4.0));
  }

  SUBCASE("item order does not change the total") {
    Rng rng(9);
    std::vector<ItemLosses<double>> items(5);
    for (int i = 0; i < 5; ++i) {
      items[static_cast<size_t>(i)].synthesized = (i % 2 == 1);
      items[static_cast<size_t>(i)].j_main = mk(rng.uniform(0.5, 3.0));
      if (i % 2 == 1)
        items[static_cast<size_t>(i)].j_aux.emplace_back("phoneme", mk(rng.uniform(0.5, 3.0)));
    }
    auto base = total_loss<double>(tape, items, 0.8);
    std::vector<ItemLosses<double>> shuffled{items[3], items[0], items[4], items[2], items[1]};
    auto perm = total_loss<double>(tape, shuffled, 0.8);
    CHECK(std::abs(base.total_value - perm.total_value) <= 1e-12);
  }

  SUBCASE("empty batches and mislabeled aux terms are rejected") {
    CHECK_THROWS_AS(total_loss<double>(tape, {}, 1.0), std::invalid_argument);
    std::vector<ItemLosses<double>> items(1);
    items[0].j_main = mk(1.0);
    items[0].j_aux.emplace_back("phoneme", mk(1.0));
    CHECK_THROWS_AS(total_loss<double>(tape, items, 1.0), std::invalid_argument);
  }
}
