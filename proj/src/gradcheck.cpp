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

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tts4p::numerics {

namespace {

double eval_at(const GradCase& c, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape;
  std::vector<Tape<double>::Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t, false));
  Tape<double>::Var loss = c.build(tape, leaves);
  const Tensor<double>& lv = tape.val(loss);
  if (lv.size() != 1) throw std::logic_error("grad case " + c.name + ": loss not scalar");
  return lv[0];
}

}  // namespace

double check_gradients(const GradCase& c, uint64_t seed, double h) {
  Rng rng(seed);
  std::vector<Tensor<double>> inputs = c.make_inputs(rng);

  Tape<double> tape;
  std::vector<Tape<double>::Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t, true));
  Tape<double>::Var loss = c.build(tape, leaves);
  tape.backward(loss);

  std::vector<Tensor<double>> grads;
  grads.reserve(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double>* g = tape.grad(leaves[i]);
    grads.push_back(g ? *g : Tensor<double>(inputs[i].shape()));
  }

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (int64_t j = 0; j < inputs[i].size(); ++j) {
      const double orig = inputs[i][j];
      inputs[i][j] = orig + h;
      const double fp = eval_at(c, inputs);
      inputs[i][j] = orig - h;
      const double fm = eval_at(c, inputs);
      inputs[i][j] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double g = grads[i][j];
      const double rel = std::abs(fd - g) / std::max({1.0, std::abs(fd), std::abs(g)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

std::vector<GradReport> run_gradient_suite(const std::vector<GradCase>& cases, int n_seeds,
                                           double tol, uint64_t seed0, double h) {
  std::vector<GradReport> reports;
  reports.reserve(cases.size());
  for (const auto& c : cases) {
    GradReport r;
    r.name = c.name;
    r.n_seeds = n_seeds;
    for (int s = 0; s < n_seeds; ++s)
      r.max_rel_err = std::max(r.max_rel_err, check_gradients(c, seed0 + static_cast<uint64_t>(s), h));
    r.pass = r.max_rel_err <= tol;
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace tts4p::numerics
