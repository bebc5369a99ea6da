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

#ifndef TTS4P_GRADCHECK_HPP_
#define TTS4P_GRADCHECK_HPP_

#include <functional>
#include <string>
#include <vector>

#include "tts4p/rng.hpp"
#include "tts4p/tape.hpp"
#include "tts4p/tensor.hpp"

namespace tts4p::numerics {

// One differentiable computation to verify: draw inputs, then build a scalar
// loss from leaves placed on the tape. The builder must be a pure function of
// the leaf values so the same graph can be re-evaluated at perturbed points.
struct GradCase {
  std::string name;
  std::function<std::vector<Tensor<double>>(Rng&)> make_inputs;
  std::function<Tape<double>::Var(Tape<double>&, const std::vector<Tape<double>::Var>&)> build;
};

struct GradReport {
  std::string name;
  double max_rel_err = 0.0;
  int n_seeds = 0;
  bool pass = false;
};

// Central finite differences against tape gradients at every input element.
// Returns the worst relative error, where rel = |fd - g| / max(1, |fd|, |g|).
double check_gradients(const GradCase& c, uint64_t seed, double h = 1e-4);

// All computations the library differentiates: each tape primitive plus the
// composite losses, encoder block included.
std::vector<GradCase> standard_gradient_cases();

// Contributed by the losses and encoder modules.
void append_loss_gradient_cases(std::vector<GradCase>& cases);
void append_encoder_gradient_cases(std::vector<GradCase>& cases);

std::vector<GradReport> run_gradient_suite(const std::vector<GradCase>& cases, int n_seeds,
                                           double tol = 1e-4, uint64_t seed0 = 1,
                                           double h = 1e-4);

}  // namespace tts4p::numerics

#endif  // TTS4P_GRADCHECK_HPP_
