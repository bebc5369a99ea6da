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

// Times the serial reference kernels against their OpenMP variants and
// verifies the outputs are bit-identical.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "tts4p/kernels.hpp"
#include "tts4p/rng.hpp"
#include "tts4p/tensor.hpp"

namespace {

using tts4p::Rng;
using tts4p::numerics::Tensor;
namespace kernels = tts4p::numerics::kernels;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bit_identical(const Tensor<float>& a, const Tensor<float>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), static_cast<size_t>(a.size()) * sizeof(float)) == 0;
}

void report(const std::string& name, const std::string& shape, double serial_ms, double omp_ms,
            bool identical) {
  std::printf("%-16s %-24s serial %8.3f ms  parallel %8.3f ms  speedup %5.2fx  %s\n", name.c_str(),
              shape.c_str(), serial_ms, omp_ms, serial_ms / omp_ms,
              identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--reps" && i + 1 < argc) reps = std::atoi(argv[++i]);
  }
  Rng rng(7);
  bool all_ok = true;

  for (int n : {64, 128, 256}) {
    Tensor<float> a = Tensor<float>::randn({n, n}, rng);
    Tensor<float> b = Tensor<float>::randn({n, n}, rng);
    Tensor<float> cs({n, n}), cp({n, n});
    double ts = time_ms([&] { kernels::matmul_nn_serial(a.data(), b.data(), cs.data(), n, n, n); }, reps);
    double tp = time_ms([&] { kernels::matmul_nn_omp(a.data(), b.data(), cp.data(), n, n, n); }, reps);
    bool ok = bit_identical(cs, cp);
    all_ok = all_ok && ok;
    report("matmul_nn", std::to_string(n) + "x" + std::to_string(n), ts, tp, ok);
  }

  {
    auto s = kernels::conv2d_shape(400, 80, 1, 3, 3, 16, 2, 2);
    Tensor<float> x = Tensor<float>::randn({s.ti, s.fi, s.ci}, rng);
    Tensor<float> k = Tensor<float>::randn({s.kh, s.kw, s.ci, s.co}, rng);
    Tensor<float> ys({s.to, s.fo, s.co}), yp({s.to, s.fo, s.co});
    double ts = time_ms([&] { kernels::conv2d_fwd_serial(x.data(), k.data(), ys.data(), s); }, reps);
    double tp = time_ms([&] { kernels::conv2d_fwd_omp(x.data(), k.data(), yp.data(), s); }, reps);
    bool ok = bit_identical(ys, yp);
    all_ok = all_ok && ok;
    report("conv2d_fwd", "400x80x1 k3s2c16", ts, tp, ok);

    Tensor<float> dxs({s.ti, s.fi, s.ci}), dxp({s.ti, s.fi, s.ci});
    double bs = time_ms([&] { kernels::conv2d_bwd_x_serial(ys.data(), k.data(), dxs.data(), s); }, reps);
    double bp = time_ms([&] { kernels::conv2d_bwd_x_omp(ys.data(), k.data(), dxp.data(), s); }, reps);
    ok = bit_identical(dxs, dxp);
    all_ok = all_ok && ok;
    report("conv2d_bwd_x", "400x80x1 k3s2c16", bs, bp, ok);
  }

  {
    int t = 1000, d = 64, kw = 9;
    Tensor<float> x = Tensor<float>::randn({t, d}, rng);
    Tensor<float> k = Tensor<float>::randn({kw, d}, rng);
    Tensor<float> ys({t, d}), yp({t, d});
    double ts = time_ms([&] { kernels::dwconv1d_fwd_serial(x.data(), k.data(), ys.data(), t, d, kw); }, reps);
    double tp = time_ms([&] { kernels::dwconv1d_fwd_omp(x.data(), k.data(), yp.data(), t, d, kw); }, reps);
    bool ok = bit_identical(ys, yp);
    all_ok = all_ok && ok;
    report("dwconv1d_fwd", "1000x64 k9", ts, tp, ok);
  }

  if (!all_ok) {
    std::fprintf(stderr, "serial and parallel kernels diverged\n");
    return 1;
  }
  return 0;
}
