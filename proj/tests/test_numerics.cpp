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
#include <cmath>
#include <cstdio>
#include <cstring>

#include "doctest.h"
#include "tts4p/gradcheck.hpp"
#include "tts4p/kernels.hpp"
#include "tts4p/params.hpp"
#include "tts4p/rng.hpp"
#include "tts4p/tape.hpp"
#include "tts4p/tensor.hpp"

using tts4p::Rng;
using namespace tts4p::numerics;

TEST_CASE("tensor shape and storage") {
  Tensor<float> t({2, 3});
  CHECK(t.rank() == 2);
  CHECK(t.size() == 6);
  for (int64_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0f);
  t.at(1, 2) = 5.0f;
  CHECK(t[5] == 5.0f);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor<float>({2, -1}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, {1.0f}), std::invalid_argument);
}

TEST_CASE("rng determinism and stream splitting") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  Rng c1 = c.split(1), c2 = c.split(2);
  CHECK(c1.next_u64() != c2.next_u64());
  Rng d(43);
  CHECK(Rng(42).next_u64() != d.next_u64());
  Rng e(7);
  int counts[4] = {0, 0, 0, 0};
  for (int i = 0; i < 4000; ++i) ++counts[e.uniform_int(4)];
  for (int k = 0; k < 4; ++k) CHECK(counts[k] > 800);
}

TEST_CASE("matmul kernels match a naive reference and each other") {
  Rng rng(1);
  for (auto [m, k, n] : {std::tuple{3, 4, 5}, {8, 8, 8}, {1, 7, 2}, {13, 5, 9}}) {
    Tensor<double> a = Tensor<double>::randn({m, k}, rng);
    Tensor<double> b = Tensor<double>::randn({k, n}, rng);
    Tensor<double> ref({m, n});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
        ref.at(i, j) = s;
      }
    Tensor<double> cs({m, n}), cp({m, n});
    kernels::matmul_nn_serial(a.data(), b.data(), cs.data(), m, k, n);
    kernels::matmul_nn_omp(a.data(), b.data(), cp.data(), m, k, n);
    for (int64_t i = 0; i < ref.size(); ++i) {
      CHECK(cs[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      CHECK(cs[i] == cp[i]);
    }
    Tensor<double> bt({n, k});
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < n; ++j) bt.at(j, i) = b.at(i, j);
    Tensor<double> cnt({m, n}), cnt_p({m, n});
    kernels::matmul_nt_serial(a.data(), bt.data(), cnt.data(), m, k, n);
    kernels::matmul_nt_omp(a.data(), bt.data(), cnt_p.data(), m, k, n);
    for (int64_t i = 0; i < ref.size(); ++i) {
      CHECK(cnt[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      CHECK(cnt[i] == cnt_p[i]);
    }
    Tensor<double> at({k, m});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j) at.at(j, i) = a.at(i, j);
    Tensor<double> ctn({m, n}), ctn_p({m, n});
    kernels::matmul_tn_serial(at.data(), b.data(), ctn.data(), k, m, n);
    kernels::matmul_tn_omp(at.data(), b.data(), ctn_p.data(), k, m, n);
    for (int64_t i = 0; i < ref.size(); ++i) {
      CHECK(ctn[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      CHECK(ctn[i] == ctn_p[i]);
    }
  }
}

TEST_CASE("conv2d matches a direct padded reference") {
  Rng rng(2);
  auto s = kernels::conv2d_shape(7, 6, 2, 3, 3, 4, 2, 2);
  Tensor<double> x = Tensor<double>::randn({s.ti, s.fi, s.ci}, rng);
  Tensor<double> k = Tensor<double>::randn({s.kh, s.kw, s.ci, s.co}, rng);
  Tensor<double> y({s.to, s.fo, s.co}), yp({s.to, s.fo, s.co});
  kernels::conv2d_fwd_serial(x.data(), k.data(), y.data(), s);
  kernels::conv2d_fwd_omp(x.data(), k.data(), yp.data(), s);
  for (int t = 0; t < s.to; ++t)
    for (int f = 0; f < s.fo; ++f)
      for (int c = 0; c < s.co; ++c) {
        double ref = 0;
        for (int a = 0; a < s.kh; ++a)
          for (int b = 0; b < s.kw; ++b)
            for (int ci = 0; ci < s.ci; ++ci) {
              int ti = t * s.st + a - s.pad_top;
              int fi = f * s.sf + b - s.pad_left;
              if (ti < 0 || ti >= s.ti || fi < 0 || fi >= s.fi) continue;
              ref += x[(static_cast<int64_t>(ti) * s.fi + fi) * s.ci + ci] *
                     k[((static_cast<int64_t>(a) * s.kw + b) * s.ci + ci) * s.co + c];
            }
        int64_t idx = (static_cast<int64_t>(t) * s.fo + f) * s.co + c;
        CHECK(y[idx] == doctest::Approx(ref).epsilon(1e-12));
        CHECK(y[idx] == yp[idx]);
      }
}

TEST_CASE("conv2d output length uses ceil division") {
  auto s1 = kernels::conv2d_shape(100, 80, 1, 3, 3, 4, 2, 2);
  CHECK(s1.to == 50);
  CHECK(s1.fo == 40);
  auto s2 = kernels::conv2d_shape(s1.to, s1.fo, 4, 3, 3, 4, 2, 2);
  CHECK(s2.to == 25);
  auto s3 = kernels::conv2d_shape(101, 80, 1, 3, 3, 4, 2, 2);
  CHECK(s3.to == 51);
}

TEST_CASE("dwconv1d kernels agree") {
  Rng rng(3);
  int t = 11, d = 5, kw = 3;
  Tensor<double> x = Tensor<double>::randn({t, d}, rng);
  Tensor<double> k = Tensor<double>::randn({kw, d}, rng);
  Tensor<double> ys({t, d}), yp({t, d});
  kernels::dwconv1d_fwd_serial(x.data(), k.data(), ys.data(), t, d, kw);
  kernels::dwconv1d_fwd_omp(x.data(), k.data(), yp.data(), t, d, kw);
  int pad = (kw - 1) / 2;
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j) {
      double ref = 0;
      for (int a = 0; a < kw; ++a) {
        int src = i + a - pad;
        if (src < 0 || src >= t) continue;
        ref += x.at(src, j) * k.at(a, j);
      }
      CHECK(ys.at(i, j) == doctest::Approx(ref).epsilon(1e-12));
      CHECK(ys.at(i, j) == yp.at(i, j));
    }
}

TEST_CASE("dispatch mode switch keeps results identical") {
  Rng rng(4);
  int m = 17, k = 9, n = 13;
  Tensor<float> a = Tensor<float>::randn({m, k}, rng);
  Tensor<float> b = Tensor<float>::randn({k, n}, rng);
  Tensor<float> c1({m, n}), c2({m, n});
  kernels::set_mode(kernels::Mode::kSerial);
  kernels::matmul_nn(a.data(), b.data(), c1.data(), m, k, n);
  kernels::set_mode(kernels::Mode::kParallel);
  kernels::matmul_nn(a.data(), b.data(), c2.data(), m, k, n);
  kernels::set_mode(kernels::Mode::kAuto);
  CHECK(std::memcmp(c1.data(), c2.data(), sizeof(float) * static_cast<size_t>(m) * n) == 0);
}

TEST_CASE("gradient of a plain sum is all ones") {
  Tape<double> tape;
  auto w = tape.leaf(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}), true);
  auto loss = tape.sum(w);
  tape.backward(loss);
  const Tensor<double>* g = tape.grad(w);
  REQUIRE(g != nullptr);
  for (int64_t i = 0; i < g->size(); ++i) CHECK((*g)[i] == 1.0);
}

TEST_CASE("gradient of sum of squares is 2w") {
  Tape<double> tape;
  auto w = tape.leaf(Tensor<double>({2}, {1, 2}), true);
  auto loss = tape.sum(tape.mul(w, w));
  tape.backward(loss);
  const Tensor<double>* g = tape.grad(w);
  REQUIRE(g != nullptr);
  CHECK((*g)[0] == doctest::Approx(2.0));
  CHECK((*g)[1] == doctest::Approx(4.0));
}

TEST_CASE("detach blocks gradient flow but passes values") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({3}, {1, 2, 3}), true);
  auto d = tape.detach(x);
  CHECK(tape.val(d)[1] == 2.0);
  auto loss = tape.sum(tape.mul(x, d));
  tape.backward(loss);
  const Tensor<double>* g = tape.grad(x);
  REQUIRE(g != nullptr);
  CHECK((*g)[0] == 1.0);
  CHECK((*g)[1] == 2.0);
  CHECK((*g)[2] == 3.0);

  Tape<double> tape2;
  auto y = tape2.leaf(Tensor<double>({2}, {1, 1}), true);
  auto loss2 = tape2.sum(tape2.detach(y));
  tape2.backward(loss2);
  CHECK(tape2.grad(y) == nullptr);
}

TEST_CASE("backward rejects non-scalar roots") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({2, 2}), true);
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("log_softmax is stable for extreme inputs") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({1, 2}, {1000.0, 0.0}), false);
  auto y = tape.log_softmax(x);
  CHECK(std::isfinite(tape.val(y)[0]));
  CHECK(tape.val(y)[0] == doctest::Approx(0.0).epsilon(1e-9));
  auto x2 = tape.leaf(Tensor<double>({1, 3}, {1e6, -1e6, 0.0}), false);
  auto y2 = tape.log_softmax(x2);
  for (int i = 0; i < 3; ++i) {
    CHECK(!std::isnan(tape.val(y2)[i]));
    CHECK(tape.val(y2)[i] <= 0.0);
  }
}

TEST_CASE("layer_norm normalizes rows before the affine") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({1, 3}, {1, 2, 3}), false);
  auto g = tape.leaf(Tensor<double>({3}, {1, 1, 1}), false);
  auto b = tape.leaf(Tensor<double>({3}, {0, 0, 0}), false);
  auto y = tape.layer_norm(x, g, b, 1e-12);
  double denom = std::sqrt(2.0 / 3.0 + 1e-12);
  CHECK(tape.val(y)[0] == doctest::Approx(-1.0 / denom).epsilon(1e-9));
  CHECK(tape.val(y)[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(tape.val(y)[2] == doctest::Approx(1.0 / denom).epsilon(1e-9));
}

TEST_CASE("checkpoint round-trips bit-exactly with partitions") {
  Rng rng(5);
  ModelParams p;
  Tensor<float> a = Tensor<float>::randn({3, 4}, rng);
  a[0] = -0.0f;
  a[1] = 1e-38f;
  std::memset(&a[2], 0xff, sizeof(float));
  p.add("enc.w", a, Partition::kEncoder);
  p.add("aux.w", Tensor<float>::randn({2, 2, 2}, rng), Partition::kAuxDecoder);
  p.add("dec.b", Tensor<float>::randn({7}, rng), Partition::kFinetuneDecoder);
  const std::string path = "ckpt_roundtrip_test.bin";
  save_checkpoint(p, path);
  ModelParams q = load_checkpoint(path);
  REQUIRE(q.size() == p.size());
  for (const auto& [name, e] : p.entries()) {
    REQUIRE(q.contains(name));
    const Tensor<float>& r = q.at(name);
    REQUIRE(r.same_shape(e.value));
    CHECK(std::memcmp(r.data(), e.value.data(), sizeof(float) * static_cast<size_t>(r.size())) == 0);
    CHECK(q.partition_of(name) == e.partition);
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint("does_not_exist.ckpt"), std::runtime_error);

  FILE* f = std::fopen("ckpt_bad_magic.bin", "wb");
  std::fwrite("NOPE", 1, 4, f);
  std::fclose(f);
  CHECK_THROWS_AS(load_checkpoint("ckpt_bad_magic.bin"), std::runtime_error);
  std::remove("ckpt_bad_magic.bin");
}

TEST_CASE("model params reject duplicates and missing names") {
  ModelParams p;
  p.add("w", Tensor<float>({2}), Partition::kEncoder);
  CHECK_THROWS_AS(p.add("w", Tensor<float>({2}), Partition::kEncoder), std::invalid_argument);
  CHECK_THROWS_AS(p.at("missing"), std::out_of_range);
  CHECK(p.names(Partition::kEncoder).size() == 1);
  CHECK(p.names(Partition::kAuxDecoder).empty());
}

TEST_CASE("finite differences agree with tape gradients on every case") {
  auto cases = standard_gradient_cases();
  REQUIRE(!cases.empty());
  auto reports = run_gradient_suite(cases, 3, 1e-4, 11);
  for (const auto& r : reports) {
    INFO(r.name, " max rel err ", r.max_rel_err);
    CHECK(r.pass);
  }
}
