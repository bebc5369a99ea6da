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

#ifndef TTS4P_TAPE_HPP_
#define TTS4P_TAPE_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "tts4p/kernels.hpp"
#include "tts4p/tensor.hpp"

namespace tts4p::numerics {

// Reverse-mode differentiation record. Ops append nodes; backward() replays
// them in exact reverse order of recording and accumulates gradients
// additively. A Tape is single-owner: record and backward under exclusive
// access. Tensors handed to ops are treated as immutable values.
template <typename T>
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };
  using BackwardFn = std::function<void(Tape&, int out_id)>;

  Var leaf(Tensor<T> v, bool requires_grad = false) {
    return push(std::move(v), requires_grad, nullptr);
  }
  Var constant(Tensor<T> v) { return leaf(std::move(v), false); }

  const Tensor<T>& val(Var v) const { return nodes_[check(v)].value; }
  bool needs_grad(Var v) const { return nodes_[check(v)].requires_grad; }
  size_t size() const { return nodes_.size(); }

  // Registers an externally computed op (used by the DP losses, which carry
  // analytic backward passes).
  Var custom(Tensor<T> value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool rg = false;
    for (Var in : inputs) rg = rg || needs_grad(in);
    return push(std::move(value), rg, rg ? std::move(fn) : nullptr);
  }

  // ---- arithmetic ------------------------------------------------------

  Var add(Var a, Var b) {
    const Tensor<T>&va = val(a), &vb = val(b);
    if (!va.same_shape(vb))
      throw std::invalid_argument("add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    Tensor<T> out = va;
    for (int64_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    int ia = a.id, ib = b.id;
    return push(std::move(out), needs_grad(a) || needs_grad(b), [ia, ib](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      t.add_to(ia, g);
      t.add_to(ib, g);
    });
  }

  // x[R x C] + b[C] broadcast over rows.
  Var add_rowvec(Var x, Var b) {
    const Tensor<T>&vx = val(x), &vb = val(b);
    int c = vx.cols();
    if (vb.size() != c)
      throw std::invalid_argument("add_rowvec: bias size " + vb.shape_str() + " vs cols " + std::to_string(c));
    Tensor<T> out = vx;
    int r = vx.rows();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) out.at(i, j) += vb[j];
    int ix = x.id, ib = b.id;
    return push(std::move(out), needs_grad(x) || needs_grad(b), [ix, ib, r, c](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      t.add_to(ix, g);
      if (t.wants(ib)) {
        Tensor<T>& gb = t.acc(ib);
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) gb[j] += g[static_cast<int64_t>(i) * c + j];
      }
    });
  }

  Var mul(Var a, Var b) {
    const Tensor<T>&va = val(a), &vb = val(b);
    if (!va.same_shape(vb))
      throw std::invalid_argument("mul: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    Tensor<T> out = va;
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    int ia = a.id, ib = b.id;
    return push(std::move(out), needs_grad(a) || needs_grad(b), [ia, ib](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      const Tensor<T>&va = t.nodes_[ia].value, &vb = t.nodes_[ib].value;
      if (t.wants(ia)) {
        Tensor<T>& ga = t.acc(ia);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
      }
      if (t.wants(ib)) {
        Tensor<T>& gb = t.acc(ib);
        for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      }
    });
  }

  Var scale(Var a, T s) {
    Tensor<T> out = val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= s;
    int ia = a.id;
    return push(std::move(out), needs_grad(a), [ia, s](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      if (t.wants(ia)) {
        Tensor<T>& ga = t.acc(ia);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
      }
    });
  }

  Var sigmoid(Var a) {
    Tensor<T> out = val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-out[i]));
    int ia = a.id;
    return push(std::move(out), needs_grad(a), [ia](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      const Tensor<T>& y = t.nodes_[o].value;
      if (t.wants(ia)) {
        Tensor<T>& ga = t.acc(ia);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
      }
    });
  }

  Var tanh_op(Var a) {
    Tensor<T> out = val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    int ia = a.id;
    return push(std::move(out), needs_grad(a), [ia](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      const Tensor<T>& y = t.nodes_[o].value;
      if (t.wants(ia)) {
        Tensor<T>& ga = t.acc(ia);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
      }
    });
  }

  // x * sigmoid(x)
  Var swish(Var a) {
    const Tensor<T>& vx = val(a);
    Tensor<T> out = vx;
    for (int64_t i = 0; i < out.size(); ++i) {
      T s = T(1) / (T(1) + std::exp(-vx[i]));
      out[i] = vx[i] * s;
    }
    int ia = a.id;
    return push(std::move(out), needs_grad(a), [ia](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      const Tensor<T>& x = t.nodes_[ia].value;
      if (t.wants(ia)) {
        Tensor<T>& ga = t.acc(ia);
        for (int64_t i = 0; i < g.size(); ++i) {
          T s = T(1) / (T(1) + std::exp(-x[i]));
          ga[i] += g[i] * (s + x[i] * s * (T(1) - s));
        }
      }
    });
  }

  Var sum(Var a) {
    const Tensor<T>& va = val(a);
    T acc = T(0);
    for (int64_t i = 0; i < va.size(); ++i) acc += va[i];
    int ia = a.id;
    return push(Tensor<T>::scalar(acc), needs_grad(a), [ia](Tape& t, int o) {
      const T g = t.grad_out(o)[0];
      if (t.wants(ia)) {
        Tensor<T>& ga = t.acc(ia);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
      }
    });
  }

  // ---- linear algebra ---------------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor<T>&va = val(a), &vb = val(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0))
      throw std::invalid_argument("matmul: bad shapes " + va.shape_str() + " x " + vb.shape_str());
    int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Tensor<T> out({m, n});
    kernels::matmul_nn(va.data(), vb.data(), out.data(), m, k, n);
    int ia = a.id, ib = b.id;
    return push(std::move(out), needs_grad(a) || needs_grad(b), [ia, ib, m, k, n](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      const Tensor<T>&va = t.nodes_[ia].value, &vb = t.nodes_[ib].value;
      if (t.wants(ia)) {
        Tensor<T> da({m, k});
        kernels::matmul_nt(g.data(), vb.data(), da.data(), m, n, k);
        t.add_to(ia, da);
      }
      if (t.wants(ib)) {
        Tensor<T> db({k, n});
        kernels::matmul_tn(va.data(), g.data(), db.data(), m, k, n);
        t.add_to(ib, db);
      }
    });
  }

  // a[m x k] * b[n x k]^T
  Var matmul_nt(Var a, Var b) {
    const Tensor<T>&va = val(a), &vb = val(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(1))
      throw std::invalid_argument("matmul_nt: bad shapes " + va.shape_str() + " x " + vb.shape_str());
    int m = va.dim(0), k = va.dim(1), n = vb.dim(0);
    Tensor<T> out({m, n});
    kernels::matmul_nt(va.data(), vb.data(), out.data(), m, k, n);
    int ia = a.id, ib = b.id;
    return push(std::move(out), needs_grad(a) || needs_grad(b), [ia, ib, m, k, n](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);  // [m x n]
      const Tensor<T>&va = t.nodes_[ia].value, &vb = t.nodes_[ib].value;
      if (t.wants(ia)) {
        Tensor<T> da({m, k});
        kernels::matmul_nn(g.data(), vb.data(), da.data(), m, n, k);
        t.add_to(ia, da);
      }
      if (t.wants(ib)) {
        Tensor<T> db({n, k});
        kernels::matmul_tn(g.data(), va.data(), db.data(), m, n, k);
        t.add_to(ib, db);
      }
    });
  }

  // ---- row-wise nonlinear ------------------------------------------------

  // log-softmax over the last axis, max-shifted.
  Var log_softmax(Var a) {
    const Tensor<T>& va = val(a);
    auto [rows, v] = rows_lastdim(va);
    Tensor<T> out = va;
    for (int r = 0; r < rows; ++r) {
      T* p = out.data() + static_cast<int64_t>(r) * v;
      T mx = p[0];
      for (int j = 1; j < v; ++j) mx = std::max(mx, p[j]);
      T z = T(0);
      for (int j = 0; j < v; ++j) z += std::exp(p[j] - mx);
      T lz = std::log(z) + mx;
      for (int j = 0; j < v; ++j) p[j] -= lz;
    }
    int ia = a.id;
    return push(std::move(out), needs_grad(a), [ia, rows, v](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      const Tensor<T>& y = t.nodes_[o].value;
      if (!t.wants(ia)) return;
      Tensor<T>& ga = t.acc(ia);
      for (int r = 0; r < rows; ++r) {
        const int64_t off = static_cast<int64_t>(r) * v;
        T gs = T(0);
        for (int j = 0; j < v; ++j) gs += g[off + j];
        for (int j = 0; j < v; ++j) ga[off + j] += g[off + j] - std::exp(y[off + j]) * gs;
      }
    });
  }

  Var softmax(Var a) {
    const Tensor<T>& va = val(a);
    auto [rows, v] = rows_lastdim(va);
    Tensor<T> out = va;
    for (int r = 0; r < rows; ++r) {
      T* p = out.data() + static_cast<int64_t>(r) * v;
      T mx = p[0];
      for (int j = 1; j < v; ++j) mx = std::max(mx, p[j]);
      T z = T(0);
      for (int j = 0; j < v; ++j) {
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      for (int j = 0; j < v; ++j) p[j] /= z;
    }
    int ia = a.id;
    return push(std::move(out), needs_grad(a), [ia, rows, v](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      const Tensor<T>& y = t.nodes_[o].value;
      if (!t.wants(ia)) return;
      Tensor<T>& ga = t.acc(ia);
      for (int r = 0; r < rows; ++r) {
        const int64_t off = static_cast<int64_t>(r) * v;
        T dot = T(0);
        for (int j = 0; j < v; ++j) dot += g[off + j] * y[off + j];
        for (int j = 0; j < v; ++j) ga[off + j] += y[off + j] * (g[off + j] - dot);
      }
    });
  }

  // Per-row normalization over the last axis, then affine with gain/bias.
  Var layer_norm(Var x, Var gain, Var bias, T eps) {
    if (eps <= T(0)) throw std::invalid_argument("layer_norm: eps must be > 0");
    const Tensor<T>& vx = val(x);
    auto [rows, d] = rows_lastdim(vx);
    const Tensor<T>&vg = val(gain), &vb = val(bias);
    if (vg.size() != d || vb.size() != d)
      throw std::invalid_argument("layer_norm: gain/bias must match last dim");
    Tensor<T> out = vx;
    for (int r = 0; r < rows; ++r) {
      T* p = out.data() + static_cast<int64_t>(r) * d;
      T mean = T(0);
      for (int j = 0; j < d; ++j) mean += p[j];
      mean /= d;
      T var = T(0);
      for (int j = 0; j < d; ++j) var += (p[j] - mean) * (p[j] - mean);
      var /= d;
      T inv = T(1) / std::sqrt(var + eps);
      for (int j = 0; j < d; ++j) p[j] = vg[j] * ((p[j] - mean) * inv) + vb[j];
    }
    int ix = x.id, ig = gain.id, ib = bias.id;
    return push(std::move(out), needs_grad(x) || needs_grad(gain) || needs_grad(bias),
                [ix, ig, ib, rows, d, eps](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      const Tensor<T>& vx = t.nodes_[ix].value;
      const Tensor<T>& vg = t.nodes_[ig].value;
      std::vector<T> xhat(static_cast<size_t>(d));
      for (int r = 0; r < rows; ++r) {
        const int64_t off = static_cast<int64_t>(r) * d;
        T mean = T(0);
        for (int j = 0; j < d; ++j) mean += vx[off + j];
        mean /= d;
        T var = T(0);
        for (int j = 0; j < d; ++j) var += (vx[off + j] - mean) * (vx[off + j] - mean);
        var /= d;
        T inv = T(1) / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j) xhat[static_cast<size_t>(j)] = (vx[off + j] - mean) * inv;
        if (t.wants(ig)) {
          Tensor<T>& gg = t.acc(ig);
          for (int j = 0; j < d; ++j) gg[j] += g[off + j] * xhat[static_cast<size_t>(j)];
        }
        if (t.wants(ib)) {
          Tensor<T>& gb = t.acc(ib);
          for (int j = 0; j < d; ++j) gb[j] += g[off + j];
        }
        if (t.wants(ix)) {
          Tensor<T>& gx = t.acc(ix);
          T sum_dxh = T(0), sum_dxh_xh = T(0);
          for (int j = 0; j < d; ++j) {
            T dxh = g[off + j] * vg[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xhat[static_cast<size_t>(j)];
          }
          for (int j = 0; j < d; ++j) {
            T dxh = g[off + j] * vg[j];
            gx[off + j] += inv * (dxh - sum_dxh / d - xhat[static_cast<size_t>(j)] * sum_dxh_xh / d);
          }
        }
      }
    });
  }

  // Rows scaled to unit L2 norm (cosine-similarity prep).
  Var l2_normalize_rows(Var x, T eps = T(1e-8)) {
    const Tensor<T>& vx = val(x);
    auto [rows, d] = rows_lastdim(vx);
    Tensor<T> out = vx;
    for (int r = 0; r < rows; ++r) {
      T* p = out.data() + static_cast<int64_t>(r) * d;
      T nsq = T(0);
      for (int j = 0; j < d; ++j) nsq += p[j] * p[j];
      T inv = T(1) / std::sqrt(nsq + eps);
      for (int j = 0; j < d; ++j) p[j] *= inv;
    }
    int ix = x.id;
    return push(std::move(out), needs_grad(x), [ix, rows, d, eps](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      const Tensor<T>& vx = t.nodes_[ix].value;
      if (!t.wants(ix)) return;
      Tensor<T>& gx = t.acc(ix);
      for (int r = 0; r < rows; ++r) {
        const int64_t off = static_cast<int64_t>(r) * d;
        T nsq = eps;
        for (int j = 0; j < d; ++j) nsq += vx[off + j] * vx[off + j];
        T inv = T(1) / std::sqrt(nsq);
        T dot = T(0);
        for (int j = 0; j < d; ++j) dot += g[off + j] * vx[off + j];
        for (int j = 0; j < d; ++j)
          gx[off + j] += inv * g[off + j] - vx[off + j] * dot * inv * inv * inv;
      }
    });
  }

  // ---- convolution -------------------------------------------------------

  // x[T x F x C], kernel[kh x kw x Cin x Cout], same-padding, ceil output.
  Var conv2d(Var x, Var k, int stride_t, int stride_f) {
    const Tensor<T>&vx = val(x), &vk = val(k);
    if (vx.rank() != 3 || vk.rank() != 4)
      throw std::invalid_argument("conv2d: expected rank-3 input and rank-4 kernel");
    if (vk.dim(0) < 1 || vk.dim(1) < 1) throw std::invalid_argument("conv2d: zero-size kernel");
    if (vk.dim(2) != vx.dim(2))
      throw std::invalid_argument("conv2d: channel mismatch");
    if (stride_t < 1 || stride_f < 1) throw std::invalid_argument("conv2d: bad stride");
    auto s = kernels::conv2d_shape(vx.dim(0), vx.dim(1), vx.dim(2), vk.dim(0), vk.dim(1),
                                   vk.dim(3), stride_t, stride_f);
    Tensor<T> out({s.to, s.fo, s.co});
    kernels::conv2d_fwd(vx.data(), vk.data(), out.data(), s);
    int ix = x.id, ik = k.id;
    return push(std::move(out), needs_grad(x) || needs_grad(k), [ix, ik, s](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      const Tensor<T>&vx = t.nodes_[ix].value, &vk = t.nodes_[ik].value;
      if (t.wants(ix)) {
        Tensor<T> dx(vx.shape());
        kernels::conv2d_bwd_x(g.data(), vk.data(), dx.data(), s);
        t.add_to(ix, dx);
      }
      if (t.wants(ik)) {
        Tensor<T> dk(vk.shape());
        kernels::conv2d_bwd_k(g.data(), vx.data(), dk.data(), s);
        t.add_to(ik, dk);
      }
    });
  }

  // x[T x D], kernel[kw x D]; depthwise along time with same padding.
  Var depthwise_conv1d(Var x, Var k) {
    const Tensor<T>&vx = val(x), &vk = val(k);
    if (vx.rank() != 2 || vk.rank() != 2 || vk.dim(1) != vx.dim(1))
      throw std::invalid_argument("depthwise_conv1d: bad shapes");
    int tn = vx.dim(0), d = vx.dim(1), kw = vk.dim(0);
    Tensor<T> out({tn, d});
    kernels::dwconv1d_fwd(vx.data(), vk.data(), out.data(), tn, d, kw);
    int ix = x.id, ik = k.id;
    return push(std::move(out), needs_grad(x) || needs_grad(k), [ix, ik, tn, d, kw](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      const Tensor<T>&vx = t.nodes_[ix].value, &vk = t.nodes_[ik].value;
      if (t.wants(ix)) {
        Tensor<T> dx({tn, d});
        kernels::dwconv1d_bwd_x(g.data(), vk.data(), dx.data(), tn, d, kw);
        t.add_to(ix, dx);
      }
      if (t.wants(ik)) {
        Tensor<T> dk({kw, d});
        kernels::dwconv1d_bwd_k(g.data(), vx.data(), dk.data(), tn, d, kw);
        t.add_to(ik, dk);
      }
    });
  }

  // ---- shape / selection ---------------------------------------------------

  Var reshape(Var x, std::vector<int> shape) {
    const Tensor<T>& vx = val(x);
    Tensor<T> out(shape);
    if (out.size() != vx.size()) throw std::invalid_argument("reshape: size mismatch");
    for (int64_t i = 0; i < vx.size(); ++i) out[i] = vx[i];
    int ix = x.id;
    return push(std::move(out), needs_grad(x), [ix](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      if (t.wants(ix)) {
        Tensor<T>& gx = t.acc(ix);
        for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
    });
  }

  Var gather_rows(Var x, std::vector<int> idx) {
    const Tensor<T>& vx = val(x);
    int c = vx.cols(), r = vx.rows();
    for (int i : idx)
      if (i < 0 || i >= r) throw std::invalid_argument("gather_rows: index out of range");
    Tensor<T> out({static_cast<int>(idx.size()), c});
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < c; ++j) out.at(static_cast<int>(i), j) = vx.at(idx[i], j);
    int ix = x.id;
    return push(std::move(out), needs_grad(x), [ix, idx = std::move(idx), c](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      if (!t.wants(ix)) return;
      Tensor<T>& gx = t.acc(ix);
      for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < c; ++j) gx[static_cast<int64_t>(idx[i]) * c + j] += g[static_cast<int64_t>(i) * c + j];
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    int c = val(parts[0]).cols();
    int r = 0;
    bool rg = false;
    for (Var p : parts) {
      if (val(p).cols() != c) throw std::invalid_argument("concat_rows: column mismatch");
      r += val(p).rows();
      rg = rg || needs_grad(p);
    }
    Tensor<T> out({r, c});
    int row = 0;
    std::vector<int> ids, heights;
    for (Var p : parts) {
      const Tensor<T>& vp = val(p);
      for (int i = 0; i < vp.rows(); ++i)
        for (int j = 0; j < c; ++j) out.at(row + i, j) = vp.at(i, j);
      ids.push_back(p.id);
      heights.push_back(vp.rows());
      row += vp.rows();
    }
    return push(std::move(out), rg, [ids = std::move(ids), heights = std::move(heights), c](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      int row = 0;
      for (size_t p = 0; p < ids.size(); ++p) {
        if (t.wants(ids[p])) {
          Tensor<T>& gp = t.acc(ids[p]);
          for (int i = 0; i < heights[p]; ++i)
            for (int j = 0; j < c; ++j) gp[static_cast<int64_t>(i) * c + j] += g[static_cast<int64_t>(row + i) * c + j];
        }
        row += heights[p];
      }
    });
  }

  Var slice_cols(Var x, int start, int len) {
    const Tensor<T>& vx = val(x);
    int r = vx.rows(), c = vx.cols();
    if (start < 0 || len < 1 || start + len > c)
      throw std::invalid_argument("slice_cols: range out of bounds");
    Tensor<T> out({r, len});
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < len; ++j) out.at(i, j) = vx.at(i, start + j);
    int ix = x.id;
    return push(std::move(out), needs_grad(x), [ix, start, len, r, c](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      if (!t.wants(ix)) return;
      Tensor<T>& gx = t.acc(ix);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < len; ++j) gx[static_cast<int64_t>(i) * c + start + j] += g[static_cast<int64_t>(i) * len + j];
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    int r = val(parts[0]).rows();
    int c = 0;
    bool rg = false;
    for (Var p : parts) {
      if (val(p).rows() != r) throw std::invalid_argument("concat_cols: row mismatch");
      c += val(p).cols();
      rg = rg || needs_grad(p);
    }
    Tensor<T> out({r, c});
    int col = 0;
    std::vector<int> ids, widths;
    for (Var p : parts) {
      const Tensor<T>& vp = val(p);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < vp.cols(); ++j) out.at(i, col + j) = vp.at(i, j);
      ids.push_back(p.id);
      widths.push_back(vp.cols());
      col += vp.cols();
    }
    return push(std::move(out), rg, [ids = std::move(ids), widths = std::move(widths), r, c](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      int col = 0;
      for (size_t p = 0; p < ids.size(); ++p) {
        if (t.wants(ids[p])) {
          Tensor<T>& gp = t.acc(ids[p]);
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < widths[p]; ++j) gp[static_cast<int64_t>(i) * widths[p] + j] += g[static_cast<int64_t>(i) * c + col + j];
        }
        col += widths[p];
      }
    });
  }

  // out[(i*B + j), :] = a[i, :] + b[j, :]; the transducer joint expansion.
  Var pairwise_sum(Var a, Var b) {
    const Tensor<T>&va = val(a), &vb = val(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(1))
      throw std::invalid_argument("pairwise_sum: bad shapes");
    int an = va.dim(0), bn = vb.dim(0), d = va.dim(1);
    Tensor<T> out({an * bn, d});
    for (int i = 0; i < an; ++i)
      for (int j = 0; j < bn; ++j)
        for (int q = 0; q < d; ++q) out.at(i * bn + j, q) = va.at(i, q) + vb.at(j, q);
    int ia = a.id, ib = b.id;
    return push(std::move(out), needs_grad(a) || needs_grad(b), [ia, ib, an, bn, d](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      if (t.wants(ia)) {
        Tensor<T>& ga = t.acc(ia);
        for (int i = 0; i < an; ++i)
          for (int j = 0; j < bn; ++j)
            for (int q = 0; q < d; ++q) ga[static_cast<int64_t>(i) * d + q] += g[(static_cast<int64_t>(i) * bn + j) * d + q];
      }
      if (t.wants(ib)) {
        Tensor<T>& gb = t.acc(ib);
        for (int i = 0; i < an; ++i)
          for (int j = 0; j < bn; ++j)
            for (int q = 0; q < d; ++q) gb[static_cast<int64_t>(j) * d + q] += g[(static_cast<int64_t>(i) * bn + j) * d + q];
      }
    });
  }

  Var pick(Var x, int64_t flat_index) {
    const Tensor<T>& vx = val(x);
    if (flat_index < 0 || flat_index >= vx.size())
      throw std::invalid_argument("pick: index out of range");
    int ix = x.id;
    return push(Tensor<T>::scalar(vx[flat_index]), needs_grad(x), [ix, flat_index](Tape& t, int o) {
      const T g = t.grad_out(o)[0];
      if (t.wants(ix)) t.acc(ix)[flat_index] += g;
    });
  }

  // Replaces rows where mask is true with the given row vector [1 x d].
  Var replace_rows(Var x, const std::vector<uint8_t>& mask, Var row) {
    const Tensor<T>&vx = val(x), &vr = val(row);
    int r = vx.rows(), c = vx.cols();
    if (static_cast<int>(mask.size()) != r)
      throw std::invalid_argument("replace_rows: mask length mismatch");
    if (vr.size() != c) throw std::invalid_argument("replace_rows: row width mismatch");
    Tensor<T> out = vx;
    for (int i = 0; i < r; ++i)
      if (mask[static_cast<size_t>(i)])
        for (int j = 0; j < c; ++j) out.at(i, j) = vr[j];
    int ix = x.id, ir = row.id;
    return push(std::move(out), needs_grad(x) || needs_grad(row), [ix, ir, mask, r, c](Tape& t, int o) {
      const Tensor<T>& g = t.grad_out(o);
      if (t.wants(ix)) {
        Tensor<T>& gx = t.acc(ix);
        for (int i = 0; i < r; ++i)
          if (!mask[static_cast<size_t>(i)])
            for (int j = 0; j < c; ++j) gx[static_cast<int64_t>(i) * c + j] += g[static_cast<int64_t>(i) * c + j];
      }
      if (t.wants(ir)) {
        Tensor<T>& gr = t.acc(ir);
        for (int i = 0; i < r; ++i)
          if (mask[static_cast<size_t>(i)])
            for (int j = 0; j < c; ++j) gr[j] += g[static_cast<int64_t>(i) * c + j];
      }
    });
  }

  // Value passes through, gradient does not.
  Var detach(Var x) { return push(val(x), false, nullptr); }

  // ---- backward -----------------------------------------------------------

  void backward(Var loss) {
    const Tensor<T>& lv = val(loss);
    if (lv.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    grads_.assign(nodes_.size(), Tensor<T>{});
    grads_[static_cast<size_t>(loss.id)] = Tensor<T>::scalar(T(1));
    for (int i = loss.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<size_t>(i)];
      if (n.backward && !grads_[static_cast<size_t>(i)].empty()) n.backward(*this, i);
    }
    ran_backward_ = true;
  }

  // Gradient accumulated at a node; null if none reached it.
  const Tensor<T>* grad(Var v) const {
    if (!ran_backward_) throw std::logic_error("grad: backward() has not run");
    const Tensor<T>& g = grads_[check(v)];
    return g.empty() ? nullptr : &g;
  }

  // ---- helpers available to custom backward fns ----------------------------

  const Tensor<T>& grad_out(int id) const { return grads_[static_cast<size_t>(id)]; }
  bool wants(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  Tensor<T>& acc(int id) {
    Tensor<T>& g = grads_[static_cast<size_t>(id)];
    if (g.empty()) g = Tensor<T>(nodes_[static_cast<size_t>(id)].value.shape());
    return g;
  }
  void add_to(int id, const Tensor<T>& d) {
    if (!wants(id)) return;
    Tensor<T>& g = acc(id);
    for (int64_t i = 0; i < d.size(); ++i) g[i] += d[i];
  }
  const Tensor<T>& value_of(int id) const { return nodes_[static_cast<size_t>(id)].value; }

 private:
  struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    BackwardFn backward;
  };

  size_t check(Var v) const {
    if (v.id < 0 || static_cast<size_t>(v.id) >= nodes_.size())
      throw std::invalid_argument("Tape: invalid Var");
    return static_cast<size_t>(v.id);
  }

  static std::pair<int, int> rows_lastdim(const Tensor<T>& t) {
    if (t.rank() < 1) throw std::invalid_argument("op needs rank >= 1");
    int v = t.dim(t.rank() - 1);
    int rows = static_cast<int>(t.size() / v);
    return {rows, v};
  }

  Var push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), requires_grad, requires_grad ? std::move(fn) : nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  bool ran_backward_ = false;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace tts4p::numerics

#endif  // TTS4P_TAPE_HPP_
