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

#include "tts4p/kernels.hpp"

#include <algorithm>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tts4p::numerics::kernels {

namespace {
Mode g_mode = Mode::kAuto;

inline bool go_parallel(int64_t flops) {
  switch (g_mode) {
    case Mode::kSerial:
      return false;
    case Mode::kParallel:
      return true;
    case Mode::kAuto:
    default:
#ifdef _OPENMP
      return flops >= (1 << 16) && omp_get_max_threads() > 1;
#else
      return false;
#endif
  }
}
}  // namespace

void set_mode(Mode m) { g_mode = m; }
Mode mode() { return g_mode; }

Conv2dShape conv2d_shape(int ti, int fi, int ci, int kh, int kw, int co, int st, int sf) {
  Conv2dShape s;
  s.ti = ti; s.fi = fi; s.ci = ci;
  s.kh = kh; s.kw = kw; s.co = co;
  s.st = st; s.sf = sf;
  s.to = (ti + st - 1) / st;
  s.fo = (fi + sf - 1) / sf;
  int pad_t = std::max((s.to - 1) * st + kh - ti, 0);
  int pad_f = std::max((s.fo - 1) * sf + kw - fi, 0);
  s.pad_top = pad_t / 2;
  s.pad_left = pad_f / 2;
  return s;
}

// ---- matmul -----------------------------------------------------------

template <typename T>
static inline void mm_nn_row(const T* a, const T* b, T* c, int i, int k, int n) {
  T* ci = c + static_cast<int64_t>(i) * n;
  const T* ai = a + static_cast<int64_t>(i) * k;
  for (int j = 0; j < n; ++j) ci[j] = T(0);
  for (int p = 0; p < k; ++p) {
    const T aip = ai[p];
    const T* bp = b + static_cast<int64_t>(p) * n;
    for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
  }
}

template <typename T>
void matmul_nn_serial(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) mm_nn_row(a, b, c, i, k, n);
}

template <typename T>
void matmul_nn_omp(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) mm_nn_row(a, b, c, i, k, n);
}

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, int m, int k, int n) {
  if (go_parallel(2LL * m * k * n))
    matmul_nn_omp(a, b, c, m, k, n);
  else
    matmul_nn_serial(a, b, c, m, k, n);
}

template <typename T>
static inline void mm_nt_row(const T* a, const T* b, T* c, int i, int k, int n) {
  T* ci = c + static_cast<int64_t>(i) * n;
  const T* ai = a + static_cast<int64_t>(i) * k;
  for (int j = 0; j < n; ++j) {
    const T* bj = b + static_cast<int64_t>(j) * k;
    T acc = T(0);
    for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
    ci[j] = acc;
  }
}

template <typename T>
void matmul_nt_serial(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) mm_nt_row(a, b, c, i, k, n);
}

template <typename T>
void matmul_nt_omp(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) mm_nt_row(a, b, c, i, k, n);
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int m, int k, int n) {
  if (go_parallel(2LL * m * k * n))
    matmul_nt_omp(a, b, c, m, k, n);
  else
    matmul_nt_serial(a, b, c, m, k, n);
}

template <typename T>
static inline void mm_tn_row(const T* a, const T* b, T* c, int i, int m, int k, int n) {
  // c[i, :] with i indexing the k dimension of a.
  T* ci = c + static_cast<int64_t>(i) * n;
  for (int j = 0; j < n; ++j) ci[j] = T(0);
  for (int p = 0; p < m; ++p) {
    const T api = a[static_cast<int64_t>(p) * k + i];
    const T* bp = b + static_cast<int64_t>(p) * n;
    for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
  }
}

template <typename T>
void matmul_tn_serial(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < k; ++i) mm_tn_row(a, b, c, i, m, k, n);
}

template <typename T>
void matmul_tn_omp(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < k; ++i) mm_tn_row(a, b, c, i, m, k, n);
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int m, int k, int n) {
  if (go_parallel(2LL * m * k * n))
    matmul_tn_omp(a, b, c, m, k, n);
  else
    matmul_tn_serial(a, b, c, m, k, n);
}

// ---- conv2d -----------------------------------------------------------

template <typename T>
static inline void conv2d_out_row(const T* x, const T* k, T* y, const Conv2dShape& s, int to) {
  for (int fo = 0; fo < s.fo; ++fo) {
    T* yo = y + (static_cast<int64_t>(to) * s.fo + fo) * s.co;
    for (int co = 0; co < s.co; ++co) yo[co] = T(0);
    const int t0 = to * s.st - s.pad_top;
    const int f0 = fo * s.sf - s.pad_left;
    for (int a = 0; a < s.kh; ++a) {
      const int t = t0 + a;
      if (t < 0 || t >= s.ti) continue;
      for (int b = 0; b < s.kw; ++b) {
        const int f = f0 + b;
        if (f < 0 || f >= s.fi) continue;
        const T* xp = x + (static_cast<int64_t>(t) * s.fi + f) * s.ci;
        const T* kp = k + ((static_cast<int64_t>(a) * s.kw + b) * s.ci) * s.co;
        for (int ci = 0; ci < s.ci; ++ci) {
          const T xv = xp[ci];
          const T* kc = kp + static_cast<int64_t>(ci) * s.co;
          for (int co = 0; co < s.co; ++co) yo[co] += xv * kc[co];
        }
      }
    }
  }
}

template <typename T>
void conv2d_fwd_serial(const T* x, const T* k, T* y, const Conv2dShape& s) {
  for (int to = 0; to < s.to; ++to) conv2d_out_row(x, k, y, s, to);
}

template <typename T>
void conv2d_fwd_omp(const T* x, const T* k, T* y, const Conv2dShape& s) {
#pragma omp parallel for schedule(static)
  for (int to = 0; to < s.to; ++to) conv2d_out_row(x, k, y, s, to);
}

template <typename T>
void conv2d_fwd(const T* x, const T* k, T* y, const Conv2dShape& s) {
  if (go_parallel(2LL * s.to * s.fo * s.co * s.kh * s.kw * s.ci))
    conv2d_fwd_omp(x, k, y, s);
  else
    conv2d_fwd_serial(x, k, y, s);
}

// Gather formulation: each input cell sums contributions from the outputs
// it feeds, so parallel rows never race.
template <typename T>
static inline void conv2d_dx_row(const T* dy, const T* k, T* dx, const Conv2dShape& s, int t) {
  for (int f = 0; f < s.fi; ++f) {
    T* dxp = dx + (static_cast<int64_t>(t) * s.fi + f) * s.ci;
    for (int ci = 0; ci < s.ci; ++ci) dxp[ci] = T(0);
    for (int a = 0; a < s.kh; ++a) {
      const int tt = t + s.pad_top - a;
      if (tt < 0 || tt % s.st != 0) continue;
      const int to = tt / s.st;
      if (to >= s.to) continue;
      for (int b = 0; b < s.kw; ++b) {
        const int ff = f + s.pad_left - b;
        if (ff < 0 || ff % s.sf != 0) continue;
        const int fo = ff / s.sf;
        if (fo >= s.fo) continue;
        const T* dyp = dy + (static_cast<int64_t>(to) * s.fo + fo) * s.co;
        const T* kp = k + ((static_cast<int64_t>(a) * s.kw + b) * s.ci) * s.co;
        for (int ci = 0; ci < s.ci; ++ci) {
          const T* kc = kp + static_cast<int64_t>(ci) * s.co;
          T acc = T(0);
          for (int co = 0; co < s.co; ++co) acc += dyp[co] * kc[co];
          dxp[ci] += acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_bwd_x_serial(const T* dy, const T* k, T* dx, const Conv2dShape& s) {
  for (int t = 0; t < s.ti; ++t) conv2d_dx_row(dy, k, dx, s, t);
}

template <typename T>
void conv2d_bwd_x_omp(const T* dy, const T* k, T* dx, const Conv2dShape& s) {
#pragma omp parallel for schedule(static)
  for (int t = 0; t < s.ti; ++t) conv2d_dx_row(dy, k, dx, s, t);
}

template <typename T>
void conv2d_bwd_x(const T* dy, const T* k, T* dx, const Conv2dShape& s) {
  if (go_parallel(2LL * s.ti * s.fi * s.ci * s.kh * s.kw * s.co))
    conv2d_bwd_x_omp(dy, k, dx, s);
  else
    conv2d_bwd_x_serial(dy, k, dx, s);
}

template <typename T>
static inline void conv2d_dk_cell(const T* dy, const T* x, T* dk, const Conv2dShape& s,
                                  int a, int b) {
  T* dkp = dk + (static_cast<int64_t>(a) * s.kw + b) * s.ci * s.co;
  for (int i = 0; i < s.ci * s.co; ++i) dkp[i] = T(0);
  for (int to = 0; to < s.to; ++to) {
    const int t = to * s.st - s.pad_top + a;
    if (t < 0 || t >= s.ti) continue;
    for (int fo = 0; fo < s.fo; ++fo) {
      const int f = fo * s.sf - s.pad_left + b;
      if (f < 0 || f >= s.fi) continue;
      const T* xp = x + (static_cast<int64_t>(t) * s.fi + f) * s.ci;
      const T* dyp = dy + (static_cast<int64_t>(to) * s.fo + fo) * s.co;
      for (int ci = 0; ci < s.ci; ++ci) {
        T* dkc = dkp + static_cast<int64_t>(ci) * s.co;
        const T xv = xp[ci];
        for (int co = 0; co < s.co; ++co) dkc[co] += xv * dyp[co];
      }
    }
  }
}

template <typename T>
void conv2d_bwd_k_serial(const T* dy, const T* x, T* dk, const Conv2dShape& s) {
  for (int a = 0; a < s.kh; ++a)
    for (int b = 0; b < s.kw; ++b) conv2d_dk_cell(dy, x, dk, s, a, b);
}

template <typename T>
void conv2d_bwd_k_omp(const T* dy, const T* x, T* dk, const Conv2dShape& s) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int a = 0; a < s.kh; ++a)
    for (int b = 0; b < s.kw; ++b) conv2d_dk_cell(dy, x, dk, s, a, b);
}

template <typename T>
void conv2d_bwd_k(const T* dy, const T* x, T* dk, const Conv2dShape& s) {
  if (go_parallel(2LL * s.to * s.fo * s.co * s.kh * s.kw * s.ci))
    conv2d_bwd_k_omp(dy, x, dk, s);
  else
    conv2d_bwd_k_serial(dy, x, dk, s);
}

// ---- depthwise conv1d -------------------------------------------------

template <typename T>
static inline void dw_fwd_row(const T* x, const T* k, T* y, int t, int tn, int d, int kw,
                              int pad) {
  T* yt = y + static_cast<int64_t>(t) * d;
  for (int c = 0; c < d; ++c) yt[c] = T(0);
  for (int a = 0; a < kw; ++a) {
    const int tt = t + a - pad;
    if (tt < 0 || tt >= tn) continue;
    const T* xt = x + static_cast<int64_t>(tt) * d;
    const T* ka = k + static_cast<int64_t>(a) * d;
    for (int c = 0; c < d; ++c) yt[c] += xt[c] * ka[c];
  }
}

template <typename T>
void dwconv1d_fwd_serial(const T* x, const T* k, T* y, int t, int d, int kw) {
  const int pad = (kw - 1) / 2;
  for (int i = 0; i < t; ++i) dw_fwd_row(x, k, y, i, t, d, kw, pad);
}

template <typename T>
void dwconv1d_fwd_omp(const T* x, const T* k, T* y, int t, int d, int kw) {
  const int pad = (kw - 1) / 2;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < t; ++i) dw_fwd_row(x, k, y, i, t, d, kw, pad);
}

template <typename T>
void dwconv1d_fwd(const T* x, const T* k, T* y, int t, int d, int kw) {
  if (go_parallel(2LL * t * d * kw))
    dwconv1d_fwd_omp(x, k, y, t, d, kw);
  else
    dwconv1d_fwd_serial(x, k, y, t, d, kw);
}

template <typename T>
static inline void dw_dx_row(const T* dy, const T* k, T* dx, int t, int tn, int d, int kw,
                             int pad) {
  T* dxt = dx + static_cast<int64_t>(t) * d;
  for (int c = 0; c < d; ++c) dxt[c] = T(0);
  for (int a = 0; a < kw; ++a) {
    const int to = t - a + pad;
    if (to < 0 || to >= tn) continue;
    const T* dyt = dy + static_cast<int64_t>(to) * d;
    const T* ka = k + static_cast<int64_t>(a) * d;
    for (int c = 0; c < d; ++c) dxt[c] += dyt[c] * ka[c];
  }
}

template <typename T>
void dwconv1d_bwd_x_serial(const T* dy, const T* k, T* dx, int t, int d, int kw) {
  const int pad = (kw - 1) / 2;
  for (int i = 0; i < t; ++i) dw_dx_row(dy, k, dx, i, t, d, kw, pad);
}

template <typename T>
void dwconv1d_bwd_x_omp(const T* dy, const T* k, T* dx, int t, int d, int kw) {
  const int pad = (kw - 1) / 2;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < t; ++i) dw_dx_row(dy, k, dx, i, t, d, kw, pad);
}

template <typename T>
void dwconv1d_bwd_x(const T* dy, const T* k, T* dx, int t, int d, int kw) {
  if (go_parallel(2LL * t * d * kw))
    dwconv1d_bwd_x_omp(dy, k, dx, t, d, kw);
  else
    dwconv1d_bwd_x_serial(dy, k, dx, t, d, kw);
}

template <typename T>
static inline void dw_dk_row(const T* dy, const T* x, T* dk, int a, int tn, int d, int kw,
                             int pad) {
  T* dka = dk + static_cast<int64_t>(a) * d;
  for (int c = 0; c < d; ++c) dka[c] = T(0);
  for (int t = 0; t < tn; ++t) {
    const int tt = t + a - pad;
    if (tt < 0 || tt >= tn) continue;
    const T* dyt = dy + static_cast<int64_t>(t) * d;
    const T* xt = x + static_cast<int64_t>(tt) * d;
    for (int c = 0; c < d; ++c) dka[c] += dyt[c] * xt[c];
  }
}

template <typename T>
void dwconv1d_bwd_k_serial(const T* dy, const T* x, T* dk, int t, int d, int kw) {
  const int pad = (kw - 1) / 2;
  for (int a = 0; a < kw; ++a) dw_dk_row(dy, x, dk, a, t, d, kw, pad);
}

template <typename T>
void dwconv1d_bwd_k_omp(const T* dy, const T* x, T* dk, int t, int d, int kw) {
  const int pad = (kw - 1) / 2;
#pragma omp parallel for schedule(static)
  for (int a = 0; a < kw; ++a) dw_dk_row(dy, x, dk, a, t, d, kw, pad);
}

template <typename T>
void dwconv1d_bwd_k(const T* dy, const T* x, T* dk, int t, int d, int kw) {
  if (go_parallel(2LL * t * d * kw))
    dwconv1d_bwd_k_omp(dy, x, dk, t, d, kw);
  else
    dwconv1d_bwd_k_serial(dy, x, dk, t, d, kw);
}

#define TTS4P_INSTANTIATE(T)                                                       \
  template void matmul_nn_serial<T>(const T*, const T*, T*, int, int, int);       \
  template void matmul_nn_omp<T>(const T*, const T*, T*, int, int, int);          \
  template void matmul_nn<T>(const T*, const T*, T*, int, int, int);              \
  template void matmul_nt_serial<T>(const T*, const T*, T*, int, int, int);       \
  template void matmul_nt_omp<T>(const T*, const T*, T*, int, int, int);          \
  template void matmul_nt<T>(const T*, const T*, T*, int, int, int);              \
  template void matmul_tn_serial<T>(const T*, const T*, T*, int, int, int);       \
  template void matmul_tn_omp<T>(const T*, const T*, T*, int, int, int);          \
  template void matmul_tn<T>(const T*, const T*, T*, int, int, int);              \
  template void conv2d_fwd_serial<T>(const T*, const T*, T*, const Conv2dShape&); \
  template void conv2d_fwd_omp<T>(const T*, const T*, T*, const Conv2dShape&);    \
  template void conv2d_fwd<T>(const T*, const T*, T*, const Conv2dShape&);        \
  template void conv2d_bwd_x_serial<T>(const T*, const T*, T*,                    \
                                       const Conv2dShape&);                       \
  template void conv2d_bwd_x_omp<T>(const T*, const T*, T*, const Conv2dShape&);  \
  template void conv2d_bwd_x<T>(const T*, const T*, T*, const Conv2dShape&);      \
  template void conv2d_bwd_k_serial<T>(const T*, const T*, T*,                    \
                                       const Conv2dShape&);                       \
  template void conv2d_bwd_k_omp<T>(const T*, const T*, T*, const Conv2dShape&);  \
  template void conv2d_bwd_k<T>(const T*, const T*, T*, const Conv2dShape&);      \
  template void dwconv1d_fwd_serial<T>(const T*, const T*, T*, int, int, int);    \
  template void dwconv1d_fwd_omp<T>(const T*, const T*, T*, int, int, int);       \
  template void dwconv1d_fwd<T>(const T*, const T*, T*, int, int, int);           \
  template void dwconv1d_bwd_x_serial<T>(const T*, const T*, T*, int, int, int);  \
  template void dwconv1d_bwd_x_omp<T>(const T*, const T*, T*, int, int, int);     \
  template void dwconv1d_bwd_x<T>(const T*, const T*, T*, int, int, int);         \
  template void dwconv1d_bwd_k_serial<T>(const T*, const T*, T*, int, int, int);  \
  template void dwconv1d_bwd_k_omp<T>(const T*, const T*, T*, int, int, int);     \
  template void dwconv1d_bwd_k<T>(const T*, const T*, T*, int, int, int);

TTS4P_INSTANTIATE(float)
TTS4P_INSTANTIATE(double)
#undef TTS4P_INSTANTIATE

}  // namespace tts4p::numerics::kernels
