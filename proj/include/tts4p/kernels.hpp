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

#ifndef TTS4P_KERNELS_HPP_
#define TTS4P_KERNELS_HPP_

// Hot inner loops for the tensor ops. Every kernel has a serial reference
// and an OpenMP variant that parallelizes over independent output elements
// with an identical inner summation order, so the two are bit-identical for
// any thread count. tools/bench_kernels compares them.

namespace tts4p::numerics::kernels {

enum class Mode { kAuto, kSerial, kParallel };

void set_mode(Mode m);
Mode mode();

struct Conv2dShape {
  int ti, fi, ci;      // input time, freq, channels
  int kh, kw, co;      // kernel height (time), width (freq), out channels
  int st, sf;          // strides
  int to, fo;          // output time, freq (ceil(in/stride))
  int pad_top, pad_left;
};

// Same-padding with ceil(in/stride) output length per axis.
Conv2dShape conv2d_shape(int ti, int fi, int ci, int kh, int kw, int co, int st, int sf);

// c[m x n] = a[m x k] * b[k x n]
template <typename T>
void matmul_nn_serial(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void matmul_nn_omp(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void matmul_nn(const T* a, const T* b, T* c, int m, int k, int n);

// c[m x n] = a[m x k] * b[n x k]^T
template <typename T>
void matmul_nt_serial(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void matmul_nt_omp(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int m, int k, int n);

// c[k x n] = a[m x k]^T * b[m x n]
template <typename T>
void matmul_tn_serial(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void matmul_tn_omp(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int m, int k, int n);

// y[to x fo x co]; x[ti x fi x ci]; k[kh x kw x ci x co]
template <typename T>
void conv2d_fwd_serial(const T* x, const T* k, T* y, const Conv2dShape& s);
template <typename T>
void conv2d_fwd_omp(const T* x, const T* k, T* y, const Conv2dShape& s);
template <typename T>
void conv2d_fwd(const T* x, const T* k, T* y, const Conv2dShape& s);

template <typename T>
void conv2d_bwd_x_serial(const T* dy, const T* k, T* dx, const Conv2dShape& s);
template <typename T>
void conv2d_bwd_x_omp(const T* dy, const T* k, T* dx, const Conv2dShape& s);
template <typename T>
void conv2d_bwd_x(const T* dy, const T* k, T* dx, const Conv2dShape& s);

template <typename T>
void conv2d_bwd_k_serial(const T* dy, const T* x, T* dk, const Conv2dShape& s);
template <typename T>
void conv2d_bwd_k_omp(const T* dy, const T* x, T* dk, const Conv2dShape& s);
template <typename T>
void conv2d_bwd_k(const T* dy, const T* x, T* dk, const Conv2dShape& s);

// Depthwise 1-d convolution along time, same padding.
// y[t x d]; x[t x d]; k[kw x d]
template <typename T>
void dwconv1d_fwd_serial(const T* x, const T* k, T* y, int t, int d, int kw);
template <typename T>
void dwconv1d_fwd_omp(const T* x, const T* k, T* y, int t, int d, int kw);
template <typename T>
void dwconv1d_fwd(const T* x, const T* k, T* y, int t, int d, int kw);

template <typename T>
void dwconv1d_bwd_x_serial(const T* dy, const T* k, T* dx, int t, int d, int kw);
template <typename T>
void dwconv1d_bwd_x_omp(const T* dy, const T* k, T* dx, int t, int d, int kw);
template <typename T>
void dwconv1d_bwd_x(const T* dy, const T* k, T* dx, int t, int d, int kw);

template <typename T>
void dwconv1d_bwd_k_serial(const T* dy, const T* x, T* dk, int t, int d, int kw);
template <typename T>
void dwconv1d_bwd_k_omp(const T* dy, const T* x, T* dk, int t, int d, int kw);
template <typename T>
void dwconv1d_bwd_k(const T* dy, const T* x, T* dk, int t, int d, int kw);

}  // namespace tts4p::numerics::kernels

#endif  // TTS4P_KERNELS_HPP_
