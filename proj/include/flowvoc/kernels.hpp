#pragma once

// Dense kernels behind the autodiff ops. Two implementations share one
// signature set: flowvoc::kernels (OpenMP-parallel, unrolled inner loops)
// and flowvoc::kernels::serial (naive reference loops kept for testing and
// benchmarking). Parallel loops only ever split over disjoint output rows,
// so results are reproducible regardless of thread count; the two
// implementations may differ by rounding (different accumulation order).

namespace flowvoc {
namespace kernels {

// C (m,n) = A(op) * B(op) [+ C if accumulate], row-major, tightly packed.
// trans_a=false: A is (m,k); trans_a=true: A is (k,m). Same for B with (k,n).
// trans_a && trans_b is unsupported.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          const T* a, const T* b, T* c, bool accumulate);

// y (B,Cout,T) = conv1d(x (B,Cin,T), w (Cout,Cin/groups,K), bias (Cout) or null)
// stride 1, zero "same" padding with pad_left = (K-1)/2.
template <class T>
void conv1d_forward(const T* x, const T* w, const T* bias, T* y,
                    int batch, int cin, int cout, int t, int ksize, int groups);

// dx += conv1d adjoint w.r.t. input
template <class T>
void conv1d_backward_x(const T* w, const T* dy, T* dx,
                       int batch, int cin, int cout, int t, int ksize, int groups);

// dw += ..., db += ... (db may be null)
template <class T>
void conv1d_backward_w(const T* x, const T* dy, T* dw, T* db,
                       int batch, int cin, int cout, int t, int ksize, int groups);

namespace serial {

template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          const T* a, const T* b, T* c, bool accumulate);

template <class T>
void conv1d_forward(const T* x, const T* w, const T* bias, T* y,
                    int batch, int cin, int cout, int t, int ksize, int groups);

template <class T>
void conv1d_backward_x(const T* w, const T* dy, T* dx,
                       int batch, int cin, int cout, int t, int ksize, int groups);

template <class T>
void conv1d_backward_w(const T* x, const T* dy, T* dw, T* db,
                       int batch, int cin, int cout, int t, int ksize, int groups);

}  // namespace serial
}  // namespace kernels
}  // namespace flowvoc
