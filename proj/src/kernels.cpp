#include "flowvoc/kernels.hpp"

#include <algorithm>
#include <cstddef>

#include "flowvoc/error.hpp"

namespace flowvoc {
namespace kernels {

namespace {

// Fixed-order 8-lane accumulation: vectorizes without -ffast-math and keeps
// the reduction order independent of thread count.
template <class T>
inline T dot(const T* a, const T* b, int n) {
    T acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int n8 = n - (n % 8);
    for (int i = 0; i < n8; i += 8) {
        for (int u = 0; u < 8; ++u) acc[u] += a[i + u] * b[i + u];
    }
    T tail = 0;
    for (int i = n8; i < n; ++i) tail += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <class T>
inline void axpy(T alpha, const T* x, T* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          const T* a, const T* b, T* c, bool accumulate) {
    require(!(trans_a && trans_b), ErrorKind::Contract, "gemm: trans_a && trans_b unsupported");
    if (!trans_a && !trans_b) {
        // C[i,:] += sum_l A[i,l] * B[l,:]
#pragma omp parallel for schedule(static)
        for (int i = 0; i < m; ++i) {
            T* crow = c + (std::size_t)i * n;
            if (!accumulate) std::fill(crow, crow + n, T(0));
            const T* arow = a + (std::size_t)i * k;
            int l = 0;
            for (; l + 4 <= k; l += 4) {
                const T a0 = arow[l], a1 = arow[l + 1], a2 = arow[l + 2], a3 = arow[l + 3];
                const T* b0 = b + (std::size_t)l * n;
                const T* b1 = b0 + n;
                const T* b2 = b1 + n;
                const T* b3 = b2 + n;
                for (int j = 0; j < n; ++j)
                    crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            for (; l < k; ++l) axpy(arow[l], b + (std::size_t)l * n, crow, n);
        }
    } else if (!trans_a && trans_b) {
        // C[i,j] += dot(A row i, B row j); B is (n,k)
#pragma omp parallel for schedule(static)
        for (int i = 0; i < m; ++i) {
            T* crow = c + (std::size_t)i * n;
            const T* arow = a + (std::size_t)i * k;
            for (int j = 0; j < n; ++j) {
                T v = dot(arow, b + (std::size_t)j * k, k);
                crow[j] = accumulate ? crow[j] + v : v;
            }
        }
    } else {
        // trans_a: A is (k,m); C[i,:] += sum_l A[l,i] * B[l,:]
#pragma omp parallel for schedule(static)
        for (int i = 0; i < m; ++i) {
            T* crow = c + (std::size_t)i * n;
            if (!accumulate) std::fill(crow, crow + n, T(0));
            for (int l = 0; l < k; ++l)
                axpy(a[(std::size_t)l * m + i], b + (std::size_t)l * n, crow, n);
        }
    }
}

template <class T>
void conv1d_forward(const T* x, const T* w, const T* bias, T* y,
                    int batch, int cin, int cout, int t, int ksize, int groups) {
    const int gin = cin / groups;
    const int gout = cout / groups;
    const int pad = (ksize - 1) / 2;
#pragma omp parallel for schedule(static)
    for (int bc = 0; bc < batch * cout; ++bc) {
        const int b = bc / cout;
        const int co = bc % cout;
        const int g = co / gout;
        T* yrow = y + (std::size_t)bc * t;
        std::fill(yrow, yrow + t, bias ? bias[co] : T(0));
        for (int cl = 0; cl < gin; ++cl) {
            const int ci = g * gin + cl;
            const T* xrow = x + ((std::size_t)b * cin + ci) * t;
            const T* wrow = w + ((std::size_t)co * gin + cl) * ksize;
            for (int kk = 0; kk < ksize; ++kk) {
                const int off = kk - pad;
                const int t0 = std::max(0, -off);
                const int t1 = std::min(t, t - off);
                const T wv = wrow[kk];
                const T* xs = xrow + off;
                for (int tt = t0; tt < t1; ++tt) yrow[tt] += wv * xs[tt];
            }
        }
    }
}

template <class T>
void conv1d_backward_x(const T* w, const T* dy, T* dx,
                       int batch, int cin, int cout, int t, int ksize, int groups) {
    const int gin = cin / groups;
    const int gout = cout / groups;
    const int pad = (ksize - 1) / 2;
#pragma omp parallel for schedule(static)
    for (int bc = 0; bc < batch * cin; ++bc) {
        const int b = bc / cin;
        const int ci = bc % cin;
        const int g = ci / gin;
        const int cl = ci % gin;
        T* dxrow = dx + (std::size_t)bc * t;
        for (int col = 0; col < gout; ++col) {
            const int co = g * gout + col;
            const T* dyrow = dy + ((std::size_t)b * cout + co) * t;
            const T* wrow = w + ((std::size_t)co * gin + cl) * ksize;
            for (int kk = 0; kk < ksize; ++kk) {
                // dy index = s + pad - kk
                const int off = pad - kk;
                const int s0 = std::max(0, -off);
                const int s1 = std::min(t, t - off);
                const T wv = wrow[kk];
                const T* ds = dyrow + off;
                for (int s = s0; s < s1; ++s) dxrow[s] += wv * ds[s];
            }
        }
    }
}

template <class T>
void conv1d_backward_w(const T* x, const T* dy, T* dw, T* db,
                       int batch, int cin, int cout, int t, int ksize, int groups) {
    const int gin = cin / groups;
    const int gout = cout / groups;
    const int pad = (ksize - 1) / 2;
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
        const int g = co / gout;
        for (int b = 0; b < batch; ++b) {
            const T* dyrow = dy + ((std::size_t)b * cout + co) * t;
            for (int cl = 0; cl < gin; ++cl) {
                const int ci = g * gin + cl;
                const T* xrow = x + ((std::size_t)b * cin + ci) * t;
                T* wrow = dw + ((std::size_t)co * gin + cl) * ksize;
                for (int kk = 0; kk < ksize; ++kk) {
                    const int off = kk - pad;
                    const int t0 = std::max(0, -off);
                    const int t1 = std::min(t, t - off);
                    if (t1 > t0) wrow[kk] += dot(dyrow + t0, xrow + off + t0, t1 - t0);
                }
            }
            if (db) {
                T s = 0;
                for (int tt = 0; tt < t; ++tt) s += dyrow[tt];
                db[co] += s;
            }
        }
    }
}

template void gemm<float>(bool, bool, int, int, int, const float*, const float*, float*, bool);
template void gemm<double>(bool, bool, int, int, int, const double*, const double*, double*, bool);
template void conv1d_forward<float>(const float*, const float*, const float*, float*, int, int, int, int, int, int);
template void conv1d_forward<double>(const double*, const double*, const double*, double*, int, int, int, int, int, int);
template void conv1d_backward_x<float>(const float*, const float*, float*, int, int, int, int, int, int);
template void conv1d_backward_x<double>(const double*, const double*, double*, int, int, int, int, int, int);
template void conv1d_backward_w<float>(const float*, const float*, float*, float*, int, int, int, int, int, int);
template void conv1d_backward_w<double>(const double*, const double*, double*, double*, int, int, int, int, int, int);

}  // namespace kernels
}  // namespace flowvoc
