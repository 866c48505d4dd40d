// Naive reference implementations. Plain nested loops, no unrolling, no
// threading; the unit tests check the optimized kernels against these.

#include <algorithm>
#include <cstddef>

#include "flowvoc/error.hpp"
#include "flowvoc/kernels.hpp"

namespace flowvoc {
namespace kernels {
namespace serial {

template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          const T* a, const T* b, T* c, bool accumulate) {
    require(!(trans_a && trans_b), ErrorKind::Contract, "gemm: trans_a && trans_b unsupported");
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            T s = 0;
            for (int l = 0; l < k; ++l) {
                const T av = trans_a ? a[(std::size_t)l * m + i] : a[(std::size_t)i * k + l];
                const T bv = trans_b ? b[(std::size_t)j * k + l] : b[(std::size_t)l * n + j];
                s += av * bv;
            }
            T* cp = c + (std::size_t)i * n + j;
            *cp = accumulate ? *cp + s : s;
        }
    }
}

template <class T>
void conv1d_forward(const T* x, const T* w, const T* bias, T* y,
                    int batch, int cin, int cout, int t, int ksize, int groups) {
    const int gin = cin / groups;
    const int gout = cout / groups;
    const int pad = (ksize - 1) / 2;
    for (int b = 0; b < batch; ++b) {
        for (int co = 0; co < cout; ++co) {
            const int g = co / gout;
            for (int tt = 0; tt < t; ++tt) {
                T s = bias ? bias[co] : T(0);
                for (int cl = 0; cl < gin; ++cl) {
                    const int ci = g * gin + cl;
                    for (int kk = 0; kk < ksize; ++kk) {
                        const int src = tt + kk - pad;
                        if (src < 0 || src >= t) continue;
                        s += w[((std::size_t)co * gin + cl) * ksize + kk] *
                             x[((std::size_t)b * cin + ci) * t + src];
                    }
                }
                y[((std::size_t)b * cout + co) * t + tt] = s;
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
    for (int b = 0; b < batch; ++b) {
        for (int ci = 0; ci < cin; ++ci) {
            const int g = ci / gin;
            const int cl = ci % gin;
            for (int s = 0; s < t; ++s) {
                T acc = 0;
                for (int col = 0; col < gout; ++col) {
                    const int co = g * gout + col;
                    for (int kk = 0; kk < ksize; ++kk) {
                        const int dyi = s + pad - kk;
                        if (dyi < 0 || dyi >= t) continue;
                        acc += w[((std::size_t)co * gin + cl) * ksize + kk] *
                               dy[((std::size_t)b * cout + co) * t + dyi];
                    }
                }
                dx[((std::size_t)b * cin + ci) * t + s] += acc;
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
    for (int co = 0; co < cout; ++co) {
        const int g = co / gout;
        for (int cl = 0; cl < gin; ++cl) {
            const int ci = g * gin + cl;
            for (int kk = 0; kk < ksize; ++kk) {
                T s = 0;
                for (int b = 0; b < batch; ++b) {
                    for (int tt = 0; tt < t; ++tt) {
                        const int src = tt + kk - pad;
                        if (src < 0 || src >= t) continue;
                        s += dy[((std::size_t)b * cout + co) * t + tt] *
                             x[((std::size_t)b * cin + ci) * t + src];
                    }
                }
                dw[((std::size_t)co * gin + cl) * ksize + kk] += s;
            }
        }
        if (db) {
            T s = 0;
            for (int b = 0; b < batch; ++b)
                for (int tt = 0; tt < t; ++tt) s += dy[((std::size_t)b * cout + co) * t + tt];
            db[co] += s;
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

}  // namespace serial
}  // namespace kernels
}  // namespace flowvoc
