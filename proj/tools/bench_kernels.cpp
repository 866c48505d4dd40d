// Timing harness for the dense kernels: OpenMP-parallel implementation vs
// the serial reference, same inputs, with a max-abs-diff column to keep the
// two honest. Shapes mirror what the desk-profile models actually run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "flowvoc/kernels.hpp"
#include "flowvoc/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

std::vector<float> randn(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    flowvoc::Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = float(rng.normal() * scale);
    return v;
}

// best-of timing, at least `min_reps` calls and 0.2 s of work
double time_ms(const std::function<void()>& fn, int min_reps = 3) {
    double best = 1e300;
    double total = 0;
    int reps = 0;
    while (reps < min_reps || total < 200.0) {
        auto t0 = Clock::now();
        fn();
        double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        best = std::min(best, ms);
        total += ms;
        ++reps;
        if (reps >= 200) break;
    }
    return best;
}

float max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    float worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

void report(const char* name, double serial_ms, double parallel_ms, float diff) {
    std::printf("%-28s %10.3f ms %10.3f ms %7.2fx %12.3e\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms, double(diff));
}

void bench_gemm(int m, int n, int k, const char* name) {
    auto a = randn(std::size_t(m) * k, 1);
    auto b = randn(std::size_t(k) * n, 2);
    std::vector<float> c_par(std::size_t(m) * n), c_ser(std::size_t(m) * n);
    double par = time_ms([&] {
        flowvoc::kernels::gemm(false, false, m, n, k, a.data(), b.data(), c_par.data(), false);
    });
    double ser = time_ms([&] {
        flowvoc::kernels::serial::gemm(false, false, m, n, k, a.data(), b.data(), c_ser.data(),
                                       false);
    });
    report(name, ser, par, max_abs_diff(c_par, c_ser));
}

void bench_conv_forward(int batch, int cin, int cout, int t, int ksize, int groups,
                        const char* name) {
    auto x = randn(std::size_t(batch) * cin * t, 3);
    auto w = randn(std::size_t(cout) * (cin / groups) * ksize, 4, 0.2);
    auto bias = randn(std::size_t(cout), 5);
    std::vector<float> y_par(std::size_t(batch) * cout * t), y_ser(y_par.size());
    double par = time_ms([&] {
        flowvoc::kernels::conv1d_forward(x.data(), w.data(), bias.data(), y_par.data(), batch, cin,
                                         cout, t, ksize, groups);
    });
    double ser = time_ms([&] {
        flowvoc::kernels::serial::conv1d_forward(x.data(), w.data(), bias.data(), y_ser.data(),
                                                 batch, cin, cout, t, ksize, groups);
    });
    report(name, ser, par, max_abs_diff(y_par, y_ser));
}

void bench_conv_backward(int batch, int cin, int cout, int t, int ksize, int groups,
                         const char* name) {
    auto x = randn(std::size_t(batch) * cin * t, 6);
    auto w = randn(std::size_t(cout) * (cin / groups) * ksize, 7, 0.2);
    auto dy = randn(std::size_t(batch) * cout * t, 8);
    std::vector<float> dx_par(x.size(), 0.0f), dx_ser(x.size(), 0.0f);
    std::vector<float> dw_par(w.size(), 0.0f), dw_ser(w.size(), 0.0f);
    std::vector<float> db_par(std::size_t(cout), 0.0f), db_ser(std::size_t(cout), 0.0f);
    double par = time_ms([&] {
        std::fill(dx_par.begin(), dx_par.end(), 0.0f);
        std::fill(dw_par.begin(), dw_par.end(), 0.0f);
        std::fill(db_par.begin(), db_par.end(), 0.0f);
        flowvoc::kernels::conv1d_backward_x(w.data(), dy.data(), dx_par.data(), batch, cin, cout, t,
                                            ksize, groups);
        flowvoc::kernels::conv1d_backward_w(x.data(), dy.data(), dw_par.data(), db_par.data(),
                                            batch, cin, cout, t, ksize, groups);
    });
    double ser = time_ms([&] {
        std::fill(dx_ser.begin(), dx_ser.end(), 0.0f);
        std::fill(dw_ser.begin(), dw_ser.end(), 0.0f);
        std::fill(db_ser.begin(), db_ser.end(), 0.0f);
        flowvoc::kernels::serial::conv1d_backward_x(w.data(), dy.data(), dx_ser.data(), batch, cin,
                                                    cout, t, ksize, groups);
        flowvoc::kernels::serial::conv1d_backward_w(x.data(), dy.data(), dw_ser.data(),
                                                    db_ser.data(), batch, cin, cout, t, ksize,
                                                    groups);
    });
    float diff = std::max(max_abs_diff(dx_par, dx_ser),
                          std::max(max_abs_diff(dw_par, dw_ser), max_abs_diff(db_par, db_ser)));
    report(name, ser, par, diff);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP disabled (serial build)\n");
#endif
    std::printf("%-28s %13s %13s %8s %12s\n", "kernel", "serial", "parallel", "speedup",
                "max |diff|");

    bench_gemm(256, 256, 256, "gemm 256x256x256");
    bench_gemm(64, 1024, 64, "gemm 64x1024x64");
    bench_gemm(512, 64, 512, "gemm 512x64x512");

    // ConvNeXt shapes at desk profile: depthwise k=7 and the two pointwise convs
    bench_conv_forward(1, 96, 96, 1280, 7, 96, "conv fwd depthwise 96@1280");
    bench_conv_forward(1, 96, 384, 1280, 1, 1, "conv fwd pointwise 96->384");
    bench_conv_forward(1, 384, 96, 1280, 1, 1, "conv fwd pointwise 384->96");
    bench_conv_backward(1, 96, 96, 1280, 7, 96, "conv bwd depthwise 96@1280");
    bench_conv_backward(1, 96, 384, 1280, 1, 1, "conv bwd pointwise 96->384");
    return 0;
}
