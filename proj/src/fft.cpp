#include "flowvoc/fft.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "flowvoc/error.hpp"

namespace flowvoc {
namespace fft {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

Fft::Fft(int n) : n_(n) {
    require(n >= 1, ErrorKind::Contract, "fft: size must be >= 1");
    int m = n;
    for (int r : {5, 3, 2})
        while (m % r == 0) {
            factors_.push_back(r);
            m /= r;
        }
    require(m == 1, ErrorKind::Contract,
            "fft: size " + std::to_string(n) + " must factor into 2, 3, 5");
    tw_fwd_.resize(n);
    tw_inv_.resize(n);
    for (int k = 0; k < n; ++k) {
        const double a = -kTwoPi * k / n;
        tw_fwd_[k] = {std::cos(a), std::sin(a)};
        tw_inv_[k] = std::conj(tw_fwd_[k]);
    }
}

void Fft::run(std::complex<double>* x, std::complex<double>* ws,
              const std::complex<double>* tw, int n, int depth, int tw_stride) const {
    if (n == 1) return;
    const int r = factors_[depth];
    const int m = n / r;
    for (int q = 0; q < r; ++q)
        for (int i = 0; i < m; ++i) ws[q * m + i] = x[(std::size_t)i * r + q];
    for (int q = 0; q < r; ++q)
        run(ws + (std::size_t)q * m, ws + n, tw, m, depth + 1, tw_stride * r);
    for (int j = 0; j < r; ++j)
        for (int k = 0; k < m; ++k) {
            std::complex<double> acc = 0;
            const long base = (long)(j * m + k) * tw_stride;
            for (int q = 0; q < r; ++q)
                acc += tw[(base * q) % n_] * ws[(std::size_t)q * m + k];
            x[(std::size_t)j * m + k] = acc;
        }
}

void Fft::forward(std::complex<double>* x) const {
    static thread_local std::vector<std::complex<double>> ws;
    if ((int)ws.size() < 2 * n_) ws.resize(2 * n_);
    run(x, ws.data(), tw_fwd_.data(), n_, 0, 1);
}

void Fft::inverse(std::complex<double>* x) const {
    static thread_local std::vector<std::complex<double>> ws;
    if ((int)ws.size() < 2 * n_) ws.resize(2 * n_);
    run(x, ws.data(), tw_inv_.data(), n_, 0, 1);
}

const Fft& plan_for(int n) {
    static std::map<int, Fft> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, Fft(n)).first;
    return it->second;
}

void rfft(const double* x, int n, std::complex<double>* out) {
    const Fft& plan = plan_for(n);
    std::vector<std::complex<double>> buf(n);
    for (int i = 0; i < n; ++i) buf[i] = x[i];
    plan.forward(buf.data());
    for (int k = 0; k <= n / 2; ++k) out[k] = buf[k];
}

void irfft(const std::complex<double>* spec, int n, double* out) {
    const Fft& plan = plan_for(n);
    std::vector<std::complex<double>> buf(n);
    buf[0] = spec[0].real();
    for (int k = 1; k < (n + 1) / 2; ++k) {
        buf[k] = spec[k];
        buf[n - k] = std::conj(spec[k]);
    }
    if (n % 2 == 0) buf[n / 2] = spec[n / 2].real();
    plan.inverse(buf.data());
    const double inv = 1.0 / n;
    for (int i = 0; i < n; ++i) out[i] = buf[i].real() * inv;
}

}  // namespace fft
}  // namespace flowvoc
