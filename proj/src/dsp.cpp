#include "flowvoc/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "flowvoc/error.hpp"
#include "flowvoc/fft.hpp"

namespace flowvoc {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// mirror without repeating the edge sample
std::size_t reflect_index(long i, long len) {
    while (i < 0 || i >= len) {
        if (i < 0) i = -i;
        if (i >= len) i = 2 * len - 2 - i;
    }
    return (std::size_t)i;
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// squared-window overlap-add denominator over the padded span
std::vector<double> window_power_sum(const StftPlan& plan, int frames) {
    const int n = plan.fft_size;
    std::vector<double> wsum((std::size_t)(frames - 1) * plan.hop + n, 0.0);
    for (int f = 0; f < frames; ++f)
        for (int i = 0; i < n; ++i)
            wsum[(std::size_t)f * plan.hop + i] += plan.window[i] * plan.window[i];
    return wsum;
}

}  // namespace

StftPlan StftPlan::make(int hop, int sample_rate) {
    require(hop > 0, ErrorKind::Contract, "stft: hop must be positive");
    require(sample_rate > 0, ErrorKind::Contract, "stft: sample rate must be positive");
    StftPlan p;
    p.hop = hop;
    p.fft_size = 4 * hop;
    p.sample_rate = sample_rate;
    p.window.resize(p.fft_size);
    for (int i = 0; i < p.fft_size; ++i)
        p.window[i] = 0.5 * (1.0 - std::cos(kTwoPi * i / p.fft_size));
    return p;
}

SpectroFrame stft(const std::vector<double>& x, const StftPlan& plan) {
    const long len = (long)x.size();
    require(len >= plan.fft_size, ErrorKind::Contract,
            "stft: signal shorter than one analysis window");
    const int n = plan.fft_size;
    const int pad = n / 2;
    const int frames = plan.frames_for(x.size());
    SpectroFrame out;
    out.bins = plan.bins();
    out.frames = frames;
    out.re.assign((std::size_t)out.bins * frames, 0.0);
    out.im.assign((std::size_t)out.bins * frames, 0.0);
    std::vector<double> buf(n);
    std::vector<std::complex<double>> spec(out.bins);
    for (int f = 0; f < frames; ++f) {
        const long start = (long)f * plan.hop - pad;
        for (int i = 0; i < n; ++i)
            buf[i] = x[reflect_index(start + i, len)] * plan.window[i];
        fft::rfft(buf.data(), n, spec.data());
        for (int b = 0; b < out.bins; ++b) {
            out.re[(std::size_t)b * frames + f] = spec[b].real();
            out.im[(std::size_t)b * frames + f] = spec[b].imag();
        }
    }
    return out;
}

std::vector<double> istft(const SpectroFrame& coef, const StftPlan& plan, std::size_t length) {
    require(coef.bins == plan.bins(), ErrorKind::Contract,
            "istft: coefficient bin count does not match plan");
    require(coef.frames > 0, ErrorKind::Contract, "istft: empty spectrogram");
    const int n = plan.fft_size;
    const int pad = n / 2;
    const int frames = coef.frames;
    std::vector<double> acc((std::size_t)(frames - 1) * plan.hop + n, 0.0);
    auto wsum = window_power_sum(plan, frames);
    std::vector<std::complex<double>> spec(coef.bins);
    std::vector<double> buf(n);
    for (int f = 0; f < frames; ++f) {
        for (int b = 0; b < coef.bins; ++b)
            spec[b] = {coef.re[(std::size_t)b * frames + f], coef.im[(std::size_t)b * frames + f]};
        fft::irfft(spec.data(), n, buf.data());
        for (int i = 0; i < n; ++i)
            acc[(std::size_t)f * plan.hop + i] += buf[i] * plan.window[i];
    }
    for (std::size_t i = 0; i < acc.size(); ++i)
        if (wsum[i] > 1e-12) acc[i] /= wsum[i];
    std::vector<double> out(length, 0.0);
    for (std::size_t j = 0; j < length; ++j)
        if (j + pad < acc.size()) out[j] = acc[j + pad];
    return out;
}

MelConfig MelConfig::make(int n_mels, const StftPlan& plan, double f_min, double f_max) {
    MelConfig cfg;
    cfg.n_mels = n_mels;
    cfg.plan = plan;
    cfg.f_min = f_min;
    cfg.f_max = f_max > 0 ? f_max : plan.sample_rate / 2.0;
    require(n_mels > 0, ErrorKind::Contract, "mel: n_mels must be positive");
    require(cfg.f_min >= 0 && cfg.f_min < cfg.f_max, ErrorKind::Contract,
            "mel: need 0 <= f_min < f_max");
    require(cfg.f_max <= plan.sample_rate / 2.0 + 1e-9, ErrorKind::Contract,
            "mel: f_max exceeds Nyquist");
    return cfg;
}

std::vector<double> mel_filterbank(const MelConfig& cfg) {
    const int bins = cfg.plan.bins();
    std::vector<double> edges(cfg.n_mels + 2);
    const double m_lo = hz_to_mel(cfg.f_min), m_hi = hz_to_mel(cfg.f_max);
    for (int i = 0; i < cfg.n_mels + 2; ++i)
        edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * i / (cfg.n_mels + 1));
    std::vector<double> fb((std::size_t)cfg.n_mels * bins, 0.0);
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        for (int k = 0; k < bins; ++k) {
            const double f = (double)k * cfg.plan.sample_rate / cfg.plan.fft_size;
            double w = 0;
            if (f > lo && f < mid) w = (f - lo) / (mid - lo);
            else if (f == mid) w = 1.0;
            else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
            fb[(std::size_t)m * bins + k] = w;
        }
    }
    return fb;
}

std::vector<double> mel_spectrogram(const std::vector<double>& x, const MelConfig& cfg) {
    const auto fb = mel_filterbank(cfg);
    const auto coef = stft(x, cfg.plan);
    const int bins = coef.bins, frames = coef.frames;
    std::vector<double> mag((std::size_t)bins * frames);
    for (std::size_t i = 0; i < mag.size(); ++i)
        mag[i] = std::hypot(coef.re[i], coef.im[i]);
    std::vector<double> out((std::size_t)cfg.n_mels * frames);
    for (int m = 0; m < cfg.n_mels; ++m)
        for (int t = 0; t < frames; ++t) {
            double acc = 0;
            for (int k = 0; k < bins; ++k)
                acc += fb[(std::size_t)m * bins + k] * mag[(std::size_t)k * frames + t];
            out[(std::size_t)m * frames + t] = std::log(cfg.eps_mel + acc);
        }
    return out;
}

Patches patchify(const std::vector<double>& mel, int n_mels, int frames, int freq_extent,
                 int time_extent, double pad_value) {
    require(freq_extent > 0 && time_extent > 0, ErrorKind::Contract,
            "patchify: patch extents must be positive");
    require((std::size_t)n_mels * frames == mel.size(), ErrorKind::Contract,
            "patchify: mel buffer does not match stated extents");
    Patches p;
    p.freq_extent = freq_extent;
    p.time_extent = time_extent;
    p.n_freq = (n_mels + freq_extent - 1) / freq_extent;
    p.n_time = (frames + time_extent - 1) / time_extent;
    p.data.assign(p.count() * p.patch_size(), pad_value);
    for (int tp = 0; tp < p.n_time; ++tp)
        for (int fp = 0; fp < p.n_freq; ++fp) {
            const std::size_t base = ((std::size_t)tp * p.n_freq + fp) * p.patch_size();
            for (int fi = 0; fi < freq_extent; ++fi)
                for (int ti = 0; ti < time_extent; ++ti) {
                    const int m = fp * freq_extent + fi;
                    const int t = tp * time_extent + ti;
                    if (m < n_mels && t < frames)
                        p.data[base + (std::size_t)fi * time_extent + ti] =
                            mel[(std::size_t)m * frames + t];
                }
        }
    return p;
}

std::vector<double> unpatchify(const Patches& p, int n_mels, int frames) {
    std::vector<double> mel((std::size_t)n_mels * frames, 0.0);
    for (int tp = 0; tp < p.n_time; ++tp)
        for (int fp = 0; fp < p.n_freq; ++fp) {
            const std::size_t base = ((std::size_t)tp * p.n_freq + fp) * p.patch_size();
            for (int fi = 0; fi < p.freq_extent; ++fi)
                for (int ti = 0; ti < p.time_extent; ++ti) {
                    const int m = fp * p.freq_extent + fi;
                    const int t = tp * p.time_extent + ti;
                    if (m < n_mels && t < frames)
                        mel[(std::size_t)m * frames + t] =
                            p.data[base + (std::size_t)fi * p.time_extent + ti];
                }
        }
    return mel;
}

std::vector<double> frame_energy(const std::vector<double>& x, const StftPlan& plan,
                                 const EnergyWeightConfig& cfg) {
    require(!x.empty(), ErrorKind::Contract, "frame_energy: empty waveform");
    const int frames = plan.frames_for(x.size());
    std::vector<double> e(frames, 0.0);
    for (int f = 0; f < frames; ++f) {
        const std::size_t lo = (std::size_t)f * plan.hop;
        const std::size_t hi = std::min(x.size(), lo + (std::size_t)plan.hop);
        double acc = 0;
        for (std::size_t i = lo; i < hi; ++i) acc += x[i] * x[i];
        e[f] = acc / (double)(hi - lo);
    }
    double mean_e = 0;
    for (double v : e) mean_e += v;
    mean_e /= frames;
    std::vector<double> w(frames, 1.0);
    if (mean_e <= 0) return w;  // silent input: neutral weights
    for (int f = 0; f < frames; ++f)
        w[f] = std::clamp(std::pow(e[f] / mean_e, cfg.gamma), cfg.w_min, cfg.w_max);
    double mean_w = 0;
    for (double v : w) mean_w += v;
    mean_w /= frames;
    for (double& v : w) v /= mean_w;
    return w;
}

template <class T>
ad::Var<T> istft_op(const ad::Var<T>& re, const ad::Var<T>& im, const StftPlan& plan, int length) {
    require(re->shape == im->shape, ErrorKind::Contract, "istft: re/im shape mismatch");
    require(re->shape.size() == 3, ErrorKind::Contract, "istft: coefficients must be (B,bins,T)");
    require(re->shape[1] == plan.bins(), ErrorKind::Contract,
            "istft: coefficient bin count does not match plan");
    require(length > 0, ErrorKind::Contract, "istft: length must be positive");
    const int batch = re->shape[0], bins = re->shape[1], frames = re->shape[2];
    auto node = std::make_shared<ad::Node<T>>();
    node->op = "istft";
    node->shape = {batch, length};
    node->value.resize((std::size_t)batch * length);
    node->parents = {re, im};
    node->requires_grad = re->requires_grad || im->requires_grad;
    SpectroFrame coef;
    coef.bins = bins;
    coef.frames = frames;
    coef.re.resize((std::size_t)bins * frames);
    coef.im.resize((std::size_t)bins * frames);
    for (int b = 0; b < batch; ++b) {
        const std::size_t off = (std::size_t)b * bins * frames;
        for (std::size_t i = 0; i < coef.re.size(); ++i) {
            coef.re[i] = (double)re->value[off + i];
            coef.im[i] = (double)im->value[off + i];
        }
        auto wave = istft(coef, plan, (std::size_t)length);
        for (int j = 0; j < length; ++j) node->value[(std::size_t)b * length + j] = (T)wave[j];
    }
    node->backward_fn = [batch, bins, frames, length, plan](ad::Node<T>& self) {
        auto& re = self.parents[0];
        auto& im = self.parents[1];
        const int n = plan.fft_size;
        const int pad = n / 2;
        auto wsum = window_power_sum(plan, frames);
        std::vector<double> gp(wsum.size());
        std::vector<double> v(n);
        std::vector<std::complex<double>> spec(n / 2 + 1);
        for (int b = 0; b < batch; ++b) {
            std::fill(gp.begin(), gp.end(), 0.0);
            for (int j = 0; j < length; ++j)
                if ((std::size_t)j + pad < gp.size() && wsum[j + pad] > 1e-12)
                    gp[j + pad] = (double)self.grad[(std::size_t)b * length + j] / wsum[j + pad];
            const std::size_t off = (std::size_t)b * bins * frames;
            for (int f = 0; f < frames; ++f) {
                for (int i = 0; i < n; ++i)
                    v[i] = plan.window[i] * gp[(std::size_t)f * plan.hop + i];
                fft::rfft(v.data(), n, spec.data());
                for (int k = 0; k < bins; ++k) {
                    const bool edge = (k == 0 || k == n / 2);
                    const double s = (edge ? 1.0 : 2.0) / n;
                    if (re->requires_grad)
                        re->grad[off + (std::size_t)k * frames + f] += (T)(s * spec[k].real());
                    if (im->requires_grad && !edge)
                        im->grad[off + (std::size_t)k * frames + f] += (T)(s * spec[k].imag());
                }
            }
        }
    };
    return node;
}

template ad::Var<float> istft_op<float>(const ad::Var<float>&, const ad::Var<float>&,
                                        const StftPlan&, int);
template ad::Var<double> istft_op<double>(const ad::Var<double>&, const ad::Var<double>&,
                                          const StftPlan&, int);

}  // namespace flowvoc
