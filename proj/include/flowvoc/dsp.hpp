#pragma once

#include <cstddef>
#include <vector>

#include "flowvoc/autodiff.hpp"
#include "flowvoc/wav.hpp"

namespace flowvoc {

// Analysis/synthesis resolution. fft_size is locked to 4*hop so the squared
// Hann overlap-add is constant (perfect reconstruction).
struct StftPlan {
    int fft_size = 0;
    int hop = 0;
    int sample_rate = 0;
    std::vector<double> window;  // periodic Hann, length fft_size

    static StftPlan make(int hop, int sample_rate);
    int bins() const { return fft_size / 2 + 1; }
    int frames_for(std::size_t length) const {
        return (int)((length + (std::size_t)hop - 1) / (std::size_t)hop);
    }
};

// One-sided complex spectrogram, laid out [bin * frames + frame] so bins act
// as channels over time.
struct SpectroFrame {
    int bins = 0;
    int frames = 0;
    std::vector<double> re, im;
};

SpectroFrame stft(const std::vector<double>& x, const StftPlan& plan);
std::vector<double> istft(const SpectroFrame& coef, const StftPlan& plan, std::size_t length);

struct MelConfig {
    int n_mels = 64;
    double f_min = 0;
    double f_max = 0;  // defaults to Nyquist in make()
    StftPlan plan;
    double eps_mel = 1e-5;

    static MelConfig make(int n_mels, const StftPlan& plan, double f_min = 0, double f_max = 0);
};

// triangular filters, [mel * bins + bin]
std::vector<double> mel_filterbank(const MelConfig& cfg);
// log(eps + filterbank . |stft|), laid out [mel * frames + frame]
std::vector<double> mel_spectrogram(const std::vector<double>& x, const MelConfig& cfg);

struct Patches {
    int freq_extent = 0, time_extent = 0;
    int n_freq = 0, n_time = 0;  // patch grid
    std::vector<double> data;    // [patch * patch_size + k], time-major patch order

    std::size_t patch_size() const { return (std::size_t)freq_extent * time_extent; }
    std::size_t count() const { return (std::size_t)n_freq * n_time; }
};

Patches patchify(const std::vector<double>& mel, int n_mels, int frames, int freq_extent,
                 int time_extent, double pad_value);
// inverse of patchify for the unpadded region
std::vector<double> unpatchify(const Patches& p, int n_mels, int frames);

// Per-frame loss weights: w_i = clamp((E_i/mean E)^gamma, w_min, w_max),
// renormalized to mean 1. Frames partition the raw signal at plan.hop.
struct EnergyWeightConfig {
    double gamma = 0.5;
    double w_min = 0.1;
    double w_max = 10.0;
};
std::vector<double> frame_energy(const std::vector<double>& x, const StftPlan& plan,
                                 const EnergyWeightConfig& cfg = {});

// Differentiable overlap-add synthesis: (B, bins, T) coefficient pair to
// (B, length) waveform. Imaginary parts of the DC and Nyquist bins are
// ignored (their gradients are zero).
template <class T>
ad::Var<T> istft_op(const ad::Var<T>& re, const ad::Var<T>& im, const StftPlan& plan, int length);

}  // namespace flowvoc
