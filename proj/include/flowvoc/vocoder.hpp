#pragma once

// Flow-matching vocoder: a latent conditioner (conv + BiasNorm + ConvNeXt
// stack) and R parallel branches that each analyze the noisy waveform at
// their own STFT resolution, predict complex coefficients, and synthesize
// via inverse STFT; the branch waveforms are averaged.

#include <cstdint>
#include <string>
#include <vector>

#include "flowvoc/autodiff.hpp"
#include "flowvoc/checkpoint.hpp"
#include "flowvoc/dsp.hpp"
#include "flowvoc/flow.hpp"
#include "flowvoc/latents.hpp"
#include "flowvoc/nn.hpp"
#include "flowvoc/wav.hpp"

namespace flowvoc {

struct VocoderConfig {
    int latent_dim = 64;   // provider channels D
    int cond_width = 96;   // conditioner channels D'
    int cond_blocks = 4;
    std::vector<int> hops = {100, 50, 25};   // coarse -> fine; hop_max first
    std::vector<int> widths = {96, 64, 48};  // hidden width per branch
    int branch_blocks = 4;
    int kernel = 7;     // grouped conv kernel inside ConvNeXt blocks
    int time_dim = 64;  // sinusoidal timestep embedding size
    int sample_rate = 8000;
    std::string norm = "biasnorm";  // conditioner norm: biasnorm | layernorm

    static VocoderConfig desk() { return {}; }
    static VocoderConfig paper();

    int hop_max() const;
    double frame_rate() const { return double(sample_rate) / hop_max(); }
};

template <class T>
struct ConvNeXtBlock {
    ad::Var<T> dw_w, dw_b;    // grouped (C,1,k)
    ad::Var<T> pw1_w, pw1_b;  // (2C,C,1)
    ad::Var<T> alpha;         // PReLU slope per expanded channel
    ad::Var<T> pw2_w, pw2_b;  // (C,2C,1), zero-init: block starts as identity
};

template <class T>
struct VocBranch {
    StftPlan plan;
    int width = 0;
    ad::Var<T> embed_w, embed_b;  // (W, 2*bins, 3)
    nn::Linear<T> time1, time2;   // timestep MLP, time_dim -> W -> W
    std::vector<ad::Var<T>> lat_w, lat_b;  // per block pointwise D' -> W, zero-init
    std::vector<ConvNeXtBlock<T>> blocks;
    ad::Var<T> head_w, head_b;  // (2*bins, W, 1), zero-init: silence at start
};

template <class T>
struct Vocoder {
    VocoderConfig cfg;
    nn::ParamStore<T> ps;
    ad::Var<T> in_w, in_b;  // latent projection (D', D, 3)
    ad::Var<T> norm_a, norm_b;  // biasnorm: bias(D'), log-gain(1); layernorm: gain, shift
    std::vector<ConvNeXtBlock<T>> cond_blocks;
    std::vector<VocBranch<T>> branches;
};

// head_std > 0 draws head weights at head_std/sqrt(width) instead of zero.
// Flow training wants exact silence at init; the feed-forward recon objective
// feeds zeros forward, so a zero head would leave it without any gradient.
template <class T>
Vocoder<T> make_vocoder(const VocoderConfig& cfg, std::uint64_t seed, double head_std = 0.0);

// x + pw2(prelu(pw1(dw(x))))
template <class T>
ad::Var<T> run_convnext(const ConvNeXtBlock<T>& blk, const ad::Var<T>& x);

// (B,C,T) -> (B,C,T*ratio), each frame repeated ratio times
template <class T>
ad::Var<T> replicate_frames(const ad::Var<T>& x, int ratio);

// x * (1 + t_emb) + lat_proj, t_emb broadcast over time
template <class T>
ad::Var<T> film_modulate(const ad::Var<T>& x, const ad::Var<T>& t_emb,
                         const ad::Var<T>& lat_proj);

// latents (B,D,T) -> conditioned (B,D',T)
template <class T>
ad::Var<T> condition_latents(const Vocoder<T>& voc, const ad::Var<T>& latents);

// x_t holds batch*length samples; cond from condition_latents. Returns the
// predicted clean waveform (B, length). length must be a hop_max multiple.
template <class T>
ad::Var<T> predict_waveform(const Vocoder<T>& voc, const std::vector<T>& x_t, int batch, double t,
                            const ad::Var<T>& cond);

struct VocTrainConfig {
    int steps = 20000;
    double lr = 2e-4;
    double weight_decay = 0.0;
    double sigma = 1.0;
    std::uint64_t seed = 1;
    std::string objective = "flow";  // flow | recon (feed-forward baseline)
};

struct VocTrainResult {
    Checkpoint ckpt;
    std::vector<float> loss_history;
};

// clips[i] pairs with latents[i]; all latents from one provider whose frame
// rate must equal cfg.frame_rate(). objective "recon" trains the same
// backbone as a deterministic regressor from zeros (no timestep, plain MSE).
VocTrainResult train_vocoder(const std::vector<AudioClip>& clips,
                             const std::vector<LatentSeq>& latents, const VocoderConfig& cfg,
                             const VocTrainConfig& tcfg);

Vocoder<float> load_vocoder(const Checkpoint& ck);
std::string vocoder_provider(const Checkpoint& ck);

// Euler-samples the flow (data prediction, guidance 1) conditioned on the
// latents; output length = frames * hop_max.
AudioClip vocode(const LatentSeq& latents, const Checkpoint& ck, const SamplerConfig& scfg);

// Single deterministic forward pass from zero input (reconstruction mode).
AudioClip recon_waveform(const LatentSeq& latents, const Checkpoint& ck);

}  // namespace flowvoc
