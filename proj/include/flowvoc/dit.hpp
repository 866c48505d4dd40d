#pragma once

// Toy text-to-latent diffusion transformer. Latent frames are the token
// sequence; each block runs timestep-modulated self-attention (zero-init
// gates), cross-attention over caption token embeddings, and a gated MLP.
// Trains with the velocity flow-matching objective plus caption dropout so
// sampling supports classifier-free guidance.

#include <cstdint>
#include <string>
#include <vector>

#include "flowvoc/autodiff.hpp"
#include "flowvoc/checkpoint.hpp"
#include "flowvoc/flow.hpp"
#include "flowvoc/latents.hpp"
#include "flowvoc/nn.hpp"

namespace flowvoc {

// Fixed word list; id 0 = padding, id 1 = unknown.
struct Vocabulary {
    std::vector<std::string> words;

    int pad_id() const { return 0; }
    int unk_id() const { return 1; }
    int size() const { return int(words.size()); }
    int id_of(const std::string& word) const;

    // Collects the unique words of the given captions (sorted), after the
    // two reserved entries.
    static Vocabulary build(const std::vector<std::string>& captions);
};

struct CaptionTokens {
    std::vector<int> ids;   // right-padded to a fixed length
    std::vector<int> mask;  // 1 = real token, 0 = padding
};

// Whitespace tokenization; unknown words map to unk, the empty caption to a
// single unk token (the unconditional branch).
CaptionTokens tokenize_caption(const std::string& caption, const Vocabulary& vocab,
                               int max_tokens);

struct DitConfig {
    int latent_dim = 64;
    int frames = 128;        // token count; fixed at training time
    double frame_rate = 80;  // copied into generated sequences
    int width = 64;
    int blocks = 2;
    int heads = 4;
    int time_dim = 64;
    int max_tokens = 4;
    Vocabulary vocab;

    static DitConfig desk() { return {}; }
    static DitConfig paper();
};

template <class T>
struct DitBlock {
    nn::Linear<T> adaln;        // t embedding -> 6 * width (shift/scale/gate x2), zero-init
    nn::Attention<T> self_attn;
    nn::Attention<T> cross_attn;
    nn::Linear<T> m1, m2;  // gated MLP, expansion 2
};

template <class T>
struct Dit {
    DitConfig cfg;
    nn::ParamStore<T> ps;
    ad::Var<T> token_table;       // (vocab, width)
    nn::Linear<T> lat_in;         // latent channels -> width
    nn::Linear<T> time1, time2;   // timestep MLP
    std::vector<DitBlock<T>> blocks;
    nn::Linear<T> final_mod;  // t embedding -> 2 * width, zero-init
    nn::Linear<T> final_out;  // width -> latent channels, zero-init
};

template <class T>
Dit<T> make_dit(const DitConfig& cfg, std::uint64_t seed);

// caption embeddings (B, max_tokens, width) plus the flat key mask
template <class T>
ad::Var<T> embed_tokens(const Dit<T>& dit, const std::vector<CaptionTokens>& tokens,
                        std::vector<int>* key_mask);

// noisy latents (batch * D * frames) -> predicted velocity (B, D, frames)
template <class T>
ad::Var<T> dit_forward(const Dit<T>& dit, const std::vector<T>& latents, int batch, double t,
                       const std::vector<CaptionTokens>& tokens);

struct DitTrainConfig {
    int steps = 20000;
    int batch = 4;
    double lr = 1e-3;
    double weight_decay = 0.0;
    double drop_prob = 0.1;  // caption dropout for the unconditional branch
    double sigma = 1.0;
    std::uint64_t seed = 1;
};

struct DitTrainResult {
    Checkpoint ckpt;
    std::vector<float> loss_history;
};

// One latent sequence per caption, all from one provider. Latents are
// standardized per channel for training; the stats ride along in the
// checkpoint and generated sequences are mapped back to provider units.
DitTrainResult train_dit(const std::vector<LatentSeq>& latents,
                         const std::vector<std::string>& captions, const DitConfig& cfg,
                         const DitTrainConfig& tcfg);

Dit<float> load_dit(const Checkpoint& ck);

// steps 100, guidance 3.5, velocity prediction
SamplerConfig dit_sampler_defaults();

// CFG sampling of one latent sequence for the caption; empty caption is the
// unconditional branch.
LatentSeq generate_latents(const std::string& caption, const Checkpoint& ck,
                           const SamplerConfig& scfg);

}  // namespace flowvoc
