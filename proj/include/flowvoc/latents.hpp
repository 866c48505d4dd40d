#pragma once

// Pluggable latent providers. All three emit the same (frame_rate, T) for a
// given clip length, so downstream models can swap providers freely:
//   semantic-oracle  log-mel -> seeded orthonormal projection -> temporal
//                    smoothing, concatenated with a fixed per-class embedding
//   acoustic-mel     log-mel frames as-is
//   toy-mae          masked-reconstruction-trained transformer encoder

#include <cstdint>
#include <string>
#include <vector>

#include "flowvoc/checkpoint.hpp"
#include "flowvoc/wav.hpp"

namespace flowvoc {

// Seeded Gaussian rows, Gram-Schmidt orthonormalized: rows x cols, rows <= cols.
std::vector<double> orthonormal_rows(int rows, int cols, std::uint64_t seed);

// log-mel spectrogram at the given hop, [mel * frames + frame]
std::vector<double> log_mel_frames(const AudioClip& clip, int n_mels, int hop);

struct LatentSeq {
    std::vector<float> data;  // (batch, dim, frames), frame fastest
    int batch = 1;
    int dim = 0;
    int frames = 0;
    double frame_rate = 0.0;
    std::string provider;

    float& at(int b, int d, int t) {
        return data[(std::size_t(b) * dim + d) * frames + t];
    }
    float at(int b, int d, int t) const {
        return data[(std::size_t(b) * dim + d) * frames + t];
    }
};

struct OracleConfig {
    int n_mels = 64;
    int proj_dims = 32;   // orthonormal projection of the log-mel frame
    int class_dims = 32;  // fixed class-direction block appended below it
    int smooth_width = 5;
    int hop = 100;  // ties the frame rate to the vocoder's coarsest hop
    std::uint64_t seed = 7777;
};

LatentSeq encode_semantic_oracle(const AudioClip& clip, const OracleConfig& cfg = {});

LatentSeq encode_acoustic_mel(const AudioClip& clip, int n_mels = 64, int hop = 100);

struct MaeConfig {
    double mask_ratio = 0.75;
    int patch_freq = 64;  // full mel column per patch...
    int patch_time = 1;   // ...one frame wide, so latent T = frame count
    int n_mels = 64;
    int hop = 100;
    int enc_blocks = 2;
    int width = 64;
    int heads = 4;
    int dec_width = 64;  // single decoder block + linear head
    int steps = 2000;
    int batch = 4;
    double lr = 1e-3;
    std::uint64_t seed = 4242;
};

struct MaeTrainResult {
    Checkpoint ckpt;  // encoder weights + config; decoder discarded
    std::vector<float> loss_history;
};

MaeTrainResult train_toy_mae(const std::vector<AudioClip>& corpus, const MaeConfig& cfg);

// Encoder weights and config both come from the checkpoint.
LatentSeq encode_toy_mae(const AudioClip& clip, const Checkpoint& ck);

// Dump format: entries "latents" (B,D,T), "frame_rate", "provider".
void save_latents(const std::string& path, const LatentSeq& latents);
LatentSeq load_latents(const std::string& path);

// Stacks same-shape single-batch sequences into one batched LatentSeq.
LatentSeq stack_latents(const std::vector<LatentSeq>& seqs);

}  // namespace flowvoc
