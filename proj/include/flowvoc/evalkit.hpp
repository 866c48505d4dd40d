#pragma once

// Evaluation toolkit: linear probe on pooled latents, Fréchet distance over
// fixed seeded audio features, reconstruction metrics, and a deterministic
// 2-D PCA projection for latent-space plots.

#include <cstdint>
#include <string>
#include <vector>

#include "flowvoc/latents.hpp"
#include "flowvoc/wav.hpp"

namespace flowvoc {

struct ProbeResult {
    double accuracy = 0;                // correct / total on the test split
    std::vector<std::string> classes;   // sorted unique labels
    std::vector<double> per_class;      // test accuracy per class, same order
    std::uint64_t split_seed = 0;
    std::string provider;
};

// Mean-pools each sequence over time, z-scores with train-split statistics,
// then fits multinomial logistic regression (full-batch gradient descent,
// 2000 steps, lr 0.1) on a per-class 80/20 split drawn from split_seed.
ProbeResult linear_probe(const std::vector<LatentSeq>& latents,
                         const std::vector<std::string>& labels, std::uint64_t split_seed);

struct FeatureStats {
    int dim = 0;
    long count = 0;
    std::vector<double> mean;  // (dim)
    std::vector<double> cov;   // (dim, dim), symmetric
};

// Unbiased sample statistics of the given feature rows (needs >= 2).
FeatureStats feature_stats(const std::vector<std::vector<double>>& rows);

// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), the matrix square roots
// taken through symmetric eigendecomposition with negative eigenvalues
// clipped at zero. Symmetric in its arguments up to that clipping tolerance.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

// Cyclic-Jacobi eigendecomposition of a symmetric (d, d) matrix. Eigenvalues
// come back ascending; row i of eigvecs is the matching unit eigenvector.
void sym_eigen(std::vector<double> a, int d, std::vector<double>& eigvals,
               std::vector<double>& eigvecs);

struct FrechetFeatureConfig {
    int out_dim = 16;
    int n_mels = 64;
    int hop = 100;
    std::uint64_t seed = 161616;
};

// Mean-pooled log-mel projected by a fixed seeded orthonormal matrix; the
// embedding both sides of the internal Fréchet distance are measured in.
std::vector<double> clip_features(const AudioClip& clip, const FrechetFeatureConfig& cfg = {});

struct ReconMetrics {
    double mel = 0;       // mean |log-mel difference|
    double stft = 0;      // spectral-magnitude L1, averaged over resolutions
    double waveform = 0;  // mean |sample difference|
};

// Compares clips over their common prefix (trimmed to the shorter one).
// Analysis uses 64 mel bands at hop 100 and the given multi-resolution hops.
ReconMetrics recon_metrics(const AudioClip& reference, const AudioClip& generated,
                           const std::vector<int>& hops = {100, 50, 25});

struct PcaResult {
    std::vector<double> coords;       // (n, 2), row per input sequence
    double explained[2] = {0, 0};     // variance ratio carried by each axis
};

// Mean-pool over time, center, project on the top-2 covariance eigenvectors.
// Each axis is sign-fixed so its largest-magnitude loading is positive.
PcaResult pca_project(const std::vector<LatentSeq>& latents);

}  // namespace flowvoc
