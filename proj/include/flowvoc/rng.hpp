#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace flowvoc {

// FNV-1a; used to key per-name rng streams platform-independently.
inline uint64_t hash_string(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : s) {
        h ^= uint64_t(static_cast<unsigned char>(c));
        h *= 1099511628211ULL;
    }
    return h;
}

// Deterministic seed derivation: mix a master seed with a stream id so each
// clip / step / parameter tensor gets an independent, reproducible stream.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    // splitmix64 over (seed ^ rotated stream)
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
  public:
    explicit Rng(uint64_t seed) : engine_(seed) {}
    Rng(uint64_t seed, uint64_t stream) : engine_(mix_seed(seed, stream)) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }  // [0,1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
    // inclusive bounds
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return std::uniform_int_distribution<int64_t>(lo, hi)(engine_);
    }
    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace flowvoc
