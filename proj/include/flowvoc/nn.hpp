#pragma once

// Shared neural-net building blocks on top of the autodiff graph: a named
// parameter store with deterministic init and checkpoint round-tripping,
// sinusoidal embeddings, linear layers, and multi-head attention.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flowvoc/autodiff.hpp"
#include "flowvoc/checkpoint.hpp"

namespace flowvoc {
namespace nn {

// Parameters are created once by name; each one draws from its own rng stream
// keyed on (store seed, name hash), so init values do not depend on the order
// modules are built in.
template <class T>
class ParamStore {
  public:
    explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

    // Gaussian init with the given stdev (0 → all zeros).
    ad::Var<T> param(const std::string& name, ad::Shape shape, double init_std);
    // Constant fill (PReLU slopes, log-gains, ...).
    ad::Var<T> param_fill(const std::string& name, ad::Shape shape, T value);

    bool has(const std::string& name) const { return index_.count(name) > 0; }
    ad::Var<T> get(const std::string& name) const;
    std::vector<ad::Var<T>> vars() const;
    std::size_t scalar_count() const;

    void to_checkpoint(Checkpoint& ck, const std::string& prefix) const;
    // Strict: every registered param must be present with an identical shape.
    void from_checkpoint(const Checkpoint& ck, const std::string& prefix);

  private:
    ad::Var<T> insert(const std::string& name, ad::Shape shape, std::vector<T> values);

    std::uint64_t seed_;
    std::vector<std::pair<std::string, ad::Var<T>>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Interleaved sinusoidal embedding: out[2k] = sin(pos * w_k),
// out[2k+1] = cos(pos * w_k), w_k geometric from 1 down to 1/max_period.
// pos = 0 gives exactly (0, 1, 0, 1, ...).
std::vector<double> sin_embedding(double pos, int dim, double max_period = 10000.0);

template <class T>
struct Linear {
    ad::Var<T> w;  // (in, out)
    ad::Var<T> b;  // (out)
    // x: (..., in) with rank 2 or 3
    ad::Var<T> operator()(const ad::Var<T>& x) const;
};

// w_std < 0 → 1/sqrt(in); 0 → zero-init weights. Bias always starts at zero.
template <class T>
Linear<T> make_linear(ParamStore<T>& ps, const std::string& name, int in, int out,
                      double w_std = -1.0);

// Multi-head scaled-dot-product attention. Self-attention when the same
// sequence is passed for queries and keys/values.
template <class T>
struct Attention {
    Linear<T> wq, wk, wv, wo;
    int heads = 1;

    // x_q (B,Tq,D), x_kv (B,Tk,D); key_mask (B*Tk, 1 = attend, 0 = ignore)
    // or empty for none. Masked keys receive exactly zero attention weight.
    ad::Var<T> operator()(const ad::Var<T>& x_q, const ad::Var<T>& x_kv,
                          const std::vector<int>& key_mask = {}) const;
};

template <class T>
Attention<T> make_attention(ParamStore<T>& ps, const std::string& name, int dim, int heads);

}  // namespace nn
}  // namespace flowvoc
