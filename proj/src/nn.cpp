#include "flowvoc/nn.hpp"

#include <cmath>

#include "flowvoc/error.hpp"
#include "flowvoc/rng.hpp"

namespace flowvoc {
namespace nn {

template <class T>
ad::Var<T> ParamStore<T>::insert(const std::string& name, ad::Shape shape, std::vector<T> values) {
    require(index_.count(name) == 0, ErrorKind::Contract, "duplicate parameter '" + name + "'");
    ad::Var<T> v = ad::leaf<T>(std::move(shape), std::move(values), true);
    index_[name] = entries_.size();
    entries_.emplace_back(name, v);
    return v;
}

template <class T>
ad::Var<T> ParamStore<T>::param(const std::string& name, ad::Shape shape, double init_std) {
    std::vector<T> values(ad::numel(shape), T(0));
    if (init_std > 0) {
        Rng rng(seed_, hash_string(name));
        for (T& v : values) v = T(init_std * rng.normal());
    }
    return insert(name, std::move(shape), std::move(values));
}

template <class T>
ad::Var<T> ParamStore<T>::param_fill(const std::string& name, ad::Shape shape, T value) {
    std::vector<T> values(ad::numel(shape), value);
    return insert(name, std::move(shape), std::move(values));
}

template <class T>
ad::Var<T> ParamStore<T>::get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::Contract, "unknown parameter '" + name + "'");
    return entries_[it->second].second;
}

template <class T>
std::vector<ad::Var<T>> ParamStore<T>::vars() const {
    std::vector<ad::Var<T>> out;
    out.reserve(entries_.size());
    for (const auto& [name, v] : entries_) out.push_back(v);
    return out;
}

template <class T>
std::size_t ParamStore<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : entries_) n += v->numel();
    return n;
}

template <class T>
void ParamStore<T>::to_checkpoint(Checkpoint& ck, const std::string& prefix) const {
    for (const auto& [name, v] : entries_) {
        std::vector<std::int64_t> shape(v->shape.begin(), v->shape.end());
        std::vector<float> values(v->value.begin(), v->value.end());
        ck.put(prefix + name, std::move(shape), std::move(values));
    }
}

template <class T>
void ParamStore<T>::from_checkpoint(const Checkpoint& ck, const std::string& prefix) {
    for (auto& [name, v] : entries_) {
        std::string full = prefix + name;
        require(ck.has(full), ErrorKind::Format, "checkpoint missing parameter '" + full + "'");
        const Checkpoint::Entry& e = ck.get(full);
        bool same = e.shape.size() == v->shape.size();
        for (std::size_t i = 0; same && i < e.shape.size(); ++i)
            same = e.shape[i] == v->shape[i];
        require(same, ErrorKind::Format, "checkpoint shape mismatch for '" + full + "'");
        for (std::size_t i = 0; i < v->value.size(); ++i) v->value[i] = T(e.values[i]);
    }
}

std::vector<double> sin_embedding(double pos, int dim, double max_period) {
    require(dim > 0 && dim % 2 == 0, ErrorKind::Contract, "embedding dim must be positive even");
    std::vector<double> out(dim);
    int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        double w = std::exp(-std::log(max_period) * double(k) / double(half));
        out[2 * k] = std::sin(pos * w);
        out[2 * k + 1] = std::cos(pos * w);
    }
    return out;
}

template <class T>
ad::Var<T> Linear<T>::operator()(const ad::Var<T>& x) const {
    int in = w->shape[0], out_dim = w->shape[1];
    require(!x->shape.empty() && x->shape.back() == in, ErrorKind::Contract,
            "linear input width mismatch");
    if (x->shape.size() == 2) return ad::bias_add(ad::matmul(x, w), b);
    require(x->shape.size() == 3, ErrorKind::Contract, "linear expects rank 2 or 3");
    int B = x->shape[0], S = x->shape[1];
    auto flat = ad::reshape(x, {B * S, in});
    auto y = ad::bias_add(ad::matmul(flat, w), b);
    return ad::reshape(y, {B, S, out_dim});
}

template <class T>
Linear<T> make_linear(ParamStore<T>& ps, const std::string& name, int in, int out, double w_std) {
    if (w_std < 0) w_std = 1.0 / std::sqrt(double(in));
    Linear<T> lin;
    lin.w = ps.param(name + ".w", {in, out}, w_std);
    lin.b = ps.param(name + ".b", {out}, 0.0);
    return lin;
}

template <class T>
ad::Var<T> Attention<T>::operator()(const ad::Var<T>& x_q, const ad::Var<T>& x_kv,
                                    const std::vector<int>& key_mask) const {
    require(x_q->shape.size() == 3 && x_kv->shape.size() == 3, ErrorKind::Contract,
            "attention expects (B,T,D)");
    int B = x_q->shape[0], Tq = x_q->shape[1], D = x_q->shape[2];
    int Tk = x_kv->shape[1];
    require(x_kv->shape[0] == B && x_kv->shape[2] == D, ErrorKind::Contract,
            "attention query/key batch or width mismatch");
    require(D % heads == 0, ErrorKind::Config, "head count must divide width");
    int dh = D / heads;

    auto split = [&](const ad::Var<T>& x, int S) {
        // (B,S,D) -> (B*heads, S, dh)
        auto h4 = ad::reshape(x, {B, S, heads, dh});
        return ad::reshape(ad::permute(h4, {0, 2, 1, 3}), {B * heads, S, dh});
    };
    auto q = split(wq(x_q), Tq);
    auto k = split(wk(x_kv), Tk);
    auto v = split(wv(x_kv), Tk);

    auto scores = ad::mul_scalar(ad::bmm(q, k, /*trans_b=*/true), T(1.0 / std::sqrt(double(dh))));
    if (!key_mask.empty()) {
        require(int(key_mask.size()) == B * Tk, ErrorKind::Contract,
                "key mask length mismatch");
        // -1e9 underflows to exactly 0 after softmax's exp
        std::vector<T> bias(std::size_t(B) * heads * Tq * Tk, T(0));
        std::size_t i = 0;
        for (int b_i = 0; b_i < B; ++b_i)
            for (int h = 0; h < heads; ++h)
                for (int tq = 0; tq < Tq; ++tq)
                    for (int tk = 0; tk < Tk; ++tk, ++i)
                        if (!key_mask[std::size_t(b_i) * Tk + tk]) bias[i] = T(-1e9);
        scores = ad::add(scores, ad::constant<T>({B * heads, Tq, Tk}, std::move(bias)));
    }
    auto probs = ad::softmax_last(scores);
    auto ctx = ad::bmm(probs, v);  // (B*heads, Tq, dh)
    auto merged = ad::reshape(ad::permute(ad::reshape(ctx, {B, heads, Tq, dh}), {0, 2, 1, 3}),
                              {B, Tq, D});
    return wo(merged);
}

template <class T>
Attention<T> make_attention(ParamStore<T>& ps, const std::string& name, int dim, int heads) {
    require(heads > 0 && dim % heads == 0, ErrorKind::Config,
            "attention width must be divisible by head count");
    Attention<T> at;
    at.wq = make_linear(ps, name + ".q", dim, dim);
    at.wk = make_linear(ps, name + ".k", dim, dim);
    at.wv = make_linear(ps, name + ".v", dim, dim);
    at.wo = make_linear(ps, name + ".o", dim, dim);
    at.heads = heads;
    return at;
}

#define FLOWVOC_NN_INSTANTIATE(T)                                                              \
    template class ParamStore<T>;                                                              \
    template struct Linear<T>;                                                                 \
    template struct Attention<T>;                                                              \
    template Linear<T> make_linear<T>(ParamStore<T>&, const std::string&, int, int, double);   \
    template Attention<T> make_attention<T>(ParamStore<T>&, const std::string&, int, int);

FLOWVOC_NN_INSTANTIATE(float)
FLOWVOC_NN_INSTANTIATE(double)

}  // namespace nn
}  // namespace flowvoc
