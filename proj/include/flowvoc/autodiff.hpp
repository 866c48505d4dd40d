#pragma once

// Reverse-mode autodiff on dense N-d arrays. Eager forward evaluation builds
// a DAG of Node<T>; backward() walks it in reverse topological order and
// accumulates gradients into every requires_grad leaf. Instantiated for
// float (training) and double (finite-difference test headroom).

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace flowvoc {
namespace ad {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int e : s) n *= (std::size_t)e;
    return n;
}

template <class T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily; same length as value when present
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backward_fn;

    std::size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

// ---- construction ----
template <class T>
Var<T> leaf(Shape shape, std::vector<T> values, bool requires_grad);
template <class T>
Var<T> constant(Shape shape, std::vector<T> values);
template <class T>
Var<T> scalar(T v);

// ---- elementwise / scalar ----
template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> add_scalar(const Var<T>& a, T c);
template <class T> Var<T> mul_scalar(const Var<T>& a, T c);
template <class T> Var<T> exp_(const Var<T>& a);
template <class T> Var<T> gelu(const Var<T>& a);
// alpha has shape[axis] entries (slope of the negative part, per channel)
template <class T> Var<T> prelu(const Var<T>& x, const Var<T>& alpha, int axis);

// scalar Var broadcast to a full shape (backward sums)
template <class T> Var<T> broadcast_scalar(const Var<T>& s, Shape shape);
// x rank-N, v = x's shape with axis bc_axis removed; v is broadcast along it
template <class T> Var<T> mul_bcast(const Var<T>& x, const Var<T>& v, int bc_axis);
template <class T> Var<T> add_bcast(const Var<T>& x, const Var<T>& v, int bc_axis);
// b over the last axis
template <class T> Var<T> bias_add(const Var<T>& x, const Var<T>& b);

// ---- shape ----
template <class T> Var<T> reshape(const Var<T>& a, Shape shape);
template <class T> Var<T> permute(const Var<T>& a, const std::vector<int>& perm);
template <class T> Var<T> concat(const std::vector<Var<T>>& xs, int axis);
template <class T> Var<T> slice(const Var<T>& a, int axis, int start, int len);
template <class T> Var<T> gather_rows(const Var<T>& table, const std::vector<int>& rows);

// ---- contractions ----
template <class T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// (N,m,k) x (N,k,n) -> (N,m,n); trans_b: b is (N,n,k)
template <class T> Var<T> bmm(const Var<T>& a, const Var<T>& b, bool trans_b = false);
template <class T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int groups);

// ---- reductions / normalization ----
template <class T> Var<T> sum_all(const Var<T>& a);
template <class T> Var<T> mean_all(const Var<T>& a);
template <class T> Var<T> mean_channel(const Var<T>& x);  // (B,C,T) -> (B,1,T)
template <class T> Var<T> rms_channel(const Var<T>& x);   // (B,C,T) -> (B,1,T)
template <class T> Var<T> softmax_last(const Var<T>& x);
template <class T> Var<T> softmax_xent(const Var<T>& logits, const std::vector<int>& labels);
template <class T> Var<T> layernorm_last(const Var<T>& x, T eps);
// y[b,c,t] = x[b,c,t] * exp(gamma_log) / rms_c(x[b,:,t] - bias)
template <class T>
Var<T> biasnorm_channel(const Var<T>& x, const Var<T>& bias, const Var<T>& gamma_log);

// ---- backward ----
// Seeds d(loss)/d(loss)=1 and accumulates into every reachable requires_grad
// node. loss must be scalar. Throws ErrorKind::Numeric when a NaN gradient is
// met, naming the producing op.
template <class T>
void backward(const Var<T>& loss);

}  // namespace ad
}  // namespace flowvoc
