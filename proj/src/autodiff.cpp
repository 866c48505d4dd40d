#include "flowvoc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <unordered_set>

#include "flowvoc/error.hpp"
#include "flowvoc/kernels.hpp"

namespace flowvoc {
namespace ad {

namespace {

template <class T>
Var<T> make_node(const char* op, Shape shape, std::vector<Var<T>> parents) {
    auto n = std::make_shared<Node<T>>();
    n->op = op;
    n->shape = std::move(shape);
    n->value.resize(numel(n->shape));
    n->parents = std::move(parents);
    for (auto& p : n->parents)
        if (p && p->requires_grad) n->requires_grad = true;
    return n;
}

// (outer, axis extent, inner) decomposition of a shape around one axis
struct AxisSplit {
    std::size_t outer = 1, mid = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
    AxisSplit r;
    for (int i = 0; i < (int)s.size(); ++i) {
        if (i < axis) r.outer *= s[i];
        else if (i == axis) r.mid = s[i];
        else r.inner *= s[i];
    }
    return r;
}

template <class T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    require(a->shape == b->shape, ErrorKind::Contract, std::string(op) + ": shape mismatch");
}

}  // namespace

template <class T>
Var<T> leaf(Shape shape, std::vector<T> values, bool requires_grad) {
    require(numel(shape) == values.size(), ErrorKind::Contract, "leaf: values.size != product(shape)");
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return n;
}

template <class T>
Var<T> constant(Shape shape, std::vector<T> values) {
    return leaf<T>(std::move(shape), std::move(values), false);
}

template <class T>
Var<T> scalar(T v) {
    return leaf<T>({1}, {v}, false);
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a, b, "add");
    auto n = make_node<T>("add", a->shape, {a, b});
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a->value[i] + b->value[i];
    n->backward_fn = [](Node<T>& self) {
        for (int pi = 0; pi < 2; ++pi) {
            auto& p = self.parents[pi];
            if (!p->requires_grad) continue;
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    };
    return n;
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a, b, "sub");
    auto n = make_node<T>("sub", a->shape, {a, b});
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a->value[i] - b->value[i];
    n->backward_fn = [](Node<T>& self) {
        auto& a = self.parents[0];
        auto& b = self.parents[1];
        if (a->requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) b->grad[i] -= self.grad[i];
    };
    return n;
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a, b, "mul");
    auto n = make_node<T>("mul", a->shape, {a, b});
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a->value[i] * b->value[i];
    n->backward_fn = [](Node<T>& self) {
        auto& a = self.parents[0];
        auto& b = self.parents[1];
        if (a->requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * b->value[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i] * a->value[i];
    };
    return n;
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T c) {
    auto n = make_node<T>("add_scalar", a->shape, {a});
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a->value[i] + c;
    n->backward_fn = [](Node<T>& self) {
        auto& a = self.parents[0];
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
    };
    return n;
}

template <class T>
Var<T> mul_scalar(const Var<T>& a, T c) {
    auto n = make_node<T>("mul_scalar", a->shape, {a});
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a->value[i] * c;
    n->backward_fn = [c](Node<T>& self) {
        auto& a = self.parents[0];
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * c;
    };
    return n;
}

template <class T>
Var<T> exp_(const Var<T>& a) {
    auto n = make_node<T>("exp", a->shape, {a});
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = std::exp(a->value[i]);
    n->backward_fn = [](Node<T>& self) {
        auto& a = self.parents[0];
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * self.value[i];
    };
    return n;
}

template <class T>
Var<T> gelu(const Var<T>& a) {
    auto n = make_node<T>("gelu", a->shape, {a});
    const T inv_sqrt2 = T(0.7071067811865475244);
    for (std::size_t i = 0; i < n->value.size(); ++i) {
        const T x = a->value[i];
        n->value[i] = T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2));
    }
    n->backward_fn = [inv_sqrt2](Node<T>& self) {
        auto& a = self.parents[0];
        if (!a->requires_grad) return;
        const T inv_sqrt2pi = T(0.3989422804014326779);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const T x = a->value[i];
            const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
            const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
            a->grad[i] += self.grad[i] * (cdf + x * pdf);
        }
    };
    return n;
}

template <class T>
Var<T> prelu(const Var<T>& x, const Var<T>& alpha, int axis) {
    require(axis >= 0 && axis < (int)x->shape.size(), ErrorKind::Contract, "prelu: bad axis");
    require((int)alpha->numel() == x->shape[axis], ErrorKind::Contract,
            "prelu: alpha size must equal shape[axis]");
    auto n = make_node<T>("prelu", x->shape, {x, alpha});
    const auto sp = split_axis(x->shape, axis);
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t c = 0; c < sp.mid; ++c) {
            const T al = alpha->value[c];
            const std::size_t base = (o * sp.mid + c) * sp.inner;
            for (std::size_t i = 0; i < sp.inner; ++i) {
                const T v = x->value[base + i];
                n->value[base + i] = v >= 0 ? v : al * v;
            }
        }
    n->backward_fn = [sp](Node<T>& self) {
        auto& x = self.parents[0];
        auto& alpha = self.parents[1];
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t c = 0; c < sp.mid; ++c) {
                const T al = alpha->value[c];
                const std::size_t base = (o * sp.mid + c) * sp.inner;
                T da = 0;
                for (std::size_t i = 0; i < sp.inner; ++i) {
                    const T v = x->value[base + i];
                    const T g = self.grad[base + i];
                    if (x->requires_grad) x->grad[base + i] += v >= 0 ? g : al * g;
                    if (v < 0) da += g * v;
                }
                if (alpha->requires_grad) alpha->grad[c] += da;
            }
    };
    return n;
}

template <class T>
Var<T> broadcast_scalar(const Var<T>& s, Shape shape) {
    require(s->numel() == 1, ErrorKind::Contract, "broadcast_scalar: source must be scalar");
    auto n = make_node<T>("broadcast_scalar", std::move(shape), {s});
    std::fill(n->value.begin(), n->value.end(), s->value[0]);
    n->backward_fn = [](Node<T>& self) {
        auto& s = self.parents[0];
        if (!s->requires_grad) return;
        T acc = 0;
        for (T g : self.grad) acc += g;
        s->grad[0] += acc;
    };
    return n;
}

template <class T>
Var<T> mul_bcast(const Var<T>& x, const Var<T>& v, int bc_axis) {
    const auto sp = split_axis(x->shape, bc_axis);
    require(v->numel() == sp.outer * sp.inner, ErrorKind::Contract,
            "mul_bcast: v numel must equal x numel / shape[bc_axis]");
    auto n = make_node<T>("mul_bcast", x->shape, {x, v});
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t c = 0; c < sp.mid; ++c) {
            const std::size_t xb = (o * sp.mid + c) * sp.inner;
            const std::size_t vb = o * sp.inner;
            for (std::size_t i = 0; i < sp.inner; ++i)
                n->value[xb + i] = x->value[xb + i] * v->value[vb + i];
        }
    n->backward_fn = [sp](Node<T>& self) {
        auto& x = self.parents[0];
        auto& v = self.parents[1];
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t c = 0; c < sp.mid; ++c) {
                const std::size_t xb = (o * sp.mid + c) * sp.inner;
                const std::size_t vb = o * sp.inner;
                for (std::size_t i = 0; i < sp.inner; ++i) {
                    const T g = self.grad[xb + i];
                    if (x->requires_grad) x->grad[xb + i] += g * v->value[vb + i];
                    if (v->requires_grad) v->grad[vb + i] += g * x->value[xb + i];
                }
            }
    };
    return n;
}

template <class T>
Var<T> add_bcast(const Var<T>& x, const Var<T>& v, int bc_axis) {
    const auto sp = split_axis(x->shape, bc_axis);
    require(v->numel() == sp.outer * sp.inner, ErrorKind::Contract,
            "add_bcast: v numel must equal x numel / shape[bc_axis]");
    auto n = make_node<T>("add_bcast", x->shape, {x, v});
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t c = 0; c < sp.mid; ++c) {
            const std::size_t xb = (o * sp.mid + c) * sp.inner;
            const std::size_t vb = o * sp.inner;
            for (std::size_t i = 0; i < sp.inner; ++i)
                n->value[xb + i] = x->value[xb + i] + v->value[vb + i];
        }
    n->backward_fn = [sp](Node<T>& self) {
        auto& x = self.parents[0];
        auto& v = self.parents[1];
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t c = 0; c < sp.mid; ++c) {
                const std::size_t xb = (o * sp.mid + c) * sp.inner;
                const std::size_t vb = o * sp.inner;
                for (std::size_t i = 0; i < sp.inner; ++i) {
                    const T g = self.grad[xb + i];
                    if (x->requires_grad) x->grad[xb + i] += g;
                    if (v->requires_grad) v->grad[vb + i] += g;
                }
            }
    };
    return n;
}

template <class T>
Var<T> bias_add(const Var<T>& x, const Var<T>& b) {
    require(!x->shape.empty() && (int)b->numel() == x->shape.back(), ErrorKind::Contract,
            "bias_add: bias size must equal last extent");
    auto n = make_node<T>("bias_add", x->shape, {x, b});
    const std::size_t w = x->shape.back();
    const std::size_t rows = x->numel() / w;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j)
            n->value[r * w + j] = x->value[r * w + j] + b->value[j];
    n->backward_fn = [w, rows](Node<T>& self) {
        auto& x = self.parents[0];
        auto& b = self.parents[1];
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < w; ++j) {
                const T g = self.grad[r * w + j];
                if (x->requires_grad) x->grad[r * w + j] += g;
                if (b->requires_grad) b->grad[j] += g;
            }
    };
    return n;
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
    require(numel(shape) == a->numel(), ErrorKind::Contract, "reshape: numel mismatch");
    auto n = make_node<T>("reshape", std::move(shape), {a});
    n->value = a->value;
    n->backward_fn = [](Node<T>& self) {
        auto& a = self.parents[0];
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
    };
    return n;
}

namespace {

// out[i_perm] = in[i]; returns out strides to walk the input linearly
template <class T>
void permute_values(const std::vector<T>& in, std::vector<T>& out, const Shape& in_shape,
                    const std::vector<int>& perm, bool accumulate) {
    const int rank = (int)in_shape.size();
    Shape out_shape(rank);
    for (int i = 0; i < rank; ++i) out_shape[i] = in_shape[perm[i]];
    std::vector<std::size_t> out_strides(rank);
    std::size_t s = 1;
    for (int i = rank - 1; i >= 0; --i) {
        out_strides[i] = s;
        s *= out_shape[i];
    }
    // stride of input axis j in the output layout
    std::vector<std::size_t> strides_for_in(rank);
    for (int i = 0; i < rank; ++i) strides_for_in[perm[i]] = out_strides[i];
    std::vector<int> idx(rank, 0);
    std::size_t out_pos = 0;
    const std::size_t total = in.size();
    for (std::size_t lin = 0; lin < total; ++lin) {
        if (accumulate) out[out_pos] += in[lin];
        else out[out_pos] = in[lin];
        for (int ax = rank - 1; ax >= 0; --ax) {
            ++idx[ax];
            out_pos += strides_for_in[ax];
            if (idx[ax] < in_shape[ax]) break;
            out_pos -= strides_for_in[ax] * in_shape[ax];
            idx[ax] = 0;
        }
    }
}

}  // namespace

template <class T>
Var<T> permute(const Var<T>& a, const std::vector<int>& perm) {
    const int rank = (int)a->shape.size();
    require((int)perm.size() == rank, ErrorKind::Contract, "permute: perm rank mismatch");
    Shape out_shape(rank);
    for (int i = 0; i < rank; ++i) out_shape[i] = a->shape[perm[i]];
    auto n = make_node<T>("permute", out_shape, {a});
    permute_values(a->value, n->value, a->shape, perm, false);
    std::vector<int> inv(rank);
    for (int i = 0; i < rank; ++i) inv[perm[i]] = i;
    Shape self_shape = out_shape;
    n->backward_fn = [inv, self_shape](Node<T>& self) {
        auto& a = self.parents[0];
        if (!a->requires_grad) return;
        permute_values(self.grad, a->grad, self_shape, inv, true);
    };
    return n;
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
    require(!xs.empty(), ErrorKind::Contract, "concat: empty input list");
    Shape out_shape = xs[0]->shape;
    require(axis >= 0 && axis < (int)out_shape.size(), ErrorKind::Contract, "concat: bad axis");
    int total_mid = 0;
    for (auto& x : xs) {
        require((int)x->shape.size() == (int)out_shape.size(), ErrorKind::Contract,
                "concat: rank mismatch");
        for (int i = 0; i < (int)out_shape.size(); ++i)
            if (i != axis)
                require(x->shape[i] == out_shape[i], ErrorKind::Contract, "concat: extent mismatch");
        total_mid += x->shape[axis];
    }
    out_shape[axis] = total_mid;
    std::vector<Var<T>> parents(xs.begin(), xs.end());
    auto n = make_node<T>("concat", out_shape, parents);
    const auto spo = split_axis(out_shape, axis);
    std::size_t mid_off = 0;
    std::vector<std::size_t> offsets;
    for (auto& x : xs) {
        offsets.push_back(mid_off);
        const auto spi = split_axis(x->shape, axis);
        for (std::size_t o = 0; o < spi.outer; ++o)
            for (std::size_t c = 0; c < spi.mid; ++c)
                std::copy_n(x->value.begin() + (o * spi.mid + c) * spi.inner, spi.inner,
                            n->value.begin() + (o * spo.mid + mid_off + c) * spo.inner);
        mid_off += spi.mid;
    }
    const int ax = axis;
    n->backward_fn = [spo, offsets, ax](Node<T>& self) {
        for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
            auto& p = self.parents[pi];
            if (!p->requires_grad) continue;
            const auto spi = split_axis(p->shape, ax);
            for (std::size_t o = 0; o < spi.outer; ++o)
                for (std::size_t c = 0; c < spi.mid; ++c) {
                    const T* g = self.grad.data() + (o * spo.mid + offsets[pi] + c) * spo.inner;
                    T* dst = p->grad.data() + (o * spi.mid + c) * spi.inner;
                    for (std::size_t i = 0; i < spi.inner; ++i) dst[i] += g[i];
                }
        }
    };
    return n;
}

template <class T>
Var<T> slice(const Var<T>& a, int axis, int start, int len) {
    require(axis >= 0 && axis < (int)a->shape.size(), ErrorKind::Contract, "slice: bad axis");
    require(len > 0 && start >= 0 && start + len <= a->shape[axis], ErrorKind::Contract,
            "slice: range out of bounds");
    Shape out_shape = a->shape;
    out_shape[axis] = len;
    auto n = make_node<T>("slice", out_shape, {a});
    const auto spi = split_axis(a->shape, axis);
    const auto spo = split_axis(out_shape, axis);
    for (std::size_t o = 0; o < spo.outer; ++o)
        for (std::size_t c = 0; c < spo.mid; ++c)
            std::copy_n(a->value.begin() + (o * spi.mid + start + c) * spi.inner, spi.inner,
                        n->value.begin() + (o * spo.mid + c) * spo.inner);
    n->backward_fn = [spi, spo, start](Node<T>& self) {
        auto& a = self.parents[0];
        if (!a->requires_grad) return;
        for (std::size_t o = 0; o < spo.outer; ++o)
            for (std::size_t c = 0; c < spo.mid; ++c) {
                const T* g = self.grad.data() + (o * spo.mid + c) * spo.inner;
                T* dst = a->grad.data() + (o * spi.mid + start + c) * spi.inner;
                for (std::size_t i = 0; i < spo.inner; ++i) dst[i] += g[i];
            }
    };
    return n;
}

template <class T>
Var<T> gather_rows(const Var<T>& table, const std::vector<int>& rows) {
    require(table->shape.size() == 2, ErrorKind::Contract, "gather_rows: table must be rank 2");
    const int v = table->shape[0];
    const int w = table->shape[1];
    for (int r : rows)
        require(r >= 0 && r < v, ErrorKind::Contract, "gather_rows: index out of range");
    auto n = make_node<T>("gather_rows", {(int)rows.size(), w}, {table});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(table->value.begin() + (std::size_t)rows[i] * w, w, n->value.begin() + i * w);
    n->backward_fn = [rows, w](Node<T>& self) {
        auto& t = self.parents[0];
        if (!t->requires_grad) return;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const T* g = self.grad.data() + i * w;
            T* dst = t->grad.data() + (std::size_t)rows[i] * w;
            for (int j = 0; j < w; ++j) dst[j] += g[j];
        }
    };
    return n;
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    require(a->shape.size() == 2 && b->shape.size() == 2 && a->shape[1] == b->shape[0],
            ErrorKind::Contract, "matmul: incompatible shapes");
    const int m = a->shape[0], k = a->shape[1], nn = b->shape[1];
    auto n = make_node<T>("matmul", {m, nn}, {a, b});
    kernels::gemm<T>(false, false, m, nn, k, a->value.data(), b->value.data(), n->value.data(), false);
    n->backward_fn = [m, k, nn](Node<T>& self) {
        auto& a = self.parents[0];
        auto& b = self.parents[1];
        if (a->requires_grad)
            kernels::gemm<T>(false, true, m, k, nn, self.grad.data(), b->value.data(),
                             a->grad.data(), true);
        if (b->requires_grad)
            kernels::gemm<T>(true, false, k, nn, m, a->value.data(), self.grad.data(),
                             b->grad.data(), true);
    };
    return n;
}

template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool trans_b) {
    require(a->shape.size() == 3 && b->shape.size() == 3 && a->shape[0] == b->shape[0],
            ErrorKind::Contract, "bmm: rank/batch mismatch");
    const int bs = a->shape[0], m = a->shape[1], k = a->shape[2];
    const int nn = trans_b ? b->shape[1] : b->shape[2];
    require(trans_b ? b->shape[2] == k : b->shape[1] == k, ErrorKind::Contract,
            "bmm: inner extent mismatch");
    auto n = make_node<T>("bmm", {bs, m, nn}, {a, b});
    const std::size_t sa = (std::size_t)m * k, sb = (std::size_t)(trans_b ? nn * k : k * nn),
                      sc = (std::size_t)m * nn;
    for (int i = 0; i < bs; ++i)
        kernels::gemm<T>(false, trans_b, m, nn, k, a->value.data() + i * sa,
                         b->value.data() + i * sb, n->value.data() + i * sc, false);
    n->backward_fn = [bs, m, k, nn, sa, sb, sc, trans_b](Node<T>& self) {
        auto& a = self.parents[0];
        auto& b = self.parents[1];
        for (int i = 0; i < bs; ++i) {
            const T* g = self.grad.data() + i * sc;
            if (a->requires_grad) {
                // c = a.b  -> da += g.b^T ; c = a.b^T -> da += g.b
                kernels::gemm<T>(false, !trans_b, m, k, nn, g, b->value.data() + i * sb,
                                 a->grad.data() + i * sa, true);
            }
            if (b->requires_grad) {
                if (!trans_b)  // db += a^T.g
                    kernels::gemm<T>(true, false, k, nn, m, a->value.data() + i * sa, g,
                                     b->grad.data() + i * sb, true);
                else  // db (nn,k) += g^T.a
                    kernels::gemm<T>(true, false, nn, k, m, g, a->value.data() + i * sa,
                                     b->grad.data() + i * sb, true);
            }
        }
    };
    return n;
}

template <class T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int groups) {
    require(x->shape.size() == 3 && w->shape.size() == 3, ErrorKind::Contract,
            "conv1d: x must be (B,C,T), w must be (Cout,Cin/groups,K)");
    const int batch = x->shape[0], cin = x->shape[1], t = x->shape[2];
    const int cout = w->shape[0], wg = w->shape[1], ks = w->shape[2];
    require(groups > 0 && cin % groups == 0 && cout % groups == 0, ErrorKind::Contract,
            "conv1d: groups must divide channel counts");
    require(wg == cin / groups, ErrorKind::Contract, "conv1d: weight in-channel extent mismatch");
    if (bias)
        require((int)bias->numel() == cout, ErrorKind::Contract, "conv1d: bias size mismatch");
    std::vector<Var<T>> parents = bias ? std::vector<Var<T>>{x, w, bias} : std::vector<Var<T>>{x, w};
    auto n = make_node<T>("conv1d", {batch, cout, t}, parents);
    kernels::conv1d_forward<T>(x->value.data(), w->value.data(),
                               bias ? bias->value.data() : nullptr, n->value.data(), batch, cin,
                               cout, t, ks, groups);
    n->backward_fn = [batch, cin, cout, t, ks, groups](Node<T>& self) {
        auto& x = self.parents[0];
        auto& w = self.parents[1];
        const bool has_bias = self.parents.size() == 3;
        if (x->requires_grad)
            kernels::conv1d_backward_x<T>(w->value.data(), self.grad.data(), x->grad.data(), batch,
                                          cin, cout, t, ks, groups);
        const bool need_w = w->requires_grad;
        const bool need_b = has_bias && self.parents[2]->requires_grad;
        if (need_w || need_b) {
            // kernel writes both; route unwanted sides to scratch
            static thread_local std::vector<T> scratch;
            T* dw = nullptr;
            T* db = nullptr;
            if (need_w) dw = w->grad.data();
            else {
                scratch.assign(w->numel(), T(0));
                dw = scratch.data();
            }
            if (need_b) db = self.parents[2]->grad.data();
            kernels::conv1d_backward_w<T>(x->value.data(), self.grad.data(), dw, db, batch, cin,
                                          cout, t, ks, groups);
        }
    };
    return n;
}

template <class T>
Var<T> sum_all(const Var<T>& a) {
    auto n = make_node<T>("sum", {1}, {a});
    T acc = 0;
    for (T v : a->value) acc += v;
    n->value[0] = acc;
    n->backward_fn = [](Node<T>& self) {
        auto& a = self.parents[0];
        if (!a->requires_grad) return;
        const T g = self.grad[0];
        for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    };
    return n;
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
    auto n = make_node<T>("mean", {1}, {a});
    T acc = 0;
    for (T v : a->value) acc += v;
    const T inv = T(1) / T(a->numel());
    n->value[0] = acc * inv;
    n->backward_fn = [inv](Node<T>& self) {
        auto& a = self.parents[0];
        if (!a->requires_grad) return;
        const T g = self.grad[0] * inv;
        for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    };
    return n;
}

template <class T>
Var<T> mean_channel(const Var<T>& x) {
    require(x->shape.size() == 3, ErrorKind::Contract, "mean_channel: x must be (B,C,T)");
    const int b = x->shape[0], c = x->shape[1], t = x->shape[2];
    auto n = make_node<T>("mean_channel", {b, 1, t}, {x});
    const T inv = T(1) / T(c);
    for (int bi = 0; bi < b; ++bi)
        for (int ti = 0; ti < t; ++ti) {
            T acc = 0;
            for (int ci = 0; ci < c; ++ci) acc += x->value[((std::size_t)bi * c + ci) * t + ti];
            n->value[(std::size_t)bi * t + ti] = acc * inv;
        }
    n->backward_fn = [b, c, t, inv](Node<T>& self) {
        auto& x = self.parents[0];
        if (!x->requires_grad) return;
        for (int bi = 0; bi < b; ++bi)
            for (int ti = 0; ti < t; ++ti) {
                const T g = self.grad[(std::size_t)bi * t + ti] * inv;
                for (int ci = 0; ci < c; ++ci) x->grad[((std::size_t)bi * c + ci) * t + ti] += g;
            }
    };
    return n;
}

template <class T>
Var<T> rms_channel(const Var<T>& x) {
    require(x->shape.size() == 3, ErrorKind::Contract, "rms_channel: x must be (B,C,T)");
    const int b = x->shape[0], c = x->shape[1], t = x->shape[2];
    auto n = make_node<T>("rms_channel", {b, 1, t}, {x});
    const T inv = T(1) / T(c);
    const T eps = T(1e-12);
    for (int bi = 0; bi < b; ++bi)
        for (int ti = 0; ti < t; ++ti) {
            T acc = 0;
            for (int ci = 0; ci < c; ++ci) {
                const T v = x->value[((std::size_t)bi * c + ci) * t + ti];
                acc += v * v;
            }
            n->value[(std::size_t)bi * t + ti] = std::sqrt(acc * inv + eps);
        }
    n->backward_fn = [b, c, t, inv](Node<T>& self) {
        auto& x = self.parents[0];
        if (!x->requires_grad) return;
        for (int bi = 0; bi < b; ++bi)
            for (int ti = 0; ti < t; ++ti) {
                const T r = self.value[(std::size_t)bi * t + ti];
                const T g = self.grad[(std::size_t)bi * t + ti] * inv / r;
                for (int ci = 0; ci < c; ++ci) {
                    const std::size_t ix = ((std::size_t)bi * c + ci) * t + ti;
                    x->grad[ix] += g * x->value[ix];
                }
            }
    };
    return n;
}

template <class T>
Var<T> softmax_last(const Var<T>& x) {
    require(!x->shape.empty(), ErrorKind::Contract, "softmax: rank 0 input");
    auto n = make_node<T>("softmax", x->shape, {x});
    const std::size_t w = x->shape.back();
    const std::size_t rows = x->numel() / w;
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x->value.data() + r * w;
        T* yr = n->value.data() + r * w;
        T mx = xr[0];
        for (std::size_t j = 1; j < w; ++j) mx = std::max(mx, xr[j]);
        T s = 0;
        for (std::size_t j = 0; j < w; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            s += yr[j];
        }
        const T inv = T(1) / s;
        for (std::size_t j = 0; j < w; ++j) yr[j] *= inv;
    }
    n->backward_fn = [w, rows](Node<T>& self) {
        auto& x = self.parents[0];
        if (!x->requires_grad) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* yr = self.value.data() + r * w;
            const T* gr = self.grad.data() + r * w;
            T dot = 0;
            for (std::size_t j = 0; j < w; ++j) dot += yr[j] * gr[j];
            T* dx = x->grad.data() + r * w;
            for (std::size_t j = 0; j < w; ++j) dx[j] += yr[j] * (gr[j] - dot);
        }
    };
    return n;
}

template <class T>
Var<T> softmax_xent(const Var<T>& logits, const std::vector<int>& labels) {
    require(logits->shape.size() == 2, ErrorKind::Contract, "softmax_xent: logits must be (N,K)");
    const int rows = logits->shape[0], k = logits->shape[1];
    require((int)labels.size() == rows, ErrorKind::Contract, "softmax_xent: label count mismatch");
    for (int l : labels)
        require(l >= 0 && l < k, ErrorKind::Contract, "softmax_xent: label out of range");
    auto n = make_node<T>("softmax_xent", {1}, {logits});
    T total = 0;
    for (int r = 0; r < rows; ++r) {
        const T* xr = logits->value.data() + (std::size_t)r * k;
        T mx = xr[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, xr[j]);
        T s = 0;
        for (int j = 0; j < k; ++j) s += std::exp(xr[j] - mx);
        total += std::log(s) + mx - xr[labels[r]];
    }
    n->value[0] = total / T(rows);
    n->backward_fn = [rows, k, labels](Node<T>& self) {
        auto& x = self.parents[0];
        if (!x->requires_grad) return;
        const T g = self.grad[0] / T(rows);
        for (int r = 0; r < rows; ++r) {
            const T* xr = x->value.data() + (std::size_t)r * k;
            T* dx = x->grad.data() + (std::size_t)r * k;
            T mx = xr[0];
            for (int j = 1; j < k; ++j) mx = std::max(mx, xr[j]);
            T s = 0;
            for (int j = 0; j < k; ++j) s += std::exp(xr[j] - mx);
            const T inv = T(1) / s;
            for (int j = 0; j < k; ++j) {
                T p = std::exp(xr[j] - mx) * inv;
                dx[j] += g * (p - (j == labels[r] ? T(1) : T(0)));
            }
        }
    };
    return n;
}

template <class T>
Var<T> layernorm_last(const Var<T>& x, T eps) {
    require(!x->shape.empty(), ErrorKind::Contract, "layernorm: rank 0 input");
    auto n = make_node<T>("layernorm", x->shape, {x});
    const std::size_t w = x->shape.back();
    const std::size_t rows = x->numel() / w;
    const T invw = T(1) / T(w);
    // keep 1/sigma per row for backward
    auto inv_std = std::make_shared<std::vector<T>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x->value.data() + r * w;
        T mu = 0;
        for (std::size_t j = 0; j < w; ++j) mu += xr[j];
        mu *= invw;
        T var = 0;
        for (std::size_t j = 0; j < w; ++j) {
            const T d = xr[j] - mu;
            var += d * d;
        }
        var *= invw;
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        T* yr = n->value.data() + r * w;
        for (std::size_t j = 0; j < w; ++j) yr[j] = (xr[j] - mu) * is;
    }
    n->backward_fn = [w, rows, invw, inv_std](Node<T>& self) {
        auto& x = self.parents[0];
        if (!x->requires_grad) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* yr = self.value.data() + r * w;
            const T* gr = self.grad.data() + r * w;
            T gmean = 0, gymean = 0;
            for (std::size_t j = 0; j < w; ++j) {
                gmean += gr[j];
                gymean += gr[j] * yr[j];
            }
            gmean *= invw;
            gymean *= invw;
            const T is = (*inv_std)[r];
            T* dx = x->grad.data() + r * w;
            for (std::size_t j = 0; j < w; ++j)
                dx[j] += is * (gr[j] - gmean - yr[j] * gymean);
        }
    };
    return n;
}

template <class T>
Var<T> biasnorm_channel(const Var<T>& x, const Var<T>& bias, const Var<T>& gamma_log) {
    require(x->shape.size() == 3, ErrorKind::Contract, "biasnorm: x must be (B,C,T)");
    const int b = x->shape[0], c = x->shape[1], t = x->shape[2];
    require((int)bias->numel() == c, ErrorKind::Contract, "biasnorm: bias size mismatch");
    require(gamma_log->numel() == 1, ErrorKind::Contract, "biasnorm: gamma must be scalar");
    auto n = make_node<T>("biasnorm", x->shape, {x, bias, gamma_log});
    const T invc = T(1) / T(c);
    const T eps = T(1e-12);
    const T scale = std::exp(gamma_log->value[0]);
    auto inv_rms = std::make_shared<std::vector<T>>((std::size_t)b * t);
    for (int bi = 0; bi < b; ++bi)
        for (int ti = 0; ti < t; ++ti) {
            T acc = 0;
            for (int ci = 0; ci < c; ++ci) {
                const T d = x->value[((std::size_t)bi * c + ci) * t + ti] - bias->value[ci];
                acc += d * d;
            }
            const T ir = T(1) / std::sqrt(acc * invc + eps);
            (*inv_rms)[(std::size_t)bi * t + ti] = ir;
            for (int ci = 0; ci < c; ++ci) {
                const std::size_t ix = ((std::size_t)bi * c + ci) * t + ti;
                n->value[ix] = x->value[ix] * scale * ir;
            }
        }
    n->backward_fn = [b, c, t, invc, scale, inv_rms](Node<T>& self) {
        auto& x = self.parents[0];
        auto& bias = self.parents[1];
        auto& gamma = self.parents[2];
        T dgamma = 0;
        for (int bi = 0; bi < b; ++bi)
            for (int ti = 0; ti < t; ++ti) {
                const std::size_t rt = (std::size_t)bi * t + ti;
                const T ir = (*inv_rms)[rt];
                T s1 = 0;  // sum_c g*x, drives both the rms correction and dgamma
                for (int ci = 0; ci < c; ++ci) {
                    const std::size_t ix = ((std::size_t)bi * c + ci) * t + ti;
                    s1 += self.grad[ix] * x->value[ix];
                }
                dgamma += s1 * scale * ir;
                const T corr = invc * ir * ir * ir * s1;
                for (int ci = 0; ci < c; ++ci) {
                    const std::size_t ix = ((std::size_t)bi * c + ci) * t + ti;
                    const T g = self.grad[ix];
                    const T d = x->value[ix] - bias->value[ci];
                    if (x->requires_grad) x->grad[ix] += scale * (g * ir - d * corr);
                    if (bias->requires_grad) bias->grad[ci] += scale * d * corr;
                }
            }
        if (gamma->requires_grad) gamma->grad[0] += dgamma;
    };
    return n;
}

template <class T>
void backward(const Var<T>& loss) {
    require(loss->numel() == 1, ErrorKind::Contract, "backward: loss must be scalar");
    if (!loss->requires_grad) return;
    // iterative post-order DFS; reversed it yields consumers-before-producers
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.push_back({loss.get(), 0});
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<T>* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (!node->backward_fn) continue;
        for (T g : node->grad)
            if (std::isnan(g))
                raise(ErrorKind::Numeric, std::string("NaN gradient flowing into op '") + node->op + "'");
        for (auto& p : node->parents)
            if (p->requires_grad) p->ensure_grad();
        node->backward_fn(*node);
    }
}

#define FLOWVOC_INSTANTIATE(T)                                                              \
    template Var<T> leaf<T>(Shape, std::vector<T>, bool);                                   \
    template Var<T> constant<T>(Shape, std::vector<T>);                                     \
    template Var<T> scalar<T>(T);                                                           \
    template Var<T> add<T>(const Var<T>&, const Var<T>&);                                   \
    template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                   \
    template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                   \
    template Var<T> add_scalar<T>(const Var<T>&, T);                                        \
    template Var<T> mul_scalar<T>(const Var<T>&, T);                                        \
    template Var<T> exp_<T>(const Var<T>&);                                                 \
    template Var<T> gelu<T>(const Var<T>&);                                                 \
    template Var<T> prelu<T>(const Var<T>&, const Var<T>&, int);                            \
    template Var<T> broadcast_scalar<T>(const Var<T>&, Shape);                              \
    template Var<T> mul_bcast<T>(const Var<T>&, const Var<T>&, int);                        \
    template Var<T> add_bcast<T>(const Var<T>&, const Var<T>&, int);                        \
    template Var<T> bias_add<T>(const Var<T>&, const Var<T>&);                              \
    template Var<T> reshape<T>(const Var<T>&, Shape);                                       \
    template Var<T> permute<T>(const Var<T>&, const std::vector<int>&);                     \
    template Var<T> concat<T>(const std::vector<Var<T>>&, int);                             \
    template Var<T> slice<T>(const Var<T>&, int, int, int);                                 \
    template Var<T> gather_rows<T>(const Var<T>&, const std::vector<int>&);                 \
    template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                \
    template Var<T> bmm<T>(const Var<T>&, const Var<T>&, bool);                             \
    template Var<T> conv1d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int);            \
    template Var<T> sum_all<T>(const Var<T>&);                                              \
    template Var<T> mean_all<T>(const Var<T>&);                                             \
    template Var<T> mean_channel<T>(const Var<T>&);                                        \
    template Var<T> rms_channel<T>(const Var<T>&);                                         \
    template Var<T> softmax_last<T>(const Var<T>&);                                         \
    template Var<T> softmax_xent<T>(const Var<T>&, const std::vector<int>&);                \
    template Var<T> layernorm_last<T>(const Var<T>&, T);                                    \
    template Var<T> biasnorm_channel<T>(const Var<T>&, const Var<T>&, const Var<T>&);       \
    template void backward<T>(const Var<T>&);

FLOWVOC_INSTANTIATE(float)
FLOWVOC_INSTANTIATE(double)
#undef FLOWVOC_INSTANTIATE

}  // namespace ad
}  // namespace flowvoc
