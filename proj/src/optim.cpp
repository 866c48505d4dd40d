#include "flowvoc/optim.hpp"

#include <cmath>

#include "flowvoc/error.hpp"

namespace flowvoc {

template <class T>
void AdamW<T>::step(const std::vector<ad::Var<T>>& params) {
    require(lr > 0, ErrorKind::Contract, "adamw: lr must be positive");
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i]->numel(), T(0));
            v_[i].assign(params[i]->numel(), T(0));
        }
    }
    require(m_.size() == params.size(), ErrorKind::Contract, "adamw: parameter count changed");
    ++step_;
    const T bc1 = T(1) - std::pow(beta1, T(step_));
    const T bc2 = T(1) - std::pow(beta2, T(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        require(m_[i].size() == p->numel(), ErrorKind::Contract, "adamw: parameter shape changed");
        p->ensure_grad();
        T* w = p->value.data();
        const T* g = p->grad.data();
        T* m = m_[i].data();
        T* v = v_[i].data();
        for (std::size_t j = 0; j < p->numel(); ++j) {
            m[j] = beta1 * m[j] + (T(1) - beta1) * g[j];
            v[j] = beta2 * v[j] + (T(1) - beta2) * g[j] * g[j];
            const T mhat = m[j] / bc1;
            const T vhat = v[j] / bc2;
            w[j] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w[j]);
        }
    }
}

template <class T>
void AdamW<T>::zero_grad(const std::vector<ad::Var<T>>& params) {
    for (auto& p : params) {
        p->ensure_grad();
        std::fill(p->grad.begin(), p->grad.end(), T(0));
    }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace flowvoc
