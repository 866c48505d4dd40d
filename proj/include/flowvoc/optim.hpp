#pragma once

#include <vector>

#include "flowvoc/autodiff.hpp"

namespace flowvoc {

// AdamW with bias correction and decoupled weight decay.
// State is indexed by parameter position: pass the same parameter list, in the
// same order, to every step() call.
template <class T>
class AdamW {
  public:
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(0);

    explicit AdamW(T lr_ = T(1e-3), T weight_decay_ = T(0)) : lr(lr_), weight_decay(weight_decay_) {}

    long step_count() const { return step_; }

    // Applies one update in place using each param's accumulated grad, then
    // leaves grads untouched (call zero_grad separately).
    void step(const std::vector<ad::Var<T>>& params);

    static void zero_grad(const std::vector<ad::Var<T>>& params);

  private:
    long step_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

}  // namespace flowvoc
