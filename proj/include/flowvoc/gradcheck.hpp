#pragma once

// Finite-difference gradient checking shared by the op-level and model-level
// test suites. Double precision only: float loses too many digits for
// central differences.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "flowvoc/autodiff.hpp"
#include "flowvoc/rng.hpp"

namespace flowvoc::gradcheck {

inline flowvoc::ad::Var<double> randn_var(flowvoc::Rng& rng, flowvoc::ad::Shape shape,
                                          double scale = 1.0) {
    std::vector<double> v(flowvoc::ad::numel(shape));
    for (auto& x : v) x = rng.normal() * scale;
    return flowvoc::ad::leaf<double>(std::move(shape), std::move(v), true);
}

// Reduce an arbitrary output to a scalar with fixed random weights so every
// output element feeds the loss with a distinct coefficient.
inline flowvoc::ad::Var<double> weighted_sum(const flowvoc::ad::Var<double>& y, unsigned seed) {
    flowvoc::Rng rng(seed);
    std::vector<double> w(y->numel());
    for (auto& x : w) x = rng.normal();
    return flowvoc::ad::sum_all(
        flowvoc::ad::mul(y, flowvoc::ad::constant<double>(y->shape, std::move(w))));
}

// Central finite differences against one reverse pass, every input element.
// build must construct the graph from the given leaves' current values.
inline double fd_max_rel_err(std::vector<flowvoc::ad::Var<double>> inputs,
                             const std::function<flowvoc::ad::Var<double>()>& build,
                             double h = 1e-4) {
    for (auto& in : inputs) {
        in->ensure_grad();
        std::fill(in->grad.begin(), in->grad.end(), 0.0);
    }
    auto loss = build();
    flowvoc::ad::backward(loss);
    std::vector<std::vector<double>> analytic;
    for (auto& in : inputs) analytic.push_back(in->grad);
    double worst = 0;
    for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
        auto& in = inputs[vi];
        for (std::size_t i = 0; i < in->numel(); ++i) {
            const double orig = in->value[i];
            in->value[i] = orig + h;
            const double lp = build()->value[0];
            in->value[i] = orig - h;
            const double lm = build()->value[0];
            in->value[i] = orig;
            const double fd = (lp - lm) / (2 * h);
            const double an = analytic[vi][i];
            const double err = std::abs(fd - an) / std::max(1.0, std::abs(fd) + std::abs(an));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace flowvoc::gradcheck
