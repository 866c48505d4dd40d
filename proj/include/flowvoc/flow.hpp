#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "flowvoc/autodiff.hpp"
#include "flowvoc/dsp.hpp"
#include "flowvoc/rng.hpp"

namespace flowvoc {

// One training point on the straight-line path x_t = (1-t) x0 + t x1.
template <class T>
struct FlowSample {
    std::vector<T> x0, x1, xt, v_star;  // v_star = x1 - x0
    double t = 0;
};

struct SamplerConfig {
    enum class Prediction { Velocity, Data };

    int steps = 200;
    double guidance_scale = 1.0;
    double sigma = 1.0;
    Prediction prediction = Prediction::Data;
    std::uint64_t seed = 0;
};

// guard for the data-prediction-to-velocity conversion near t = 1
constexpr double kEpsT = 1e-3;

template <class T>
std::vector<T> draw_noise(std::size_t n, double sigma, Rng& rng);

template <class T>
FlowSample<T> make_path_sample_with(std::vector<T> x0, std::vector<T> x1, double t);

template <class T>
FlowSample<T> make_path_sample(const std::vector<T>& x1, Rng& rng, double t, double sigma = 1.0);

// mean((v_hat - v_star)^2)
template <class T>
ad::Var<T> fm_velocity_loss(const ad::Var<T>& v_hat, const FlowSample<T>& sample);

// Mean squared error where each sample's term is scaled by its frame's
// weight (frame = floor(position / plan.hop), weights as given). x1_hat is
// (B, L); x1 holds B*L target samples.
template <class T>
ad::Var<T> fm_data_loss(const ad::Var<T>& x1_hat, const std::vector<T>& x1,
                        const std::vector<double>& weights, const StftPlan& plan);

// model: (x_t flat, t) -> prediction of cfg.prediction kind
template <class T>
using FlowModel = std::function<std::vector<T>(const std::vector<T>&, double)>;

// Euler integration of the flow ODE from x0 at t=0 to t=1. With
// guidance_scale s != 1 and an unconditional model given, the per-step
// prediction is uncond + s * (cond - uncond); s == 1 uses cond alone and
// s == 0 uncond alone (bitwise, the blend is skipped).
template <class T>
std::vector<T> euler_sample(const FlowModel<T>& cond, const FlowModel<T>& uncond,
                            std::vector<T> x0, const SamplerConfig& cfg);

}  // namespace flowvoc
