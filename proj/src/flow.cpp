#include "flowvoc/flow.hpp"

#include <cmath>
#include <string>

#include "flowvoc/error.hpp"

namespace flowvoc {

template <class T>
std::vector<T> draw_noise(std::size_t n, double sigma, Rng& rng) {
    require(sigma > 0, ErrorKind::Contract, "flow: sigma must be positive");
    std::vector<T> x(n);
    for (auto& v : x) v = (T)(rng.normal() * sigma);
    return x;
}

template <class T>
FlowSample<T> make_path_sample_with(std::vector<T> x0, std::vector<T> x1, double t) {
    require(t >= 0.0 && t <= 1.0, ErrorKind::Contract, "flow: t must lie in [0,1]");
    require(x0.size() == x1.size(), ErrorKind::Contract, "flow: x0/x1 size mismatch");
    FlowSample<T> s;
    s.t = t;
    s.xt.resize(x0.size());
    s.v_star.resize(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        s.xt[i] = (T)((1.0 - t) * x0[i] + t * x1[i]);
        s.v_star[i] = x1[i] - x0[i];
    }
    s.x0 = std::move(x0);
    s.x1 = std::move(x1);
    return s;
}

template <class T>
FlowSample<T> make_path_sample(const std::vector<T>& x1, Rng& rng, double t, double sigma) {
    return make_path_sample_with(draw_noise<T>(x1.size(), sigma, rng), x1, t);
}

template <class T>
ad::Var<T> fm_velocity_loss(const ad::Var<T>& v_hat, const FlowSample<T>& sample) {
    require(v_hat->numel() == sample.v_star.size(), ErrorKind::Contract,
            "flow: velocity prediction shape mismatch");
    auto target = ad::constant<T>(v_hat->shape, std::vector<T>(sample.v_star));
    auto diff = ad::sub(v_hat, target);
    return ad::mean_all(ad::mul(diff, diff));
}

template <class T>
ad::Var<T> fm_data_loss(const ad::Var<T>& x1_hat, const std::vector<T>& x1,
                        const std::vector<double>& weights, const StftPlan& plan) {
    require(x1_hat->shape.size() == 2, ErrorKind::Contract, "flow: x1_hat must be (B, L)");
    require(x1_hat->numel() == x1.size(), ErrorKind::Contract,
            "flow: prediction/target size mismatch");
    const int length = x1_hat->shape.back();
    const int frames = plan.frames_for((std::size_t)length);
    require((int)weights.size() == frames, ErrorKind::Contract,
            "flow: expected " + std::to_string(frames) + " frame weights, got " +
                std::to_string(weights.size()));
    std::vector<T> wvec(x1.size());
    for (std::size_t i = 0; i < x1.size(); ++i)
        wvec[i] = (T)weights[(i % (std::size_t)length) / (std::size_t)plan.hop];
    auto diff = ad::sub(x1_hat, ad::constant<T>(x1_hat->shape, std::vector<T>(x1)));
    auto weighted = ad::mul(ad::mul(diff, diff), ad::constant<T>(x1_hat->shape, std::move(wvec)));
    return ad::mean_all(weighted);
}

template <class T>
std::vector<T> euler_sample(const FlowModel<T>& cond, const FlowModel<T>& uncond,
                            std::vector<T> x0, const SamplerConfig& cfg) {
    require(cfg.steps >= 1, ErrorKind::Contract, "euler_sample: steps must be >= 1");
    const double s = cfg.guidance_scale;
    const bool blend = uncond && s != 1.0 && s != 0.0;
    std::vector<T> x = std::move(x0);
    const int n = cfg.steps;
    for (int k = 0; k < n; ++k) {
        const double t = (double)k / n;
        const double dt = 1.0 / n;
        std::vector<T> pred;
        if (uncond && s == 0.0) {
            pred = uncond(x, t);
        } else {
            pred = cond(x, t);
            if (blend) {
                auto u = uncond(x, t);
                require(u.size() == pred.size(), ErrorKind::Contract,
                        "euler_sample: branch shape mismatch");
                for (std::size_t i = 0; i < pred.size(); ++i)
                    pred[i] = (T)(u[i] + s * (pred[i] - u[i]));
            }
        }
        require(pred.size() == x.size(), ErrorKind::Contract,
                "euler_sample: prediction shape mismatch");
        if (cfg.prediction == SamplerConfig::Prediction::Data) {
            if (k == n - 1) {
                // divisor equals dt here, so the update lands on the
                // prediction; assign to keep that exact
                x = std::move(pred);
            } else {
                const double denom = std::max(1.0 - t, kEpsT);
                for (std::size_t i = 0; i < x.size(); ++i)
                    x[i] = (T)(x[i] + dt * (pred[i] - x[i]) / denom);
            }
        } else {
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = (T)(x[i] + dt * pred[i]);
        }
        for (std::size_t i = 0; i < x.size(); ++i)
            if (std::isnan((double)x[i]))
                raise(ErrorKind::Numeric,
                      "euler_sample: NaN state at step " + std::to_string(k));
    }
    return x;
}

#define FLOWVOC_INSTANTIATE(T)                                                             \
    template std::vector<T> draw_noise<T>(std::size_t, double, Rng&);                      \
    template FlowSample<T> make_path_sample_with<T>(std::vector<T>, std::vector<T>, double); \
    template FlowSample<T> make_path_sample<T>(const std::vector<T>&, Rng&, double, double); \
    template ad::Var<T> fm_velocity_loss<T>(const ad::Var<T>&, const FlowSample<T>&);      \
    template ad::Var<T> fm_data_loss<T>(const ad::Var<T>&, const std::vector<T>&,          \
                                        const std::vector<double>&, const StftPlan&);      \
    template std::vector<T> euler_sample<T>(const FlowModel<T>&, const FlowModel<T>&,      \
                                            std::vector<T>, const SamplerConfig&);

FLOWVOC_INSTANTIATE(float)
FLOWVOC_INSTANTIATE(double)
#undef FLOWVOC_INSTANTIATE

}  // namespace flowvoc
