#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "flowvoc/autodiff.hpp"
#include "flowvoc/error.hpp"
#include "flowvoc/flow.hpp"
#include "flowvoc/optim.hpp"
#include "flowvoc/rng.hpp"

using namespace flowvoc;
using ad::Var;

TEST_CASE("path sample: endpoints and invariants") {
    Rng rng(1);
    std::vector<double> x1{0.5, -1.25, 2.0};
    auto s0 = make_path_sample<double>(x1, rng, 0.0);
    for (std::size_t i = 0; i < x1.size(); ++i) CHECK(s0.xt[i] == s0.x0[i]);
    auto s1 = make_path_sample<double>(x1, rng, 1.0);
    for (std::size_t i = 0; i < x1.size(); ++i) CHECK(s1.xt[i] == x1[i]);

    auto s = make_path_sample<double>(x1, rng, 0.3);
    for (std::size_t i = 0; i < x1.size(); ++i) {
        CHECK(s.xt[i] == (1.0 - 0.3) * s.x0[i] + 0.3 * x1[i]);
        CHECK(s.v_star[i] == x1[i] - s.x0[i]);
    }
}

TEST_CASE("path sample: scalar quarter point") {
    auto s = make_path_sample_with<double>({0.0}, {1.0}, 0.25);
    CHECK(s.xt[0] == 0.25);
    CHECK(s.v_star[0] == 1.0);
}

TEST_CASE("path sample: t outside [0,1] is rejected") {
    Rng rng(2);
    std::vector<double> x1{1.0};
    CHECK_THROWS_AS(make_path_sample<double>(x1, rng, -0.1), Error);
    CHECK_THROWS_AS(make_path_sample<double>(x1, rng, 1.1), Error);
}

TEST_CASE("path sample: same seed gives identical draws") {
    std::vector<double> x1(16, 0.25);
    Rng a(99), b(99);
    auto sa = make_path_sample<double>(x1, a, 0.5);
    auto sb = make_path_sample<double>(x1, b, 0.5);
    CHECK(std::memcmp(sa.x0.data(), sb.x0.data(), sa.x0.size() * sizeof(double)) == 0);
}

TEST_CASE("velocity loss: exact zero, constant offset, scalar case") {
    auto s = make_path_sample_with<double>({0.0, 0.0}, {1.0, 2.0}, 0.5);
    auto exact = ad::leaf<double>({2}, std::vector<double>(s.v_star), false);
    CHECK(fm_velocity_loss(exact, s)->value[0] == 0.0);

    std::vector<double> off(s.v_star);
    for (auto& v : off) v += 0.3;
    auto shifted = ad::leaf<double>({2}, off, false);
    CHECK(fm_velocity_loss(shifted, s)->value[0] == doctest::Approx(0.09));

    auto sc = make_path_sample_with<double>({0.0}, {1.0}, 0.5);
    auto half = ad::leaf<double>({1}, {0.5}, false);
    CHECK(fm_velocity_loss(half, sc)->value[0] == doctest::Approx(0.25));
}

TEST_CASE("data loss: zero at target; neutral weights equal plain MSE") {
    auto plan = StftPlan::make(4, 8000);
    Rng rng(3);
    std::vector<double> x1(16);
    for (auto& v : x1) v = rng.normal();
    auto exact = ad::leaf<double>({1, 16}, std::vector<double>(x1), false);
    std::vector<double> ones(4, 1.0);
    CHECK(fm_data_loss(exact, x1, ones, plan)->value[0] == 0.0);

    std::vector<double> pred(x1);
    for (auto& v : pred) v += 0.1;
    auto p = ad::leaf<double>({1, 16}, pred, false);
    double mse = 0;
    for (std::size_t i = 0; i < x1.size(); ++i) mse += (pred[i] - x1[i]) * (pred[i] - x1[i]);
    mse /= 16.0;
    CHECK(fm_data_loss(p, x1, ones, plan)->value[0] == doctest::Approx(mse));
}

TEST_CASE("data loss: frame weighting scales the errored frame's share") {
    // two frames of 4 samples; unit error confined to the first frame
    auto plan = StftPlan::make(4, 8000);
    std::vector<double> x1(8, 0.0);
    std::vector<double> pred(8, 0.0);
    for (int i = 0; i < 4; ++i) pred[i] = 1.0;
    auto p = ad::leaf<double>({1, 8}, pred, false);
    std::vector<double> w{2.0, 0.5};
    std::vector<double> uniform{1.0, 1.0};
    const double weighted = fm_data_loss(p, x1, w, plan)->value[0];
    const double plain = fm_data_loss(p, x1, uniform, plan)->value[0];
    CHECK(weighted == doctest::Approx(2.0 * plain));
}

TEST_CASE("data loss: wrong weight count is rejected") {
    auto plan = StftPlan::make(4, 8000);
    std::vector<double> x1(8, 0.0);
    auto p = ad::leaf<double>({1, 8}, x1, false);
    std::vector<double> w{1.0, 1.0, 1.0};
    CHECK_THROWS_AS(fm_data_loss(p, x1, w, plan), Error);
}

TEST_CASE("euler: constant data predictor lands exactly on it for any step count") {
    std::vector<double> target{0.7, -0.3, 1.9};
    FlowModel<double> model = [&](const std::vector<double>&, double) { return target; };
    for (int steps : {1, 7, 200}) {
        SamplerConfig cfg;
        cfg.steps = steps;
        cfg.prediction = SamplerConfig::Prediction::Data;
        auto out = euler_sample<double>(model, nullptr, {10.0, -5.0, 0.1}, cfg);
        for (std::size_t i = 0; i < target.size(); ++i) CHECK(out[i] == target[i]);
    }
}

TEST_CASE("euler: constant velocity integrates to x0 + v") {
    // dyadic values keep every update exact in floating point
    std::vector<double> v{0.5, -0.25};
    FlowModel<double> model = [&](const std::vector<double>&, double) { return v; };
    for (int steps : {1, 8}) {
        SamplerConfig cfg;
        cfg.steps = steps;
        cfg.prediction = SamplerConfig::Prediction::Velocity;
        auto out = euler_sample<double>(model, nullptr, {0.25, 4.0}, cfg);
        CHECK(out[0] == 0.75);
        CHECK(out[1] == 3.75);
    }
}

TEST_CASE("euler: guidance scale 1 never evaluates the unconditional branch") {
    int uncond_calls = 0;
    FlowModel<double> cond = [](const std::vector<double>& x, double) {
        auto y = x;
        for (auto& v : y) v = 0.9 * v + 0.1;
        return y;
    };
    FlowModel<double> uncond = [&](const std::vector<double>& x, double) {
        ++uncond_calls;
        return x;
    };
    SamplerConfig cfg;
    cfg.steps = 16;
    cfg.guidance_scale = 1.0;
    cfg.prediction = SamplerConfig::Prediction::Data;
    auto guided = euler_sample<double>(cond, uncond, {1.0, 2.0}, cfg);
    auto plain = euler_sample<double>(cond, nullptr, {1.0, 2.0}, cfg);
    CHECK(uncond_calls == 0);
    CHECK(std::memcmp(guided.data(), plain.data(), guided.size() * sizeof(double)) == 0);
}

TEST_CASE("euler: guidance scale 0 reproduces unconditional sampling exactly") {
    int cond_calls = 0;
    FlowModel<double> cond = [&](const std::vector<double>& x, double) {
        ++cond_calls;
        return x;
    };
    FlowModel<double> uncond = [](const std::vector<double>& x, double) {
        auto y = x;
        for (auto& v : y) v = 0.5 * v - 0.2;
        return y;
    };
    SamplerConfig cfg;
    cfg.steps = 12;
    cfg.guidance_scale = 0.0;
    cfg.prediction = SamplerConfig::Prediction::Data;
    auto guided = euler_sample<double>(cond, uncond, {1.0, -1.0}, cfg);
    auto plain = euler_sample<double>(uncond, nullptr, {1.0, -1.0}, cfg);
    CHECK(cond_calls == 0);
    CHECK(std::memcmp(guided.data(), plain.data(), guided.size() * sizeof(double)) == 0);
}

TEST_CASE("euler: intermediate guidance blends the two predictions") {
    // constant velocity fields: final = x0 + u + s*(c - u)
    FlowModel<double> cond = [](const std::vector<double>& x, double) {
        return std::vector<double>(x.size(), 1.0);
    };
    FlowModel<double> uncond = [](const std::vector<double>& x, double) {
        return std::vector<double>(x.size(), 0.5);
    };
    SamplerConfig cfg;
    cfg.steps = 4;
    cfg.guidance_scale = 3.0;
    cfg.prediction = SamplerConfig::Prediction::Velocity;
    auto out = euler_sample<double>(cond, uncond, {0.0}, cfg);
    CHECK(out[0] == doctest::Approx(0.5 + 3.0 * 0.5));
}

TEST_CASE("euler: zero steps rejected; NaN state aborts with step index") {
    FlowModel<double> ok = [](const std::vector<double>& x, double) { return x; };
    SamplerConfig cfg;
    cfg.steps = 0;
    CHECK_THROWS_AS(euler_sample<double>(ok, nullptr, {1.0}, cfg), Error);

    int call = 0;
    FlowModel<double> poisoned = [&](const std::vector<double>& x, double) {
        std::vector<double> y(x.size(), 0.0);
        if (call++ == 3) y[0] = std::nan("");
        return y;
    };
    cfg.steps = 10;
    cfg.prediction = SamplerConfig::Prediction::Velocity;
    try {
        euler_sample<double>(poisoned, nullptr, {1.0}, cfg);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Numeric);
        CHECK(std::string(e.what()).find("step 3") != std::string::npos);
    }
}

TEST_CASE("transport: MLP velocity field carries noise to a 2-D mixture") {
    // two Gaussians at (+-2, 0), std 0.5 -> mean 0, cov diag(4.25, 0.25)
    Rng rng(2025);
    const int width = 64, batch = 128;
    auto init = [&](ad::Shape shape, float scale) {
        std::vector<float> v(ad::numel(shape));
        for (auto& x : v) x = (float)rng.normal() * scale;
        return ad::leaf<float>(std::move(shape), std::move(v), true);
    };
    auto w1 = init({3, width}, 0.5f);
    auto b1 = ad::leaf<float>({width}, std::vector<float>(width, 0.f), true);
    auto w2 = init({width, width}, 0.15f);
    auto b2 = ad::leaf<float>({width}, std::vector<float>(width, 0.f), true);
    auto w3 = init({width, 2}, 0.15f);
    auto b3 = ad::leaf<float>({2}, std::vector<float>(2, 0.f), true);
    std::vector<ad::Var<float>> params{w1, b1, w2, b2, w3, b3};

    auto forward = [&](const std::vector<float>& xt_rows, const std::vector<float>& t_rows) {
        const int n = (int)t_rows.size();
        std::vector<float> in((std::size_t)n * 3);
        for (int i = 0; i < n; ++i) {
            in[i * 3 + 0] = xt_rows[i * 2 + 0];
            in[i * 3 + 1] = xt_rows[i * 2 + 1];
            in[i * 3 + 2] = t_rows[i];
        }
        auto x = ad::leaf<float>({n, 3}, std::move(in), false);
        auto h1 = ad::gelu(ad::bias_add(ad::matmul(x, w1), b1));
        auto h2 = ad::gelu(ad::bias_add(ad::matmul(h1, w2), b2));
        return ad::bias_add(ad::matmul(h2, w3), b3);
    };

    auto draw_mixture = [&](Rng& r) {
        const double cx = r.uniform() < 0.5 ? -2.0 : 2.0;
        return std::pair<float, float>{(float)(cx + 0.5 * r.normal()), (float)(0.5 * r.normal())};
    };

    AdamW<float> opt(2e-3f, 0.f);
    for (int step = 0; step < 5000; ++step) {
        std::vector<float> xt((std::size_t)batch * 2), vstar((std::size_t)batch * 2), ts(batch);
        for (int i = 0; i < batch; ++i) {
            auto [x1a, x1b] = draw_mixture(rng);
            const float t = (float)rng.uniform();
            auto s = make_path_sample_with<float>(
                {(float)rng.normal(), (float)rng.normal()}, {x1a, x1b}, t);
            xt[i * 2] = s.xt[0];
            xt[i * 2 + 1] = s.xt[1];
            vstar[i * 2] = s.v_star[0];
            vstar[i * 2 + 1] = s.v_star[1];
            ts[i] = t;
        }
        FlowSample<float> agg;
        agg.v_star = vstar;
        auto loss = fm_velocity_loss(forward(xt, ts), agg);
        AdamW<float>::zero_grad(params);
        ad::backward(loss);
        opt.step(params);
    }

    const int n_samples = 10000;
    FlowModel<float> model = [&](const std::vector<float>& x, double t) {
        std::vector<float> ts(n_samples, (float)t);
        return forward(x, ts)->value;
    };
    SamplerConfig cfg;
    cfg.steps = 100;
    cfg.prediction = SamplerConfig::Prediction::Velocity;
    Rng noise_rng(7);
    auto x = euler_sample<float>(model, nullptr,
                                 draw_noise<float>((std::size_t)n_samples * 2, 1.0, noise_rng), cfg);

    double m0 = 0, m1 = 0;
    for (int i = 0; i < n_samples; ++i) {
        m0 += x[i * 2];
        m1 += x[i * 2 + 1];
    }
    m0 /= n_samples;
    m1 /= n_samples;
    double c00 = 0, c01 = 0, c11 = 0;
    for (int i = 0; i < n_samples; ++i) {
        const double a = x[i * 2] - m0, b = x[i * 2 + 1] - m1;
        c00 += a * a;
        c01 += a * b;
        c11 += b * b;
    }
    c00 /= n_samples;
    c01 /= n_samples;
    c11 /= n_samples;
    const double mean_err = std::sqrt(m0 * m0 + m1 * m1);
    const double cov_err = std::sqrt((c00 - 4.25) * (c00 - 4.25) + 2 * c01 * c01 +
                                     (c11 - 0.25) * (c11 - 0.25));
    INFO("mean_err=", mean_err, " cov_err=", cov_err, " cov=", c00, ",", c01, ",", c11);
    CHECK(mean_err < 0.15);
    CHECK(cov_err < 0.15);
}
