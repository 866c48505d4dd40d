#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "flowvoc/kernels.hpp"
#include "flowvoc/rng.hpp"

using namespace flowvoc;

namespace {

template <class T>
std::vector<T> randn(Rng& rng, std::size_t n, T scale = T(1)) {
    std::vector<T> v(n);
    for (auto& x : v) x = (T)rng.normal() * scale;
    return v;
}

template <class T>
T max_abs_diff(const std::vector<T>& a, const std::vector<T>& b) {
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("gemm: 2x2 hand-computed") {
    // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
    std::vector<float> a{1, 2, 3, 4}, b{5, 6, 7, 8}, c(4, 0.f);
    kernels::gemm<float>(false, false, 2, 2, 2, a.data(), b.data(), c.data(), false);
    CHECK(c[0] == doctest::Approx(19));
    CHECK(c[1] == doctest::Approx(22));
    CHECK(c[2] == doctest::Approx(43));
    CHECK(c[3] == doctest::Approx(50));
    // accumulate adds on top
    kernels::gemm<float>(false, false, 2, 2, 2, a.data(), b.data(), c.data(), true);
    CHECK(c[3] == doctest::Approx(100));
}

TEST_CASE("gemm: optimized matches serial reference on random shapes") {
    Rng rng(101);
    const int shapes[][3] = {{3, 4, 5}, {17, 9, 33}, {64, 64, 64}, {1, 70, 13}, {5, 1, 19}};
    for (auto& s : shapes) {
        const int m = s[0], n = s[1], k = s[2];
        auto a = randn<double>(rng, (std::size_t)m * k);
        auto b = randn<double>(rng, (std::size_t)k * n);
        for (int ta = 0; ta <= 1; ++ta)
            for (int tb = 0; tb <= 1; ++tb) {
                if (ta && tb) continue;  // TT not supported
                // storage honours the transpose flag
                std::vector<double> c1((std::size_t)m * n, 0.5), c2((std::size_t)m * n, 0.5);
                kernels::gemm<double>(ta, tb, m, n, k, a.data(), b.data(), c1.data(), true);
                kernels::serial::gemm<double>(ta, tb, m, n, k, a.data(), b.data(), c2.data(), true);
                CHECK(max_abs_diff(c1, c2) < 1e-10);
            }
    }
}

TEST_CASE("gemm: repeated calls are bitwise deterministic") {
    Rng rng(7);
    const int m = 31, n = 29, k = 57;
    auto a = randn<float>(rng, (std::size_t)m * k);
    auto b = randn<float>(rng, (std::size_t)k * n);
    std::vector<float> c1((std::size_t)m * n, 0.f), c2((std::size_t)m * n, 0.f);
    kernels::gemm<float>(false, false, m, n, k, a.data(), b.data(), c1.data(), false);
    kernels::gemm<float>(false, false, m, n, k, a.data(), b.data(), c2.data(), false);
    CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(float)) == 0);
}

TEST_CASE("conv1d: identity kernel passes input through") {
    Rng rng(3);
    const int b = 2, c = 3, t = 11;
    auto x = randn<float>(rng, (std::size_t)b * c * t);
    // depthwise K=1 identity: groups = c, each filter = [1]
    std::vector<float> w(c, 1.f);
    std::vector<float> y((std::size_t)b * c * t, 0.f);
    kernels::conv1d_forward<float>(x.data(), w.data(), nullptr, y.data(), b, c, c, t, 1, c);
    CHECK(max_abs_diff(x, y) == 0.f);
}

TEST_CASE("conv1d: matches serial reference over shapes, groups, kernel sizes") {
    Rng rng(55);
    struct Cfg {
        int b, cin, cout, t, k, g;
    };
    const Cfg cfgs[] = {{1, 4, 6, 16, 3, 1},  {2, 6, 6, 25, 5, 3}, {1, 8, 8, 40, 7, 8},
                        {3, 2, 10, 9, 1, 1},  {1, 12, 4, 33, 9, 4}, {2, 5, 5, 8, 4, 1}};
    for (auto& c : cfgs) {
        auto x = randn<double>(rng, (std::size_t)c.b * c.cin * c.t);
        auto w = randn<double>(rng, (std::size_t)c.cout * (c.cin / c.g) * c.k);
        auto bias = randn<double>(rng, c.cout);
        std::vector<double> y1((std::size_t)c.b * c.cout * c.t, 0.0),
            y2((std::size_t)c.b * c.cout * c.t, 0.0);
        kernels::conv1d_forward<double>(x.data(), w.data(), bias.data(), y1.data(), c.b, c.cin,
                                        c.cout, c.t, c.k, c.g);
        kernels::serial::conv1d_forward<double>(x.data(), w.data(), bias.data(), y2.data(), c.b,
                                                c.cin, c.cout, c.t, c.k, c.g);
        CHECK(max_abs_diff(y1, y2) < 1e-11);

        auto dy = randn<double>(rng, y1.size());
        std::vector<double> dx1(x.size(), 0.0), dx2(x.size(), 0.0);
        kernels::conv1d_backward_x<double>(w.data(), dy.data(), dx1.data(), c.b, c.cin, c.cout, c.t,
                                           c.k, c.g);
        kernels::serial::conv1d_backward_x<double>(w.data(), dy.data(), dx2.data(), c.b, c.cin,
                                                   c.cout, c.t, c.k, c.g);
        CHECK(max_abs_diff(dx1, dx2) < 1e-11);

        std::vector<double> dw1(w.size(), 0.0), dw2(w.size(), 0.0), db1(c.cout, 0.0),
            db2(c.cout, 0.0);
        kernels::conv1d_backward_w<double>(x.data(), dy.data(), dw1.data(), db1.data(), c.b, c.cin,
                                           c.cout, c.t, c.k, c.g);
        kernels::serial::conv1d_backward_w<double>(x.data(), dy.data(), dw2.data(), db2.data(), c.b,
                                                   c.cin, c.cout, c.t, c.k, c.g);
        CHECK(max_abs_diff(dw1, dw2) < 1e-11);
        CHECK(max_abs_diff(db1, db2) < 1e-11);
    }
}

TEST_CASE("conv1d: forward/backward_x are adjoint maps") {
    // <conv(x), dy> == <x, conv_backward_x(dy)> for linear no-bias conv
    Rng rng(91);
    const int b = 2, cin = 3, cout = 4, t = 20, k = 5, g = 1;
    auto x = randn<double>(rng, (std::size_t)b * cin * t);
    auto w = randn<double>(rng, (std::size_t)cout * cin * k);
    auto dy = randn<double>(rng, (std::size_t)b * cout * t);
    std::vector<double> y((std::size_t)b * cout * t, 0.0), dx((std::size_t)b * cin * t, 0.0);
    kernels::conv1d_forward<double>(x.data(), w.data(), nullptr, y.data(), b, cin, cout, t, k, g);
    kernels::conv1d_backward_x<double>(w.data(), dy.data(), dx.data(), b, cin, cout, t, k, g);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * dy[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * dx[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}
