#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "densityscan/errors.hpp"
#include "densityscan/finite_diff.hpp"
#include "densityscan/layers.hpp"
#include "densityscan/tensor.hpp"

using namespace densityscan;
using namespace densityscan::numerics;

namespace {

Tensor random_tensor(std::vector<std::size_t> dims, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor t(std::move(dims));
    for (double& v : t.data()) v = u(rng);
    return t;
}

// Independent loop-nest reference for the valid cross-correlation.
Tensor naive_conv(const Tensor& in, const Tensor& k, const std::vector<double>& b, std::size_t stride) {
    const std::size_t K = k.dim(0), C = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    const std::size_t oh = (in.dim(1) - kh) / stride + 1, ow = (in.dim(2) - kw) / stride + 1;
    Tensor out({K, oh, ow});
    for (std::size_t o = 0; o < K; ++o)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double s = b[o];
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < kh; ++i)
                        for (std::size_t j = 0; j < kw; ++j) s += in.at(c, y * stride + i, x * stride + j) * k.at(o, c, i, j);
                out.at(o, y, x) = s;
            }
    return out;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace

TEST_CASE("tensor construction checks shape") {
    CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.all_finite());
    t[4] = std::nan("");
    CHECK_FALSE(t.all_finite());
    CHECK(element_count({2, 3, 4}) == 24);
}

TEST_CASE("conv2d identity kernel") {
    std::mt19937_64 rng(1);
    const Tensor in = random_tensor({1, 6, 5}, rng);
    const Tensor k({1, 1, 1, 1}, 1.0);
    const std::vector<double> b{0.0};
    CHECK(conv2d(in, k, b) == in);
}

TEST_CASE("conv2d of ones sums the receptive field") {
    const Tensor in({1, 5, 5}, 1.0);
    const Tensor k({1, 1, 3, 3}, 1.0);
    const std::vector<double> b{0.0};
    const Tensor out = conv2d(in, k, b);
    REQUIRE(out.dims() == std::vector<std::size_t>{1, 3, 3});
    for (double v : out.data()) CHECK(v == 9.0);
}

TEST_CASE("conv2d shapes") {
    const Tensor in({1, 32, 32});
    const Tensor k({8, 1, 5, 5});
    const std::vector<double> b(8, 0.0);
    CHECK(conv2d(in, k, b).dims() == std::vector<std::size_t>{8, 28, 28});
    CHECK(conv2d(in, k, b, 3).dims() == std::vector<std::size_t>{8, 10, 10});

    const Tensor k2({8, 2, 5, 5});
    try {
        conv2d(in, k2, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(e.axis() == "C");
    }
    const Tensor big({1, 1, 33, 3});
    CHECK_THROWS_AS(conv2d(in, big, std::vector<double>{0.0}), ShapeError);
    CHECK_THROWS_AS(conv2d(in, k, std::vector<double>(7, 0.0)), ShapeError);
}

TEST_CASE("conv2d matches a naive reference") {
    std::mt19937_64 rng(2);
    for (std::size_t stride : {1u, 2u}) {
        const Tensor in = random_tensor({3, 9, 8}, rng);
        const Tensor k = random_tensor({4, 3, 3, 2}, rng);
        const std::vector<double> b{0.1, -0.2, 0.3, 0.0};
        const Tensor got = conv2d(in, k, b, stride);
        const Tensor want = naive_conv(in, k, b, stride);
        REQUIRE(got.dims() == want.dims());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d backward agrees with finite differences") {
    std::mt19937_64 rng(3);
    for (std::size_t stride : {1u, 2u}) {
        const Tensor in = random_tensor({2, 7, 7}, rng);
        const Tensor k = random_tensor({3, 2, 3, 3}, rng);
        const std::vector<double> b{0.3, -0.1, 0.2};
        const Tensor probe = random_tensor(conv2d(in, k, b, stride).dims(), rng);
        // Scalar loss sum(probe * out), so dL/dout = probe.
        const auto loss = [&](const Tensor& x, const Tensor& w, const std::vector<double>& bb) {
            const Tensor o = conv2d(x, w, bb, stride);
            return std::inner_product(o.data().begin(), o.data().end(), probe.data().begin(), 0.0);
        };
        const auto g = conv2d_backward(in, k, probe, stride);

        const auto dk = finite_diff(
            [&](std::span<const double> v) { return loss(in, Tensor(k.dims(), {v.begin(), v.end()}), b); }, k.data(),
            1e-6);
        for (std::size_t i = 0; i < dk.size(); ++i) CHECK(rel_err(g.kernels[i], dk[i]) < 1e-4);

        const auto dx = finite_diff(
            [&](std::span<const double> v) { return loss(Tensor(in.dims(), {v.begin(), v.end()}), k, b); }, in.data(),
            1e-6);
        for (std::size_t i = 0; i < dx.size(); ++i) CHECK(rel_err(g.input[i], dx[i]) < 1e-4);

        const auto db =
            finite_diff([&](std::span<const double> v) { return loss(in, k, {v.begin(), v.end()}); }, b, 1e-6);
        for (std::size_t i = 0; i < db.size(); ++i) CHECK(rel_err(g.bias[i], db[i]) < 1e-4);
    }
}

TEST_CASE("maxpool2 examples") {
    CHECK(maxpool2(Tensor({1, 2, 2}, {1, 2, 3, 4})).output == Tensor({1, 1, 1}, {4.0}));
    CHECK(maxpool2(Tensor({1, 2, 2}, {-1, -2, -3, -4})).output == Tensor({1, 1, 1}, {-1.0}));
    const auto r = maxpool2(Tensor({2, 4, 6}, 0.25));
    CHECK(r.output == Tensor({2, 2, 3}, 0.25));
    CHECK_THROWS_AS(maxpool2(Tensor({1, 3, 2})), ShapeError);
    CHECK_THROWS_AS(maxpool2(Tensor({1, 2, 5})), ShapeError);
}

TEST_CASE("maxpool2 backward routes to the argmax only") {
    std::mt19937_64 rng(4);
    const Tensor in = random_tensor({3, 6, 4}, rng);
    const auto r = maxpool2(in);
    const Tensor g = random_tensor(r.output.dims(), rng);
    const Tensor back = maxpool2_backward(in.dims(), r.argmax, g);
    REQUIRE(back.dims() == in.dims());

    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < back.size(); ++i) nonzero += back[i] != 0.0;
    CHECK(nonzero == g.size());
    for (std::size_t o = 0; o < g.size(); ++o) {
        CHECK(back[r.argmax[o]] == g[o]);
        CHECK(in[r.argmax[o]] == r.output[o]);
    }
    const double sum_in = std::accumulate(back.data().begin(), back.data().end(), 0.0);
    const double sum_g = std::accumulate(g.data().begin(), g.data().end(), 0.0);
    CHECK(sum_in == doctest::Approx(sum_g).epsilon(1e-12));
}

TEST_CASE("relu and its mask") {
    const Tensor x({1, 1, 4}, {-1.0, 0.0, 2.0, -3.0});
    CHECK(relu(x) == Tensor({1, 1, 4}, {0.0, 0.0, 2.0, 0.0}));
    CHECK(relu_backward(x, Tensor({1, 1, 4}, 1.0)) == Tensor({1, 1, 4}, {0.0, 0.0, 1.0, 0.0}));
}

TEST_CASE("finite_diff examples") {
    const std::vector<double> x3{3.0};
    const auto d = finite_diff([](std::span<const double> v) { return v[0] * v[0]; }, x3, 1e-4);
    CHECK(std::abs(d[0] - 6.0) < 1e-6);

    const std::vector<double> x{0.5, -2.0, 7.0};
    for (double v : finite_diff([](std::span<const double>) { return 4.2; }, x, 1e-3)) CHECK(v == 0.0);
    for (double v : finite_diff([](std::span<const double> s) { return std::accumulate(s.begin(), s.end(), 0.0); }, x,
                                1e-4))
        CHECK(std::abs(v - 1.0) < 1e-8);

    CHECK_THROWS_AS(finite_diff([](std::span<const double>) { return 0.0; }, x, 0.0), InvalidArgument);
}
