#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mad/ops.hpp"

using namespace mad;

namespace {

template <typename T>
Tensor4<T> random_tensor(Shape4 s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Tensor4<T> t(s);
    std::mt19937_64 rng(seed);
    fill_uniform(t, rng, lo, hi);
    return t;
}

} // namespace

TEST_CASE("conv2d identity-scale 1x1 kernel") {
    TensorD x(1, 1, 3, 3, 1.0);
    Parameter<double> w(Tensor4<double>(1, 1, 1, 1, 2.0), Block::Always, "w");
    Parameter<double> b(Tensor4<double>(1, 1, 1, 1, 0.0), Block::Always, "b");
    auto y = conv2d<double>(nullptr, x, w, b, 1, 1, 0);
    CHECK(y.shape() == Shape4{1, 1, 3, 3});
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(2.0));
}

TEST_CASE("conv2d zero weights give constant bias output") {
    auto x = random_tensor<double>({2, 3, 5, 7}, 11);
    Parameter<double> w(Tensor4<double>(4, 3, 3, 3, 0.0), Block::Always, "w");
    Parameter<double> b(Tensor4<double>(4, 1, 1, 1, 0.0), Block::Always, "b");
    for (int i = 0; i < 4; ++i) b.value[i] = 0.25 * (i + 1);
    auto y = conv2d<double>(nullptr, x, w, b, 1, 1, 1);
    for (int oc = 0; oc < 4; ++oc)
        for (int yy = 0; yy < 5; ++yy)
            for (int xx = 0; xx < 7; ++xx)
                CHECK(y.at(0, oc, yy, xx) == doctest::Approx(0.25 * (oc + 1)));
}

TEST_CASE("conv2d stride-2 3x3 pad-1 halves even spatial dims") {
    auto x = random_tensor<float>({1, 2, 12, 20}, 3);
    Parameter<float> w(random_tensor<float>({5, 2, 3, 3}, 4), Block::Always, "w");
    Parameter<float> b(Tensor4<float>(5, 1, 1, 1, 0.0f), Block::Always, "b");
    auto y = conv2d<float>(nullptr, x, w, b, 2, 1, 1);
    CHECK(y.shape() == Shape4{1, 5, 6, 10});
}

TEST_CASE("conv2d output size follows the convolution arithmetic") {
    auto x = random_tensor<float>({1, 1, 9, 9}, 5);
    Parameter<float> w(random_tensor<float>({1, 1, 3, 3}, 6), Block::Always, "w");
    Parameter<float> b(Tensor4<float>(1, 1, 1, 1, 0.0f), Block::Always, "b");
    auto y = conv2d<float>(nullptr, x, w, b, 1, 2, 2); // dilation 2, padding 2
    CHECK(y.h() == (9 + 4 - 2 * 2 - 1) / 1 + 1);
    CHECK(y.w() == y.h());
}

TEST_CASE("conv2d rejects channel mismatch with a diagnostic naming the dimension") {
    auto x = random_tensor<float>({1, 3, 4, 4}, 7);
    Parameter<float> w(random_tensor<float>({2, 4, 3, 3}, 8), Block::Always, "w");
    Parameter<float> b(Tensor4<float>(2, 1, 1, 1, 0.0f), Block::Always, "b");
    CHECK_THROWS_WITH_AS(conv2d<float>(nullptr, x, w, b, 1, 1, 1),
                         doctest::Contains("channels"), std::invalid_argument);
}

TEST_CASE("leaky_relu pointwise definition") {
    TensorD x = Tensor4<double>::from({1, 1, 1, 2}, {-1.0, 2.0});
    auto y = leaky_relu<double>(nullptr, x, 0.2);
    CHECK(y[0] == doctest::Approx(-0.2));
    CHECK(y[1] == doctest::Approx(2.0));

    TensorD z(1, 2, 3, 3, 0.0);
    auto yz = leaky_relu<double>(nullptr, z, 0.2);
    for (std::int64_t i = 0; i < yz.numel(); ++i) CHECK(yz[i] == 0.0);
}

TEST_CASE("bilinear_upsample constant stays constant") {
    TensorF x(1, 2, 3, 4, 0.7f);
    auto y = bilinear_upsample<float>(nullptr, x, 3);
    CHECK(y.shape() == Shape4{1, 2, 9, 12});
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(0.7f));
}

TEST_CASE("bilinear_upsample matches the align-corners-false convention") {
    TensorD x = Tensor4<double>::from({1, 1, 1, 2}, {0.0, 1.0});
    auto y = bilinear_upsample<double>(nullptr, x, 2);
    REQUIRE(y.shape() == Shape4{1, 1, 2, 4});
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(0.0));
    CHECK(y.at(0, 0, 0, 1) == doctest::Approx(0.25));
    CHECK(y.at(0, 0, 0, 2) == doctest::Approx(0.75));
    CHECK(y.at(0, 0, 0, 3) == doctest::Approx(1.0));
}

TEST_CASE("correlation1d center channel peaks at self-match for unit-norm features") {
    const int c = 8, h = 6, w = 10;
    auto f = random_tensor<double>({1, c, h, w}, 21);
    // Normalize each pixel's feature vector; Cauchy-Schwarz then guarantees
    // the zero-shift channel is maximal.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double norm = 0;
            for (int ic = 0; ic < c; ++ic) norm += f.at(0, ic, y, x) * f.at(0, ic, y, x);
            norm = std::sqrt(norm);
            for (int ic = 0; ic < c; ++ic) f.at(0, ic, y, x) /= norm;
        }
    auto corr = correlation1d<double>(nullptr, f, f, 2);
    CHECK(corr.c() == 5);
    for (int y = 0; y < h; ++y)
        for (int x = 2; x < w - 2; ++x)
            for (int d = 0; d < 5; ++d)
                CHECK(corr.at(0, 2, y, x) >= corr.at(0, d, y, x) - 1e-12);
}

TEST_CASE("correlation1d of zero left is zero") {
    TensorD zeros(1, 3, 4, 6, 0.0);
    auto r = random_tensor<double>({1, 3, 4, 6}, 33);
    auto corr = correlation1d<double>(nullptr, zeros, r, 2);
    for (std::int64_t i = 0; i < corr.numel(); ++i) CHECK(corr[i] == 0.0);
}

TEST_CASE("correlation1d matches brute-force table on a 1x1x1x4 pair") {
    TensorD l = Tensor4<double>::from({1, 1, 1, 4}, {1.0, 2.0, 3.0, 4.0});
    TensorD r = Tensor4<double>::from({1, 1, 1, 4}, {0.5, -1.0, 2.0, 0.25});
    auto corr = correlation1d<double>(nullptr, l, r, 1);
    REQUIRE(corr.shape() == Shape4{1, 3, 1, 4});
    // Independent direct summation over all shifts.
    for (int d = -1; d <= 1; ++d)
        for (int x = 0; x < 4; ++x) {
            const int xr = x + d;
            const double expected = (xr >= 0 && xr < 4) ? l.at(0, 0, 0, x) * r.at(0, 0, 0, xr) : 0.0;
            CHECK(corr.at(0, d + 1, 0, x) == doctest::Approx(expected));
        }
}

TEST_CASE("correlation1d rejects shape mismatch") {
    TensorD a(1, 2, 3, 4), b(1, 2, 3, 5);
    CHECK_THROWS_AS(correlation1d<double>(nullptr, a, b, 1), std::invalid_argument);
}

TEST_CASE("warp with zero disparity is the identity, bit-exact") {
    auto src = random_tensor<float>({1, 3, 5, 8}, 41);
    TensorF disp(1, 1, 5, 8, 0.0f);
    auto out = warp_horizontal<float>(nullptr, src, disp);
    for (std::int64_t i = 0; i < src.numel(); ++i) CHECK(out[i] == src[i]);
}

TEST_CASE("warp by one pixel on a horizontal ramp") {
    const int w = 10;
    TensorD src(1, 1, 2, w);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < w; ++x) src.at(0, 0, y, x) = static_cast<double>(x);
    TensorD disp(1, 1, 2, w, 1.0);
    auto out = warp_horizontal<double>(nullptr, src, disp);
    for (int y = 0; y < 2; ++y)
        for (int x = 1; x < w; ++x) CHECK(out.at(0, 0, y, x) == doctest::Approx(x - 1.0));
    // Left border clamps to the edge value.
    CHECK(out.at(0, 0, 0, 0) == doctest::Approx(0.0));
}

TEST_CASE("box_filter of a constant is the constant, borders replicated") {
    TensorD x(1, 1, 5, 6, 0.3);
    auto y = box_filter<double>(nullptr, x, 3);
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(0.3));
}

TEST_CASE("box_filter interior matches direct 3x3 average") {
    auto x = random_tensor<double>({1, 1, 5, 5}, 55);
    auto y = box_filter<double>(nullptr, x, 3);
    double acc = 0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) acc += x.at(0, 0, 2 + dy, 2 + dx);
    CHECK(y.at(0, 0, 2, 2) == doctest::Approx(acc / 9.0));
}

TEST_CASE("backward is linear in the upstream gradient (exact on integer data)") {
    // Small integer values keep every product and sum exactly representable,
    // so backward(g1 + g2) must equal backward(g1) + backward(g2) bitwise.
    std::mt19937_64 rng(77);
    auto int_tensor = [&](Shape4 s) {
        Tensor4<double> t(s);
        for (std::int64_t i = 0; i < t.numel(); ++i)
            t[i] = static_cast<double>(static_cast<int>(rng() % 7) - 3);
        return t;
    };

    auto x = int_tensor({1, 2, 6, 6});
    Parameter<double> w(int_tensor({3, 2, 3, 3}), Block::Always, "w");
    Parameter<double> b(int_tensor({3, 1, 1, 1}), Block::Always, "b");

    auto run = [&](const Tensor4<double>& seed) {
        Tape<double> tape;
        auto xin = make_input(tape, x);
        w.zero_grad();
        b.zero_grad();
        auto y = conv2d<double>(&tape, xin, w, b, 1, 1, 1);
        tape.backward_from(y.node, std::span<const double>(seed.data(),
                                                           static_cast<std::size_t>(seed.numel())),
                           kScopeAll);
        return std::tuple{tape.node(xin.node).grad, w.grad.deep_copy(), b.grad.deep_copy()};
    };

    auto g1 = int_tensor({1, 3, 6, 6});
    auto g2 = int_tensor({1, 3, 6, 6});
    Tensor4<double> gsum(g1.shape());
    for (std::int64_t i = 0; i < g1.numel(); ++i) gsum[i] = g1[i] + g2[i];

    auto [dx1, dw1, db1] = run(g1);
    auto [dx2, dw2, db2] = run(g2);
    auto [dxs, dws, dbs] = run(gsum);

    for (std::size_t i = 0; i < dxs.size(); ++i) CHECK(dxs[i] == dx1[i] + dx2[i]);
    for (std::int64_t i = 0; i < dws.numel(); ++i) CHECK(dws[i] == dw1[i] + dw2[i]);
    for (std::int64_t i = 0; i < dbs.numel(); ++i) CHECK(dbs[i] == db1[i] + db2[i]);
}

TEST_CASE("tensors reject invalid shapes and data lengths") {
    CHECK_THROWS_AS(TensorF(0, 1, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(Tensor4<double>::from({1, 1, 1, 3}, {1.0, 2.0}), std::invalid_argument);
}
