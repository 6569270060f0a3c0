#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mad/gradcheck.hpp"
#include "mad/loss.hpp"
#include "mad/network.hpp"

using namespace mad;

namespace {

TensorD random_tensor(Shape4 s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    TensorD t(s);
    std::mt19937_64 rng(seed);
    fill_uniform(t, rng, lo, hi);
    return t;
}

// Keeps leaky-relu probes away from the kink at zero.
TensorD away_from_zero(Shape4 s, std::uint64_t seed) {
    TensorD t = random_tensor(s, seed);
    for (std::int64_t i = 0; i < t.numel(); ++i)
        if (std::abs(t[i]) < 0.05) t[i] = t[i] < 0 ? t[i] - 0.1 : t[i] + 0.1;
    return t;
}

} // namespace

TEST_CASE("gradcheck: conv2d stride 2 (the 1x2x6x6 / 3x2x3x3 case)") {
    Parameter<double> w(random_tensor({3, 2, 3, 3}, 2), Block::Always, "w");
    Parameter<double> b(random_tensor({3, 1, 1, 1}, 3), Block::Always, "b");
    GradientCheck<double> check(
        [&](Tape<double>* tape, const std::vector<TensorD>& in) {
            return conv2d<double>(tape, in[0], w, b, 2, 1, 1);
        });
    check.add_input("x", random_tensor({1, 2, 6, 6}, 1));
    check.add_param(&w);
    check.add_param(&b);
    const auto report = check.run();
    CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: linear 1x1 conv is exact to machine precision") {
    Parameter<double> w(random_tensor({2, 3, 1, 1}, 5), Block::Always, "w");
    Parameter<double> b(random_tensor({2, 1, 1, 1}, 6), Block::Always, "b");
    GradientCheck<double> check(
        [&](Tape<double>* tape, const std::vector<TensorD>& in) {
            return conv2d<double>(tape, in[0], w, b, 1, 1, 0);
        });
    check.add_input("x", random_tensor({1, 3, 4, 5}, 4));
    check.add_param(&w);
    check.add_param(&b);
    const auto report = check.run();
    CHECK(report.max_rel_err < 1e-9);
}

TEST_CASE("gradcheck: leaky_relu probed away from the kink") {
    const auto report = check_gradients<double>(
        [](Tape<double>* tape, const std::vector<TensorD>& in) {
            return leaky_relu<double>(tape, in[0], 0.2);
        },
        away_from_zero({1, 3, 5, 4}, 7));
    CHECK(report.max_rel_err < 1e-7);
}

TEST_CASE("gradcheck: bilinear resize (up and down)") {
    auto up = check_gradients<double>(
        [](Tape<double>* tape, const std::vector<TensorD>& in) {
            return bilinear_upsample<double>(tape, in[0], 2);
        },
        random_tensor({1, 2, 3, 4}, 8));
    CHECK(up.max_rel_err < 1e-5);

    auto arbitrary = check_gradients<double>(
        [](Tape<double>* tape, const std::vector<TensorD>& in) {
            return bilinear_resize<double>(tape, in[0], 5, 7);
        },
        random_tensor({1, 1, 3, 4}, 9));
    CHECK(arbitrary.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: correlation1d w.r.t. both inputs") {
    GradientCheck<double> check(
        [](Tape<double>* tape, const std::vector<TensorD>& in) {
            return correlation1d<double>(tape, in[0], in[1], 2);
        });
    check.add_input("left", random_tensor({1, 3, 4, 7}, 10));
    check.add_input("right", random_tensor({1, 3, 4, 7}, 11));
    const auto report = check.run();
    CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: warp w.r.t. source and fractional disparity") {
    // Fractional disparities keep the probe away from bilinear cell boundaries.
    TensorD disp(1, 1, 4, 6);
    std::mt19937_64 rng(12);
    fill_uniform(disp, rng, 0.2, 0.8);
    GradientCheck<double> check(
        [](Tape<double>* tape, const std::vector<TensorD>& in) {
            return warp_horizontal<double>(tape, in[0], in[1]);
        });
    check.add_input("src", random_tensor({1, 2, 4, 6}, 13));
    check.add_input("disparity", disp);
    const auto report = check.run();
    CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: box filter and elementwise ops") {
    auto box = check_gradients<double>(
        [](Tape<double>* tape, const std::vector<TensorD>& in) {
            return box_filter<double>(tape, in[0], 3);
        },
        random_tensor({1, 2, 5, 5}, 14));
    CHECK(box.max_rel_err < 1e-5);

    GradientCheck<double> bin(
        [](Tape<double>* tape, const std::vector<TensorD>& in) {
            auto prod = mul<double>(tape, in[0], in[1]);
            auto quot = div<double>(tape, prod, scalar_affine<double>(tape, in[1], 1.0, 3.0));
            return reduce_mean<double>(tape, quot);
        });
    bin.add_input("a", random_tensor({1, 1, 3, 4}, 15));
    bin.add_input("b", random_tensor({1, 1, 3, 4}, 16));
    CHECK(bin.run().max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: ssim_map") {
    GradientCheck<double> check(
        [](Tape<double>* tape, const std::vector<TensorD>& in) {
            return ssim_map<double>(tape, in[0], in[1], 3);
        });
    check.add_input("a", random_tensor({1, 1, 5, 6}, 17, 0.1, 0.9));
    check.add_input("b", random_tensor({1, 1, 5, 6}, 18, 0.1, 0.9));
    const auto report = check.run();
    CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: reprojection and module loss w.r.t. disparity") {
    const int h = 8, w = 12;
    TensorD left = random_tensor({1, 3, h, w}, 19, 0.1, 0.9);
    TensorD right = random_tensor({1, 3, h, w}, 20, 0.1, 0.9);
    TensorD disp(1, 1, h, w);
    std::mt19937_64 rng(21);
    fill_uniform(disp, rng, 0.25, 0.75);

    GradientCheck<double> full(
        [&](Tape<double>* tape, const std::vector<TensorD>& in) {
            return reprojection_loss<double>(tape, left, right, in[0]).scalar_node;
        });
    full.add_input("disparity", disp);
    CHECK(full.run().max_rel_err < 1e-5);

    TensorD coarse(1, 1, h / 4, w / 4);
    fill_uniform(coarse, rng, 0.1, 0.4);
    GradientCheck<double> coarse_check(
        [&](Tape<double>* tape, const std::vector<TensorD>& in) {
            return module_loss<double>(tape, left, right, in[0], 2).scalar_node;
        });
    coarse_check.add_input("y_theta", coarse);
    CHECK(coarse_check.run().max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: one full pyramid level (warp + correlation + decoder)") {
    const int h = 6, w = 8;
    Parameter<double> w1(random_tensor({6, 10, 3, 3}, 22, -0.3, 0.3), Block::Always, "w1");
    Parameter<double> b1(random_tensor({6, 1, 1, 1}, 23, -0.1, 0.1), Block::Always, "b1");
    Parameter<double> w2(random_tensor({1, 6, 3, 3}, 24, -0.3, 0.3), Block::Always, "w2");
    Parameter<double> b2(random_tensor({1, 1, 1, 1}, 25, -0.1, 0.1), Block::Always, "b2");

    GradientCheck<double> check(
        [&](Tape<double>* tape, const std::vector<TensorD>& in) {
            const auto& fl = in[0];
            const auto& fr = in[1];
            const auto& coarse = in[2];
            auto up = bilinear_resize<double>(tape, coarse, h, w);
            up = scalar_affine<double>(tape, up, 2.0, 0.0);
            auto warped = warp_horizontal<double>(tape, fr, up);
            auto corr = correlation1d<double>(tape, fl, warped, 2);
            auto x = concat_channels<double>(tape, {corr, fl, up});
            x = leaky_relu<double>(tape, conv2d<double>(tape, x, w1, b1, 1, 1, 1), 0.2);
            return conv2d<double>(tape, x, w2, b2, 1, 1, 1);
        });
    check.add_input("f_left", random_tensor({1, 4, h, w}, 26));
    check.add_input("f_right", random_tensor({1, 4, h, w}, 27));
    TensorD coarse(1, 1, h / 2, w / 2);
    std::mt19937_64 rng(28);
    fill_uniform(coarse, rng, 0.1, 0.6);
    check.add_input("coarse_disparity", coarse);
    check.add_param(&w1);
    check.add_param(&b1);
    check.add_param(&w2);
    check.add_param(&b2);
    const auto report = check.run();
    CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: full backward of a micro pyramid network") {
    NetworkConfig cfg;
    cfg.levels = 3;
    cfg.feature_channels = {3, 4, 5};
    cfg.decoder_channels = {6, 5, 1};
    cfg.refinement_channels = {4, 4, 1};
    cfg.refinement_dilations = {1, 2, 1};
    auto net = Network<double>::build(cfg, 99);

    GradientCheck<double> check(
        [&](Tape<double>* tape, const std::vector<TensorD>& in) {
            auto pyr = net.forward(tape, in[0], in[1]);
            return pyr.full;
        });
    check.add_input("left", random_tensor({1, 3, 8, 12}, 30, 0.0, 1.0));
    check.add_input("right", random_tensor({1, 3, 8, 12}, 31, 0.0, 1.0));
    for (auto& layer : net.layers()) {
        check.add_param(&layer.w);
        check.add_param(&layer.b);
    }
    const auto report = check.run();
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("gradcheck reports non-finite analytic gradients as failure") {
    GradientCheck<double> check(
        [](Tape<double>* tape, const std::vector<TensorD>& in) {
            Tensor4<double> zero(in[0].shape(), 0.0);
            return div<double>(tape, in[0], zero); // d/dx = 1/0
        });
    check.add_input("x", random_tensor({1, 1, 2, 2}, 32));
    const auto report = check.run();
    CHECK_FALSE(report.finite);
    CHECK_FALSE(report.passed(1e-5));
}
