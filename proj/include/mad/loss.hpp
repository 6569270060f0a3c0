#pragma once

#include "mad/ops.hpp"

namespace mad {

// Scalar loss with its per-pixel map. `scalar_node` is the recorded 1-element
// tensor; seed a backward pass from it to differentiate the loss.
template <std::floating_point T>
struct LossValue {
    T scalar = T(0);
    Tensor4<T> per_pixel;
    Tensor4<T> scalar_node;
};

// Per-pixel SSIM from window x window box statistics, C1 = 0.01^2, C2 = 0.03^2.
template <std::floating_point T>
Tensor4<T> ssim_map(Tape<T>* tape, const Tensor4<T>& a, const Tensor4<T>& b, int window = 3) {
    require(a.shape() == b.shape(),
            "ssim_map: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

    Tensor4<T> mu_a = box_filter(tape, a, window);
    Tensor4<T> mu_b = box_filter(tape, b, window);
    Tensor4<T> mu_aa = mul(tape, mu_a, mu_a);
    Tensor4<T> mu_bb = mul(tape, mu_b, mu_b);
    Tensor4<T> mu_ab = mul(tape, mu_a, mu_b);
    Tensor4<T> var_a = sub(tape, box_filter(tape, mul(tape, a, a), window), mu_aa);
    Tensor4<T> var_b = sub(tape, box_filter(tape, mul(tape, b, b), window), mu_bb);
    Tensor4<T> cov = sub(tape, box_filter(tape, mul(tape, a, b), window), mu_ab);

    Tensor4<T> num = mul(tape, scalar_affine(tape, mu_ab, 2.0, c1),
                         scalar_affine(tape, cov, 2.0, c2));
    Tensor4<T> den = mul(tape, scalar_affine(tape, add(tape, mu_aa, mu_bb), 1.0, c1),
                         scalar_affine(tape, add(tape, var_a, var_b), 1.0, c2));
    return div(tape, num, den);
}

namespace detail {

// mean over channels: (n, c, h, w) -> (n, 1, h, w)
template <std::floating_point T>
Tensor4<T> channel_mean(Tape<T>* tape, const Tensor4<T>& x) {
    if (x.c() == 1) return x;
    Tensor4<T> out(x.n(), 1, x.h(), x.w());
    const int c = x.c();
    const std::int64_t hw = static_cast<std::int64_t>(x.h()) * x.w();
    const T inv = T(1) / static_cast<T>(c);
    for (int s = 0; s < x.n(); ++s) {
        T* dst = out.data() + out.index(s, 0, 0, 0);
        for (std::int64_t i = 0; i < hw; ++i) {
            T acc = T(0);
            for (int ic = 0; ic < c; ++ic) acc += x.data()[x.index(s, ic, 0, 0) + i];
            dst[i] = acc * inv;
        }
    }
    if (tape && x.node >= 0) {
        const int xnode = x.node;
        const Shape4 xs = x.shape();
        out.node = tape->emit(Block::Always, out.shape(),
            [xnode, xs, inv, hw](Tape<T>& tp, const std::vector<T>& gout) {
                std::vector<T> dx(static_cast<std::size_t>(xs.numel()));
                for (int s = 0; s < xs.n; ++s)
                    for (int ic = 0; ic < xs.c; ++ic)
                        for (std::int64_t i = 0; i < hw; ++i)
                            dx[static_cast<std::size_t>(
                                ((static_cast<std::int64_t>(s) * xs.c + ic) * hw) + i)] =
                                gout[static_cast<std::size_t>(s * hw + i)] * inv;
                tp.accumulate(xnode, dx.data(), xs.numel());
            });
    }
    return out;
}

} // namespace detail

// Photometric reprojection loss between the left image and the right image
// warped by the disparity: per pixel 0.85 * (1 - SSIM)/2 + 0.15 * |l - warp(r)|,
// averaged over channels; the scalar is the spatial mean.
template <std::floating_point T>
LossValue<T> reprojection_loss(Tape<T>* tape, const Tensor4<T>& left, const Tensor4<T>& right,
                               const Tensor4<T>& disparity, int ssim_window = 3) {
    require(left.shape() == right.shape(), "reprojection_loss: image shape mismatch");
    Tensor4<T> warped = warp_horizontal(tape, right, disparity);
    Tensor4<T> ssim = ssim_map(tape, left, warped, ssim_window);
    Tensor4<T> dssim = scalar_affine(tape, ssim, -0.5, 0.5); // (1 - ssim) / 2
    Tensor4<T> l1 = abs_val(tape, sub(tape, left, warped));
    Tensor4<T> combined = add(tape, scalar_affine(tape, dssim, 0.85, 0.0),
                              scalar_affine(tape, l1, 0.15, 0.0));
    LossValue<T> loss;
    loss.per_pixel = detail::channel_mean(tape, combined);
    loss.scalar_node = reduce_mean(tape, loss.per_pixel);
    loss.scalar = loss.scalar_node[0];
    return loss;
}

// Loss on a coarse prediction: upsample to full resolution (values scaled by
// 2^level) and evaluate the reprojection loss against the full-size pair.
template <std::floating_point T>
LossValue<T> module_loss(Tape<T>* tape, const Tensor4<T>& left, const Tensor4<T>& right,
                         const Tensor4<T>& y_theta, int level, int ssim_window = 3) {
    require(level >= 0, "module_loss: level must be >= 0");
    Tensor4<T> disp = y_theta;
    if (y_theta.h() != left.h() || y_theta.w() != left.w()) {
        disp = bilinear_resize(tape, y_theta, left.h(), left.w());
    }
    if (level > 0) disp = scalar_affine(tape, disp, static_cast<double>(1 << level), 0.0);
    return reprojection_loss(tape, left, right, disp, ssim_window);
}

} // namespace mad
