#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "mad/param.hpp"
#include "mad/tape.hpp"
#include "mad/tensor.hpp"

namespace mad {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

inline int conv_out_dim(int in, int pad, int dilation, int k, int stride) {
    return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

// Gathers conv patches: cols is (c_in*k*k) x (out_h*out_w), row-major.
template <typename T>
void im2col(const Tensor4<T>& x, int sample, int k, int stride, int dilation, int pad,
            int oh, int ow, std::vector<T>& cols) {
    const int c = x.c(), h = x.h(), w = x.w();
    cols.assign(static_cast<std::size_t>(c) * k * k * oh * ow, T(0));
    const T* src = x.data() + x.index(sample, 0, 0, 0);
    std::size_t r = 0;
    for (int ic = 0; ic < c; ++ic) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++r) {
                T* dst = cols.data() + r * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky * dilation;
                    if (iy < 0 || iy >= h) { dst += ow; continue; }
                    const T* row = src + (static_cast<std::int64_t>(ic) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox, ++dst) {
                        const int ix = ox * stride - pad + kx * dilation;
                        if (ix >= 0 && ix < w) *dst = row[ix];
                    }
                }
            }
        }
    }
}

// Scatter-adds conv patch gradients back onto the input layout.
template <typename T>
void col2im_add(const std::vector<T>& cols, int c, int h, int w, int k, int stride,
                int dilation, int pad, int oh, int ow, T* dst) {
    std::size_t r = 0;
    for (int ic = 0; ic < c; ++ic) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++r) {
                const T* src = cols.data() + r * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky * dilation;
                    if (iy < 0 || iy >= h) { src += ow; continue; }
                    T* row = dst + (static_cast<std::int64_t>(ic) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox, ++src) {
                        const int ix = ox * stride - pad + kx * dilation;
                        if (ix >= 0 && ix < w) row[ix] += *src;
                    }
                }
            }
        }
    }
}

template <typename T>
bool any_recorded(std::initializer_list<const Tensor4<T>*> ts) {
    for (const auto* t : ts)
        if (t->node >= 0) return true;
    return false;
}

} // namespace detail

// 2-D convolution, square kernel, zero padding.
// weight: (c_out, c_in, k, k); bias: (c_out, 1, 1, 1).
template <std::floating_point T>
Tensor4<T> conv2d(Tape<T>* tape, const Tensor4<T>& x, Parameter<T>& weight, Parameter<T>& bias,
                  int stride, int dilation, int padding) {
    const Shape4 ws = weight.value.shape();
    require(ws.h == ws.w, "conv2d: kernel must be square, got " + ws.str());
    require(x.c() == ws.c, "conv2d(" + weight.name + "): input channels " + std::to_string(x.c()) +
                               " != weight c_in " + std::to_string(ws.c));
    require(bias.value.numel() == ws.n,
            "conv2d(" + weight.name + "): bias length " + std::to_string(bias.value.numel()) +
                " != c_out " + std::to_string(ws.n));
    require(stride >= 1 && dilation >= 1 && padding >= 0, "conv2d: invalid stride/dilation/padding");

    const int k = ws.h, c_out = ws.n, c_in = ws.c;
    const int oh = detail::conv_out_dim(x.h(), padding, dilation, k, stride);
    const int ow = detail::conv_out_dim(x.w(), padding, dilation, k, stride);
    require(oh >= 1 && ow >= 1, "conv2d(" + weight.name + "): output would be empty for input " +
                                    x.shape().str());

    Tensor4<T> out(x.n(), c_out, oh, ow);
    const int npix = oh * ow;
    std::vector<T> cols;
    detail::ConstMatMap<T> wmat(weight.value.data(), c_out, c_in * k * k);
    for (int s = 0; s < x.n(); ++s) {
        detail::im2col(x, s, k, stride, dilation, padding, oh, ow, cols);
        detail::ConstMatMap<T> cmat(cols.data(), c_in * k * k, npix);
        detail::MatMap<T> omat(out.data() + out.index(s, 0, 0, 0), c_out, npix);
        omat.noalias() = wmat * cmat;
        for (int oc = 0; oc < c_out; ++oc) omat.row(oc).array() += bias.value[oc];
    }

    if (tape) {
        Tensor4<T> xc = x;
        Parameter<T>* wp = &weight;
        Parameter<T>* bp = &bias;
        out.node = tape->emit(weight.block, out.shape(),
            [xc, wp, bp, stride, dilation, padding, k, c_out, c_in, oh, ow, npix](
                Tape<T>& tp, const std::vector<T>& gout) {
                const Shape4 xs = xc.shape();
                std::vector<T> cols, dcols;
                std::vector<T> dx;
                const bool need_dx = xc.node >= 0;
                if (need_dx) dx.assign(static_cast<std::size_t>(xs.numel()), T(0));
                detail::ConstMatMap<T> wmat(wp->value.data(), c_out, c_in * k * k);
                detail::MatMap<T> dwmat(wp->grad.data(), c_out, c_in * k * k);
                for (int s = 0; s < xs.n; ++s) {
                    detail::ConstMatMap<T> gmat(
                        gout.data() + static_cast<std::size_t>(s) * c_out * npix, c_out, npix);
                    detail::im2col(xc, s, k, stride, dilation, padding, oh, ow, cols);
                    detail::ConstMatMap<T> cmat(cols.data(), c_in * k * k, npix);
                    dwmat.noalias() += gmat * cmat.transpose();
                    for (int oc = 0; oc < c_out; ++oc) bp->grad[oc] += gmat.row(oc).sum();
                    if (need_dx) {
                        dcols.assign(static_cast<std::size_t>(c_in) * k * k * npix, T(0));
                        detail::MatMap<T> dcmat(dcols.data(), c_in * k * k, npix);
                        dcmat.noalias() = wmat.transpose() * gmat;
                        detail::col2im_add(dcols, xs.c, xs.h, xs.w, k, stride, dilation, padding,
                                           oh, ow, dx.data() + xc.index(s, 0, 0, 0));
                    }
                }
                if (need_dx) tp.accumulate(xc.node, dx.data(), xs.numel());
            });
    }
    return out;
}

template <std::floating_point T>
Tensor4<T> leaky_relu(Tape<T>* tape, const Tensor4<T>& x, double slope, Block block = Block::Always) {
    require(slope > 0.0 && slope < 1.0, "leaky_relu: slope must be in (0,1)");
    Tensor4<T> out(x.shape());
    const T s = static_cast<T>(slope);
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] >= T(0) ? x[i] : s * x[i];

    if (tape && x.node >= 0) {
        Tensor4<T> xc = x;
        out.node = tape->emit(block, out.shape(), [xc, s](Tape<T>& tp, const std::vector<T>& gout) {
            std::vector<T> dx(gout.size());
            for (std::size_t i = 0; i < gout.size(); ++i)
                dx[i] = xc[static_cast<std::int64_t>(i)] >= T(0) ? gout[i] : s * gout[i];
            tp.accumulate(xc.node, dx.data(), static_cast<std::int64_t>(dx.size()));
        });
    }
    return out;
}

// Bilinear resize to an explicit target size, align-corners-false
// (sample centers at (i + 0.5) * in/out - 0.5), border replicated.
template <std::floating_point T>
Tensor4<T> bilinear_resize(Tape<T>* tape, const Tensor4<T>& x, int oh, int ow,
                           Block block = Block::Always) {
    require(oh >= 1 && ow >= 1, "bilinear_resize: target size must be positive");
    const int h = x.h(), w = x.w();
    struct Tap { int i0, i1; T f; };
    auto make_taps = [](int out_dim, int in_dim) {
        std::vector<Tap> taps(static_cast<std::size_t>(out_dim));
        const double scale = static_cast<double>(in_dim) / out_dim;
        for (int o = 0; o < out_dim; ++o) {
            const double src = (o + 0.5) * scale - 0.5;
            const int lo = static_cast<int>(std::floor(src));
            taps[static_cast<std::size_t>(o)] = {
                std::clamp(lo, 0, in_dim - 1), std::clamp(lo + 1, 0, in_dim - 1),
                static_cast<T>(src - lo)};
        }
        return taps;
    };
    const auto ytap = make_taps(oh, h);
    const auto xtap = make_taps(ow, w);

    Tensor4<T> out(x.n(), x.c(), oh, ow);
    for (int s = 0; s < x.n(); ++s)
        for (int ic = 0; ic < x.c(); ++ic) {
            const T* plane = x.data() + x.index(s, ic, 0, 0);
            T* dst = out.data() + out.index(s, ic, 0, 0);
            for (int oy = 0; oy < oh; ++oy) {
                const auto& ty = ytap[static_cast<std::size_t>(oy)];
                const T* r0 = plane + static_cast<std::int64_t>(ty.i0) * w;
                const T* r1 = plane + static_cast<std::int64_t>(ty.i1) * w;
                for (int ox = 0; ox < ow; ++ox, ++dst) {
                    const auto& tx = xtap[static_cast<std::size_t>(ox)];
                    const T top = r0[tx.i0] + tx.f * (r0[tx.i1] - r0[tx.i0]);
                    const T bot = r1[tx.i0] + tx.f * (r1[tx.i1] - r1[tx.i0]);
                    *dst = top + ty.f * (bot - top);
                }
            }
        }

    if (tape && x.node >= 0) {
        Tensor4<T> xc = x;
        out.node = tape->emit(block, out.shape(),
            [xc, ytap, xtap, oh, ow](Tape<T>& tp, const std::vector<T>& gout) {
                const Shape4 xs = xc.shape();
                std::vector<T> dx(static_cast<std::size_t>(xs.numel()), T(0));
                const T* g = gout.data();
                for (int s = 0; s < xs.n; ++s)
                    for (int ic = 0; ic < xs.c; ++ic) {
                        T* plane = dx.data() + xc.index(s, ic, 0, 0);
                        for (int oy = 0; oy < oh; ++oy) {
                            const auto& ty = ytap[static_cast<std::size_t>(oy)];
                            for (int ox = 0; ox < ow; ++ox, ++g) {
                                const auto& tx = xtap[static_cast<std::size_t>(ox)];
                                const T gv = *g;
                                plane[static_cast<std::int64_t>(ty.i0) * xs.w + tx.i0] +=
                                    (T(1) - ty.f) * (T(1) - tx.f) * gv;
                                plane[static_cast<std::int64_t>(ty.i0) * xs.w + tx.i1] +=
                                    (T(1) - ty.f) * tx.f * gv;
                                plane[static_cast<std::int64_t>(ty.i1) * xs.w + tx.i0] +=
                                    ty.f * (T(1) - tx.f) * gv;
                                plane[static_cast<std::int64_t>(ty.i1) * xs.w + tx.i1] +=
                                    ty.f * tx.f * gv;
                            }
                        }
                    }
                tp.accumulate(xc.node, dx.data(), xs.numel());
            });
    }
    return out;
}

template <std::floating_point T>
Tensor4<T> bilinear_upsample(Tape<T>* tape, const Tensor4<T>& x, int factor,
                             Block block = Block::Always) {
    require(factor >= 2, "bilinear_upsample: factor must be >= 2");
    return bilinear_resize(tape, x, x.h() * factor, x.w() * factor, block);
}

// Horizontal correlation: channel (d + radius) holds the channel-mean dot
// product of left(x) with right(x + d), d in [-radius, radius]; zero where the
// shifted column leaves the image.
template <std::floating_point T>
Tensor4<T> correlation1d(Tape<T>* tape, const Tensor4<T>& left, const Tensor4<T>& right,
                         int radius) {
    require(left.shape() == right.shape(), "correlation1d: shape mismatch " + left.shape().str() +
                                               " vs " + right.shape().str());
    require(radius >= 1, "correlation1d: radius must be >= 1");

    const int c = left.c(), h = left.h(), w = left.w();
    const T inv_c = T(1) / static_cast<T>(c);
    Tensor4<T> out(left.n(), 2 * radius + 1, h, w);
    for (int s = 0; s < left.n(); ++s)
        for (int d = -radius; d <= radius; ++d) {
            T* dst = out.data() + out.index(s, d + radius, 0, 0);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x, ++dst) {
                    const int xr = x + d;
                    if (xr < 0 || xr >= w) { *dst = T(0); continue; }
                    T acc = T(0);
                    for (int ic = 0; ic < c; ++ic)
                        acc += left.at(s, ic, y, x) * right.at(s, ic, y, xr);
                    *dst = acc * inv_c;
                }
        }

    if (tape && detail::any_recorded<T>({&left, &right})) {
        Tensor4<T> lc = left, rc = right;
        out.node = tape->emit(Block::Always, out.shape(),
            [lc, rc, radius, inv_c](Tape<T>& tp, const std::vector<T>& gout) {
                const Shape4 s4 = lc.shape();
                const int c = s4.c, h = s4.h, w = s4.w;
                std::vector<T> dl, dr;
                if (lc.node >= 0) dl.assign(static_cast<std::size_t>(s4.numel()), T(0));
                if (rc.node >= 0) dr.assign(static_cast<std::size_t>(s4.numel()), T(0));
                const int cw = 2 * radius + 1;
                for (int s = 0; s < s4.n; ++s)
                    for (int d = -radius; d <= radius; ++d) {
                        const T* g = gout.data() +
                                     ((static_cast<std::size_t>(s) * cw) + (d + radius)) * h * w;
                        for (int y = 0; y < h; ++y)
                            for (int x = 0; x < w; ++x) {
                                const int xr = x + d;
                                if (xr < 0 || xr >= w) continue;
                                const T gv = g[y * w + x] * inv_c;
                                if (gv == T(0)) continue;
                                for (int ic = 0; ic < c; ++ic) {
                                    const auto li = lc.index(s, ic, y, x);
                                    const auto ri = rc.index(s, ic, y, xr);
                                    if (!dl.empty()) dl[static_cast<std::size_t>(li)] += gv * rc[ri];
                                    if (!dr.empty()) dr[static_cast<std::size_t>(ri)] += gv * lc[li];
                                }
                            }
                    }
                if (!dl.empty()) tp.accumulate(lc.node, dl.data(), s4.numel());
                if (!dr.empty()) tp.accumulate(rc.node, dr.data(), s4.numel());
            });
    }
    return out;
}

// Samples src at (y, x - disparity(x)) with bilinear interpolation, horizontal
// coordinates clamped to the border.
template <std::floating_point T>
Tensor4<T> warp_horizontal(Tape<T>* tape, const Tensor4<T>& src, const Tensor4<T>& disparity) {
    require(disparity.c() == 1, "warp_horizontal: disparity must have 1 channel, got " +
                                    std::to_string(disparity.c()));
    require(disparity.n() == src.n() && disparity.h() == src.h() && disparity.w() == src.w(),
            "warp_horizontal: disparity " + disparity.shape().str() + " does not match src " +
                src.shape().str());

    const int c = src.c(), h = src.h(), w = src.w();
    Tensor4<T> out(src.shape());
    for (int s = 0; s < src.n(); ++s)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const T sx = static_cast<T>(x) - disparity.at(s, 0, y, x);
                const int lo = static_cast<int>(std::floor(sx));
                const T f = sx - static_cast<T>(lo);
                const int i0 = std::clamp(lo, 0, w - 1);
                const int i1 = std::clamp(lo + 1, 0, w - 1);
                for (int ic = 0; ic < c; ++ic) {
                    const T a = src.at(s, ic, y, i0);
                    const T b = src.at(s, ic, y, i1);
                    out.at(s, ic, y, x) = a + f * (b - a);
                }
            }

    if (tape && detail::any_recorded<T>({&src, &disparity})) {
        Tensor4<T> sc = src, dc = disparity;
        out.node = tape->emit(Block::Always, out.shape(),
            [sc, dc](Tape<T>& tp, const std::vector<T>& gout) {
                const Shape4 s4 = sc.shape();
                const int c = s4.c, h = s4.h, w = s4.w;
                std::vector<T> dsrc, ddisp;
                if (sc.node >= 0) dsrc.assign(static_cast<std::size_t>(s4.numel()), T(0));
                if (dc.node >= 0) ddisp.assign(static_cast<std::size_t>(dc.numel()), T(0));
                for (int s = 0; s < s4.n; ++s)
                    for (int y = 0; y < h; ++y)
                        for (int x = 0; x < w; ++x) {
                            const T sx = static_cast<T>(x) - dc.at(s, 0, y, x);
                            const int lo = static_cast<int>(std::floor(sx));
                            const T f = sx - static_cast<T>(lo);
                            const int i0 = std::clamp(lo, 0, w - 1);
                            const int i1 = std::clamp(lo + 1, 0, w - 1);
                            T dd = T(0);
                            for (int ic = 0; ic < c; ++ic) {
                                const T gv = gout[static_cast<std::size_t>(
                                    sc.index(s, ic, y, x))];
                                if (!dsrc.empty()) {
                                    dsrc[static_cast<std::size_t>(sc.index(s, ic, y, i0))] +=
                                        (T(1) - f) * gv;
                                    dsrc[static_cast<std::size_t>(sc.index(s, ic, y, i1))] += f * gv;
                                }
                                dd += gv * (sc.at(s, ic, y, i1) - sc.at(s, ic, y, i0));
                            }
                            // d(out)/d(disparity) = -d(out)/d(sx)
                            if (!ddisp.empty())
                                ddisp[static_cast<std::size_t>(dc.index(s, 0, y, x))] -= dd;
                        }
                if (!dsrc.empty()) tp.accumulate(sc.node, dsrc.data(), s4.numel());
                if (!ddisp.empty()) tp.accumulate(dc.node, ddisp.data(), dc.numel());
            });
    }
    return out;
}

template <std::floating_point T>
Tensor4<T> concat_channels(Tape<T>* tape, const std::vector<Tensor4<T>>& parts,
                           Block block = Block::Always) {
    require(!parts.empty(), "concat_channels: empty input list");
    int c_total = 0;
    for (const auto& p : parts) {
        require(p.n() == parts[0].n() && p.h() == parts[0].h() && p.w() == parts[0].w(),
                "concat_channels: spatial/batch mismatch");
        c_total += p.c();
    }
    Tensor4<T> out(parts[0].n(), c_total, parts[0].h(), parts[0].w());
    const int hw = parts[0].h() * parts[0].w();
    for (int s = 0; s < out.n(); ++s) {
        int oc = 0;
        for (const auto& p : parts) {
            std::copy_n(p.data() + p.index(s, 0, 0, 0), static_cast<std::size_t>(p.c()) * hw,
                        out.data() + out.index(s, oc, 0, 0));
            oc += p.c();
        }
    }

    bool rec = false;
    if (tape)
        for (const auto& p : parts) rec = rec || p.node >= 0;
    if (rec) {
        std::vector<Tensor4<T>> pc = parts;
        out.node = tape->emit(block, out.shape(), [pc, hw](Tape<T>& tp, const std::vector<T>& gout) {
            const int n = pc[0].n();
            int c_total = 0;
            for (const auto& p : pc) c_total += p.c();
            int oc = 0;
            for (const auto& p : pc) {
                if (p.node >= 0) {
                    std::vector<T> dp(static_cast<std::size_t>(p.numel()));
                    for (int s = 0; s < n; ++s)
                        std::copy_n(gout.data() +
                                        (static_cast<std::size_t>(s) * c_total + oc) * hw,
                                    static_cast<std::size_t>(p.c()) * hw,
                                    dp.data() + p.index(s, 0, 0, 0));
                    tp.accumulate(p.node, dp.data(), p.numel());
                }
                oc += p.c();
            }
        });
    }
    return out;
}

namespace detail {

template <std::floating_point T, typename Fwd, typename Bwd>
Tensor4<T> binary_op(Tape<T>* tape, const Tensor4<T>& a, const Tensor4<T>& b, Fwd fwd, Bwd bwd,
                     const char* name) {
    require(a.shape() == b.shape(), std::string(name) + ": shape mismatch " + a.shape().str() +
                                        " vs " + b.shape().str());
    Tensor4<T> out(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = fwd(a[i], b[i]);
    if (tape && any_recorded<T>({&a, &b})) {
        Tensor4<T> ac = a, bc = b;
        out.node = tape->emit(Block::Always, out.shape(),
            [ac, bc, bwd](Tape<T>& tp, const std::vector<T>& gout) {
                const std::int64_t n = ac.numel();
                std::vector<T> da, db;
                if (ac.node >= 0) da.resize(static_cast<std::size_t>(n));
                if (bc.node >= 0) db.resize(static_cast<std::size_t>(n));
                for (std::int64_t i = 0; i < n; ++i) {
                    auto [ga, gb] = bwd(ac[i], bc[i], gout[static_cast<std::size_t>(i)]);
                    if (!da.empty()) da[static_cast<std::size_t>(i)] = ga;
                    if (!db.empty()) db[static_cast<std::size_t>(i)] = gb;
                }
                if (!da.empty()) tp.accumulate(ac.node, da.data(), n);
                if (!db.empty()) tp.accumulate(bc.node, db.data(), n);
            });
    }
    return out;
}

} // namespace detail

template <std::floating_point T>
Tensor4<T> add(Tape<T>* tape, const Tensor4<T>& a, const Tensor4<T>& b) {
    return detail::binary_op(tape, a, b, [](T x, T y) { return x + y; },
                             [](T, T, T g) { return std::pair<T, T>(g, g); }, "add");
}

template <std::floating_point T>
Tensor4<T> sub(Tape<T>* tape, const Tensor4<T>& a, const Tensor4<T>& b) {
    return detail::binary_op(tape, a, b, [](T x, T y) { return x - y; },
                             [](T, T, T g) { return std::pair<T, T>(g, -g); }, "sub");
}

template <std::floating_point T>
Tensor4<T> mul(Tape<T>* tape, const Tensor4<T>& a, const Tensor4<T>& b) {
    return detail::binary_op(tape, a, b, [](T x, T y) { return x * y; },
                             [](T x, T y, T g) { return std::pair<T, T>(g * y, g * x); }, "mul");
}

template <std::floating_point T>
Tensor4<T> div(Tape<T>* tape, const Tensor4<T>& a, const Tensor4<T>& b) {
    return detail::binary_op(tape, a, b, [](T x, T y) { return x / y; },
                             [](T x, T y, T g) {
                                 return std::pair<T, T>(g / y, -g * x / (y * y));
                             },
                             "div");
}

// out = scale * x + offset
template <std::floating_point T>
Tensor4<T> scalar_affine(Tape<T>* tape, const Tensor4<T>& x, double scale, double offset,
                         Block block = Block::Always) {
    Tensor4<T> out(x.shape());
    const T k = static_cast<T>(scale), c = static_cast<T>(offset);
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = k * x[i] + c;
    if (tape && x.node >= 0) {
        const int xnode = x.node;
        out.node = tape->emit(block, out.shape(), [xnode, k](Tape<T>& tp, const std::vector<T>& gout) {
            std::vector<T> dx(gout.size());
            for (std::size_t i = 0; i < gout.size(); ++i) dx[i] = k * gout[i];
            tp.accumulate(xnode, dx.data(), static_cast<std::int64_t>(dx.size()));
        });
    }
    return out;
}

template <std::floating_point T>
Tensor4<T> abs_val(Tape<T>* tape, const Tensor4<T>& x) {
    Tensor4<T> out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = std::abs(x[i]);
    if (tape && x.node >= 0) {
        Tensor4<T> xc = x;
        out.node = tape->emit(Block::Always, out.shape(),
            [xc](Tape<T>& tp, const std::vector<T>& gout) {
                std::vector<T> dx(gout.size());
                for (std::size_t i = 0; i < gout.size(); ++i) {
                    const T v = xc[static_cast<std::int64_t>(i)];
                    dx[i] = v > T(0) ? gout[i] : (v < T(0) ? -gout[i] : T(0));
                }
                tp.accumulate(xc.node, dx.data(), static_cast<std::int64_t>(dx.size()));
            });
    }
    return out;
}

// window x window mean with replicated borders.
template <std::floating_point T>
Tensor4<T> box_filter(Tape<T>* tape, const Tensor4<T>& x, int window) {
    require(window >= 1 && window % 2 == 1, "box_filter: window must be odd and positive");
    const int r = window / 2;
    const int h = x.h(), w = x.w();
    const T inv = T(1) / static_cast<T>(window * window);
    Tensor4<T> out(x.shape());
    for (int s = 0; s < x.n(); ++s)
        for (int ic = 0; ic < x.c(); ++ic) {
            const T* plane = x.data() + x.index(s, ic, 0, 0);
            T* dst = out.data() + out.index(s, ic, 0, 0);
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx, ++dst) {
                    T acc = T(0);
                    for (int dy = -r; dy <= r; ++dy) {
                        const int iy = std::clamp(y + dy, 0, h - 1);
                        for (int dx = -r; dx <= r; ++dx)
                            acc += plane[static_cast<std::int64_t>(iy) * w +
                                         std::clamp(xx + dx, 0, w - 1)];
                    }
                    *dst = acc * inv;
                }
        }

    if (tape && x.node >= 0) {
        Tensor4<T> xc = x;
        out.node = tape->emit(Block::Always, out.shape(),
            [xc, r, inv](Tape<T>& tp, const std::vector<T>& gout) {
                const Shape4 s4 = xc.shape();
                const int h = s4.h, w = s4.w;
                std::vector<T> dx(static_cast<std::size_t>(s4.numel()), T(0));
                const T* g = gout.data();
                for (int s = 0; s < s4.n; ++s)
                    for (int ic = 0; ic < s4.c; ++ic) {
                        T* plane = dx.data() + xc.index(s, ic, 0, 0);
                        for (int y = 0; y < h; ++y)
                            for (int xx = 0; xx < w; ++xx, ++g) {
                                const T gv = *g * inv;
                                for (int dy = -r; dy <= r; ++dy) {
                                    const int iy = std::clamp(y + dy, 0, h - 1);
                                    for (int dxo = -r; dxo <= r; ++dxo)
                                        plane[static_cast<std::int64_t>(iy) * w +
                                              std::clamp(xx + dxo, 0, w - 1)] += gv;
                                }
                            }
                    }
                tp.accumulate(xc.node, dx.data(), s4.numel());
            });
    }
    return out;
}

// Mean over all elements -> 1x1x1x1 tensor.
template <std::floating_point T>
Tensor4<T> reduce_mean(Tape<T>* tape, const Tensor4<T>& x) {
    Tensor4<T> out(1, 1, 1, 1);
    T acc = T(0);
    for (std::int64_t i = 0; i < x.numel(); ++i) acc += x[i];
    out[0] = acc / static_cast<T>(x.numel());
    if (tape && x.node >= 0) {
        const int xnode = x.node;
        const std::int64_t n = x.numel();
        out.node = tape->emit(Block::Always, out.shape(),
            [xnode, n](Tape<T>& tp, const std::vector<T>& gout) {
                std::vector<T> dx(static_cast<std::size_t>(n), gout[0] / static_cast<T>(n));
                tp.accumulate(xnode, dx.data(), n);
            });
    }
    return out;
}

// Marks a tensor as a differentiable input on the tape.
template <std::floating_point T>
Tensor4<T> make_input(Tape<T>& tape, Tensor4<T> t) {
    t.node = tape.make_leaf(t.shape());
    return t;
}

} // namespace mad
