#include "mad/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "mad/ops.hpp"

namespace mad {

std::string to_string(TextureFamily f) {
    switch (f) {
        case TextureFamily::dots: return "dots";
        case TextureFamily::perlin: return "perlin";
        case TextureFamily::stripes: return "stripes";
        case TextureFamily::blobs: return "blobs";
    }
    return "dots";
}

TextureFamily texture_from_string(const std::string& s) {
    if (s == "dots") return TextureFamily::dots;
    if (s == "perlin") return TextureFamily::perlin;
    if (s == "stripes") return TextureFamily::stripes;
    if (s == "blobs") return TextureFamily::blobs;
    throw std::invalid_argument("unknown texture family: " + s);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double hash01(std::uint64_t seed, std::int64_t ix, std::int64_t iy, int salt) {
    std::uint64_t h = seed;
    h = splitmix64(h ^ static_cast<std::uint64_t>(ix) * 0x9ddfea08eb382d69ull);
    h = splitmix64(h ^ static_cast<std::uint64_t>(iy) * 0xc2b2ae3d27d4eb4full);
    h = splitmix64(h ^ static_cast<std::uint64_t>(salt));
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

struct Vec3 {
    double r = 0, g = 0, b = 0;
};

struct Blob {
    double cx, cy, inv_sx2, inv_sy2, cosr, sinr;
    Vec3 color;
};

struct TextureParams {
    TextureFamily family = TextureFamily::dots;
    std::uint64_t seed = 0;
    Vec3 base{0.45, 0.45, 0.45};
    // dots
    double cell = 4.0;
    double dot_sigma = 1.0;
    // value noise
    double base_freq = 1.0 / 12.0;
    // stripes
    double ux = 1, uy = 0, wavelength = 8, phase = 0, amp = 0.3;
    double wavelength2 = 11, phase2 = 0, amp2 = 0.15;
    // blobs
    std::vector<Blob> blobs;
};

double smooth01(double t) { return 0.5 - 0.5 * std::cos(t * 3.14159265358979323846); }

Vec3 eval_texture(const TextureParams& tp, double x, double y) {
    Vec3 c = tp.base;
    switch (tp.family) {
        case TextureFamily::dots: {
            const double gx = x / tp.cell, gy = y / tp.cell;
            const std::int64_t cx0 = static_cast<std::int64_t>(std::floor(gx));
            const std::int64_t cy0 = static_cast<std::int64_t>(std::floor(gy));
            for (std::int64_t cy = cy0 - 1; cy <= cy0 + 1; ++cy)
                for (std::int64_t cx = cx0 - 1; cx <= cx0 + 1; ++cx) {
                    const double px = (cx + 0.15 + 0.7 * hash01(tp.seed, cx, cy, 0)) * tp.cell;
                    const double py = (cy + 0.15 + 0.7 * hash01(tp.seed, cx, cy, 1)) * tp.cell;
                    const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
                    const double w = std::exp(-d2 / (2.0 * tp.dot_sigma * tp.dot_sigma));
                    const Vec3 col{hash01(tp.seed, cx, cy, 2), hash01(tp.seed, cx, cy, 3),
                                   hash01(tp.seed, cx, cy, 4)};
                    c.r += w * (col.r - tp.base.r);
                    c.g += w * (col.g - tp.base.g);
                    c.b += w * (col.b - tp.base.b);
                }
            break;
        }
        case TextureFamily::perlin: {
            for (int ch = 0; ch < 3; ++ch) {
                double acc = 0.0, norm = 0.0;
                for (int oct = 0; oct < 3; ++oct) {
                    const double f = tp.base_freq * (1 << oct);
                    const double amp = std::pow(0.55, oct);
                    const double gx = x * f, gy = y * f;
                    const std::int64_t ix = static_cast<std::int64_t>(std::floor(gx));
                    const std::int64_t iy = static_cast<std::int64_t>(std::floor(gy));
                    const double fx = smooth01(gx - ix), fy = smooth01(gy - iy);
                    const int salt = ch * 8 + oct;
                    const double v00 = hash01(tp.seed, ix, iy, salt);
                    const double v10 = hash01(tp.seed, ix + 1, iy, salt);
                    const double v01 = hash01(tp.seed, ix, iy + 1, salt);
                    const double v11 = hash01(tp.seed, ix + 1, iy + 1, salt);
                    const double v = (v00 + fx * (v10 - v00)) +
                                     fy * ((v01 + fx * (v11 - v01)) - (v00 + fx * (v10 - v00)));
                    acc += amp * v;
                    norm += amp;
                }
                const double v = acc / norm;
                if (ch == 0) c.r = v;
                if (ch == 1) c.g = 0.35 + 0.5 * v;
                if (ch == 2) c.b = 1.0 - 0.8 * v;
            }
            break;
        }
        case TextureFamily::stripes: {
            const double t1 = std::sin((tp.ux * x + tp.uy * y) * (2.0 * 3.14159265358979323846 / tp.wavelength) + tp.phase);
            const double t2 = std::sin((-tp.uy * x + tp.ux * y) * (2.0 * 3.14159265358979323846 / tp.wavelength2) + tp.phase2);
            c.r = tp.base.r + tp.amp * t1 + tp.amp2 * t2;
            c.g = tp.base.g + tp.amp * std::sin((tp.ux * x + tp.uy * y) * (2.0 * 3.14159265358979323846 / tp.wavelength) + tp.phase + 0.7);
            c.b = tp.base.b + 0.6 * tp.amp * t1 - tp.amp2 * t2;
            break;
        }
        case TextureFamily::blobs: {
            for (const auto& bl : tp.blobs) {
                const double dx = x - bl.cx, dy = y - bl.cy;
                const double rx = bl.cosr * dx + bl.sinr * dy;
                const double ry = -bl.sinr * dx + bl.cosr * dy;
                const double w = std::exp(-(rx * rx * bl.inv_sx2 + ry * ry * bl.inv_sy2));
                c.r += w * (bl.color.r - tp.base.r);
                c.g += w * (bl.color.g - tp.base.g);
                c.b += w * (bl.color.b - tp.base.b);
            }
            break;
        }
    }
    return c;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Vec3 apply_photometric(Vec3 c, const DomainShiftSpec& s) {
    const auto& m = s.channel_mix;
    Vec3 mixed{m[0] * c.r + m[1] * c.g + m[2] * c.b, m[3] * c.r + m[4] * c.g + m[5] * c.b,
               m[6] * c.r + m[7] * c.g + m[8] * c.b};
    mixed.r = clamp01(mixed.r + s.brightness_offset);
    mixed.g = clamp01(mixed.g + s.brightness_offset);
    mixed.b = clamp01(mixed.b + s.brightness_offset);
    if (s.gamma != 1.0) {
        mixed.r = std::pow(mixed.r, s.gamma);
        mixed.g = std::pow(mixed.g, s.gamma);
        mixed.b = std::pow(mixed.b, s.gamma);
    }
    return mixed;
}

struct SceneLayer {
    bool background = false;
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double d0 = 0, slope = 0, cx = 0;
    double vx = 0, vy = 0, vd = 0;
    double anchor_x = 0, anchor_y = 0;
    TextureParams tex;

    double disparity_at(double x) const { return d0 + slope * (x - cx); }

    bool covers_left(double x, double y) const {
        return background || (x >= x0 && x <= x1 && y >= y0 && y <= y1);
    }

    // Solves u = x - d(x) for the left-view x seen at right-view column u.
    double left_x_for(double u) const {
        if (slope == 0.0) return u + d0;
        return (u + d0 - slope * cx) / (1.0 - slope);
    }

    bool covers_right(double u, double y, double& x_out) const {
        const double x = left_x_for(u);
        x_out = x;
        return covers_left(x, y);
    }
};

struct Scene {
    std::vector<SceneLayer> layers; // [0] is the background

    // Topmost (max-disparity) layer covering a left-view point.
    int visible_left(double x, double y, double& d_out) const {
        int best = -1;
        double bestd = -1.0;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (!layers[i].covers_left(x, y)) continue;
            const double d = layers[i].disparity_at(x);
            if (d > bestd) {
                bestd = d;
                best = static_cast<int>(i);
            }
        }
        d_out = bestd;
        return best;
    }

    int visible_right(double u, double y, double& x_out) const {
        int best = -1;
        double bestd = -1.0, bestx = 0.0;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            double x;
            if (!layers[i].covers_right(u, y, x)) continue;
            const double d = layers[i].disparity_at(x);
            if (d > bestd) {
                bestd = d;
                best = static_cast<int>(i);
                bestx = x;
            }
        }
        x_out = bestx;
        return best;
    }
};

TextureParams make_texture(TextureFamily family, std::mt19937_64& rng) {
    TextureParams tp;
    tp.family = family;
    tp.seed = rng();
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    tp.base = {0.25 + 0.4 * uni(rng), 0.25 + 0.4 * uni(rng), 0.25 + 0.4 * uni(rng)};
    switch (family) {
        case TextureFamily::dots:
            tp.cell = 3.0 + 2.0 * uni(rng);
            tp.dot_sigma = 0.9 + 0.5 * uni(rng);
            break;
        case TextureFamily::perlin:
            tp.base_freq = 1.0 / (8.0 + 8.0 * uni(rng));
            break;
        case TextureFamily::stripes: {
            const double theta = uni(rng) * 3.14159265358979323846;
            tp.ux = std::cos(theta);
            tp.uy = std::sin(theta);
            tp.wavelength = 6.0 + 8.0 * uni(rng);
            tp.wavelength2 = 8.0 + 8.0 * uni(rng);
            tp.phase = uni(rng) * 6.28318530717958647692;
            tp.phase2 = uni(rng) * 6.28318530717958647692;
            tp.amp = 0.2 + 0.15 * uni(rng);
            tp.amp2 = 0.1 + 0.1 * uni(rng);
            break;
        }
        case TextureFamily::blobs: {
            const int n = 14 + static_cast<int>(uni(rng) * 10);
            for (int i = 0; i < n; ++i) {
                Blob bl;
                bl.cx = (uni(rng) * 2.0 - 0.5) * 120.0;
                bl.cy = (uni(rng) * 2.0 - 0.5) * 120.0;
                const double sx = 3.0 + 8.0 * uni(rng);
                const double sy = 3.0 + 8.0 * uni(rng);
                bl.inv_sx2 = 1.0 / (2.0 * sx * sx);
                bl.inv_sy2 = 1.0 / (2.0 * sy * sy);
                const double rot = uni(rng) * 3.14159265358979323846;
                bl.cosr = std::cos(rot);
                bl.sinr = std::sin(rot);
                bl.color = {uni(rng), uni(rng), uni(rng)};
                tp.blobs.push_back(bl);
            }
            break;
        }
    }
    return tp;
}

Scene make_scene(const SceneSpec& spec, std::mt19937_64& rng) {
    Scene scene;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double W = spec.width, H = spec.height;

    SceneLayer bg;
    bg.background = true;
    bg.d0 = spec.background_disparity_min +
            uni(rng) * (spec.background_disparity_max - spec.background_disparity_min);
    bg.cx = W / 2;
    bg.tex = make_texture(spec.shift.texture_family, rng);
    scene.layers.push_back(bg);

    std::uniform_int_distribution<int> nrect(spec.min_rects, spec.max_rects);
    const int n = nrect(rng);
    for (int i = 0; i < n; ++i) {
        SceneLayer l;
        const double rw = (0.2 + 0.3 * uni(rng)) * W;
        const double rh = (0.2 + 0.35 * uni(rng)) * H;
        const double cx = uni(rng) * W;
        const double cy = uni(rng) * H;
        l.x0 = cx - rw / 2;
        l.x1 = cx + rw / 2;
        l.y0 = cy - rh / 2;
        l.y1 = cy + rh / 2;
        l.cx = cx;
        l.d0 = spec.rect_disparity_min +
               uni(rng) * (spec.rect_disparity_max - spec.rect_disparity_min);
        // Slant bounded so the rectangle stays in front of the background and
        // under the disparity cap across its width.
        double slope = (uni(rng) * 2.0 - 1.0) * spec.max_slant;
        const double room_low = l.d0 - spec.background_disparity_max - 0.5;
        const double room_high = spec.rect_disparity_max - l.d0;
        const double max_dev = std::max(0.0, std::min(room_low, room_high));
        if (std::abs(slope) * rw / 2 > max_dev) slope = (slope < 0 ? -1 : 1) * max_dev / (rw / 2 + 1e-9);
        l.slope = slope;
        l.vx = (uni(rng) * 2.0 - 1.0) * spec.motion;
        l.vy = (uni(rng) * 2.0 - 1.0) * spec.motion * 0.5;
        l.vd = (uni(rng) * 2.0 - 1.0) * spec.motion * 0.12;
        l.anchor_x = l.x0;
        l.anchor_y = l.y0;
        l.tex = make_texture(spec.shift.texture_family, rng);
        scene.layers.push_back(l);
    }
    return scene;
}

void advance_scene(Scene& scene, const SceneSpec& spec) {
    const double W = spec.width, H = spec.height;
    for (auto& l : scene.layers) {
        if (l.background) continue;
        if (l.cx + l.vx < -0.25 * W || l.cx + l.vx > 1.25 * W) l.vx = -l.vx;
        const double cy = (l.y0 + l.y1) / 2;
        if (cy + l.vy < -0.25 * H || cy + l.vy > 1.25 * H) l.vy = -l.vy;
        if (l.d0 + l.vd < spec.rect_disparity_min || l.d0 + l.vd > spec.rect_disparity_max)
            l.vd = -l.vd;
        l.x0 += l.vx;
        l.x1 += l.vx;
        l.cx += l.vx;
        l.y0 += l.vy;
        l.y1 += l.vy;
        l.d0 += l.vd;
        l.anchor_x += l.vx;
        l.anchor_y += l.vy;
    }
}

StereoFrame render_frame(const Scene& scene, const SceneSpec& spec) {
    const int h = spec.height, w = spec.width;
    StereoFrame frame;
    frame.right = TensorF(1, 3, h, w);
    frame.gt_disparity = TensorF(1, 1, h, w);
    frame.valid_mask = TensorF(1, 1, h, w);

    std::vector<int> left_layer(static_cast<std::size_t>(h) * w);
    auto& gt = *frame.gt_disparity;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double d;
            left_layer[static_cast<std::size_t>(y) * w + x] =
                scene.visible_left(static_cast<double>(x), static_cast<double>(y), d);
            gt.at(0, 0, y, x) = static_cast<float>(d);
        }

    for (int y = 0; y < h; ++y)
        for (int u = 0; u < w; ++u) {
            double x;
            const int li = scene.visible_right(static_cast<double>(u), static_cast<double>(y), x);
            const auto& layer = scene.layers[static_cast<std::size_t>(li)];
            Vec3 c = apply_photometric(
                eval_texture(layer.tex, x - layer.anchor_x, y - layer.anchor_y), spec.shift);
            frame.right.at(0, 0, y, u) = static_cast<float>(clamp01(c.r));
            frame.right.at(0, 1, y, u) = static_cast<float>(clamp01(c.g));
            frame.right.at(0, 2, y, u) = static_cast<float>(clamp01(c.b));
        }

    // The left view is the ground-truth warp of the right view, which makes
    // photometric consistency at gt exact under the same warp operator.
    frame.left = warp_horizontal<float>(nullptr, frame.right, gt);

    auto& mask = *frame.valid_mask;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double d = gt.at(0, 0, y, x);
            const double u = x - d;
            bool ok = u >= 0.0 && u <= static_cast<double>(w - 1);
            if (ok) {
                double xr;
                ok = scene.visible_right(u, static_cast<double>(y), xr) ==
                     left_layer[static_cast<std::size_t>(y) * w + x];
            }
            mask.at(0, 0, y, x) = ok ? 1.0f : 0.0f;
        }
    return frame;
}

} // namespace

namespace {

void validate_scene_spec(const SceneSpec& spec) {
    require(spec.height >= 8 && spec.width >= 8, "generate_sequence: resolution too small");
    require(spec.rect_disparity_max < spec.width / 4.0,
            "generate_sequence: max scene disparity " + std::to_string(spec.rect_disparity_max) +
                " must be < width/4 = " + std::to_string(spec.width / 4.0));
    require(spec.background_disparity_min >= 0.0, "generate_sequence: disparity must be >= 0");
    require(spec.min_rects >= 0 && spec.max_rects >= spec.min_rects,
            "generate_sequence: bad rectangle counts");
}

} // namespace

std::vector<StereoFrame> generate_sequence(int length, const SceneSpec& spec, std::uint64_t seed) {
    require(length >= 1, "generate_sequence: length must be >= 1");
    validate_scene_spec(spec);

    std::mt19937_64 rng(seed);
    Scene scene = make_scene(spec, rng);
    std::vector<StereoFrame> out;
    out.reserve(static_cast<std::size_t>(length));
    for (int t = 0; t < length; ++t) {
        if (t > 0) advance_scene(scene, spec);
        out.push_back(render_frame(scene, spec));
    }
    return out;
}

struct SequenceStream::Impl {
    SceneSpec spec;
    std::uint64_t seed = 0;
    Scene scene;
    long t = 0;
};

SequenceStream::SequenceStream(const SceneSpec& spec, std::uint64_t seed)
    : impl_(std::make_unique<Impl>()) {
    validate_scene_spec(spec);
    impl_->spec = spec;
    impl_->seed = seed;
    reset();
}

SequenceStream::~SequenceStream() = default;
SequenceStream::SequenceStream(SequenceStream&&) noexcept = default;
SequenceStream& SequenceStream::operator=(SequenceStream&&) noexcept = default;

StereoFrame SequenceStream::next() {
    if (impl_->t > 0) advance_scene(impl_->scene, impl_->spec);
    impl_->t += 1;
    return render_frame(impl_->scene, impl_->spec);
}

void SequenceStream::reset() {
    std::mt19937_64 rng(impl_->seed);
    impl_->scene = make_scene(impl_->spec, rng);
    impl_->t = 0;
}

StereoFrame apply_domain_shift(const StereoFrame& frame, const DomainShiftSpec& spec,
                               std::uint64_t noise_seed) {
    StereoFrame out;
    out.gt_disparity = frame.gt_disparity;
    out.valid_mask = frame.valid_mask;

    const int h = frame.left.h(), w = frame.left.w();
    TensorF noise;
    if (spec.noise_sigma > 0.0) {
        noise = TensorF(1, 3, h, w);
        std::mt19937_64 rng(noise_seed ^ 0x6d61646e6f697365ull);
        fill_normal(noise, rng, spec.noise_sigma);
    }

    auto transform = [&](const TensorF& img) {
        TensorF res(img.shape());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                Vec3 c{img.at(0, 0, y, x), img.at(0, 1, y, x), img.at(0, 2, y, x)};
                c = apply_photometric(c, spec);
                if (spec.noise_sigma > 0.0) {
                    c.r += noise.at(0, 0, y, x);
                    c.g += noise.at(0, 1, y, x);
                    c.b += noise.at(0, 2, y, x);
                }
                res.at(0, 0, y, x) = static_cast<float>(clamp01(c.r));
                res.at(0, 1, y, x) = static_cast<float>(clamp01(c.g));
                res.at(0, 2, y, x) = static_cast<float>(clamp01(c.b));
            }
        return res;
    };
    out.left = transform(frame.left);
    out.right = transform(frame.right);
    return out;
}

namespace {

void check_metric_shapes(const TensorF& pred, const TensorF& gt, const TensorF* mask) {
    require(pred.shape() == gt.shape(), "metric: pred " + pred.shape().str() + " vs gt " +
                                            gt.shape().str());
    if (mask)
        require(mask->shape() == gt.shape(), "metric: mask " + mask->shape().str() + " vs gt " +
                                                 gt.shape().str());
}

} // namespace

std::optional<double> epe(const TensorF& pred, const TensorF& gt, const TensorF* mask) {
    check_metric_shapes(pred, gt, mask);
    double acc = 0.0;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < gt.numel(); ++i) {
        if (mask && (*mask)[i] < 0.5f) continue;
        acc += std::abs(static_cast<double>(pred[i]) - static_cast<double>(gt[i]));
        ++count;
    }
    if (count == 0) return std::nullopt;
    return acc / static_cast<double>(count);
}

std::optional<double> d1_all(const TensorF& pred, const TensorF& gt, const TensorF* mask,
                             double threshold) {
    check_metric_shapes(pred, gt, mask);
    std::int64_t bad = 0, count = 0;
    for (std::int64_t i = 0; i < gt.numel(); ++i) {
        if (mask && (*mask)[i] < 0.5f) continue;
        if (std::abs(static_cast<double>(pred[i]) - static_cast<double>(gt[i])) > threshold) ++bad;
        ++count;
    }
    if (count == 0) return std::nullopt;
    return 100.0 * static_cast<double>(bad) / static_cast<double>(count);
}

namespace {

TensorF crop_tensor(const TensorF& t, int oy, int ox, int th, int tw) {
    TensorF out(t.n(), t.c(), th, tw);
    for (int s = 0; s < t.n(); ++s)
        for (int c = 0; c < t.c(); ++c)
            for (int y = 0; y < th; ++y)
                std::copy_n(t.data() + t.index(s, c, oy + y, ox), tw,
                            out.data() + out.index(s, c, y, 0));
    return out;
}

} // namespace

StereoFrame central_crop(const StereoFrame& frame, int target_h, int target_w) {
    const int h = frame.left.h(), w = frame.left.w();
    require(target_h >= 1 && target_w >= 1, "central_crop: target must be positive");
    require(target_h <= h && target_w <= w,
            "central_crop: target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                " exceeds frame " + std::to_string(h) + "x" + std::to_string(w));
    const int oy = (h - target_h) / 2;
    const int ox = (w - target_w) / 2;
    StereoFrame out;
    out.left = crop_tensor(frame.left, oy, ox, target_h, target_w);
    out.right = crop_tensor(frame.right, oy, ox, target_h, target_w);
    if (frame.gt_disparity) out.gt_disparity = crop_tensor(*frame.gt_disparity, oy, ox, target_h, target_w);
    if (frame.valid_mask) out.valid_mask = crop_tensor(*frame.valid_mask, oy, ox, target_h, target_w);
    return out;
}

TensorF downsample_disparity(const TensorF& gt, const TensorF* mask, int factor) {
    require(factor >= 1, "downsample_disparity: factor must be >= 1");
    const int oh = gt.h() / factor, ow = gt.w() / factor;
    TensorF out(1, 1, oh, ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            int count = 0;
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx) {
                    const int sy = y * factor + dy, sx = x * factor + dx;
                    if (mask && mask->at(0, 0, sy, sx) < 0.5f) continue;
                    acc += gt.at(0, 0, sy, sx);
                    ++count;
                }
            out.at(0, 0, y, x) = count > 0 ? static_cast<float>(acc / count / factor) : 0.0f;
        }
    return out;
}

TensorF downsample_mask(const TensorF& mask, int factor) {
    const int oh = mask.h() / factor, ow = mask.w() / factor;
    TensorF out(1, 1, oh, ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            bool any = false;
            for (int dy = 0; dy < factor && !any; ++dy)
                for (int dx = 0; dx < factor && !any; ++dx)
                    any = mask.at(0, 0, y * factor + dy, x * factor + dx) >= 0.5f;
            out.at(0, 0, y, x) = any ? 1.0f : 0.0f;
        }
    return out;
}

void write_manifest(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot open " + path + " for writing");
    for (const auto& l : lines) f << l << "\n";
}

std::vector<std::string> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::string SceneSpec::to_json_string() const {
    nlohmann::json j;
    j["height"] = height;
    j["width"] = width;
    j["min_rects"] = min_rects;
    j["max_rects"] = max_rects;
    j["background_disparity_min"] = background_disparity_min;
    j["background_disparity_max"] = background_disparity_max;
    j["rect_disparity_min"] = rect_disparity_min;
    j["rect_disparity_max"] = rect_disparity_max;
    j["max_slant"] = max_slant;
    j["motion"] = motion;
    j["texture"] = to_string(shift.texture_family);
    j["gamma"] = shift.gamma;
    j["brightness_offset"] = shift.brightness_offset;
    j["channel_mix"] = shift.channel_mix;
    j["noise_sigma"] = shift.noise_sigma;
    return j.dump();
}

SceneSpec SceneSpec::from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("scene spec: bad JSON: ") + e.what());
    }
    SceneSpec s;
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.min_rects = j.value("min_rects", s.min_rects);
    s.max_rects = j.value("max_rects", s.max_rects);
    s.background_disparity_min = j.value("background_disparity_min", s.background_disparity_min);
    s.background_disparity_max = j.value("background_disparity_max", s.background_disparity_max);
    s.rect_disparity_min = j.value("rect_disparity_min", s.rect_disparity_min);
    s.rect_disparity_max = j.value("rect_disparity_max", s.rect_disparity_max);
    s.max_slant = j.value("max_slant", s.max_slant);
    s.motion = j.value("motion", s.motion);
    if (j.contains("texture")) s.shift.texture_family = texture_from_string(j["texture"]);
    s.shift.gamma = j.value("gamma", s.shift.gamma);
    s.shift.brightness_offset = j.value("brightness_offset", s.shift.brightness_offset);
    if (j.contains("channel_mix")) s.shift.channel_mix = j["channel_mix"];
    s.shift.noise_sigma = j.value("noise_sigma", s.shift.noise_sigma);
    return s;
}

} // namespace mad
