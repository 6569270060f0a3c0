#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mad/tensor.hpp"

namespace mad {

// Rectified stereo pair with optional dense ground truth. Images are
// (1, 3, h, w) in [0,1]; disparity is (1, 1, h, w) in pixels; the mask is 1
// where the left pixel is co-visible in the right view.
struct StereoFrame {
    TensorF left, right;
    std::optional<TensorF> gt_disparity;
    std::optional<TensorF> valid_mask;
};

enum class TextureFamily { dots, perlin, stripes, blobs };

std::string to_string(TextureFamily f);
TextureFamily texture_from_string(const std::string& s);

// Photometric + texture recipe for a deployment domain. gamma/brightness/mix
// apply identically to both views; noise_sigma only applies in
// apply_domain_shift (the generator renders noise-free).
struct DomainShiftSpec {
    double gamma = 1.0;
    double brightness_offset = 0.0;
    std::array<double, 9> channel_mix = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    double noise_sigma = 0.0;
    TextureFamily texture_family = TextureFamily::dots;
};

// Synthetic scene recipe: a background plane plus a handful of fronto-parallel
// or gently slanted rectangles, textured per family, drifting a few pixels per
// frame. The right view is rendered procedurally with correct occlusion
// ordering; the left view is the bilinear warp of the right view by the ground
// truth, so the photometric consistency of every frame is exact by
// construction.
struct SceneSpec {
    int height = 96;
    int width = 160;
    int min_rects = 2;
    int max_rects = 6;
    double background_disparity_min = 0.5;
    double background_disparity_max = 3.0;
    double rect_disparity_min = 4.0;
    double rect_disparity_max = 20.0;
    double max_slant = 0.03;  // disparity slope per pixel
    double motion = 1.0;      // layer drift in px/frame
    DomainShiftSpec shift;

    std::string to_json_string() const;
    static SceneSpec from_json_string(const std::string& text);
};

std::vector<StereoFrame> generate_sequence(int length, const SceneSpec& spec, std::uint64_t seed);

// Streaming variant of generate_sequence: frame t of SequenceStream(spec, seed)
// equals generate_sequence(t+1, spec, seed).back(). Keeps one frame in memory.
class SequenceStream {
public:
    SequenceStream(const SceneSpec& spec, std::uint64_t seed);
    ~SequenceStream();
    SequenceStream(SequenceStream&&) noexcept;
    SequenceStream& operator=(SequenceStream&&) noexcept;

    StereoFrame next();
    void reset(); // restart from frame 0 with the same seed

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Pointwise photometric transform of an existing frame (mix, brightness,
// gamma, then shared noise), applied identically to both views. Ground truth
// and mask pass through untouched.
StereoFrame apply_domain_shift(const StereoFrame& frame, const DomainShiftSpec& spec,
                               std::uint64_t noise_seed = 0);

// Mean absolute disparity error over valid pixels; nullopt when no pixel is valid.
std::optional<double> epe(const TensorF& pred, const TensorF& gt, const TensorF* mask);

// Percentage of valid pixels with |pred - gt| strictly greater than threshold.
std::optional<double> d1_all(const TensorF& pred, const TensorF& gt, const TensorF* mask,
                             double threshold = 3.0);

StereoFrame central_crop(const StereoFrame& frame, int target_h, int target_w);

// Average-pool ground truth to a pyramid level: disparity values divide by the
// factor; a coarse pixel is valid if any covered fine pixel is.
TensorF downsample_disparity(const TensorF& gt, const TensorF* mask, int factor);
TensorF downsample_mask(const TensorF& mask, int factor);

// Writes frame paths (and optional gt) as a sequence manifest; one frame per line.
void write_manifest(const std::string& path, const std::vector<std::string>& lines);
std::vector<std::string> read_manifest(const std::string& path);

} // namespace mad
