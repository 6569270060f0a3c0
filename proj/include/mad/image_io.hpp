#pragma once

#include <string>
#include <utility>

#include "mad/tensor.hpp"

namespace mad {

// PFM: "Pf"/"PF" header, width/height line, scale line whose sign encodes
// endianness, rows bottom to top, 32-bit floats.
void write_pfm(const std::string& path, const TensorF& img);
TensorF read_pfm(const std::string& path);

// 16-bit single-channel PNG, value = round(disparity * 256), 0 reserved for
// invalid pixels. Disparities >= 256 do not fit and are rejected.
void write_disparity_png16(const std::string& path, const TensorF& disp,
                           const TensorF* valid = nullptr);
std::pair<TensorF, TensorF> read_disparity_png16(const std::string& path); // (disparity, mask)

// 8-bit RGB PNG from a (1, 3, h, w) tensor in [0,1].
void write_rgb_png8(const std::string& path, const TensorF& rgb);

// Maps disparity to a color ramp for visualization; max_disparity <= 0 uses
// the map's own maximum.
TensorF colormap_disparity(const TensorF& disp, double max_disparity = 0.0);

} // namespace mad
