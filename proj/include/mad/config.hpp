#pragma once

#include <string>
#include <vector>

namespace mad {

// MADNet topology description. The canonical values follow the published
// architecture; desk() is a small configuration for CPU-scale experiments.
struct NetworkConfig {
    int levels = 6;
    int input_channels = 3;
    std::vector<int> feature_channels = {16, 32, 64, 96, 128, 192};
    std::vector<int> decoder_channels = {128, 128, 96, 64, 1};
    std::vector<int> refinement_channels = {128, 128, 128, 96, 64, 32, 1};
    std::vector<int> refinement_dilations = {1, 2, 4, 8, 16, 1, 1};
    int correlation_radius = 2;
    double leaky_slope = 0.2;
    int lowest_decoder_level = 2;

    void validate() const;

    // Input dims must be divisible by this. Levels above the deepest one chain
    // by exact factors of two; the deepest feature map may be odd-sized and is
    // reached through an exact-size resize.
    int spatial_divisor() const;

    int module_count() const { return levels - lowest_decoder_level + 1; }

    static NetworkConfig desk();

    std::string to_json_string() const;
    static NetworkConfig from_json_string(const std::string& text);
};

} // namespace mad
