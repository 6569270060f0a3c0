#include "mad/config.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "mad/tensor.hpp"

namespace mad {

void NetworkConfig::validate() const {
    require(levels >= 2 && levels <= 6, "config: levels must be in [2, 6]");
    require(input_channels >= 1, "config: input_channels must be positive");
    require(static_cast<int>(feature_channels.size()) == levels,
            "config: feature_channels length " + std::to_string(feature_channels.size()) +
                " must equal levels " + std::to_string(levels));
    require(!decoder_channels.empty() && decoder_channels.back() == 1,
            "config: last decoder channel must be 1");
    require(!refinement_channels.empty() && refinement_channels.back() == 1,
            "config: last refinement channel must be 1");
    require(refinement_dilations.size() == refinement_channels.size(),
            "config: refinement_dilations length must equal refinement_channels length");
    for (int c : feature_channels) require(c >= 1, "config: feature channel must be positive");
    for (int c : decoder_channels) require(c >= 1, "config: decoder channel must be positive");
    for (int c : refinement_channels) require(c >= 1, "config: refinement channel must be positive");
    for (int d : refinement_dilations) require(d >= 1, "config: dilation must be positive");
    require(correlation_radius >= 1, "config: correlation_radius must be >= 1");
    require(leaky_slope > 0.0 && leaky_slope < 1.0, "config: leaky_slope must be in (0, 1)");
    require(lowest_decoder_level >= 2 && lowest_decoder_level <= levels,
            "config: lowest_decoder_level must be in [2, levels]");
}

int NetworkConfig::spatial_divisor() const {
    return std::max(1 << (levels - 1), 1 << lowest_decoder_level);
}

NetworkConfig NetworkConfig::desk() {
    NetworkConfig cfg;
    cfg.feature_channels = {4, 8, 16, 24, 32, 48};
    cfg.decoder_channels = {32, 32, 24, 16, 1};
    cfg.refinement_channels = {32, 32, 32, 24, 16, 8, 1};
    cfg.refinement_dilations = {1, 2, 4, 8, 16, 1, 1};
    return cfg;
}

std::string NetworkConfig::to_json_string() const {
    nlohmann::json j;
    j["levels"] = levels;
    j["input_channels"] = input_channels;
    j["feature_channels"] = feature_channels;
    j["decoder_channels"] = decoder_channels;
    j["refinement_channels"] = refinement_channels;
    j["refinement_dilations"] = refinement_dilations;
    j["correlation_radius"] = correlation_radius;
    j["leaky_slope"] = leaky_slope;
    j["lowest_decoder_level"] = lowest_decoder_level;
    return j.dump();
}

NetworkConfig NetworkConfig::from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: bad JSON: ") + e.what());
    }
    NetworkConfig cfg;
    cfg.levels = j.value("levels", cfg.levels);
    cfg.input_channels = j.value("input_channels", cfg.input_channels);
    cfg.feature_channels = j.value("feature_channels", cfg.feature_channels);
    cfg.decoder_channels = j.value("decoder_channels", cfg.decoder_channels);
    cfg.refinement_channels = j.value("refinement_channels", cfg.refinement_channels);
    cfg.refinement_dilations = j.value("refinement_dilations", cfg.refinement_dilations);
    cfg.correlation_radius = j.value("correlation_radius", cfg.correlation_radius);
    cfg.leaky_slope = j.value("leaky_slope", cfg.leaky_slope);
    cfg.lowest_decoder_level = j.value("lowest_decoder_level", cfg.lowest_decoder_level);
    cfg.validate();
    return cfg;
}

} // namespace mad
