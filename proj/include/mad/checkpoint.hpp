#pragma once

#include <string>

#include "mad/network.hpp"

namespace mad {

// Single-file binary container: version byte, uint32 little-endian header
// length, JSON header (network config + parameter count), then every
// parameter tensor in declaration order as 32-bit little-endian floats.
void save_checkpoint(const Network<float>& net, const std::string& path);
Network<float> load_checkpoint(const std::string& path);

} // namespace mad
