#include "mad/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace mad {

namespace {
constexpr unsigned char kVersion = 1;
}

void save_checkpoint(const Network<float>& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");

    nlohmann::json header;
    header["magic"] = "madnet-checkpoint";
    header["config"] = nlohmann::json::parse(net.config().to_json_string());
    header["param_count"] = net.count_parameters();
    const std::string htext = header.dump();

    f.put(static_cast<char>(kVersion));
    const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
    unsigned char lenb[4] = {static_cast<unsigned char>(hlen & 0xff),
                             static_cast<unsigned char>((hlen >> 8) & 0xff),
                             static_cast<unsigned char>((hlen >> 16) & 0xff),
                             static_cast<unsigned char>((hlen >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(lenb), 4);
    f.write(htext.data(), static_cast<std::streamsize>(htext.size()));

    for (const auto& layer : net.layers()) {
        for (const Tensor4<float>* t : {&layer.w.value, &layer.b.value}) {
            f.write(reinterpret_cast<const char*>(t->data()),
                    static_cast<std::streamsize>(t->numel() * sizeof(float)));
        }
    }
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Network<float> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);

    const int version = f.get();
    if (version != kVersion)
        throw std::invalid_argument("checkpoint: unsupported version " + std::to_string(version) +
                                    " in " + path);
    unsigned char lenb[4];
    f.read(reinterpret_cast<char*>(lenb), 4);
    if (!f) throw std::invalid_argument("checkpoint: truncated header in " + path);
    const std::uint32_t hlen = static_cast<std::uint32_t>(lenb[0]) |
                               (static_cast<std::uint32_t>(lenb[1]) << 8) |
                               (static_cast<std::uint32_t>(lenb[2]) << 16) |
                               (static_cast<std::uint32_t>(lenb[3]) << 24);
    std::string htext(hlen, '\0');
    f.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw std::invalid_argument("checkpoint: truncated header in " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("checkpoint: bad header JSON: ") + e.what());
    }
    if (header.value("magic", "") != std::string("madnet-checkpoint"))
        throw std::invalid_argument("checkpoint: bad magic in " + path);

    NetworkConfig cfg = NetworkConfig::from_json_string(header.at("config").dump());
    Network<float> net = Network<float>::build(cfg, 0);
    const std::int64_t expected = header.value("param_count", std::int64_t(-1));
    if (expected != net.count_parameters())
        throw std::invalid_argument("checkpoint: parameter count mismatch: header says " +
                                    std::to_string(expected) + ", config builds " +
                                    std::to_string(net.count_parameters()));

    for (auto& layer : net.layers()) {
        for (Tensor4<float>* t : {&layer.w.value, &layer.b.value}) {
            f.read(reinterpret_cast<char*>(t->data()),
                   static_cast<std::streamsize>(t->numel() * sizeof(float)));
        }
    }
    if (!f) throw std::invalid_argument("checkpoint: truncated parameter data in " + path);
    return net;
}

} // namespace mad
