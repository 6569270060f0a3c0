#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "mad/config.hpp"
#include "mad/ops.hpp"

namespace mad {

// Disparity modules are addressed by decoder level: module k owns (F_k, D_k);
// the module at the lowest decoder level additionally owns the feature blocks
// below it and the refinement stack.
using ModuleId = int;

template <std::floating_point T>
struct DisparityPyramid {
    // level -> one-channel disparity in that level's own pixel units; the entry
    // at the lowest decoder level is the refined one.
    std::map<int, Tensor4<T>> scaled;
    Tensor4<T> full; // full resolution, full-resolution pixel units
};

template <std::floating_point T>
struct ConvLayer {
    Parameter<T> w, b;
    int stride = 1, dilation = 1, padding = 1;
    bool linear = false; // no activation after this conv
};

template <std::floating_point T>
class Network {
public:
    static Network build(NetworkConfig cfg, std::uint64_t seed) {
        cfg.validate();
        Network net;
        net.cfg_ = cfg;
        std::mt19937_64 rng(seed);

        auto add_conv = [&](int c_in, int c_out, int stride, int dilation, Block block,
                            const std::string& name, bool linear) {
            ConvLayer<T> layer;
            Tensor4<T> w(c_out, c_in, 3, 3);
            const double stddev = std::sqrt(2.0 / (static_cast<double>(c_in) * 9.0));
            fill_normal(w, rng, stddev);
            layer.w = Parameter<T>(std::move(w), block, name + ".w");
            layer.b = Parameter<T>(Tensor4<T>(c_out, 1, 1, 1, T(0)), block, name + ".b");
            layer.stride = stride;
            layer.dilation = dilation;
            layer.padding = dilation; // 3x3 kernels keep size at stride 1
            layer.linear = linear;
            net.layers_.push_back(std::move(layer));
            return static_cast<int>(net.layers_.size()) - 1;
        };

        // Feature towers F1..F6: stride-2 conv then stride-1 conv per level.
        int c_prev = cfg.input_channels;
        for (int level = 1; level <= cfg.levels; ++level) {
            const int c = cfg.feature_channels[static_cast<std::size_t>(level - 1)];
            const Block blk = feature_block(level);
            const std::string base = "f" + std::to_string(level);
            net.tower_.push_back({add_conv(c_prev, c, 2, 1, blk, base + "a", false),
                                  add_conv(c, c, 1, 1, blk, base + "b", false)});
            c_prev = c;
        }

        // Decoders D_levels .. D_lowest.
        const int corr_ch = 2 * cfg.correlation_radius + 1;
        for (int level = cfg.levels; level >= cfg.lowest_decoder_level; --level) {
            const int feat_ch = cfg.feature_channels[static_cast<std::size_t>(level - 1)];
            int c_in = corr_ch + feat_ch + (level == cfg.levels ? 0 : 1);
            std::vector<int> ids;
            const Block blk = decoder_block(level);
            for (std::size_t i = 0; i < cfg.decoder_channels.size(); ++i) {
                const int c_out = cfg.decoder_channels[i];
                const bool last = i + 1 == cfg.decoder_channels.size();
                ids.push_back(add_conv(c_in, c_out, 1, 1, blk,
                                       "d" + std::to_string(level) + "_" + std::to_string(i), last));
                c_in = c_out;
            }
            net.decoders_[level] = ids;
        }

        // Refinement: dilated convs over decoder features + left features.
        {
            const std::size_t n_dec = cfg.decoder_channels.size();
            const int penult_ch = n_dec >= 2 ? cfg.decoder_channels[n_dec - 2] : corr_ch;
            int c_in = penult_ch +
                       cfg.feature_channels[static_cast<std::size_t>(cfg.lowest_decoder_level - 1)];
            for (std::size_t i = 0; i < cfg.refinement_channels.size(); ++i) {
                const bool last = i + 1 == cfg.refinement_channels.size();
                net.refinement_.push_back(add_conv(
                    c_in, cfg.refinement_channels[i], 1, cfg.refinement_dilations[i],
                    last ? Block::RefineLast : Block::Refine, "r" + std::to_string(i), last));
                c_in = cfg.refinement_channels[i];
            }
        }
        return net;
    }

    const NetworkConfig& config() const { return cfg_; }

    std::vector<ConvLayer<T>>& layers() { return layers_; }
    const std::vector<ConvLayer<T>>& layers() const { return layers_; }

    std::int64_t count_parameters() const {
        std::int64_t total = 0;
        for (const auto& l : layers_) total += l.w.value.numel() + l.b.value.numel();
        return total;
    }

    // --- module partition -------------------------------------------------

    std::vector<ModuleId> module_ids() const {
        std::vector<ModuleId> ids;
        for (int k = cfg_.lowest_decoder_level; k <= cfg_.levels; ++k) ids.push_back(k);
        return ids;
    }
    int module_count() const { return cfg_.module_count(); }

    ScopeMask module_scope(ModuleId module) const {
        require(module >= cfg_.lowest_decoder_level && module <= cfg_.levels,
                "unknown module id " + std::to_string(module));
        ScopeMask m = block_bit(feature_block(module)) | block_bit(decoder_block(module));
        if (module == cfg_.lowest_decoder_level) {
            for (int level = 1; level < module; ++level) m |= block_bit(feature_block(level));
            m |= block_bit(Block::Refine) | block_bit(Block::RefineLast);
        }
        return m;
    }

    ScopeMask scope_last_layer() const { return block_bit(Block::RefineLast); }
    ScopeMask scope_refinement() const {
        return block_bit(Block::Refine) | block_bit(Block::RefineLast);
    }
    ScopeMask scope_d2_refinement() const {
        return scope_refinement() | block_bit(decoder_block(cfg_.lowest_decoder_level));
    }

    // --- forward ------------------------------------------------------------

    DisparityPyramid<T> forward(Tape<T>* tape, const Tensor4<T>& left, const Tensor4<T>& right) {
        check_input(left);
        check_input(right);
        require(left.shape() == right.shape(), "forward: left " + left.shape().str() +
                                                   " vs right " + right.shape().str());

        const auto fl = run_tower(tape, left);
        const auto fr = run_tower(tape, right);

        DisparityPyramid<T> out;
        Tensor4<T> prev_disp; // disparity at level k+1
        Tensor4<T> penult;    // decoder features at the lowest level
        for (int level = cfg_.levels; level >= cfg_.lowest_decoder_level; --level) {
            const auto& lf = fl[static_cast<std::size_t>(level - 1)];
            const auto& rf = fr[static_cast<std::size_t>(level - 1)];
            std::vector<Tensor4<T>> dec_in;
            if (level == cfg_.levels) {
                dec_in = {correlation1d(tape, lf, rf, cfg_.correlation_radius), lf};
            } else {
                // Upsample the coarser disparity to this level; values double.
                Tensor4<T> up = bilinear_resize(tape, prev_disp, lf.h(), lf.w(),
                                                decoder_block(level + 1));
                up = scalar_affine(tape, up, 2.0, 0.0, decoder_block(level + 1));
                Tensor4<T> warped = warp_horizontal(tape, rf, up);
                dec_in = {correlation1d(tape, lf, warped, cfg_.correlation_radius), lf, up};
            }
            Tensor4<T> x = concat_channels(tape, dec_in, decoder_block(level));
            Tensor4<T> feat;
            const auto& ids = decoders_.at(level);
            for (std::size_t i = 0; i < ids.size(); ++i) {
                x = apply_conv(tape, x, layers_[static_cast<std::size_t>(ids[i])]);
                if (i + 2 == ids.size()) feat = x;
            }
            prev_disp = x;
            out.scaled[level] = x;
            if (level == cfg_.lowest_decoder_level) penult = feat;
        }

        // Refinement residual on the lowest decoder level.
        {
            const auto& lf = fl[static_cast<std::size_t>(cfg_.lowest_decoder_level - 1)];
            Tensor4<T> x = concat_channels(tape, {penult, lf}, Block::Refine);
            for (int id : refinement_) x = apply_conv(tape, x, layers_[static_cast<std::size_t>(id)]);
            Tensor4<T> refined = add(tape, out.scaled[cfg_.lowest_decoder_level], x);
            out.scaled[cfg_.lowest_decoder_level] = refined;
            Tensor4<T> up = bilinear_resize(tape, refined, left.h(), left.w());
            out.full = scalar_affine(tape, up, static_cast<double>(1 << cfg_.lowest_decoder_level),
                                     0.0);
        }
        return out;
    }

    // --- backward -----------------------------------------------------------

    void backward_module(Tape<T>& tape, const Tensor4<T>& loss, ModuleId module) {
        tape.backward_scalar(loss.node, module_scope(module));
    }

    void backward_full(Tape<T>& tape, const Tensor4<T>& loss) {
        tape.backward_scalar(loss.node, kScopeAll);
    }

    void backward_scoped(Tape<T>& tape, const Tensor4<T>& loss, ScopeMask scope) {
        tape.backward_scalar(loss.node, scope);
    }

    void zero_grads() {
        for (auto& l : layers_) {
            l.w.zero_grad();
            l.b.zero_grad();
        }
    }

    // FNV-1a over the bit patterns of all parameter values, declaration order.
    std::uint64_t checksum() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&](const Tensor4<T>& t) {
            const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
            const std::size_t n = static_cast<std::size_t>(t.numel()) * sizeof(T);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= bytes[i];
                h *= 1099511628211ull;
            }
        };
        for (const auto& l : layers_) {
            mix(l.w.value);
            mix(l.b.value);
        }
        return h;
    }

    Network clone() const {
        Network net;
        net.cfg_ = cfg_;
        net.tower_ = tower_;
        net.decoders_ = decoders_;
        net.refinement_ = refinement_;
        net.layers_.reserve(layers_.size());
        for (const auto& l : layers_) {
            ConvLayer<T> c;
            c.w = Parameter<T>(l.w.value.deep_copy(), l.w.block, l.w.name);
            c.b = Parameter<T>(l.b.value.deep_copy(), l.b.block, l.b.name);
            c.stride = l.stride;
            c.dilation = l.dilation;
            c.padding = l.padding;
            c.linear = l.linear;
            net.layers_.push_back(std::move(c));
        }
        return net;
    }

    template <std::floating_point U>
    Network<U> cast() const {
        Network<U> net = Network<U>::build(cfg_, 0);
        auto& dst = net.layers();
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            dst[i].w.value = layers_[i].w.value.template cast<U>();
            dst[i].b.value = layers_[i].b.value.template cast<U>();
        }
        return net;
    }

private:
    Tensor4<T> apply_conv(Tape<T>* tape, const Tensor4<T>& x, ConvLayer<T>& layer) {
        Tensor4<T> y = conv2d(tape, x, layer.w, layer.b, layer.stride, layer.dilation,
                              layer.padding);
        if (layer.linear) return y;
        return leaky_relu(tape, y, cfg_.leaky_slope, layer.w.block);
    }

    std::vector<Tensor4<T>> run_tower(Tape<T>* tape, const Tensor4<T>& img) {
        std::vector<Tensor4<T>> feats;
        Tensor4<T> x = img;
        for (const auto& [a, b] : tower_) {
            x = apply_conv(tape, x, layers_[static_cast<std::size_t>(a)]);
            x = apply_conv(tape, x, layers_[static_cast<std::size_t>(b)]);
            feats.push_back(x);
        }
        return feats;
    }

    void check_input(const Tensor4<T>& img) const {
        require(!img.empty(), "forward: empty input");
        require(img.c() == cfg_.input_channels,
                "forward: expected " + std::to_string(cfg_.input_channels) + " channels, got " +
                    std::to_string(img.c()));
        const int div = cfg_.spatial_divisor();
        require(img.h() % div == 0 && img.w() % div == 0,
                "forward: input " + img.shape().str() + " not divisible by " + std::to_string(div));
    }

    NetworkConfig cfg_;
    std::vector<ConvLayer<T>> layers_;
    std::vector<std::pair<int, int>> tower_;  // (stride-2 conv, stride-1 conv) per level
    std::map<int, std::vector<int>> decoders_; // level -> layer indices
    std::vector<int> refinement_;

    template <std::floating_point U>
    friend class Network;
};

using NetworkF = Network<float>;
using NetworkD = Network<double>;

} // namespace mad
