#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mad/tensor.hpp"

namespace mad {

// Back-prop scoping unit. Each conv layer and each glue op (warp, correlation,
// concat, resize) is tagged with the block it belongs to; a backward pass runs
// only the nodes whose block is in scope. `Always` marks nodes on the loss path
// and output glue that every backward must traverse.
enum class Block : int {
    F1 = 0, F2, F3, F4, F5, F6,
    D2, D3, D4, D5, D6,
    Refine,
    RefineLast,
    Always,
    Count,
};

inline Block feature_block(int level) { return static_cast<Block>(static_cast<int>(Block::F1) + level - 1); }
inline Block decoder_block(int level) { return static_cast<Block>(static_cast<int>(Block::D2) + level - 2); }

using ScopeMask = std::uint32_t;

constexpr ScopeMask kScopeAll = 0xffffffffu;

inline ScopeMask block_bit(Block b) { return 1u << static_cast<int>(b); }

inline bool scope_allows(ScopeMask scope, Block b) {
    return b == Block::Always || (scope & block_bit(b)) != 0;
}

// Gradient tape. Forward ops append nodes; a backward pass sweeps the nodes in
// reverse, invoking each node's backward only if an upstream gradient reached
// its output and its block is in scope. Node gradients are freed as soon as
// they have been consumed, so peak memory stays bounded per step.
template <std::floating_point T>
class Tape {
public:
    struct Node {
        Block block = Block::Always;
        Shape4 shape;
        std::vector<T> grad;
        // Propagates `grad` into input nodes / parameter grads. Null for leaves.
        std::function<void(Tape&, const std::vector<T>&)> backward;
    };

    int make_leaf(const Shape4& shape) {
        nodes_.push_back(Node{Block::Always, shape, {}, nullptr});
        return static_cast<int>(nodes_.size()) - 1;
    }

    int emit(Block block, const Shape4& shape,
             std::function<void(Tape&, const std::vector<T>&)> backward) {
        nodes_.push_back(Node{block, shape, {}, std::move(backward)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Accumulates `values` into the gradient buffer of `node`. No-op for node < 0.
    void accumulate(int node, const T* values, std::int64_t count) {
        if (node < 0) return;
        auto& g = nodes_[static_cast<std::size_t>(node)].grad;
        if (g.empty()) g.assign(static_cast<std::size_t>(count), T(0));
        for (std::int64_t i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] += values[i];
    }

    std::vector<T>& grad_buffer(int node) {
        auto& nd = nodes_[static_cast<std::size_t>(node)];
        if (nd.grad.empty()) nd.grad.assign(static_cast<std::size_t>(nd.shape.numel()), T(0));
        return nd.grad;
    }

    const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    // Reverse sweep from `root`, seeding its output gradient with `seed`.
    void backward_from(int root, std::span<const T> seed, ScopeMask scope) {
        if (root < 0 || static_cast<std::size_t>(root) >= nodes_.size())
            throw std::invalid_argument("Tape::backward_from: invalid root node");
        auto& rg = grad_buffer(root);
        if (seed.size() != rg.size())
            throw std::invalid_argument("Tape::backward_from: seed size mismatch");
        for (std::size_t i = 0; i < rg.size(); ++i) rg[i] += seed[i];

        for (int i = root; i >= 0; --i) {
            Node& nd = nodes_[static_cast<std::size_t>(i)];
            if (nd.grad.empty()) continue;
            if (nd.backward && scope_allows(scope, nd.block)) nd.backward(*this, nd.grad);
            if (nd.backward) {
                nd.grad.clear();
                nd.grad.shrink_to_fit();
            }
        }
    }

    // Scalar convenience: root must be a 1-element tensor.
    void backward_scalar(int root, ScopeMask scope) {
        const T one = T(1);
        backward_from(root, std::span<const T>(&one, 1), scope);
    }

    void clear() { nodes_.clear(); }

private:
    std::vector<Node> nodes_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

} // namespace mad
