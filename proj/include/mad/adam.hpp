#pragma once

#include <cmath>
#include <vector>

#include "mad/network.hpp"

namespace mad {

// Adaptive moment optimizer over a Network's parameters. Moments are kept in
// double; each parameter tensor has its own step counter because module-wise
// adaptation updates different parts of the network at different rates.
template <std::floating_point T>
class Adam {
public:
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit Adam(Network<T>& net, double learning_rate = 1e-4) : lr(learning_rate) {
        slots_.resize(net.layers().size() * 2);
        auto& layers = net.layers();
        for (std::size_t i = 0; i < layers.size(); ++i) {
            slots_[2 * i].resize(static_cast<std::size_t>(layers[i].w.value.numel()));
            slots_[2 * i + 1].resize(static_cast<std::size_t>(layers[i].b.value.numel()));
        }
    }

    // Applies one step to every parameter whose block is in scope, then resets
    // those gradients to zero. Parameters outside the scope are untouched.
    void step(Network<T>& net, ScopeMask scope) {
        auto& layers = net.layers();
        for (std::size_t i = 0; i < layers.size(); ++i) {
            update(layers[i].w, slots_[2 * i], scope);
            update(layers[i].b, slots_[2 * i + 1], scope);
        }
    }

    void step_all(Network<T>& net) { step(net, kScopeAll); }

private:
    struct Slot {
        std::vector<double> m, v;
        long t = 0;
        void resize(std::size_t n) {
            m.assign(n, 0.0);
            v.assign(n, 0.0);
        }
    };

    void update(Parameter<T>& p, Slot& slot, ScopeMask scope) {
        if (!(scope & block_bit(p.block))) return;
        slot.t += 1;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(slot.t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(slot.t));
        for (std::int64_t i = 0; i < p.value.numel(); ++i) {
            const double g = static_cast<double>(p.grad[i]);
            auto& m = slot.m[static_cast<std::size_t>(i)];
            auto& v = slot.v[static_cast<std::size_t>(i)];
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            p.value[i] -= static_cast<T>(lr * (m / c1) / (std::sqrt(v / c2) + eps));
        }
        p.zero_grad();
    }

    std::vector<Slot> slots_;
};

} // namespace mad
