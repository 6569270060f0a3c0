#pragma once

#include <string>

#include "mad/tape.hpp"
#include "mad/tensor.hpp"

namespace mad {

// Trainable tensor plus its gradient accumulator. The gradient is only ever
// touched by backward passes whose scope includes `block`.
template <std::floating_point T>
struct Parameter {
    Tensor4<T> value;
    Tensor4<T> grad;
    Block block = Block::Always;
    std::string name;

    Parameter() = default;
    Parameter(Tensor4<T> v, Block b, std::string n)
        : value(std::move(v)), grad(value.shape(), T(0)), block(b), name(std::move(n)) {}

    void zero_grad() { grad.fill(T(0)); }
};

} // namespace mad
