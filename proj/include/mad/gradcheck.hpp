#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mad/ops.hpp"

namespace mad {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool finite = true;
    std::string worst; // "<target>[i]" of the worst element

    bool passed(double tol) const { return finite && max_rel_err < tol; }
};

// Central-difference gradient check. `fn` builds the computation from the
// registered inputs/parameters: it is called with a tape and tape-attached
// copies of the inputs for the analytic pass, and with a null tape for the
// two numeric evaluations per perturbed element. The objective is the inner
// product of the output with a fixed random projection, so every output
// element contributes to every gradient entry it influences.
template <std::floating_point T = double>
class GradientCheck {
public:
    using Fn = std::function<Tensor4<T>(Tape<T>*, const std::vector<Tensor4<T>>&)>;

    GradientCheck(Fn fn, double epsilon = 1e-5, std::uint64_t seed = 7)
        : fn_(std::move(fn)), eps_(epsilon), seed_(seed) {
        require(epsilon >= 1e-7 && epsilon <= 1e-4, "check_gradients: epsilon must be in [1e-7, 1e-4]");
    }

    void add_input(std::string name, Tensor4<T> value) {
        input_names_.push_back(std::move(name));
        inputs_.push_back(std::move(value));
    }
    void add_param(Parameter<T>* p) { params_.push_back(p); }

    GradCheckReport run() {
        GradCheckReport report;

        // Analytic pass.
        Tape<T> tape;
        std::vector<Tensor4<T>> attached;
        attached.reserve(inputs_.size());
        for (auto& in : inputs_) attached.push_back(make_input(tape, in));
        for (auto* p : params_) p->zero_grad();

        Tensor4<T> out = fn_(&tape, attached);
        std::mt19937_64 rng(seed_);
        Tensor4<T> proj(out.shape());
        fill_uniform(proj, rng, -1.0, 1.0);
        require(out.node >= 0, "check_gradients: op did not record on the tape");
        tape.backward_from(out.node, std::span<const T>(proj.data(),
                                                        static_cast<std::size_t>(proj.numel())),
                           kScopeAll);

        std::vector<std::vector<T>> analytic;
        for (std::size_t i = 0; i < inputs_.size(); ++i) {
            const auto& g = tape.node(attached[i].node).grad;
            analytic.push_back(g.empty()
                                   ? std::vector<T>(static_cast<std::size_t>(inputs_[i].numel()), T(0))
                                   : g);
        }
        for (auto* p : params_) analytic.push_back(p->grad.vec());

        // Numeric pass.
        auto objective = [&]() {
            Tensor4<T> o = fn_(nullptr, inputs_);
            long double acc = 0;
            for (std::int64_t i = 0; i < o.numel(); ++i) acc += static_cast<long double>(o[i]) * proj[i];
            return static_cast<double>(acc);
        };

        std::vector<std::pair<std::string, std::vector<T>*>> targets;
        for (std::size_t i = 0; i < inputs_.size(); ++i)
            targets.emplace_back(input_names_[i], &inputs_[i].vec());
        for (auto* p : params_) targets.emplace_back(p->name, &p->value.vec());

        for (std::size_t t = 0; t < targets.size(); ++t) {
            auto& data = *targets[t].second;
            for (std::size_t i = 0; i < data.size(); ++i) {
                const double a = static_cast<double>(analytic[t][i]);
                if (!std::isfinite(a)) {
                    report.finite = false;
                    report.max_rel_err = std::numeric_limits<double>::infinity();
                    report.worst = targets[t].first + "[" + std::to_string(i) + "]";
                    return report;
                }
                const T saved = data[i];
                data[i] = saved + static_cast<T>(eps_);
                const double jp = objective();
                data[i] = saved - static_cast<T>(eps_);
                const double jm = objective();
                data[i] = saved;
                const double numeric = (jp - jm) / (2.0 * eps_);
                const double rel =
                    std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
                if (rel > report.max_rel_err) {
                    report.max_rel_err = rel;
                    report.worst = targets[t].first + "[" + std::to_string(i) + "]";
                }
            }
        }
        return report;
    }

private:
    Fn fn_;
    double eps_;
    std::uint64_t seed_;
    std::vector<std::string> input_names_;
    std::vector<Tensor4<T>> inputs_;
    std::vector<Parameter<T>*> params_;
};

// Convenience wrapper matching the one-probe use: returns the max relative
// error |a - n| / max(1, |a|, |n|) over all elements of the probe.
template <std::floating_point T = double>
GradCheckReport check_gradients(typename GradientCheck<T>::Fn fn, Tensor4<T> probe,
                                double epsilon = 1e-5) {
    GradientCheck<T> check(std::move(fn), epsilon);
    check.add_input("probe", std::move(probe));
    return check.run();
}

} // namespace mad
