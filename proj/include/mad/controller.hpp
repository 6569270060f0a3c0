#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mad/adam.hpp"
#include "mad/data.hpp"
#include "mad/network.hpp"

namespace mad {

enum class AdaptationMode {
    None,
    Full,
    MadFull,
    MadRand,
    MadSeq,
    LastLayer,
    Refinement,
    D2Refinement,
};

std::string to_string(AdaptationMode mode);
AdaptationMode mode_from_string(const std::string& s);
bool mode_is_mad(AdaptationMode mode);

// p-bin score histogram driving module sampling; bin i maps to module
// (lowest_decoder_level + i).
struct AdaptationHistogram {
    std::vector<double> bins;
    explicit AdaptationHistogram(int p = 0) : bins(static_cast<std::size_t>(p), 0.0) {}
};

// Memory of the two previous full-resolution losses and the previously
// adapted module.
struct ControllerState {
    double loss_prev = 0.0;
    double loss_prev2 = 0.0;
    int last_module = -1; // bin index
    long frame_index = 0;
};

// softmax(bins) with max subtraction.
std::vector<double> softmax_probs(const AdaptationHistogram& hist);

// Samples a bin index with probability softmax(bins).
int sample_module(const AdaptationHistogram& hist, std::mt19937_64& rng);

// bins *= 0.99; bins[last] += 0.01 * ((2 * loss_prev - loss_prev2) - loss_t).
void update_histogram(AdaptationHistogram& hist, const ControllerState& state, double loss_t);

struct StepReport {
    long frame_idx = 0;
    AdaptationMode mode = AdaptationMode::None;
    std::optional<double> epe_before;
    std::optional<double> d1_before;
    double loss_full_res = 0.0;
    std::optional<int> selected_module; // decoder level; empty for non-MAD modes
    double forward_ms = 0.0;
    double adapt_ms = 0.0;
    std::uint64_t params_checksum_at_metrics = 0;
};

inline std::pair<double, double> step_timing(const StepReport& r) {
    return {r.forward_ms, r.adapt_ms};
}

// Per-frame measure -> select -> update cycle. Owns the optimizer state, the
// histogram, the controller memory and the sampling RNG; the network is
// borrowed for the lifetime of a run.
class AdaptationController {
public:
    AdaptationController(Network<float>& net, AdaptationMode mode, double learning_rate,
                         std::uint64_t seed);

    StepReport adapt_step(const StereoFrame& frame);

    const AdaptationHistogram& histogram() const { return hist_; }
    const ControllerState& state() const { return state_; }
    Network<float>& network() { return net_; }

private:
    Network<float>& net_;
    AdaptationMode mode_;
    Adam<float> adam_;
    AdaptationHistogram hist_;
    ControllerState state_;
    std::mt19937_64 rng_;
    int seq_cursor_ = 0;
};

} // namespace mad
