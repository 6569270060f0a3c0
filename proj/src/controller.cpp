#include "mad/controller.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mad/loss.hpp"

namespace mad {

std::string to_string(AdaptationMode mode) {
    switch (mode) {
        case AdaptationMode::None: return "NONE";
        case AdaptationMode::Full: return "FULL";
        case AdaptationMode::MadFull: return "MAD_FULL";
        case AdaptationMode::MadRand: return "MAD_RAND";
        case AdaptationMode::MadSeq: return "MAD_SEQ";
        case AdaptationMode::LastLayer: return "LAST_LAYER";
        case AdaptationMode::Refinement: return "REFINEMENT";
        case AdaptationMode::D2Refinement: return "D2_REFINEMENT";
    }
    return "NONE";
}

AdaptationMode mode_from_string(const std::string& s) {
    if (s == "NONE") return AdaptationMode::None;
    if (s == "FULL") return AdaptationMode::Full;
    if (s == "MAD_FULL") return AdaptationMode::MadFull;
    if (s == "MAD_RAND") return AdaptationMode::MadRand;
    if (s == "MAD_SEQ") return AdaptationMode::MadSeq;
    if (s == "LAST_LAYER") return AdaptationMode::LastLayer;
    if (s == "REFINEMENT") return AdaptationMode::Refinement;
    if (s == "D2_REFINEMENT") return AdaptationMode::D2Refinement;
    throw std::invalid_argument("unknown adaptation mode: " + s);
}

bool mode_is_mad(AdaptationMode mode) {
    return mode == AdaptationMode::MadFull || mode == AdaptationMode::MadRand ||
           mode == AdaptationMode::MadSeq;
}

std::vector<double> softmax_probs(const AdaptationHistogram& hist) {
    require(!hist.bins.empty(), "softmax: empty histogram");
    const double top = *std::max_element(hist.bins.begin(), hist.bins.end());
    std::vector<double> p(hist.bins.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < hist.bins.size(); ++i) {
        p[i] = std::exp(hist.bins[i] - top);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

int sample_module(const AdaptationHistogram& hist, std::mt19937_64& rng) {
    const auto probs = softmax_probs(hist);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double u = uni(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

void update_histogram(AdaptationHistogram& hist, const ControllerState& state, double loss_t) {
    require(state.frame_index >= 1, "update_histogram: needs at least one previous frame");
    require(state.last_module >= 0 &&
                state.last_module < static_cast<int>(hist.bins.size()),
            "update_histogram: last_module out of range");
    const double loss_expected = 2.0 * state.loss_prev - state.loss_prev2;
    const double gamma = loss_expected - loss_t;
    for (auto& b : hist.bins) b *= 0.99;
    hist.bins[static_cast<std::size_t>(state.last_module)] += 0.01 * gamma;
}

AdaptationController::AdaptationController(Network<float>& net, AdaptationMode mode,
                                           double learning_rate, std::uint64_t seed)
    : net_(net), mode_(mode), adam_(net, learning_rate), hist_(net.module_count()), rng_(seed) {}

StepReport AdaptationController::adapt_step(const StereoFrame& frame) {
    using clock = std::chrono::steady_clock;
    const auto ms = [](clock::time_point a, clock::time_point b) {
        return std::chrono::duration<double, std::milli>(b - a).count();
    };

    StepReport report;
    report.frame_idx = state_.frame_index;
    report.mode = mode_;

    const bool training = mode_ != AdaptationMode::None;
    Tape<float> tape;
    Tape<float>* tp = training ? &tape : nullptr;

    const auto t0 = clock::now();
    auto pyramid = net_.forward(tp, frame.left, frame.right);
    const auto t1 = clock::now();
    report.forward_ms = ms(t0, t1);

    // Metrics are computed before any update; the checksum proves it.
    report.params_checksum_at_metrics = net_.checksum();
    if (frame.gt_disparity) {
        const TensorF* mask = frame.valid_mask ? &*frame.valid_mask : nullptr;
        report.epe_before = epe(pyramid.full, *frame.gt_disparity, mask);
        report.d1_before = d1_all(pyramid.full, *frame.gt_disparity, mask);
    }

    // Full-resolution loss. Only the modes that back-propagate through it
    // record it on the tape; the MAD modes differentiate a module loss instead.
    const bool full_loss_on_tape = mode_ == AdaptationMode::Full ||
                                   mode_ == AdaptationMode::LastLayer ||
                                   mode_ == AdaptationMode::Refinement ||
                                   mode_ == AdaptationMode::D2Refinement;
    auto full_loss =
        reprojection_loss(full_loss_on_tape ? tp : nullptr, frame.left, frame.right, pyramid.full);
    const double loss_t = full_loss.scalar;
    report.loss_full_res = loss_t;
    if (!std::isfinite(loss_t))
        throw NumericalError("adapt_step: non-finite loss at frame " +
                             std::to_string(state_.frame_index));

    const auto t2 = clock::now();
    int selected_bin = -1;
    switch (mode_) {
        case AdaptationMode::None:
            break;
        case AdaptationMode::Full:
            net_.backward_full(tape, full_loss.scalar_node);
            adam_.step_all(net_);
            break;
        case AdaptationMode::LastLayer:
        case AdaptationMode::Refinement:
        case AdaptationMode::D2Refinement: {
            const ScopeMask scope = mode_ == AdaptationMode::LastLayer ? net_.scope_last_layer()
                                    : mode_ == AdaptationMode::Refinement
                                        ? net_.scope_refinement()
                                        : net_.scope_d2_refinement();
            net_.backward_scoped(tape, full_loss.scalar_node, scope);
            adam_.step(net_, scope);
            break;
        }
        case AdaptationMode::MadFull:
        case AdaptationMode::MadRand:
        case AdaptationMode::MadSeq: {
            // Feedback for the previously adapted module comes first, then the
            // new module is drawn.
            if (state_.frame_index >= 1) update_histogram(hist_, state_, loss_t);
            const int p = net_.module_count();
            if (mode_ == AdaptationMode::MadFull) {
                selected_bin = sample_module(hist_, rng_);
            } else if (mode_ == AdaptationMode::MadRand) {
                selected_bin = static_cast<int>(rng_() % static_cast<std::uint64_t>(p));
            } else {
                selected_bin = seq_cursor_;
                seq_cursor_ = (seq_cursor_ + 1) % p;
            }
            const int level = net_.config().lowest_decoder_level + selected_bin;
            report.selected_module = level;
            auto theta_loss =
                module_loss(tp, frame.left, frame.right, pyramid.scaled.at(level), level);
            if (!std::isfinite(theta_loss.scalar))
                throw NumericalError("adapt_step: non-finite module loss at frame " +
                                     std::to_string(state_.frame_index));
            net_.backward_module(tape, theta_loss.scalar_node, level);
            adam_.step(net_, net_.module_scope(level));
            break;
        }
    }
    const auto t3 = clock::now();
    report.adapt_ms = training ? ms(t2, t3) : 0.0;

    // Advance the controller memory.
    if (state_.frame_index == 0) {
        state_.loss_prev = loss_t;
        state_.loss_prev2 = loss_t;
    } else {
        state_.loss_prev2 = state_.loss_prev;
        state_.loss_prev = loss_t;
    }
    if (selected_bin >= 0) state_.last_module = selected_bin;
    state_.frame_index += 1;
    return report;
}

} // namespace mad
