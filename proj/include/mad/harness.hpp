#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mad/checkpoint.hpp"
#include "mad/controller.hpp"

namespace mad {

// A run is a pure function of this config plus a checkpoint.
struct RunConfig {
    NetworkConfig network = NetworkConfig::desk();
    AdaptationMode mode = AdaptationMode::None;
    SceneSpec scene;
    std::string sequence_manifest; // when set, frames come from files instead of the generator
    std::uint64_t seed = 1;
    std::uint64_t controller_seed = 0; // 0 = derive from seed
    double learning_rate = 1e-4;
    std::string out_dir;
    int crop_h = 0, crop_w = 0; // 0 = no crop
    int repeats = 1;            // loop the sequence this many times
    int frames = 1000;
    // pretraining
    int iterations = 3000;
    int eval_every = 250;
    int holdout_frames = 8;

    std::string to_json_string() const;
    static RunConfig from_json_string(const std::string& text);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;
};

struct RunSummary {
    int frames = 0;
    std::optional<double> mean_epe;
    std::optional<double> mean_d1;
    double median_fps = 0.0;
    std::vector<std::pair<long, double>> d1_curve; // (frame, trailing-window mean D1)

    std::string to_json_string() const;
};

// Runs the adaptation loop over the configured sequence, mutating `net`.
// Writes one CSV row per frame to csv_path when non-empty (append-only, flushed
// per frame) and optionally collects the reports.
RunSummary run_adaptation(Network<float>& net, const RunConfig& cfg,
                          std::vector<StepReport>* reports_out = nullptr,
                          const std::string& csv_path = "");

// Supervised multi-scale pretraining on generated frames with ground truth.
// Appends "iteration,loss,holdout_epe" rows to curve_csv_path when non-empty.
Network<float> pretrain(const RunConfig& cfg, const std::string& curve_csv_path = "");

// Holdout evaluation: mean EPE / D1 of the network over `n` generated frames.
std::pair<double, double> evaluate_network(Network<float>& net, const SceneSpec& scene,
                                           std::uint64_t seed, int n);

std::string reports_csv_header();
std::string report_csv_row(const StepReport& r);
void write_reports_csv(const std::string& path, const std::vector<StepReport>& reports);
std::vector<StepReport> read_reports_csv(const std::string& path);

struct ModeSummary {
    AdaptationMode mode = AdaptationMode::None;
    int runs = 0;
    double d1_mean = 0, d1_std = 0;
    double epe_mean = 0, epe_std = 0;
    double fps_median = 0;
};

// Runs every mode over the same checkpoint and sequence; stochastic MAD modes
// run `mad_seeds` times. Per-run CSVs land in out_dir when non-empty.
std::vector<ModeSummary> compare_modes(const Network<float>& checkpoint, const RunConfig& base,
                                       const std::vector<AdaptationMode>& modes, int mad_seeds,
                                       const std::string& out_dir = "");

void write_compare_csv(const std::string& path, const std::vector<ModeSummary>& rows);

// Shortest round-trip decimal form (CSV cells re-parse to the same double).
std::string format_double(double v);

StereoFrame load_manifest_frame(const std::string& line);

} // namespace mad
