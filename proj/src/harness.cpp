#include "mad/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mad/image_io.hpp"
#include "mad/loss.hpp"

namespace mad {

std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc())
        throw std::invalid_argument("csv: bad number '" + s + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed ^ (salt * 0x9e3779b97f4a7c15ull);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    return x;
}

} // namespace

std::string reports_csv_header() {
    return "frame_idx,mode,epe_before,d1_before,loss_full_res,selected_module,forward_ms,adapt_ms";
}

std::string report_csv_row(const StepReport& r) {
    std::ostringstream os;
    os << r.frame_idx << ',' << to_string(r.mode) << ','
       << (r.epe_before ? format_double(*r.epe_before) : "") << ','
       << (r.d1_before ? format_double(*r.d1_before) : "") << ','
       << format_double(r.loss_full_res) << ','
       << (r.selected_module ? std::to_string(*r.selected_module) : "") << ','
       << format_double(r.forward_ms) << ',' << format_double(r.adapt_ms);
    return os.str();
}

void write_reports_csv(const std::string& path, const std::vector<StepReport>& reports) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("csv: cannot open " + path + " for writing");
    f << reports_csv_header() << "\n";
    for (const auto& r : reports) f << report_csv_row(r) << "\n";
}

std::vector<StepReport> read_reports_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line != reports_csv_header())
        throw std::invalid_argument("csv: unexpected header in " + path);
    std::vector<StepReport> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 8)
            throw std::invalid_argument("csv: expected 8 cells, got " +
                                        std::to_string(cells.size()) + " in " + path);
        StepReport r;
        r.frame_idx = std::stol(cells[0]);
        r.mode = mode_from_string(cells[1]);
        if (!cells[2].empty()) r.epe_before = parse_double(cells[2]);
        if (!cells[3].empty()) r.d1_before = parse_double(cells[3]);
        r.loss_full_res = parse_double(cells[4]);
        if (!cells[5].empty()) r.selected_module = std::stoi(cells[5]);
        r.forward_ms = parse_double(cells[6]);
        r.adapt_ms = parse_double(cells[7]);
        out.push_back(r);
    }
    return out;
}

StereoFrame load_manifest_frame(const std::string& line) {
    std::istringstream ss(line);
    std::string left_path, right_path, gt_path;
    ss >> left_path >> right_path >> gt_path;
    require(!left_path.empty() && !right_path.empty(),
            "manifest: each line needs '<left.pfm> <right.pfm> [gt.png]', got '" + line + "'");
    StereoFrame frame;
    frame.left = read_pfm(left_path);
    frame.right = read_pfm(right_path);
    if (!gt_path.empty()) {
        auto [disp, mask] = read_disparity_png16(gt_path);
        frame.gt_disparity = disp;
        frame.valid_mask = mask;
    }
    return frame;
}

RunSummary run_adaptation(Network<float>& net, const RunConfig& cfg,
                          std::vector<StepReport>* reports_out, const std::string& csv_path) {
    using clock = std::chrono::steady_clock;
    require(cfg.frames >= 1, "run: frames must be >= 1");
    require(cfg.repeats >= 1, "run: repeats must be >= 1");

    const std::uint64_t ctrl_seed =
        cfg.controller_seed != 0 ? cfg.controller_seed : mix_seed(cfg.seed, 0xc017011ull);
    AdaptationController controller(net, cfg.mode, cfg.learning_rate, ctrl_seed);

    std::ofstream csv;
    if (!csv_path.empty()) {
        csv.open(csv_path);
        if (!csv) throw std::runtime_error("run: cannot open " + csv_path + " for writing");
        csv << reports_csv_header() << "\n" << std::flush;
    }

    std::vector<std::string> manifest;
    std::optional<SequenceStream> stream;
    if (!cfg.sequence_manifest.empty())
        manifest = read_manifest(cfg.sequence_manifest);
    else
        stream.emplace(cfg.scene, cfg.seed);
    const int frames_per_pass =
        manifest.empty() ? cfg.frames : static_cast<int>(manifest.size());

    RunSummary summary;
    double epe_acc = 0, d1_acc = 0;
    int epe_count = 0, d1_count = 0;
    std::vector<double> step_ms;
    std::vector<double> d1_window;
    const int curve_stride = 25, curve_window = 100;

    for (int pass = 0; pass < cfg.repeats; ++pass) {
        if (stream && pass > 0) stream->reset();
        for (int i = 0; i < frames_per_pass; ++i) {
            StereoFrame frame = stream ? stream->next()
                                       : load_manifest_frame(manifest[static_cast<std::size_t>(i)]);
            if (cfg.crop_h > 0 && cfg.crop_w > 0)
                frame = central_crop(frame, cfg.crop_h, cfg.crop_w);

            const auto t0 = clock::now();
            StepReport report = controller.adapt_step(frame);
            const auto t1 = clock::now();
            step_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());

            if (report.epe_before) {
                epe_acc += *report.epe_before;
                ++epe_count;
            }
            if (report.d1_before) {
                d1_acc += *report.d1_before;
                ++d1_count;
                d1_window.push_back(*report.d1_before);
                if (static_cast<int>(d1_window.size()) > curve_window)
                    d1_window.erase(d1_window.begin());
                if (report.frame_idx % curve_stride == 0) {
                    double m = 0;
                    for (double v : d1_window) m += v;
                    summary.d1_curve.emplace_back(report.frame_idx,
                                                  m / static_cast<double>(d1_window.size()));
                }
            }
            if (csv.is_open()) csv << report_csv_row(report) << "\n" << std::flush;
            if (reports_out) reports_out->push_back(report);
            ++summary.frames;
        }
    }

    if (epe_count > 0) summary.mean_epe = epe_acc / epe_count;
    if (d1_count > 0) summary.mean_d1 = d1_acc / d1_count;
    const double med = median(step_ms);
    summary.median_fps = med > 0 ? 1000.0 / med : 0.0;
    return summary;
}

std::pair<double, double> evaluate_network(Network<float>& net, const SceneSpec& scene,
                                           std::uint64_t seed, int n) {
    SequenceStream stream(scene, seed);
    double epe_acc = 0, d1_acc = 0;
    int count = 0;
    for (int i = 0; i < n; ++i) {
        StereoFrame frame = stream.next();
        auto pyr = net.forward(nullptr, frame.left, frame.right);
        const TensorF* mask = frame.valid_mask ? &*frame.valid_mask : nullptr;
        const auto e = epe(pyr.full, *frame.gt_disparity, mask);
        const auto d = d1_all(pyr.full, *frame.gt_disparity, mask);
        if (e && d) {
            epe_acc += *e;
            d1_acc += *d;
            ++count;
        }
    }
    require(count > 0, "evaluate_network: no valid frames");
    return {epe_acc / count, d1_acc / count};
}

namespace {

// Multi-scale supervised L1 against downsampled ground truth; coarser levels
// halve in weight per level. Returns the recorded scalar loss.
Tensor4<float> supervised_loss(Tape<float>* tape, const DisparityPyramid<float>& pyr,
                               const StereoFrame& frame, int lowest_level) {
    const TensorF& gt = *frame.gt_disparity;
    const TensorF* mask = frame.valid_mask ? &*frame.valid_mask : nullptr;

    auto masked_l1 = [&](const Tensor4<float>& pred, const TensorF& target, const TensorF& m,
                         double weight) -> std::optional<Tensor4<float>> {
        double valid = 0;
        for (std::int64_t i = 0; i < m.numel(); ++i) valid += m[i];
        if (valid == 0) return std::nullopt;
        Tensor4<float> diff = abs_val(tape, sub(tape, pred, target));
        Tensor4<float> masked = mul(tape, diff, m);
        const double scale = weight * static_cast<double>(m.numel()) / valid;
        return scalar_affine(tape, reduce_mean(tape, masked), scale, 0.0);
    };

    TensorF ones_full(gt.shape(), 1.0f);
    std::optional<Tensor4<float>> total =
        masked_l1(pyr.full, gt, mask ? *mask : ones_full, 1.0);
    for (const auto& [level, pred] : pyr.scaled) {
        const int factor = 1 << level;
        TensorF gtk = downsample_disparity(gt, mask, factor);
        TensorF mk = mask ? downsample_mask(*mask, factor)
                          : TensorF(1, 1, gt.h() / factor, gt.w() / factor, 1.0f);
        const double weight = std::pow(0.5, level - lowest_level + 1);
        auto term = masked_l1(pred, gtk, mk, weight);
        if (!term) continue;
        total = total ? add(tape, *total, *term) : term;
    }
    require(total.has_value(), "supervised_loss: no valid pixels at any level");
    return *total;
}

} // namespace

Network<float> pretrain(const RunConfig& cfg, const std::string& curve_csv_path) {
    require(cfg.iterations >= 0, "pretrain: iterations must be >= 0");
    Network<float> net = Network<float>::build(cfg.network, cfg.seed);
    Adam<float> adam(net, cfg.learning_rate);

    std::ofstream curve;
    if (!curve_csv_path.empty()) {
        curve.open(curve_csv_path);
        if (!curve) throw std::runtime_error("pretrain: cannot open " + curve_csv_path);
        curve << "iteration,loss,holdout_epe\n";
    }

    const std::uint64_t holdout_seed = mix_seed(cfg.seed, 0x401d007ull);
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        StereoFrame frame = generate_sequence(1, cfg.scene, mix_seed(cfg.seed, iter + 1))[0];
        Tape<float> tape;
        auto pyr = net.forward(&tape, frame.left, frame.right);
        Tensor4<float> loss =
            supervised_loss(&tape, pyr, frame, cfg.network.lowest_decoder_level);
        const double loss_value = loss[0];
        if (!std::isfinite(loss_value))
            throw NumericalError("pretrain: loss diverged to non-finite at iteration " +
                                 std::to_string(iter));
        net.backward_full(tape, loss);
        adam.step_all(net);

        if (curve.is_open() && (iter % cfg.eval_every == 0 || iter + 1 == cfg.iterations)) {
            const auto [hold_epe, hold_d1] =
                evaluate_network(net, cfg.scene, holdout_seed, cfg.holdout_frames);
            static_cast<void>(hold_d1);
            curve << iter << ',' << format_double(loss_value) << ',' << format_double(hold_epe)
                  << "\n"
                  << std::flush;
        }
    }
    return net;
}

std::vector<ModeSummary> compare_modes(const Network<float>& checkpoint, const RunConfig& base,
                                       const std::vector<AdaptationMode>& modes, int mad_seeds,
                                       const std::string& out_dir) {
    std::vector<ModeSummary> rows;
    for (AdaptationMode mode : modes) {
        const bool stochastic = mode == AdaptationMode::MadFull || mode == AdaptationMode::MadRand;
        const int runs = stochastic ? std::max(1, mad_seeds) : 1;
        std::vector<double> d1s, epes, fps;
        for (int r = 0; r < runs; ++r) {
            Network<float> net = checkpoint.clone();
            RunConfig cfg = base;
            cfg.mode = mode;
            cfg.controller_seed = mix_seed(base.seed, 101 + r);
            std::string csv;
            if (!out_dir.empty())
                csv = out_dir + "/run_" + to_string(mode) + "_" + std::to_string(r) + ".csv";
            RunSummary s = run_adaptation(net, cfg, nullptr, csv);
            if (s.mean_d1) d1s.push_back(*s.mean_d1);
            if (s.mean_epe) epes.push_back(*s.mean_epe);
            fps.push_back(s.median_fps);
        }
        auto mean_of = [](const std::vector<double>& v) {
            double m = 0;
            for (double x : v) m += x;
            return v.empty() ? 0.0 : m / static_cast<double>(v.size());
        };
        auto std_of = [&](const std::vector<double>& v) {
            if (v.size() < 2) return 0.0;
            const double m = mean_of(v);
            double acc = 0;
            for (double x : v) acc += (x - m) * (x - m);
            return std::sqrt(acc / static_cast<double>(v.size() - 1));
        };
        ModeSummary row;
        row.mode = mode;
        row.runs = runs;
        row.d1_mean = mean_of(d1s);
        row.d1_std = std_of(d1s);
        row.epe_mean = mean_of(epes);
        row.epe_std = std_of(epes);
        row.fps_median = median(fps);
        rows.push_back(row);
    }
    return rows;
}

void write_compare_csv(const std::string& path, const std::vector<ModeSummary>& rows) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("csv: cannot open " + path + " for writing");
    f << "mode,runs,d1_mean,d1_std,epe_mean,epe_std,fps_median\n";
    for (const auto& r : rows)
        f << to_string(r.mode) << ',' << r.runs << ',' << format_double(r.d1_mean) << ','
          << format_double(r.d1_std) << ',' << format_double(r.epe_mean) << ','
          << format_double(r.epe_std) << ',' << format_double(r.fps_median) << "\n";
}

std::string RunSummary::to_json_string() const {
    nlohmann::json j;
    j["frames"] = frames;
    j["mean_epe"] = mean_epe ? nlohmann::json(*mean_epe) : nlohmann::json(nullptr);
    j["mean_d1"] = mean_d1 ? nlohmann::json(*mean_d1) : nlohmann::json(nullptr);
    j["median_fps"] = median_fps;
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& [frame, v] : d1_curve) curve.push_back({frame, v});
    j["d1_curve"] = curve;
    return j.dump(2);
}

std::string RunConfig::to_json_string() const {
    nlohmann::json j;
    j["network"] = nlohmann::json::parse(network.to_json_string());
    j["mode"] = to_string(mode);
    j["scene"] = nlohmann::json::parse(scene.to_json_string());
    j["sequence_manifest"] = sequence_manifest;
    j["seed"] = seed;
    j["controller_seed"] = controller_seed;
    j["learning_rate"] = learning_rate;
    j["out_dir"] = out_dir;
    j["crop_h"] = crop_h;
    j["crop_w"] = crop_w;
    j["repeats"] = repeats;
    j["frames"] = frames;
    j["iterations"] = iterations;
    j["eval_every"] = eval_every;
    j["holdout_frames"] = holdout_frames;
    return j.dump(2);
}

RunConfig RunConfig::from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("run config: bad JSON: ") + e.what());
    }
    RunConfig cfg;
    if (j.contains("network")) cfg.network = NetworkConfig::from_json_string(j["network"].dump());
    if (j.contains("mode")) cfg.mode = mode_from_string(j["mode"]);
    if (j.contains("scene")) cfg.scene = SceneSpec::from_json_string(j["scene"].dump());
    cfg.sequence_manifest = j.value("sequence_manifest", cfg.sequence_manifest);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.controller_seed = j.value("controller_seed", cfg.controller_seed);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.crop_h = j.value("crop_h", cfg.crop_h);
    cfg.crop_w = j.value("crop_w", cfg.crop_w);
    cfg.repeats = j.value("repeats", cfg.repeats);
    cfg.frames = j.value("frames", cfg.frames);
    cfg.iterations = j.value("iterations", cfg.iterations);
    cfg.eval_every = j.value("eval_every", cfg.eval_every);
    cfg.holdout_frames = j.value("holdout_frames", cfg.holdout_frames);
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("run config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json_string(ss.str());
}

void RunConfig::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("run config: cannot open " + path + " for writing");
    f << to_json_string() << "\n";
}

} // namespace mad
