// stflow: optical flow, synthetic data, training, k-fold evaluation and
// prediction behind one binary.

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "stflow/checkpoint.hpp"
#include "stflow/data.hpp"
#include "stflow/evaluation.hpp"
#include "stflow/ften.hpp"
#include "stflow/serialize.hpp"
#include "stflow/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stflow;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw DataError("write failed: " + path.string());
}

struct Globals {
    std::size_t threads = 1;
    std::string run_manifest;
};

// Resolved configuration of one invocation, written next to its outputs.
struct RunManifest {
    std::string subcommand;
    json config = json::object();
    std::uint64_t seed = 0;
    std::string started = utc_now();

    void emit(const Globals& g, const std::optional<fs::path>& default_path) const {
        const json j{{"subcommand", subcommand}, {"config", config},   {"seed", seed},
                     {"tool_version", kVersion}, {"threads", g.threads}, {"started_at", started},
                     {"finished_at", utc_now()}};
        if (!g.run_manifest.empty()) {
            write_text(g.run_manifest, j.dump(2) + "\n");
        } else if (default_path) {
            write_text(*default_path, j.dump(2) + "\n");
        } else {
            std::cerr << j.dump() << '\n';
        }
    }
};

fs::path sibling(const fs::path& out, const std::string& suffix) { return fs::path(out.string() + suffix); }

// Model options shared by train and eval.
struct ModelOptions {
    std::string profile = "paper";
    std::string config_file;
    std::vector<std::size_t> filters;
    std::optional<std::size_t> conv3d, gru_hidden, gru_layers, dense;
    std::string bridge;

    void add(CLI::App* app) {
        app->add_option("--profile", profile, "Architecture profile")->check(CLI::IsMember({"paper", "reduced", "tiny"}));
        app->add_option("--model-config", config_file, "JSON file overriding model config fields");
        app->add_option("--filters", filters, "Conv2d filter counts")->delimiter(',');
        app->add_option("--conv3d-filters", conv3d);
        app->add_option("--gru-hidden", gru_hidden);
        app->add_option("--gru-layers", gru_layers);
        app->add_option("--dense", dense);
        app->add_option("--bridge", bridge)->check(CLI::IsMember({"average", "flatten"}));
    }

    ModelConfig resolve(const PrepParams& prep) const {
        ModelConfig m = profile == "tiny" ? ModelConfig::tiny() : profile == "reduced" ? ModelConfig::reduced() : ModelConfig::paper();
        if (!config_file.empty()) {
            std::ifstream is(config_file);
            if (!is) throw DataError("cannot open " + config_file);
            json::parse(is).get_to(m);
        }
        if (!filters.empty()) m.conv2d_filters = filters;
        if (conv3d) m.conv3d_filters = *conv3d;
        if (gru_hidden) m.gru_hidden = *gru_hidden;
        if (gru_layers) m.gru_layers = *gru_layers;
        if (dense) m.dense_units = *dense;
        if (!bridge.empty()) m.bridge = parse_bridge(bridge);
        apply_prep_to_model(prep, m);
        m.validate();
        return m;
    }
};

struct TrainOptionsCli {
    TrainConfig cfg;
    bool optimal = false;
    std::string penalty = "none";
    std::optional<double> lr;

    void add(CLI::App* app) {
        app->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
        auto* lr_opt = app->add_option("--lr", lr, "Constant learning rate (default 0.01)");
        app->add_flag("--optimal", optimal, "Inverse-time schedule 1/(alpha (t0 + t))")->excludes(lr_opt);
        app->add_option("--alpha", cfg.alpha, "Regularization strength")->capture_default_str();
        app->add_option("--t0", cfg.t0, "Schedule offset")->capture_default_str();
        app->add_option("--batch", cfg.batch_size, "Mini-batch size")->capture_default_str();
        app->add_option("--penalty", penalty, "none|l2")->check(CLI::IsMember({"none", "l2"}));
        app->add_option("--seed", cfg.seed, "Run seed")->capture_default_str();
    }

    TrainConfig resolve() const {
        TrainConfig c = cfg;
        if (lr) c.lr = *lr;
        c.schedule = optimal ? Schedule::optimal : Schedule::constant;
        c.penalty = penalty == "l2" ? Penalty::l2 : Penalty::none;
        c.validate();
        return c;
    }
};

std::vector<ManifestEntry> training_entries(const DatasetManifest& m, const std::string& split) {
    bool any_split = false;
    for (const auto& e : m.entries) any_split = any_split || !e.split.empty();
    auto entries = any_split ? m.select(split) : m.entries;
    if (entries.empty()) throw DataError("no entries in split '" + split + "'");
    return entries;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatio-temporal video classification: dense optical flow, CNN+GRU training and k-fold evaluation"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    Globals globals;
    app.add_option("--threads", globals.threads, "Cap on worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--run-manifest", globals.run_manifest, "Where to write the run manifest JSON");

    // flow compute
    auto* flow_cmd = app.add_subcommand("flow", "Dense optical flow");
    flow_cmd->require_subcommand(1);
    auto* flow_compute = flow_cmd->add_subcommand("compute", "Flow from image A to image B");
    std::string flow_a, flow_b, flow_out, flow_viz;
    FlowParams flow_params;
    double flow_max_mag = 4.0;
    flow_compute->add_option("--a", flow_a, "First frame (PPM)")->required();
    flow_compute->add_option("--b", flow_b, "Second frame (PPM)")->required();
    flow_compute->add_option("--out", flow_out, "Output FTEN (h,w,2)")->required();
    flow_compute->add_option("--viz", flow_viz, "Optional PPM visualization");
    flow_compute->add_option("--levels", flow_params.pyramid_levels)->capture_default_str();
    flow_compute->add_option("--scale", flow_params.pyramid_scale)->capture_default_str();
    flow_compute->add_option("--win", flow_params.expansion_window, "Expansion window")->capture_default_str();
    flow_compute->add_option("--sigma", flow_params.window_sigma)->capture_default_str();
    flow_compute->add_option("--avg", flow_params.averaging_window, "Averaging window")->capture_default_str();
    flow_compute->add_option("--iters", flow_params.iterations_per_level)->capture_default_str();
    flow_compute->add_option("--max-mag", flow_max_mag, "Visualization full-scale magnitude")->capture_default_str();

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic motion dataset");
    std::string synth_out;
    SynthConfig synth_cfg;
    std::uint64_t synth_seed = 0;
    synth_cmd->add_option("--out", synth_out, "Dataset root")->required();
    synth_cmd->add_option("--n", synth_cfg.n_videos, "Number of videos")->capture_default_str();
    synth_cmd->add_option("--seed", synth_seed)->capture_default_str();
    synth_cmd->add_option("--size", synth_cfg.size, "Frame side in pixels")->capture_default_str();
    synth_cmd->add_option("--frames", synth_cfg.frames)->capture_default_str();
    synth_cmd->add_option("--square", synth_cfg.square, "Moving square side (0 = size/4)")->capture_default_str();
    synth_cmd->add_option("--noise", synth_cfg.noise)->capture_default_str();
    synth_cmd->add_option("--test-every", synth_cfg.test_every, "Every Nth video is a test video (0 = none)")->capture_default_str();

    // data prepare
    auto* data_cmd = app.add_subcommand("data", "Dataset preprocessing");
    data_cmd->require_subcommand(1);
    auto* data_prepare = data_cmd->add_subcommand("prepare", "Compute flows and assembled inputs");
    std::string data_root;
    bool data_cache = false;
    std::optional<std::size_t> data_size;
    data_prepare->add_option("--root", data_root, "Dataset root")->required();
    data_prepare->add_flag("--cache", data_cache, "Write input.ften beside each video");
    data_prepare->add_option("--size", data_size, "Override target frame size when no manifest exists");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    std::string train_data, train_out, train_history, train_split = "train";
    ModelOptions train_model;
    TrainOptionsCli train_opts;
    train_cmd->add_option("--data", train_data, "Dataset root")->required();
    train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
    train_cmd->add_option("--history", train_history, "Per-epoch CSV");
    train_cmd->add_option("--split", train_split, "Manifest split used for training")->capture_default_str();
    train_model.add(train_cmd);
    train_opts.add(train_cmd);

    // eval kfold
    auto* eval_cmd = app.add_subcommand("eval", "Evaluation");
    eval_cmd->require_subcommand(1);
    auto* eval_kfold = eval_cmd->add_subcommand("kfold", "K-fold cross-validation");
    std::string eval_data, eval_out;
    std::size_t eval_k = 5;
    ModelOptions eval_model;
    TrainOptionsCli eval_opts;
    eval_kfold->add_option("--data", eval_data, "Dataset root")->required();
    eval_kfold->add_option("--k", eval_k, "Folds")->capture_default_str();
    eval_kfold->add_option("--out", eval_out, "Report JSON")->required();
    eval_model.add(eval_kfold);
    eval_opts.add(eval_kfold);

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "Classify one video directory");
    std::string predict_model, predict_video;
    predict_cmd->add_option("--model", predict_model, "Checkpoint")->required();
    predict_cmd->add_option("--video", predict_video, "Directory of frame_NNNN.ppm")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kUsage;
    }

    try {
        if (flow_compute->parsed()) {
            RunManifest rm{"flow compute"};
            rm.config = {{"a", flow_a}, {"b", flow_b}, {"out", flow_out}, {"viz", flow_viz}, {"flow", flow_params},
                         {"max_mag", flow_max_mag}};
            const GrayImage a = to_grayscale(read_ppm(flow_a));
            const GrayImage b = to_grayscale(read_ppm(flow_b));
            const FlowField flow = farneback_flow(a, b, flow_params);
            ften::save(flow_out, flow_to_tensor(flow));
            if (!flow_viz.empty()) write_ppm(flow_viz, flow_to_rgb(flow, flow_max_mag));
            rm.emit(globals, sibling(flow_out, ".run.json"));
        } else if (synth_cmd->parsed()) {
            RunManifest rm{"synth"};
            rm.seed = synth_seed;
            rm.config = {{"out", synth_out}, {"synth", synth_cfg}};
            const auto m = synth_generate(synth_out, synth_cfg, synth_seed);
            rm.config["preprocessing"] = m.prep;
            rm.emit(globals, fs::path(synth_out) / "run.json");
            std::cerr << "wrote " << m.entries.size() << " videos to " << synth_out << '\n';
        } else if (data_prepare->parsed()) {
            RunManifest rm{"data prepare"};
            const bool had_manifest = fs::exists(fs::path(data_root) / DatasetManifest::kFileName);
            DatasetManifest m = DatasetManifest::open(data_root);
            if (!had_manifest) {
                if (data_size) m.prep.height = m.prep.width = *data_size;
                m.save();
            }
            rm.config = {{"root", data_root}, {"cache", data_cache}, {"preprocessing", m.prep}};
            PrepareOptions po;
            po.write_cache = data_cache;
            po.threads = globals.threads;
            const auto examples = prepare_examples(m, m.entries, po);
            rm.emit(globals, fs::path(data_root) / "prepare.run.json");
            std::cerr << "prepared " << examples.size() << " videos\n";
        } else if (train_cmd->parsed()) {
            RunManifest rm{"train"};
            const DatasetManifest m = DatasetManifest::open(train_data);
            const ModelConfig model = train_model.resolve(m.prep);
            const TrainConfig tc = train_opts.resolve();
            rm.seed = tc.seed;
            rm.config = {{"data", train_data}, {"out", train_out}, {"split", train_split}, {"model", model},
                         {"train", tc},        {"preprocessing", m.prep}};
            PrepareOptions po;
            po.use_cache = true;
            po.threads = globals.threads;
            const auto examples = prepare_examples(m, training_entries(m, train_split), po);
            TrainOptions to;
            to.threads = globals.threads;
            to.on_epoch = [](const EpochRecord& r) {
                std::cerr << "epoch " << r.epoch << " loss " << r.loss << " acc " << r.accuracy << " lr " << r.lr << '\n';
                return true;
            };
            const TrainResult tr = train(examples, model, tc, to);
            Checkpoint ck{model, tr.state, {{"train", tc}, {"preprocessing", m.prep}, {"classes", m.classes}}};
            save_checkpoint(train_out, ck);
            if (!train_history.empty()) write_text(train_history, history_csv(tr.history));
            rm.emit(globals, sibling(train_out, ".run.json"));
        } else if (eval_kfold->parsed()) {
            RunManifest rm{"eval kfold"};
            const DatasetManifest m = DatasetManifest::open(eval_data);
            const ModelConfig model = eval_model.resolve(m.prep);
            const TrainConfig tc = eval_opts.resolve();
            rm.seed = tc.seed;
            rm.config = {{"data", eval_data}, {"out", eval_out}, {"k", eval_k}, {"model", model},
                         {"train", tc},       {"preprocessing", m.prep}};
            PrepareOptions po;
            po.use_cache = true;
            po.threads = globals.threads;
            const auto examples = prepare_examples(m, m.entries, po);
            CrossValidationOptions cv;
            cv.k = eval_k;
            cv.seed = tc.seed;
            cv.train.threads = globals.threads;
            const auto report = cross_validate(examples, model, tc, cv);
            write_text(eval_out, report.to_json().dump(2) + "\n");
            std::cout << report.to_text(m.classes);
            rm.emit(globals, sibling(eval_out, ".run.json"));
        } else if (predict_cmd->parsed()) {
            RunManifest rm{"predict"};
            const Checkpoint ck = load_checkpoint(predict_model);
            PrepParams prep;
            if (ck.meta.contains("preprocessing")) ck.meta.at("preprocessing").get_to(prep);
            rm.config = {{"model", predict_model}, {"video", predict_video}, {"preprocessing", prep}};
            const VideoSample s = make_sample(load_frames(predict_video), fs::path(predict_video).filename().string(), 0, prep);
            check_sample(s, prep);
            TensorF input = build_input(s, prep.max_mag);
            Shape batched{1};
            for (auto d : input.shape()) batched.push_back(d);
            const TensorF probs = model_forward(input.reshaped(batched), ck.state, ck.config);
            std::vector<double> p(probs.data().begin(), probs.data().end());
            json out{{"class", argmax_row(probs, 0)}, {"probabilities", p}};
            if (ck.meta.contains("classes")) out["class_name"] = ck.meta["classes"][argmax_row(probs, 0)];
            std::cout << out.dump() << '\n';
            rm.emit(globals, std::nullopt);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumeric;
    } catch (const Error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    }
    return kOk;
}
