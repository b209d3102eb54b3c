#include "stflow/serialize.hpp"

namespace stflow {

using nlohmann::json;

namespace {

template <typename V>
void read_opt(const json& j, const char* key, V& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

void to_json(json& j, const FlowParams& p) {
    j = json{{"pyramid_levels", p.pyramid_levels},       {"pyramid_scale", p.pyramid_scale},
             {"window_sigma", p.window_sigma},           {"expansion_window", p.expansion_window},
             {"iterations_per_level", p.iterations_per_level}, {"averaging_window", p.averaging_window}};
}

void from_json(const json& j, FlowParams& p) {
    read_opt(j, "pyramid_levels", p.pyramid_levels);
    read_opt(j, "pyramid_scale", p.pyramid_scale);
    read_opt(j, "window_sigma", p.window_sigma);
    read_opt(j, "expansion_window", p.expansion_window);
    read_opt(j, "iterations_per_level", p.iterations_per_level);
    read_opt(j, "averaging_window", p.averaging_window);
}

void to_json(json& j, const ModelConfig& c) {
    j = json{{"frames", c.frames},
             {"height", c.height},
             {"width", c.width},
             {"channels", c.channels},
             {"conv2d_filters", c.conv2d_filters},
             {"conv2d_kernel", c.conv2d_kernel},
             {"pool", c.pool},
             {"conv3d_filters", c.conv3d_filters},
             {"conv3d_kernel", c.conv3d_kernel},
             {"bridge", bridge_name(c.bridge)},
             {"gru_hidden", c.gru_hidden},
             {"gru_layers", c.gru_layers},
             {"dense_units", c.dense_units},
             {"num_classes", c.num_classes}};
}

void from_json(const json& j, ModelConfig& c) {
    read_opt(j, "frames", c.frames);
    read_opt(j, "height", c.height);
    read_opt(j, "width", c.width);
    read_opt(j, "channels", c.channels);
    read_opt(j, "conv2d_filters", c.conv2d_filters);
    read_opt(j, "conv2d_kernel", c.conv2d_kernel);
    read_opt(j, "pool", c.pool);
    read_opt(j, "conv3d_filters", c.conv3d_filters);
    read_opt(j, "conv3d_kernel", c.conv3d_kernel);
    if (j.contains("bridge")) c.bridge = parse_bridge(j.at("bridge").get<std::string>());
    read_opt(j, "gru_hidden", c.gru_hidden);
    read_opt(j, "gru_layers", c.gru_layers);
    read_opt(j, "dense_units", c.dense_units);
    read_opt(j, "num_classes", c.num_classes);
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"epochs", c.epochs},   {"batch_size", c.batch_size},
             {"schedule", schedule_name(c.schedule)}, {"lr", c.lr},
             {"alpha", c.alpha},     {"t0", c.t0},
             {"penalty", penalty_name(c.penalty)},    {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
    read_opt(j, "epochs", c.epochs);
    read_opt(j, "batch_size", c.batch_size);
    if (j.contains("schedule")) {
        const auto s = j.at("schedule").get<std::string>();
        if (s == "constant") c.schedule = Schedule::constant;
        else if (s == "optimal") c.schedule = Schedule::optimal;
        else throw ConfigError("unknown schedule '" + s + "'");
    }
    read_opt(j, "lr", c.lr);
    read_opt(j, "alpha", c.alpha);
    read_opt(j, "t0", c.t0);
    if (j.contains("penalty")) {
        const auto s = j.at("penalty").get<std::string>();
        if (s == "none") c.penalty = Penalty::none;
        else if (s == "l2") c.penalty = Penalty::l2;
        else throw ConfigError("unknown penalty '" + s + "'");
    }
    read_opt(j, "seed", c.seed);
}

void to_json(json& j, const EpochRecord& e) {
    j = json{{"epoch", e.epoch}, {"loss", e.loss}, {"acc", e.accuracy}, {"lr", e.lr}};
}

}  // namespace stflow
