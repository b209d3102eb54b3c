#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "stflow/data.hpp"

namespace stflow {

// Two-class motion dataset: a textured square slides over a static textured
// background, leftwards for class 0 ("left") and rightwards for class 1
// ("right"). The square wraps around horizontally and starts at a uniform
// column, so any single frame has the same distribution in both classes.
struct SynthConfig {
    std::size_t n_videos = 250;
    std::size_t frames = 10;
    std::size_t size = 128;
    std::size_t square = 0;     // side in pixels; 0 means size / 4
    int min_speed = 1;          // px per frame, drawn uniformly per video
    int max_speed = 3;
    double noise = 0.02;        // std-dev of per-frame additive Gaussian noise
    std::size_t test_every = 5;  // every test_every-th video goes to the test split; 0 disables

    void validate() const;
};

// Writes <out>/<left|right>/vid_NNNN/frame_NNNN.ppm and <out>/manifest.json.
// `prep` is recorded in the manifest; without one the defaults are used with
// the frame size set to the generated size.
DatasetManifest synth_generate(const std::filesystem::path& out, const SynthConfig& config, std::uint64_t seed,
                               std::optional<PrepParams> prep = std::nullopt);

// Frames of one synthetic video without touching the filesystem.
std::vector<TensorF> synth_video(const SynthConfig& config, std::size_t label, std::uint64_t video_seed);

void to_json(nlohmann::json& j, const SynthConfig& c);

}  // namespace stflow
