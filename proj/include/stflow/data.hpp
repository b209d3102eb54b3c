#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "stflow/flow.hpp"
#include "stflow/training.hpp"

namespace stflow {

// Frame preprocessing shared by every sample of a dataset.
struct PrepParams {
    std::size_t height = 128;
    std::size_t width = 128;
    std::size_t frames = 10;
    double max_mag = 4.0;  // flow magnitude mapped to full scale by flow_to_rgb
    FlowParams flow;
};

struct ManifestEntry {
    std::string id;
    std::string dir;  // relative to the dataset root
    std::size_t label = 0;
    std::string split;  // "train", "test" or empty

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

// Dataset index stored as <root>/manifest.json.
struct DatasetManifest {
    std::filesystem::path root;
    std::vector<std::string> classes;  // index -> class directory name
    std::vector<ManifestEntry> entries;
    PrepParams prep;
    nlohmann::json extra = nlohmann::json::object();

    static constexpr const char* kFileName = "manifest.json";

    void save() const;
    static DatasetManifest load(const std::filesystem::path& root);

    // Builds a manifest from <root>/<class>/<video>/frame_NNNN.ppm with
    // classes indexed alphabetically.
    static DatasetManifest scan(const std::filesystem::path& root);

    // load() if manifest.json exists, otherwise scan().
    static DatasetManifest open(const std::filesystem::path& root);

    // Entries whose split matches; an empty split selects everything.
    std::vector<ManifestEntry> select(const std::string& split) const;
};

// Frames of a video directory, sorted by the numeric index in
// frame_NNNN.ppm, each decoded to (h, w, 3) in [0, 1].
std::vector<TensorF> load_frames(const std::filesystem::path& dir);

// idx_k = floor(k * len / n) for k = 0..n-1.
std::vector<std::size_t> sample_indices(std::size_t len, std::size_t n);

template <typename F>
std::vector<F> sample_frames(const std::vector<F>& frames, std::size_t n) {
    if (frames.empty()) throw DataError("sample_frames: no frames");
    std::vector<F> out;
    for (auto i : sample_indices(frames.size(), n)) out.push_back(frames[i]);
    return out;
}

struct VideoSample {
    std::string id;
    std::size_t label = 0;
    std::vector<TensorF> frames;  // n of (h, w, 3)
    std::vector<FlowField> flows;  // n; flow k maps frame k to k+1, the last is repeated
};

// Sample, resize, then compute flow between consecutive resized frames.
VideoSample make_sample(const std::vector<TensorF>& raw_frames, std::string id, std::size_t label, const PrepParams& prep);

// Checks the type invariants: frame count, frame size, values in [0, 1].
void check_sample(const VideoSample& sample, const PrepParams& prep);

// (2n, h, w, 3): the n RGB frames followed by the n encoded flows.
TensorF build_input(const VideoSample& sample, double max_mag);

// Replaces the flow half of an assembled input with the zero-flow encoding.
TensorF zero_flow_slices(const TensorF& input);

struct PrepareOptions {
    bool use_cache = false;    // read <video>/input.ften when present
    bool write_cache = false;  // write it after computing
    std::size_t threads = 1;
};

inline constexpr const char* kInputCacheName = "input.ften";

// Model-ready examples for the given entries.
std::vector<Example> prepare_examples(const DatasetManifest& manifest, const std::vector<ManifestEntry>& entries,
                                      const PrepareOptions& options = {});

// Model input geometry implied by the preprocessing parameters.
void apply_prep_to_model(const PrepParams& prep, ModelConfig& model);

void to_json(nlohmann::json& j, const PrepParams& p);
void from_json(const nlohmann::json& j, PrepParams& p);

}  // namespace stflow
