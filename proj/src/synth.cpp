#include "stflow/synth.hpp"

#include <algorithm>
#include <cstdio>

#include "stflow/image.hpp"
#include "stflow/rng.hpp"
#include "stflow/texture.hpp"

namespace stflow {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
    if (n_videos < 2) throw ConfigError("synth needs at least 2 videos (one per class)");
    if (frames < 2) throw ConfigError("synth needs at least 2 frames per video");
    if (size < 8) throw ConfigError("synth frame size must be >= 8");
    const std::size_t side = square ? square : size / 4;
    if (side < 2 || side >= size) throw ConfigError("synth square must be in [2, size)");
    if (min_speed < 1 || max_speed < min_speed) throw ConfigError("synth speeds must satisfy 1 <= min <= max");
    if (noise < 0.0) throw ConfigError("synth noise must be >= 0");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = nlohmann::json{{"n_videos", c.n_videos}, {"frames", c.frames},       {"size", c.size},
                       {"square", c.square ? c.square : c.size / 4},          {"min_speed", c.min_speed},
                       {"max_speed", c.max_speed}, {"noise", c.noise},       {"test_every", c.test_every}};
}

std::vector<TensorF> synth_video(const SynthConfig& config, std::size_t label, std::uint64_t video_seed) {
    config.validate();
    SeededRng rng(video_seed);
    const std::size_t n = config.size;
    const std::size_t side = config.square ? config.square : n / 4;
    const TensorD background = smooth_noise(n, n, 1.5, rng);
    const TensorD patch = smooth_noise(side, side, 1.0, rng);
    const int speed = config.min_speed + static_cast<int>(rng.below(static_cast<std::uint64_t>(config.max_speed - config.min_speed + 1)));
    const int direction = label == 0 ? -1 : 1;
    const auto x0 = static_cast<long>(rng.below(n));
    const auto y0 = static_cast<std::size_t>(rng.below(n - side + 1));
    double tint[3];
    for (auto& t : tint) t = rng.uniform(0.8, 1.0);

    std::vector<TensorF> frames;
    for (std::size_t k = 0; k < config.frames; ++k) {
        TensorD gray = background;
        const long shift = x0 + direction * speed * static_cast<long>(k);
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x) {
                const long col = ((shift + static_cast<long>(x)) % static_cast<long>(n) + static_cast<long>(n)) % static_cast<long>(n);
                gray[(y0 + y) * n + static_cast<std::size_t>(col)] = patch[y * side + x];
            }
        TensorF rgb({n, n, 3});
        for (std::size_t i = 0; i < n * n; ++i) {
            const double g = gray[i];
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(g * tint[c] + config.noise * rng.normal(), 0.0, 1.0);
                rgb[3 * i + static_cast<std::size_t>(c)] = static_cast<float>(v);
            }
        }
        frames.push_back(std::move(rgb));
    }
    return frames;
}

DatasetManifest synth_generate(const fs::path& out, const SynthConfig& config, std::uint64_t seed,
                               std::optional<PrepParams> prep_opt) {
    config.validate();
    PrepParams prep;
    if (prep_opt) {
        prep = *prep_opt;
    } else {
        prep.height = config.size;
        prep.width = config.size;
        prep.flow.pyramid_levels = std::max(1, prep.flow.max_pyramid_levels(config.size, config.size));
    }
    prep.frames = config.frames;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw DataError("cannot create dataset root " + out.string());

    DatasetManifest m;
    m.root = out;
    m.classes = {"left", "right"};
    m.prep = prep;
    m.extra = {{"synth", config}, {"seed", seed}};
    for (std::size_t i = 0; i < config.n_videos; ++i) {
        const std::size_t label = i % 2;
        char id[32];
        std::snprintf(id, sizeof(id), "vid_%04zu", i);
        const std::string rel = m.classes[label] + "/" + id;
        const fs::path dir = out / rel;
        fs::create_directories(dir, ec);
        if (ec) throw DataError("cannot create " + dir.string());
        const auto frames = synth_video(config, label, derive_seed(seed, std::string("video/") + id));
        for (std::size_t k = 0; k < frames.size(); ++k) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%04zu.ppm", k + 1);
            write_ppm(dir / name, frames[k]);
        }
        const bool test = config.test_every && (i % config.test_every) == config.test_every - 1;
        m.entries.push_back({id, rel, label, test ? "test" : "train"});
    }
    m.save();
    return m;
}

}  // namespace stflow
