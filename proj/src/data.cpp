#include "stflow/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>
#include <thread>

#include "stflow/ften.hpp"
#include "stflow/image.hpp"
#include "stflow/serialize.hpp"

namespace stflow {

namespace fs = std::filesystem;
using nlohmann::json;

void to_json(json& j, const PrepParams& p) {
    j = json{{"height", p.height}, {"width", p.width}, {"frames", p.frames}, {"max_mag", p.max_mag}, {"flow", p.flow}};
}

void from_json(const json& j, PrepParams& p) {
    if (j.contains("height")) j.at("height").get_to(p.height);
    if (j.contains("width")) j.at("width").get_to(p.width);
    if (j.contains("frames")) j.at("frames").get_to(p.frames);
    if (j.contains("max_mag")) j.at("max_mag").get_to(p.max_mag);
    if (j.contains("flow")) j.at("flow").get_to(p.flow);
}

void DatasetManifest::save() const {
    json entries_json = json::array();
    for (const auto& e : entries) {
        json je{{"id", e.id}, {"dir", e.dir}, {"label", e.label}};
        if (!e.split.empty()) je["split"] = e.split;
        entries_json.push_back(std::move(je));
    }
    json class_map = json::object();
    for (std::size_t i = 0; i < classes.size(); ++i) class_map[classes[i]] = i;
    const json j{{"classes", classes}, {"class_map", class_map}, {"entries", entries_json}, {"preprocessing", prep},
                 {"extra", extra}};
    std::ofstream os(root / kFileName);
    if (!os) throw DataError("cannot write " + (root / kFileName).string());
    os << j.dump(2) << '\n';
}

DatasetManifest DatasetManifest::load(const fs::path& root) {
    const fs::path file = root / kFileName;
    std::ifstream is(file);
    if (!is) throw DataError("cannot open " + file.string());
    DatasetManifest m;
    m.root = root;
    try {
        const json j = json::parse(is);
        j.at("classes").get_to(m.classes);
        for (const auto& je : j.at("entries")) {
            ManifestEntry e;
            je.at("id").get_to(e.id);
            je.at("dir").get_to(e.dir);
            je.at("label").get_to(e.label);
            e.split = je.value("split", "");
            if (e.label >= m.classes.size()) throw DataError("entry " + e.id + " has label outside the class list");
            m.entries.push_back(std::move(e));
        }
        if (j.contains("preprocessing")) j.at("preprocessing").get_to(m.prep);
        m.extra = j.value("extra", json::object());
    } catch (const json::exception& e) {
        throw DataError(file.string() + ": " + e.what());
    }
    for (const auto& e : m.entries) {
        if (!fs::is_directory(root / e.dir)) throw DataError("manifest entry " + e.id + ": missing directory " + e.dir);
    }
    return m;
}

DatasetManifest DatasetManifest::scan(const fs::path& root) {
    if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
    DatasetManifest m;
    m.root = root;
    for (const auto& d : fs::directory_iterator(root))
        if (d.is_directory()) m.classes.push_back(d.path().filename().string());
    std::sort(m.classes.begin(), m.classes.end());
    for (std::size_t label = 0; label < m.classes.size(); ++label) {
        std::vector<std::string> videos;
        for (const auto& d : fs::directory_iterator(root / m.classes[label]))
            if (d.is_directory()) videos.push_back(d.path().filename().string());
        std::sort(videos.begin(), videos.end());
        for (const auto& v : videos) m.entries.push_back({v, m.classes[label] + "/" + v, label, ""});
    }
    if (m.entries.empty()) throw DataError("no videos found under " + root.string());
    return m;
}

DatasetManifest DatasetManifest::open(const fs::path& root) {
    return fs::exists(root / kFileName) ? load(root) : scan(root);
}

std::vector<ManifestEntry> DatasetManifest::select(const std::string& split) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (split.empty() || e.split == split) out.push_back(e);
    return out;
}

std::vector<TensorF> load_frames(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("frame directory " + dir.string() + " does not exist");
    static const std::regex pattern(R"(frame_(\d+)\.ppm)");
    std::map<unsigned long, fs::path> indexed;
    for (const auto& f : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = f.path().filename().string();
        if (f.is_regular_file() && std::regex_match(name, m, pattern)) indexed.emplace(std::stoul(m[1].str()), f.path());
    }
    if (indexed.empty()) throw DataError("no frame_NNNN.ppm images in " + dir.string());
    std::vector<TensorF> frames;
    for (const auto& [index, path] : indexed) frames.push_back(read_ppm(path));
    return frames;
}

std::vector<std::size_t> sample_indices(std::size_t len, std::size_t n) {
    if (len == 0) throw DataError("sample_frames: no frames");
    std::vector<std::size_t> idx(n);
    for (std::size_t k = 0; k < n; ++k) idx[k] = std::min(k * len / n, len - 1);
    return idx;
}

VideoSample make_sample(const std::vector<TensorF>& raw_frames, std::string id, std::size_t label, const PrepParams& prep) {
    if (prep.frames == 0) throw ConfigError("frame count must be positive");
    VideoSample s{std::move(id), label, {}, {}};
    for (const auto& f : sample_frames(raw_frames, prep.frames)) s.frames.push_back(resize_bilinear(f, prep.height, prep.width));
    std::vector<GrayImage> gray;
    for (const auto& f : s.frames) gray.push_back(to_grayscale(f));
    for (std::size_t k = 0; k + 1 < gray.size(); ++k) s.flows.push_back(farneback_flow(gray[k], gray[k + 1], prep.flow));
    if (s.flows.empty()) {
        s.flows.push_back(FlowField::zeros(prep.height, prep.width));
    } else {
        s.flows.push_back(s.flows.back());
    }
    return s;
}

void check_sample(const VideoSample& sample, const PrepParams& prep) {
    if (sample.frames.size() != prep.frames || sample.flows.size() != prep.frames) {
        throw DataError("sample " + sample.id + ": expected " + std::to_string(prep.frames) + " frames and flows");
    }
    const Shape want{prep.height, prep.width, 3};
    for (const auto& f : sample.frames) {
        if (f.shape() != want) throw DataError("sample " + sample.id + ": frame shape " + shape_to_string(f.shape()));
        for (float v : f.data())
            if (!(v >= 0.0f && v <= 1.0f)) throw DataError("sample " + sample.id + ": frame value outside [0,1]");
    }
    for (const auto& fl : sample.flows) {
        if (fl.dx.shape() != Shape{prep.height, prep.width} || fl.dy.shape() != fl.dx.shape()) {
            throw DataError("sample " + sample.id + ": flow shape mismatch");
        }
        if (!fl.dx.all_finite() || !fl.dy.all_finite()) throw NumericError("sample " + sample.id + ": non-finite flow");
    }
}

TensorF build_input(const VideoSample& sample, double max_mag) {
    if (sample.frames.size() != sample.flows.size() || sample.frames.empty()) {
        throw ShapeError("build_input: sample " + sample.id + " needs equal, non-zero frame and flow counts");
    }
    std::vector<TensorF> slices;
    for (const auto& f : sample.frames) {
        Shape s{1};
        for (auto d : f.shape()) s.push_back(d);
        slices.push_back(f.reshaped(std::move(s)));
    }
    for (const auto& fl : sample.flows) {
        const TensorF enc = flow_to_rgb(fl, max_mag).cast<float>();
        slices.push_back(enc.reshaped({1, enc.dim(0), enc.dim(1), enc.dim(2)}));
    }
    return concat_axis<float>(slices, 0);
}

TensorF zero_flow_slices(const TensorF& input) {
    if (input.rank() != 4 || input.dim(0) % 2 != 0 || input.dim(3) != 3) {
        throw ShapeError("zero_flow_slices expects (2n,h,w,3), got " + shape_to_string(input.shape()));
    }
    TensorF out = input;
    const std::size_t half = input.size() / 2;
    for (std::size_t i = half; i < out.size(); i += 3) {
        out[i] = 0.5f;
        out[i + 1] = 0.5f;
        out[i + 2] = 0.0f;
    }
    return out;
}

std::vector<Example> prepare_examples(const DatasetManifest& manifest, const std::vector<ManifestEntry>& entries,
                                      const PrepareOptions& options) {
    const PrepParams& prep = manifest.prep;
    const Shape want{2 * prep.frames, prep.height, prep.width, 3};
    std::vector<Example> out(entries.size());
    std::vector<std::exception_ptr> errors(entries.size());
    auto work = [&](std::size_t i) {
        try {
            const auto& e = entries[i];
            const fs::path dir = manifest.root / e.dir;
            const fs::path cache = dir / kInputCacheName;
            TensorF input;
            if (options.use_cache && fs::exists(cache)) {
                input = ften::load<float>(cache);
                if (input.shape() != want) input = TensorF();
            }
            if (input.empty()) {
                const VideoSample s = make_sample(load_frames(dir), e.id, e.label, prep);
                check_sample(s, prep);
                input = build_input(s, prep.max_mag);
                if (options.write_cache) ften::save(cache, input);
            }
            out[i] = Example{e.id, std::move(input), e.label};
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, entries.size()));
    if (threads == 1) {
        for (std::size_t i = 0; i < entries.size(); ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < entries.size(); i += threads) work(i);
            });
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

void apply_prep_to_model(const PrepParams& prep, ModelConfig& model) {
    model.frames = 2 * prep.frames;
    model.height = prep.height;
    model.width = prep.width;
    model.channels = 3;
}

}  // namespace stflow
