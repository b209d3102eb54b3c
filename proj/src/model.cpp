#include "stflow/model.hpp"

#include <cmath>
#include <sstream>

namespace stflow {

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.frames = 4;
    c.height = 8;
    c.width = 8;
    c.conv2d_filters = {2, 2, 2, 2, 2};
    c.conv3d_filters = 2;
    c.gru_hidden = 3;
    c.dense_units = 4;
    return c;
}

ModelConfig ModelConfig::reduced() {
    ModelConfig c;
    c.height = 32;
    c.width = 32;
    c.conv2d_filters = {8, 8, 8};
    c.conv3d_filters = 8;
    c.gru_hidden = 16;
    c.dense_units = 32;
    return c;
}

void ModelConfig::validate() const {
    if (frames == 0 || height == 0 || width == 0 || channels == 0) throw ConfigError("model input dims must be positive");
    if (conv2d_filters.empty()) throw ConfigError("at least one conv2d layer is required");
    for (auto f : conv2d_filters)
        if (f == 0) throw ConfigError("conv2d filter counts must be positive");
    if (conv2d_kernel == 0 || conv3d_kernel[0] == 0 || conv3d_kernel[1] == 0 || conv3d_kernel[2] == 0) {
        throw ConfigError("kernel sizes must be positive");
    }
    if (conv3d_filters == 0 || gru_hidden == 0 || gru_layers == 0 || dense_units == 0) {
        throw ConfigError("layer widths must be positive");
    }
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
}

std::pair<std::size_t, std::size_t> ModelConfig::feature_size() const {
    std::size_t h = height, w = width;
    for (std::size_t i = 0; i < conv2d_filters.size(); ++i) {
        if (pool && h >= 2 && w >= 2) {
            h /= 2;
            w /= 2;
        }
    }
    return {h, w};
}

std::size_t ModelConfig::gru_input_size() const {
    if (bridge == Bridge::average) return conv3d_filters;
    const auto [h, w] = feature_size();
    return h * w * conv3d_filters;
}

std::string bridge_name(Bridge b) { return b == Bridge::average ? "average" : "flatten"; }

Bridge parse_bridge(const std::string& s) {
    if (s == "average") return Bridge::average;
    if (s == "flatten") return Bridge::flatten;
    throw ConfigError("unknown bridge '" + s + "' (expected average|flatten)");
}

std::vector<ParamSpec> param_specs(const ModelConfig& config) {
    config.validate();
    std::vector<ParamSpec> specs;
    const std::size_t k = config.conv2d_kernel;
    std::size_t cin = config.channels;
    for (std::size_t i = 0; i < config.conv2d_filters.size(); ++i) {
        const std::size_t cout = config.conv2d_filters[i];
        specs.push_back({"conv2d." + std::to_string(i) + ".weight", {k, k, cin, cout}});
        specs.push_back({"conv2d." + std::to_string(i) + ".bias", {cout}});
        cin = cout;
    }
    const auto& k3 = config.conv3d_kernel;
    specs.push_back({"conv3d.weight", {k3[0], k3[1], k3[2], cin, config.conv3d_filters}});
    specs.push_back({"conv3d.bias", {config.conv3d_filters}});
    std::size_t in = config.gru_input_size();
    const std::size_t hid = config.gru_hidden;
    for (std::size_t l = 0; l < config.gru_layers; ++l) {
        const std::string p = "gru." + std::to_string(l) + ".";
        specs.push_back({p + "Wz", {hid + in, hid}});
        specs.push_back({p + "Wr", {hid + in, hid}});
        specs.push_back({p + "W", {hid + in, hid}});
        specs.push_back({p + "z.bias", {hid}});
        specs.push_back({p + "r.bias", {hid}});
        specs.push_back({p + "h.bias", {hid}});
        in = hid;
    }
    specs.push_back({"dense.0.weight", {hid, config.dense_units}});
    specs.push_back({"dense.0.bias", {config.dense_units}});
    specs.push_back({"dense.1.weight", {config.dense_units, config.num_classes}});
    specs.push_back({"dense.1.bias", {config.num_classes}});
    return specs;
}

template <typename T>
void ParamSet<T>::add(std::string name, Tensor<T> value) {
    for (const auto& n : names_)
        if (n == name) throw ShapeError("duplicate parameter name " + name);
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
}

template <typename T>
bool ParamSet<T>::contains(const std::string& name) const {
    for (const auto& n : names_)
        if (n == name) return true;
    return false;
}

template <typename T>
std::size_t ParamSet<T>::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return i;
    throw ShapeError("missing parameter " + name);
}

template <typename T>
Tensor<T>& ParamSet<T>::at(const std::string& name) {
    return values_[index_of(name)];
}

template <typename T>
const Tensor<T>& ParamSet<T>::at(const std::string& name) const {
    return values_[index_of(name)];
}

template <typename T>
std::size_t ParamSet<T>::total_elements() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
    ParamSet out;
    for (std::size_t i = 0; i < names_.size(); ++i) out.add(names_[i], Tensor<T>(values_[i].shape()));
    return out;
}

template <typename T>
void check_state(const ModelState<T>& state, const ModelConfig& config) {
    std::ostringstream problems;
    const auto specs = param_specs(config);
    for (const auto& spec : specs) {
        if (!state.contains(spec.name)) {
            problems << "\n  missing " << spec.name << " " << shape_to_string(spec.shape);
        } else if (state.at(spec.name).shape() != spec.shape) {
            problems << "\n  " << spec.name << " has shape " << shape_to_string(state.at(spec.name).shape()) << ", expected "
                     << shape_to_string(spec.shape);
        }
    }
    for (const auto& name : state.names()) {
        bool known = false;
        for (const auto& spec : specs) known = known || spec.name == name;
        if (!known) problems << "\n  unexpected parameter " << name;
    }
    const std::string msg = problems.str();
    if (!msg.empty()) throw ShapeError("model state does not match config:" + msg);
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Glorot fan sizes: receptive field times channels for convolutions.
std::pair<double, double> fans(const Shape& shape) {
    if (shape.size() == 2) return {double(shape[0]), double(shape[1])};
    double receptive = 1.0;
    for (std::size_t i = 0; i + 2 < shape.size(); ++i) receptive *= double(shape[i]);
    return {receptive * double(shape[shape.size() - 2]), receptive * double(shape.back())};
}

template <typename T>
GruParams<T> gru_params(const ModelState<T>& state, std::size_t layer) {
    const std::string p = "gru." + std::to_string(layer) + ".";
    return {state.at(p + "Wz"), state.at(p + "Wr"), state.at(p + "W"),
            state.at(p + "z.bias"), state.at(p + "r.bias"), state.at(p + "h.bias")};
}

// (a, b, f) -> (b, a, f)
template <typename T>
Tensor<T> swap01(const Tensor<T>& x) {
    const std::size_t a = x.dim(0), b = x.dim(1), f = x.dim(2);
    Tensor<T> out({b, a, f});
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
            for (std::size_t k = 0; k < f; ++k) out[(j * a + i) * f + k] = x[(i * b + j) * f + k];
    return out;
}

}  // namespace

template <typename T>
ModelState<T> init_params(const ModelConfig& config, SeededRng& rng) {
    ModelState<T> state;
    for (const auto& spec : param_specs(config)) {
        Tensor<T> t(spec.shape);
        if (ends_with(spec.name, ".z.bias")) {
            for (auto& v : t.data()) v = T(-1);
        } else if (!ends_with(spec.name, ".bias")) {
            const auto [fan_in, fan_out] = fans(spec.shape);
            const double s = std::sqrt(6.0 / (fan_in + fan_out));
            for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-s, s));
        }
        state.add(spec.name, std::move(t));
    }
    return state;
}

template <typename T>
Tensor<T> model_logits(const Tensor<T>& input, const ModelState<T>& state, const ModelConfig& config,
                       ModelCache<T>* cache) {
    check_state(state, config);
    const Shape expect{input.rank() == 5 ? input.dim(0) : 0, config.frames, config.height, config.width, config.channels};
    if (input.shape() != expect) {
        throw ShapeError("model input " + shape_to_string(input.shape()) + " does not match config (batch," +
                         std::to_string(config.frames) + "," + std::to_string(config.height) + "," +
                         std::to_string(config.width) + "," + std::to_string(config.channels) + ")");
    }
    const std::size_t batch = input.dim(0), frames = config.frames;
    ModelCache<T> local;
    ModelCache<T>& c = cache ? *cache : local;
    c = ModelCache<T>{};
    c.batch = batch;

    // Shared-weight conv2d stack over every time slice of every clip.
    Tensor<T> x = input.reshaped({batch * frames, config.height, config.width, config.channels});
    for (std::size_t i = 0; i < config.conv2d_filters.size(); ++i) {
        const std::string p = "conv2d." + std::to_string(i) + ".";
        c.conv_in.push_back(x);
        Tensor<T> a = relu_forward(conv2d_forward(x, state.at(p + "weight"), state.at(p + "bias")));
        c.conv_act.push_back(a);
        const bool do_pool = config.pool && a.dim(1) >= 2 && a.dim(2) >= 2;
        c.pooled.push_back(do_pool);
        c.pools.emplace_back();
        x = do_pool ? maxpool2d_forward(a, c.pools.back()) : std::move(a);
    }

    // Re-join the slices along time and convolve in 3-D.
    const std::size_t fh = x.dim(1), fw = x.dim(2), fc = x.dim(3);
    c.conv3d_in = x.reshaped({batch, frames, fh, fw, fc});
    c.conv3d_act = relu_forward(conv3d_forward(c.conv3d_in, state.at("conv3d.weight"), state.at("conv3d.bias")));

    const std::size_t c3 = config.conv3d_filters;
    Tensor<T> seq;  // (batch, frames, features)
    if (config.bridge == Bridge::average) {
        seq = Tensor<T>({batch, frames, c3});
        const T inv = T(1) / T(fh * fw);
        for (std::size_t b = 0; b < batch * frames; ++b)
            for (std::size_t s = 0; s < fh * fw; ++s)
                for (std::size_t k = 0; k < c3; ++k) seq[b * c3 + k] += c.conv3d_act[(b * fh * fw + s) * c3 + k] * inv;
    } else {
        seq = c.conv3d_act.reshaped({batch, frames, fh * fw * c3});
    }

    Tensor<T> h_seq = swap01(seq);
    Tensor<T> last;
    c.gru.resize(config.gru_layers);
    for (std::size_t l = 0; l < config.gru_layers; ++l) {
        c.gru_in.push_back(h_seq);
        auto out = gru_forward(h_seq, gru_params(state, l), &c.gru[l]);
        h_seq = std::move(out.h_seq);
        last = std::move(out.h_final);
    }

    c.dense0_in = last;
    c.dense0_act = relu_forward(dense_forward(last, state.at("dense.0.weight"), state.at("dense.0.bias")));
    c.dense1_in = c.dense0_act;
    c.logits = dense_forward(c.dense0_act, state.at("dense.1.weight"), state.at("dense.1.bias"));
    return c.logits;
}

template <typename T>
Tensor<T> model_forward(const Tensor<T>& input, const ModelState<T>& state, const ModelConfig& config) {
    return softmax(model_logits(input, state, config));
}

template <typename T>
ModelState<T> model_backward(const Tensor<T>& grad_logits, const ModelCache<T>& cache, const ModelState<T>& state,
                             const ModelConfig& config) {
    if (cache.logits.empty()) throw UsageError("model_backward called without forward cache");
    if (grad_logits.shape() != cache.logits.shape()) {
        throw ShapeError("grad_logits " + shape_to_string(grad_logits.shape()) + " does not match logits " +
                         shape_to_string(cache.logits.shape()));
    }
    ModelState<T> grads = state.zeros_like();
    const std::size_t batch = cache.batch, frames = config.frames;

    auto g1 = dense_backward(grad_logits, cache.dense1_in, state.at("dense.1.weight"));
    grads.at("dense.1.weight") = std::move(g1.weight);
    grads.at("dense.1.bias") = std::move(g1.bias);
    auto g0 = dense_backward(relu_backward(g1.x, cache.dense0_act), cache.dense0_in, state.at("dense.0.weight"));
    grads.at("dense.0.weight") = std::move(g0.weight);
    grads.at("dense.0.bias") = std::move(g0.bias);

    // Only the final hidden state of the top GRU layer feeds the head.
    const std::size_t hid = config.gru_hidden;
    Tensor<T> grad_seq({frames, batch, hid});
    std::copy(g0.x.data().begin(), g0.x.data().end(), grad_seq.data().begin() + static_cast<std::ptrdiff_t>((frames - 1) * batch * hid));
    for (std::size_t l = config.gru_layers; l-- > 0;) {
        auto gg = gru_backward(grad_seq, cache.gru[l], gru_params(state, l));
        const std::string p = "gru." + std::to_string(l) + ".";
        grads.at(p + "Wz") = std::move(gg.params.wz);
        grads.at(p + "Wr") = std::move(gg.params.wr);
        grads.at(p + "W") = std::move(gg.params.wh);
        grads.at(p + "z.bias") = std::move(gg.params.bz);
        grads.at(p + "r.bias") = std::move(gg.params.br);
        grads.at(p + "h.bias") = std::move(gg.params.bh);
        grad_seq = std::move(gg.x_seq);
    }
    const Tensor<T> grad_bridge = swap01(grad_seq);  // (batch, frames, features)

    const Shape& act_shape = cache.conv3d_act.shape();
    const std::size_t fh = act_shape[2], fw = act_shape[3], c3 = act_shape[4];
    Tensor<T> grad_act(act_shape);
    if (config.bridge == Bridge::average) {
        const T inv = T(1) / T(fh * fw);
        for (std::size_t b = 0; b < batch * frames; ++b)
            for (std::size_t s = 0; s < fh * fw; ++s)
                for (std::size_t k = 0; k < c3; ++k) grad_act[(b * fh * fw + s) * c3 + k] = grad_bridge[b * c3 + k] * inv;
    } else {
        grad_act = grad_bridge.reshaped(act_shape);
    }
    auto g3 = conv3d_backward(relu_backward(grad_act, cache.conv3d_act), cache.conv3d_in, state.at("conv3d.weight"));
    grads.at("conv3d.weight") = std::move(g3.weight);
    grads.at("conv3d.bias") = std::move(g3.bias);

    const Shape& in_shape = cache.conv3d_in.shape();
    Tensor<T> gx = g3.x.reshaped({batch * frames, in_shape[2], in_shape[3], in_shape[4]});
    for (std::size_t i = config.conv2d_filters.size(); i-- > 0;) {
        const std::string p = "conv2d." + std::to_string(i) + ".";
        Tensor<T> ga = cache.pooled[i] ? maxpool2d_backward(gx, cache.pools[i]) : std::move(gx);
        auto gc = conv2d_backward(relu_backward(ga, cache.conv_act[i]), cache.conv_in[i], state.at(p + "weight"));
        grads.at(p + "weight") = std::move(gc.weight);
        grads.at(p + "bias") = std::move(gc.bias);
        gx = std::move(gc.x);
    }
    return grads;
}

#define STFLOW_INSTANTIATE(T)                                                                                         \
    template class ParamSet<T>;                                                                                       \
    template void check_state<T>(const ModelState<T>&, const ModelConfig&);                                           \
    template ModelState<T> init_params<T>(const ModelConfig&, SeededRng&);                                            \
    template Tensor<T> model_logits<T>(const Tensor<T>&, const ModelState<T>&, const ModelConfig&, ModelCache<T>*);   \
    template Tensor<T> model_forward<T>(const Tensor<T>&, const ModelState<T>&, const ModelConfig&);                  \
    template ModelState<T> model_backward<T>(const Tensor<T>&, const ModelCache<T>&, const ModelState<T>&,            \
                                             const ModelConfig&);

STFLOW_INSTANTIATE(float)
STFLOW_INSTANTIATE(double)

#undef STFLOW_INSTANTIATE

}  // namespace stflow
