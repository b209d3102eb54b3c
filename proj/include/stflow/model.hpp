#pragma once

#include <array>
#include <string>
#include <vector>

#include "stflow/layers.hpp"
#include "stflow/rng.hpp"
#include "stflow/tensor.hpp"

namespace stflow {

// How the conv3d feature volume (t, h, w, c) becomes a GRU input sequence.
enum class Bridge {
    average,  // mean over h, w per channel: (t, c)
    flatten,  // (t, h * w * c)
};

struct ModelConfig {
    // Input clip geometry (time slices, height, width, channels).
    std::size_t frames = 20;
    std::size_t height = 128;
    std::size_t width = 128;
    std::size_t channels = 3;

    std::vector<std::size_t> conv2d_filters{20, 30, 40, 50, 32};
    std::size_t conv2d_kernel = 3;
    // 2x2 max pool after each conv2d; skipped for a layer whose input is
    // already narrower than 2 pixels in either dimension.
    bool pool = true;
    std::size_t conv3d_filters = 50;
    std::array<std::size_t, 3> conv3d_kernel{3, 3, 3};
    Bridge bridge = Bridge::average;
    std::size_t gru_hidden = 128;
    std::size_t gru_layers = 1;
    std::size_t dense_units = 200;
    std::size_t num_classes = 2;

    // Full-size architecture: 20 slices of 128x128x3.
    static ModelConfig paper();
    // 8x8 frames, 4 slices, two filters per layer; for gradient checks.
    static ModelConfig tiny();
    // 32x32 frames, 20 slices and small filter counts; desk-scale training.
    static ModelConfig reduced();

    void validate() const;
    // Spatial size (h, w) of the feature maps leaving the conv2d stack.
    std::pair<std::size_t, std::size_t> feature_size() const;
    std::size_t gru_input_size() const;
};

std::string bridge_name(Bridge b);
Bridge parse_bridge(const std::string& s);

struct ParamSpec {
    std::string name;
    Shape shape;
};

// Parameter names and shapes in their canonical order.
std::vector<ParamSpec> param_specs(const ModelConfig& config);

// Insertion-ordered name -> tensor table.
template <typename T>
class ParamSet {
public:
    void add(std::string name, Tensor<T> value);
    bool contains(const std::string& name) const;
    Tensor<T>& at(const std::string& name);
    const Tensor<T>& at(const std::string& name) const;

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    std::vector<Tensor<T>>& tensors() { return values_; }
    const std::vector<Tensor<T>>& tensors() const { return values_; }
    std::size_t total_elements() const;

    // Zero-filled set with the same names and shapes.
    ParamSet zeros_like() const;

    template <typename U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (std::size_t i = 0; i < names_.size(); ++i) out.add(names_[i], values_[i].template cast<U>());
        return out;
    }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;

private:
    std::size_t index_of(const std::string& name) const;

    std::vector<std::string> names_;
    std::vector<Tensor<T>> values_;
};

template <typename T>
using ModelState = ParamSet<T>;

// Throws ShapeError naming every missing, unexpected or mis-shaped parameter.
template <typename T>
void check_state(const ModelState<T>& state, const ModelConfig& config);

// Glorot-uniform weights, zero biases, update-gate bias -1.
template <typename T>
ModelState<T> init_params(const ModelConfig& config, SeededRng& rng);

// Intermediate activations kept for the backward pass.
template <typename T>
struct ModelCache {
    std::size_t batch = 0;
    std::vector<Tensor<T>> conv_in;   // input of each conv2d
    std::vector<Tensor<T>> conv_act;  // ReLU output of each conv2d
    std::vector<PoolCache> pools;
    std::vector<bool> pooled;
    Tensor<T> conv3d_in;
    Tensor<T> conv3d_act;
    std::vector<GruCache<T>> gru;
    std::vector<Tensor<T>> gru_in;    // (t, batch, features) into each GRU layer
    Tensor<T> dense0_in;
    Tensor<T> dense0_act;
    Tensor<T> dense1_in;
    Tensor<T> logits;
};

// Pre-softmax scores (batch, classes) for input (batch, frames, h, w, c).
template <typename T>
Tensor<T> model_logits(const Tensor<T>& input, const ModelState<T>& state, const ModelConfig& config,
                       ModelCache<T>* cache = nullptr);

// Class probabilities (batch, classes).
template <typename T>
Tensor<T> model_forward(const Tensor<T>& input, const ModelState<T>& state, const ModelConfig& config);

// Parameter gradients given d loss / d logits and the cache of the forward
// pass that produced those logits.
template <typename T>
ModelState<T> model_backward(const Tensor<T>& grad_logits, const ModelCache<T>& cache, const ModelState<T>& state,
                             const ModelConfig& config);

}  // namespace stflow
