#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stflow/model.hpp"

namespace stflow {

enum class Schedule { constant, optimal };
enum class Penalty { none, l2 };

std::string schedule_name(Schedule s);
std::string penalty_name(Penalty p);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    Schedule schedule = Schedule::constant;
    double lr = 0.01;    // eta_0 for the constant schedule
    double alpha = 0.0;  // regularization strength, also scales the inverse-time schedule
    double t0 = 1.0;     // inverse-time schedule offset
    Penalty penalty = Penalty::none;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
};

using TrainHistory = std::vector<EpochRecord>;

// CSV with header "epoch,loss,acc,lr,seconds".
std::string history_csv(const TrainHistory& history);

template <typename T>
struct LossResult {
    T loss;
    Tensor<T> grad_logits;  // d loss / d pre-softmax logits
};

inline constexpr double kLogEpsilon = 1e-12;

// Batch-mean categorical cross-entropy -(1/B) sum y ln(min(p + eps, 1)) and
// its fused softmax gradient (p - y) / B. The cap keeps the loss >= 0 when a
// probability is exactly 1.
template <typename T>
LossResult<T> cce_loss(const Tensor<T>& probs, const Tensor<T>& onehot);

template <typename T>
Tensor<T> one_hot(std::span<const std::size_t> labels, std::size_t classes);

// Learning rate for update t (0-based count of parameter updates).
double lr_schedule(std::uint64_t t, const TrainConfig& config);

// In place: w <- w - eta (alpha dR/dw + dL/dw) with R = |w|^2 / 2 under the
// L2 penalty. Parameters whose name ends in ".bias" are never regularized.
template <typename T>
void sgd_step(ModelState<T>& state, const ModelState<T>& grads, double eta, double alpha, Penalty penalty);

struct Example {
    std::string id;
    TensorF input;  // (frames, h, w, c)
    std::size_t label = 0;
};

struct TrainOptions {
    std::size_t threads = 1;
    // Called after each epoch; return false to stop early.
    std::function<bool(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    ModelState<float> state;
    TrainHistory history;
};

// Mini-batch SGD from the given starting state. Per-sample gradients are
// reduced in sample order, so results do not depend on the thread count.
TrainResult train(std::span<const Example> data, const ModelConfig& model, const TrainConfig& config,
                  ModelState<float> initial, const TrainOptions& options = {});

// Same, starting from init_params seeded by derive_seed(config.seed, "init").
TrainResult train(std::span<const Example> data, const ModelConfig& model, const TrainConfig& config,
                  const TrainOptions& options = {});

// Probabilities (n, classes) for each example, evaluated in chunks.
TensorF predict_probs(std::span<const Example> data, const ModelState<float>& state, const ModelConfig& model,
                      std::size_t threads = 1);
std::vector<std::size_t> predict_labels(std::span<const Example> data, const ModelState<float>& state,
                                        const ModelConfig& model, std::size_t threads = 1);

std::size_t argmax_row(const TensorF& probs, std::size_t row);

}  // namespace stflow
