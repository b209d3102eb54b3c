#include "stflow/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "stflow/rng.hpp"

namespace stflow {

std::string schedule_name(Schedule s) { return s == Schedule::constant ? "constant" : "optimal"; }
std::string penalty_name(Penalty p) { return p == Penalty::none ? "none" : "l2"; }

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
    if (schedule == Schedule::optimal) {
        if (!(t0 > 0.0)) throw ConfigError("t0 must be > 0 for the optimal schedule");
        if (alpha == 0.0) throw ConfigError("optimal schedule divides by alpha; alpha must be > 0");
    } else if (!(lr >= 0.0)) {
        throw ConfigError("learning rate must be >= 0");
    }
}

std::string history_csv(const TrainHistory& history) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,loss,acc,lr,seconds\n";
    for (const auto& e : history) os << e.epoch << ',' << e.loss << ',' << e.accuracy << ',' << e.lr << ',' << e.seconds << '\n';
    return os.str();
}

template <typename T>
LossResult<T> cce_loss(const Tensor<T>& probs, const Tensor<T>& onehot) {
    if (probs.rank() != 2 || probs.shape() != onehot.shape()) {
        throw ShapeError("cce_loss shape mismatch: " + shape_to_string(probs.shape()) + " vs " + shape_to_string(onehot.shape()));
    }
    const std::size_t batch = probs.dim(0), k = probs.dim(1);
    for (std::size_t i = 0; i < batch; ++i) {
        std::size_t ones = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const T y = onehot[i * k + j];
            if (y == T(1)) {
                ++ones;
            } else if (y != T(0)) {
                throw DataError("cce_loss: label row " + std::to_string(i) + " is not one-hot");
            }
        }
        if (ones != 1) throw DataError("cce_loss: label row " + std::to_string(i) + " is not one-hot");
    }
    LossResult<T> out{T(0), Tensor<T>(probs.shape())};
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (onehot[i] != T(0)) loss -= double(onehot[i]) * std::log(std::min(double(probs[i]) + kLogEpsilon, 1.0));
        out.grad_logits[i] = (probs[i] - onehot[i]) / T(batch);
    }
    out.loss = static_cast<T>(loss / double(batch));
    return out;
}

template <typename T>
Tensor<T> one_hot(std::span<const std::size_t> labels, std::size_t classes) {
    Tensor<T> out({labels.size(), classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) throw DataError("label " + std::to_string(labels[i]) + " out of range");
        out[i * classes + labels[i]] = T(1);
    }
    return out;
}

double lr_schedule(std::uint64_t t, const TrainConfig& config) {
    if (config.schedule == Schedule::constant) return config.lr;
    if (config.alpha == 0.0) throw ConfigError("optimal schedule divides by alpha; alpha must be > 0");
    return 1.0 / (config.alpha * (config.t0 + double(t)));
}

template <typename T>
void sgd_step(ModelState<T>& state, const ModelState<T>& grads, double eta, double alpha, Penalty penalty) {
    if (state.names() != grads.names()) throw ShapeError("sgd_step: gradient names do not match state");
    for (std::size_t p = 0; p < state.size(); ++p) {
        Tensor<T>& w = state.tensors()[p];
        const Tensor<T>& g = grads.tensors()[p];
        const std::string& name = state.names()[p];
        if (w.shape() != g.shape()) {
            throw ShapeError("sgd_step: " + name + " has shape " + shape_to_string(w.shape()) + " but gradient " +
                             shape_to_string(g.shape()));
        }
        const bool is_bias = name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
        const bool decay = penalty == Penalty::l2 && !is_bias && alpha != 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double reg = decay ? alpha * double(w[i]) : 0.0;
            w[i] = static_cast<T>(double(w[i]) - eta * (reg + double(g[i])));
        }
    }
}

std::size_t argmax_row(const TensorF& probs, std::size_t row) {
    const std::size_t k = probs.dim(1);
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
        if (probs[row * k + j] > probs[row * k + best]) best = j;
    return best;
}

namespace {

struct SampleResult {
    ModelState<float> grads;
    double loss = 0.0;
    bool correct = false;
};

TensorF batch_of_one(const Example& ex) {
    Shape s{1};
    for (auto d : ex.input.shape()) s.push_back(d);
    return ex.input.reshaped(std::move(s));
}

SampleResult sample_gradient(const Example& ex, const ModelState<float>& state, const ModelConfig& model,
                             std::size_t batch) {
    ModelCache<float> cache;
    const TensorF logits = model_logits(batch_of_one(ex), state, model, &cache);
    const TensorF probs = softmax(logits);
    const std::size_t label = ex.label;
    const TensorF y = one_hot<float>(std::span<const std::size_t>(&label, 1), model.num_classes);
    LossResult<float> loss = cce_loss(probs, y);
    // cce_loss divides by its own batch of one; rescale to the mini-batch mean.
    for (auto& v : loss.grad_logits.data()) v /= static_cast<float>(batch);
    return {model_backward(loss.grad_logits, cache, state, model), double(loss.loss), argmax_row(probs, 0) == label};
}

// Runs fn(i) for i in [0, n) across up to `threads` workers; each index is
// handled by exactly one worker and results are stored by index.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

TrainResult train(std::span<const Example> data, const ModelConfig& model, const TrainConfig& config,
                  ModelState<float> initial, const TrainOptions& options) {
    config.validate();
    check_state(initial, model);
    TrainResult result{std::move(initial), {}};
    if (config.epochs == 0) return result;
    if (data.empty()) throw DataError("training set is empty");

    SeededRng shuffle_rng(derive_seed(config.seed, "shuffle"));
    std::vector<std::size_t> order(data.size());
    std::uint64_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        double eta = 0.0;
        for (std::size_t first = 0, batch_index = 0; first < order.size(); first += config.batch_size, ++batch_index) {
            const std::size_t count = std::min(config.batch_size, order.size() - first);
            std::vector<SampleResult> per_sample(count);
            parallel_for(count, options.threads, [&](std::size_t i) {
                per_sample[i] = sample_gradient(data[order[first + i]], result.state, model, count);
            });

            ModelState<float> grads = std::move(per_sample[0].grads);
            double batch_loss = per_sample[0].loss;
            correct += per_sample[0].correct;
            for (std::size_t i = 1; i < count; ++i) {
                for (std::size_t p = 0; p < grads.size(); ++p) {
                    auto& acc = grads.tensors()[p];
                    const auto& g = per_sample[i].grads.tensors()[p];
                    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
                }
                batch_loss += per_sample[i].loss;
                correct += per_sample[i].correct;
            }
            eta = lr_schedule(step, config);
            if (!std::isfinite(batch_loss)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) + ", lr " + std::to_string(eta));
            }
            loss_sum += batch_loss;
            sgd_step(result.state, grads, eta, config.alpha, config.penalty);
            ++step;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_sum / double(data.size());
        rec.accuracy = double(correct) / double(data.size());
        rec.lr = eta;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.history.push_back(rec);
        if (options.on_epoch && !options.on_epoch(rec)) break;
    }
    return result;
}

TrainResult train(std::span<const Example> data, const ModelConfig& model, const TrainConfig& config,
                  const TrainOptions& options) {
    SeededRng rng(derive_seed(config.seed, "init"));
    return train(data, model, config, init_params<float>(model, rng), options);
}

TensorF predict_probs(std::span<const Example> data, const ModelState<float>& state, const ModelConfig& model,
                      std::size_t threads) {
    if (data.empty()) return TensorF();
    TensorF out({data.size(), model.num_classes});
    const std::size_t k = model.num_classes;
    parallel_for(data.size(), threads, [&](std::size_t i) {
        const TensorF p = model_forward(batch_of_one(data[i]), state, model);
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] = p[j];
    });
    return out;
}

std::vector<std::size_t> predict_labels(std::span<const Example> data, const ModelState<float>& state,
                                        const ModelConfig& model, std::size_t threads) {
    const TensorF probs = predict_probs(data, state, model, threads);
    std::vector<std::size_t> labels(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) labels[i] = argmax_row(probs, i);
    return labels;
}

template LossResult<float> cce_loss<float>(const TensorF&, const TensorF&);
template LossResult<double> cce_loss<double>(const TensorD&, const TensorD&);
template TensorF one_hot<float>(std::span<const std::size_t>, std::size_t);
template TensorD one_hot<double>(std::span<const std::size_t>, std::size_t);
template void sgd_step<float>(ModelState<float>&, const ModelState<float>&, double, double, Penalty);
template void sgd_step<double>(ModelState<double>&, const ModelState<double>&, double, double, Penalty);

}  // namespace stflow
