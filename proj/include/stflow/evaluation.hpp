#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "stflow/training.hpp"

namespace stflow {

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Seeded permutation of [0, n) cut into k contiguous blocks; the first
// n mod k blocks hold one extra index. Fold i tests on block i. Index lists
// are returned in ascending order.
std::vector<FoldSplit> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes = 2);
    ConfusionMatrix(std::size_t classes, std::vector<std::uint64_t> counts);

    std::size_t classes() const { return classes_; }
    std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
    void add(std::size_t truth, std::size_t predicted);
    std::uint64_t total() const;
    std::uint64_t trace() const;
    const std::vector<std::uint64_t>& counts() const { return counts_; }

    // Nested rows, e.g. [[43,3],[18,28]].
    nlohmann::json to_json() const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t classes_;
    std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> preds, std::span<const std::size_t> labels, std::size_t classes);

// trace / total.
double accuracy_from_confusion(const ConfusionMatrix& cm);

// Unweighted mean of per-fold accuracies.
double mean_accuracy(std::span<const double> fold_accuracies);

struct FoldReport {
    std::size_t fold = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    TrainHistory history;
};

struct CrossValidationReport {
    std::vector<FoldReport> folds;
    double mean_accuracy = 0.0;
    nlohmann::json config = nlohmann::json::object();

    // {folds: [{fold, confusion, accuracy, train_ids, test_ids}], mean_accuracy, config}
    nlohmann::json to_json() const;
    // Fold/accuracy table followed by one confusion block per fold.
    std::string to_text(const std::vector<std::string>& class_names = {}) const;
};

struct CrossValidationOptions {
    std::size_t k = 5;
    std::uint64_t seed = 0;
    TrainOptions train;
};

// Fold i trains from init_params seeded with seed + i (through
// TrainConfig::seed) and is scored on its held-out block.
CrossValidationReport cross_validate(std::span<const Example> data, const ModelConfig& model, const TrainConfig& train_config,
                                     const CrossValidationOptions& options);

}  // namespace stflow
