#include "stflow/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "stflow/rng.hpp"
#include "stflow/serialize.hpp"

namespace stflow {

std::vector<FoldSplit> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold needs k >= 2");
    if (k > n) throw ConfigError("k-fold needs k <= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    SeededRng rng(derive_seed(seed, "kfold"));
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

    std::vector<FoldSplit> folds(k);
    std::size_t start = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t len = n / k + (f < n % k ? 1 : 0);
        for (std::size_t i = 0; i < n; ++i) {
            const bool in_block = i >= start && i < start + len;
            (in_block ? folds[f].test : folds[f].train).push_back(perm[i]);
        }
        std::sort(folds[f].test.begin(), folds[f].test.end());
        std::sort(folds[f].train.begin(), folds[f].train.end());
        start += len;
    }
    return folds;
}

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
    if (classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

ConfusionMatrix::ConfusionMatrix(std::size_t classes, std::vector<std::uint64_t> counts)
    : classes_(classes), counts_(std::move(counts)) {
    if (classes == 0 || counts_.size() != classes * classes) throw ShapeError("confusion counts must be classes x classes");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
    if (truth >= classes_ || predicted >= classes_) {
        throw DataError("class index out of range (truth " + std::to_string(truth) + ", predicted " +
                        std::to_string(predicted) + ", classes " + std::to_string(classes_) + ")");
    }
    ++counts_[truth * classes_ + predicted];
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < classes_; ++i) t += at(i, i);
    return t;
}

nlohmann::json ConfusionMatrix::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < classes_; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < classes_; ++j) row.push_back(at(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> preds, std::span<const std::size_t> labels, std::size_t classes) {
    if (preds.size() != labels.size()) {
        throw ShapeError("confusion_matrix: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
    }
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < preds.size(); ++i) cm.add(labels[i], preds[i]);
    return cm;
}

double accuracy_from_confusion(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) throw DataError("accuracy of an empty confusion matrix is undefined");
    return double(cm.trace()) / double(total);
}

double mean_accuracy(std::span<const double> fold_accuracies) {
    if (fold_accuracies.empty()) throw DataError("mean_accuracy of zero folds");
    double sum = 0.0;
    for (double a : fold_accuracies) sum += a;
    return sum / double(fold_accuracies.size());
}

nlohmann::json CrossValidationReport::to_json() const {
    nlohmann::json fj = nlohmann::json::array();
    for (const auto& f : folds) {
        fj.push_back({{"fold", f.fold},
                      {"confusion", f.confusion.to_json()},
                      {"accuracy", f.accuracy},
                      {"train_ids", f.train_ids},
                      {"test_ids", f.test_ids},
                      {"history", f.history}});
    }
    return {{"folds", fj}, {"mean_accuracy", mean_accuracy}, {"config", config}};
}

std::string CrossValidationReport::to_text(const std::vector<std::string>& class_names) const {
    std::ostringstream os;
    char buf[128];
    os << "Fold     Train  Test  Accuracy\n";
    for (const auto& f : folds) {
        std::snprintf(buf, sizeof(buf), "Fold#%-3zu %5zu %5zu  %7.2f%%\n", f.fold + 1, f.train_ids.size(), f.test_ids.size(),
                      100.0 * f.accuracy);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "Mean accuracy: %.2f%%\n", 100.0 * mean_accuracy);
    os << buf;
    for (const auto& f : folds) {
        os << "\nConfusion, fold " << f.fold + 1 << " (rows = true, columns = predicted)\n";
        const std::size_t k = f.confusion.classes();
        for (std::size_t i = 0; i < k; ++i) {
            const std::string name = i < class_names.size() ? class_names[i] : std::to_string(i);
            std::snprintf(buf, sizeof(buf), "  %-12s", name.c_str());
            os << buf;
            for (std::size_t j = 0; j < k; ++j) {
                std::snprintf(buf, sizeof(buf), " %6llu", static_cast<unsigned long long>(f.confusion.at(i, j)));
                os << buf;
            }
            os << '\n';
        }
    }
    return os.str();
}

CrossValidationReport cross_validate(std::span<const Example> data, const ModelConfig& model, const TrainConfig& train_config,
                                     const CrossValidationOptions& options) {
    const auto splits = kfold_split(data.size(), options.k, options.seed);
    CrossValidationReport report;
    std::vector<double> accs;
    for (std::size_t f = 0; f < splits.size(); ++f) {
        std::vector<Example> train_set, test_set;
        FoldReport fr;
        fr.fold = f;
        for (auto i : splits[f].train) {
            train_set.push_back(data[i]);
            fr.train_ids.push_back(data[i].id);
        }
        for (auto i : splits[f].test) {
            test_set.push_back(data[i]);
            fr.test_ids.push_back(data[i].id);
        }
        TrainConfig cfg = train_config;
        cfg.seed = options.seed + f;
        try {
            TrainResult tr = train(train_set, model, cfg, options.train);
            const auto preds = predict_labels(test_set, tr.state, model, options.train.threads);
            std::vector<std::size_t> labels;
            for (const auto& e : test_set) labels.push_back(e.label);
            fr.confusion = confusion_matrix(preds, labels, model.num_classes);
            fr.history = std::move(tr.history);
        } catch (const NumericError& e) {
            throw NumericError("fold " + std::to_string(f) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("fold " + std::to_string(f) + ": " + e.what());
        }
        fr.accuracy = accuracy_from_confusion(fr.confusion);
        accs.push_back(fr.accuracy);
        report.folds.push_back(std::move(fr));
    }
    report.mean_accuracy = mean_accuracy(accs);
    report.config = {{"k", options.k}, {"seed", options.seed}, {"model", model}, {"train", train_config}};
    return report;
}

}  // namespace stflow
