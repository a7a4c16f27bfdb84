#pragma once
// Adam, early stopping, evaluation metrics, the per-fold training loop and
// the k-fold cross-validation driver.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sttn/data.hpp"
#include "sttn/layers.hpp"

namespace sttn {

using LogSink = std::function<void(std::string_view)>;

struct TrainConfig {
    double learning_rate = 2.5e-4;
    Index max_epochs = 300;
    Index patience = 20;
    Index batch_size = 32;
    std::uint64_t seed = 0;
    Index folds = 10;
    int jobs = 1;

    void validate() const;
};

struct AdamState {
    GradientBundle m;
    GradientBundle v;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_params(const ModelParams& params);
};

// Bias-corrected Adam update. Throws NumericError before touching anything
// when a gradient entry is not finite.
void adam_step(ModelParams& params, const GradientBundle& grads, AdamState& state, double lr);

// Improvement means strictly greater. The first observation is always best.
class EarlyStopping {
public:
    explicit EarlyStopping(Index patience) : patience_(patience) {}

    // Records the metric of 1-based `epoch`; returns true on a new best.
    bool observe(Index epoch, double metric);
    bool should_stop(Index epoch) const { return best_epoch_ > 0 && epoch - best_epoch_ >= patience_; }

    Index best_epoch() const { return best_epoch_; }
    double best_metric() const { return best_; }

private:
    Index patience_;
    Index best_epoch_ = 0;
    double best_ = 0.0;
};

using ConfusionMatrix = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Metrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    ConfusionMatrix confusion;  // rows true class, columns predicted
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    std::vector<bool> observed;  // class has at least one true sample
};

// Per-class F1 is 0 when undefined; classes with no true samples are left
// out of the macro average.
Metrics metrics_from_confusion(const ConfusionMatrix& confusion);

// Argmax of the logits, ties to the lowest class index.
Index predict(const ModelParams& params, const DenseTensor& window);

Metrics evaluate(const ModelParams& params, std::span<const WindowSample> windows);
Metrics evaluate(const ModelParams& params, std::span<const WindowSample> windows, std::span<const Index> subset);

struct TrainingCurves {
    std::vector<double> loss;          // mean weighted training loss per epoch
    std::vector<double> val_accuracy;  // validation accuracy after each epoch
};

struct FoldResult {
    Index fold = 0;
    ModelParams params;  // best-validation weights
    Metrics test;
    TrainingCurves curves;
    Index best_epoch = 0;
    Index stopped_epoch = 0;
    std::vector<Index> absent_classes;  // classes missing from the training portion
    double seconds = 0.0;
};

// Trains from `init` on roles.train, early-stops on roles.validation and
// reports roles.test metrics. NumericError is rethrown tagged with the fold.
FoldResult train_one_fold(std::span<const WindowSample> windows, const FoldRoles& roles, const ModelParams& init,
                          const TrainConfig& config, Index fold = 0, const LogSink& log = {});

// Same, initializing with init_params(model, seed).
FoldResult train_one_fold(std::span<const WindowSample> windows, const FoldRoles& roles, const ModelConfig& model,
                          const TrainConfig& config, Index fold = 0, const LogSink& log = {});

struct FoldFailure {
    Index fold = 0;
    std::string kind;
    std::string message;
};

struct FoldReport {
    std::vector<FoldResult> folds;  // completed folds in fold order
    std::vector<FoldFailure> failures;
    double mean_accuracy = 0.0;
    double mean_macro_f1 = 0.0;
};

// Fold f trains with seed config.seed + f. Up to config.jobs folds run at
// once. Throws the first failure if no fold completes.
FoldReport cross_validate(std::span<const WindowSample> windows, const ModelConfig& model, const TrainConfig& config,
                          const LogSink& log = {});

}  // namespace sttn
