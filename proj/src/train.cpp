#include "sttn/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include "sttn/gradients.hpp"
#include "sttn/random.hpp"

namespace sttn {

namespace {

std::vector<std::span<double>> blocks(ModelParams& p) {
    std::vector<std::span<double>> out;
    for_each_block(p, [&](std::span<double> s) { out.push_back(s); });
    return out;
}

std::vector<std::span<const double>> blocks(const ModelParams& p) {
    std::vector<std::span<const double>> out;
    for_each_block(p, [&](auto s) { out.push_back(std::span<const double>(s.data(), s.size())); });
    return out;
}

void check_congruent(const std::vector<std::span<double>>& a, const std::vector<std::span<const double>>& b,
                     const char* what) {
    bool ok = a.size() == b.size();
    for (std::size_t i = 0; ok && i < a.size(); ++i) ok = a[i].size() == b[i].size();
    if (!ok) throw ShapeError(std::string(what) + ": parameter structures differ");
}

}  // namespace

void TrainConfig::validate() const {
    std::vector<std::string> problems;
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) problems.push_back("learning_rate must be positive");
    if (max_epochs < 1) problems.push_back("max_epochs must be >= 1");
    if (patience < 1) problems.push_back("patience must be >= 1");
    if (patience >= max_epochs) problems.push_back("patience must be smaller than max_epochs");
    if (batch_size < 1) problems.push_back("batch_size must be >= 1");
    if (folds < 2) problems.push_back("folds must be >= 2");
    if (jobs < 1) problems.push_back("jobs must be >= 1");
    if (!problems.empty()) {
        std::string msg = "invalid training config:";
        for (auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg, "train");
    }
}

AdamState AdamState::for_params(const ModelParams& params) {
    AdamState s;
    s.m = zeros_like(params);
    s.v = zeros_like(params);
    return s;
}

void adam_step(ModelParams& params, const GradientBundle& grads, AdamState& state, double lr) {
    auto p = blocks(params);
    auto g = blocks(grads);
    auto m = blocks(state.m);
    auto v = blocks(state.v);
    check_congruent(p, g, "adam_step");
    check_congruent(m, g, "adam_step");
    check_congruent(v, g, "adam_step");
    for (const auto& b : g)
        for (double x : b)
            if (!std::isfinite(x)) throw NumericError("adam", "non-finite gradient");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t b = 0; b < p.size(); ++b) {
        for (std::size_t i = 0; i < p[b].size(); ++i) {
            const double gi = g[b][i];
            m[b][i] = state.beta1 * m[b][i] + (1.0 - state.beta1) * gi;
            v[b][i] = state.beta2 * v[b][i] + (1.0 - state.beta2) * gi * gi;
            const double mhat = m[b][i] / c1;
            const double vhat = v[b][i] / c2;
            p[b][i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

bool EarlyStopping::observe(Index epoch, double metric) {
    if (best_epoch_ == 0 || metric > best_) {
        best_ = metric;
        best_epoch_ = epoch;
        return true;
    }
    return false;
}

Metrics metrics_from_confusion(const ConfusionMatrix& confusion) {
    if (confusion.rows() != confusion.cols() || confusion.rows() < 1) {
        throw ShapeError("metrics_from_confusion: confusion matrix must be square and nonempty");
    }
    const Index l = confusion.rows();
    Metrics out;
    out.confusion = confusion;
    out.precision.assign(static_cast<std::size_t>(l), 0.0);
    out.recall.assign(static_cast<std::size_t>(l), 0.0);
    out.f1.assign(static_cast<std::size_t>(l), 0.0);
    out.observed.assign(static_cast<std::size_t>(l), false);

    const Index total = confusion.sum();
    out.accuracy = total > 0 ? static_cast<double>(confusion.trace()) / static_cast<double>(total) : 0.0;

    double f1_sum = 0.0;
    Index counted = 0;
    for (Index c = 0; c < l; ++c) {
        const auto k = static_cast<std::size_t>(c);
        const double tp = static_cast<double>(confusion(c, c));
        const double true_count = static_cast<double>(confusion.row(c).sum());
        const double pred_count = static_cast<double>(confusion.col(c).sum());
        if (pred_count > 0) out.precision[k] = tp / pred_count;
        if (true_count > 0) out.recall[k] = tp / true_count;
        if (out.precision[k] + out.recall[k] > 0)
            out.f1[k] = 2.0 * out.precision[k] * out.recall[k] / (out.precision[k] + out.recall[k]);
        out.observed[k] = true_count > 0;
        if (out.observed[k]) {
            f1_sum += out.f1[k];
            ++counted;
        }
    }
    out.macro_f1 = counted > 0 ? f1_sum / static_cast<double>(counted) : 0.0;
    return out;
}

Index predict(const ModelParams& params, const DenseTensor& window) {
    const VectorXd logits = model_forward(params, window);
    Index best = 0;
    for (Index l = 1; l < logits.size(); ++l)
        if (logits[l] > logits[best]) best = l;
    return best;
}

Metrics evaluate(const ModelParams& params, std::span<const WindowSample> windows, std::span<const Index> subset) {
    if (subset.empty()) throw DataError("evaluate: no windows");
    const auto l = static_cast<Index>(params.trl.classes.size());
    ConfusionMatrix confusion = ConfusionMatrix::Zero(l, l);
    for (Index i : subset) {
        const auto& w = windows[static_cast<std::size_t>(i)];
        if (w.label < 0 || w.label >= l) throw DataError("evaluate: label outside the model's classes");
        ++confusion(w.label, predict(params, w.tensor));
    }
    return metrics_from_confusion(confusion);
}

Metrics evaluate(const ModelParams& params, std::span<const WindowSample> windows) {
    std::vector<Index> all(windows.size());
    std::iota(all.begin(), all.end(), Index{0});
    return evaluate(params, windows, all);
}

FoldResult train_one_fold(std::span<const WindowSample> windows, const FoldRoles& roles, const ModelParams& init,
                          const TrainConfig& config, Index fold, const LogSink& log) {
    config.validate();
    if (roles.train.empty() || roles.validation.empty() || roles.test.empty()) {
        throw DataError("fold " + std::to_string(fold) + ": train, validation and test roles must be nonempty");
    }
    const auto start = std::chrono::steady_clock::now();
    const auto num_classes = static_cast<Index>(init.trl.classes.size());

    std::vector<Index> train_labels;
    for (Index i : roles.train) train_labels.push_back(windows[static_cast<std::size_t>(i)].label);
    const ClassWeights weights = class_weights(train_labels, num_classes);
    if (!weights.absent.empty() && log) {
        log("fold " + std::to_string(fold) + ": " + std::to_string(weights.absent.size()) +
            " class(es) absent from training, weight 0");
    }

    FoldResult result;
    result.fold = fold;
    result.absent_classes = weights.absent;

    ModelParams params = init;
    ModelParams best = init;
    AdamState adam = AdamState::for_params(params);
    EarlyStopping stopper(config.patience);
    SplitMix64 rng(derive_seed(config.seed, 1));
    std::vector<Index> order = roles.train;
    const auto n = static_cast<Index>(order.size());

    try {
        for (Index epoch = 1; epoch <= config.max_epochs; ++epoch) {
            rng.shuffle(std::span(order));
            double loss_sum = 0.0;
            for (Index begin = 0; begin < n; begin += config.batch_size) {
                const Index end = std::min(n, begin + config.batch_size);
                GradientBundle batch = zeros_like(params);
                auto acc = blocks(batch);
                for (Index k = begin; k < end; ++k) {
                    const auto& w = windows[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
                    const LossAndGradient lg = backward(params, w.tensor, w.label, weights.weights);
                    loss_sum += lg.loss;
                    auto g = blocks(lg.grads);
                    for (std::size_t b = 0; b < acc.size(); ++b)
                        for (std::size_t i = 0; i < acc[b].size(); ++i) acc[b][i] += g[b][i];
                }
                const double scale = 1.0 / static_cast<double>(end - begin);
                for (auto& b : acc)
                    for (double& x : b) x *= scale;
                adam_step(params, batch, adam, config.learning_rate);
            }
            const double val = evaluate(params, windows, roles.validation).accuracy;
            result.curves.loss.push_back(loss_sum / static_cast<double>(n));
            result.curves.val_accuracy.push_back(val);
            if (stopper.observe(epoch, val)) best = params;
            result.stopped_epoch = epoch;
            if (stopper.should_stop(epoch)) break;
        }
    } catch (const NumericError& e) {
        throw NumericError("fold " + std::to_string(fold) + "/" + e.where(), e.what());
    }

    result.best_epoch = stopper.best_epoch();
    result.params = std::move(best);
    result.test = evaluate(result.params, windows, roles.test);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log) {
        char line[160];
        std::snprintf(line, sizeof(line), "fold %lld: stopped at epoch %lld (best %lld), test acc %.4f, macro-F1 %.4f",
                      static_cast<long long>(fold), static_cast<long long>(result.stopped_epoch),
                      static_cast<long long>(result.best_epoch), result.test.accuracy, result.test.macro_f1);
        log(line);
    }
    return result;
}

FoldResult train_one_fold(std::span<const WindowSample> windows, const FoldRoles& roles, const ModelConfig& model,
                          const TrainConfig& config, Index fold, const LogSink& log) {
    model.validate();
    return train_one_fold(windows, roles, init_params(model, derive_seed(config.seed, 0)), config, fold, log);
}

FoldReport cross_validate(std::span<const WindowSample> windows, const ModelConfig& model, const TrainConfig& config,
                          const LogSink& log) {
    model.validate();
    config.validate();
    const DatasetSplit split = split_kfold(static_cast<Index>(windows.size()), config.seed, config.folds);

    std::vector<std::optional<FoldResult>> done(static_cast<std::size_t>(config.folds));
    std::vector<std::optional<FoldFailure>> failed(static_cast<std::size_t>(config.folds));
    std::exception_ptr first_error;
    std::mutex log_mutex;
    LogSink guarded;
    if (log) {
        guarded = [&](std::string_view s) {
            std::lock_guard lock(log_mutex);
            log(s);
        };
    }

    std::atomic<Index> next{0};
    auto worker = [&] {
        for (Index f = next++; f < config.folds; f = next++) {
            const auto k = static_cast<std::size_t>(f);
            TrainConfig fold_config = config;
            fold_config.seed = config.seed + static_cast<std::uint64_t>(f);
            try {
                done[k] = train_one_fold(windows, split.roles[k], model, fold_config, f, guarded);
            } catch (const Error& e) {
                failed[k] = FoldFailure{f, e.kind(), e.what()};
                std::lock_guard lock(log_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const int threads = std::max(1, std::min<int>(config.jobs, static_cast<int>(config.folds)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    FoldReport report;
    for (std::size_t k = 0; k < done.size(); ++k) {
        if (done[k]) report.folds.push_back(std::move(*done[k]));
        if (failed[k]) report.failures.push_back(*failed[k]);
    }
    if (report.folds.empty()) std::rethrow_exception(first_error);
    for (const auto& f : report.folds) {
        report.mean_accuracy += f.test.accuracy;
        report.mean_macro_f1 += f.test.macro_f1;
    }
    report.mean_accuracy /= static_cast<double>(report.folds.size());
    report.mean_macro_f1 /= static_cast<double>(report.folds.size());
    if (!report.failures.empty() && log) {
        log("warning: aggregate covers " + std::to_string(report.folds.size()) + " of " +
            std::to_string(config.folds) + " folds");
    }
    return report;
}

}  // namespace sttn
