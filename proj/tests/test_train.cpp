#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "sttn/csp.hpp"
#include "sttn/train.hpp"
#include "support.hpp"

using namespace sttn;

namespace {

// Two-class variance-contrast windows, the same C x T signal on all three modalities.
std::vector<WindowSample> contrast_windows(Index per_class, std::uint64_t seed) {
    const auto task = generate_variance_contrast(4, 20, per_class, 3.0, 1, seed);
    std::vector<WindowSample> out;
    for (std::size_t i = 0; i < task.samples.size(); ++i) {
        WindowSample w;
        w.tensor = DenseTensor(Shape{4, 20, 3});
        for (Index c = 0; c < 4; ++c)
            for (Index t = 0; t < 20; ++t)
                for (Index a = 0; a < 3; ++a) w.tensor(c, t, a) = task.samples[i](c, t);
        w.label = task.labels[i];
        w.sequence_id = "V";
        w.center_frame = static_cast<std::int64_t>(i);
        out.push_back(std::move(w));
    }
    return out;
}

ModelConfig contrast_model() { return make_cubic_config(2, 4, {2}, 2); }

TrainConfig fast_config() {
    TrainConfig c;
    c.learning_rate = 0.02;
    c.max_epochs = 40;
    c.patience = 15;
    c.batch_size = 16;
    c.seed = 4;
    return c;
}

ConfusionMatrix confusion(std::initializer_list<std::initializer_list<Index>> rows) {
    ConfusionMatrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.size()));
    Index i = 0;
    for (const auto& r : rows) {
        Index j = 0;
        for (Index v : r) m(i, j++) = v;
        ++i;
    }
    return m;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
    ModelParams p = init_params(contrast_model(), 1);
    const ModelParams before = p;
    AdamState s = AdamState::for_params(p);
    for (int k = 0; k < 5; ++k) adam_step(p, zeros_like(p), s, 0.1);
    EXPECT_EQ(flatten(p), flatten(before));
    EXPECT_EQ(s.step, 5);
}

TEST(Adam, FirstStepIsBoundedByLearningRate) {
    SplitMix64 rng(70);
    ModelParams p = init_params(contrast_model(), 2);
    const auto before = flatten(p);
    GradientBundle g = zeros_like(p);
    for_each_block(g, [&](std::span<double> b) {
        for (double& v : b) v = rng.normal() * 1e3;
    });
    AdamState s = AdamState::for_params(p);
    adam_step(p, g, s, 1e-3);
    const auto after = flatten(p), gf = flatten(g);
    for (std::size_t i = 0; i < before.size(); ++i) {
        const double d = after[i] - before[i];
        EXPECT_LE(std::abs(d), 1e-3 * (1.0 + 1e-12));
        // bias-corrected first step is lr * sign(g) up to epsilon
        EXPECT_NEAR(d, -1e-3 * gf[i] / (std::abs(gf[i]) + 1e-8), 1e-12);
    }
}

TEST(Adam, DescendsQuadraticBowl) {
    ModelParams p = init_params(contrast_model(), 3);
    for_each_block(p, [](std::span<double> b) {
        for (double& v : b) v = 1.0;
    });
    AdamState s = AdamState::for_params(p);
    // gradient of 0.5 ||x||^2 is x
    for (int k = 0; k < 100; ++k) adam_step(p, p, s, 0.1);
    double norm2 = 0.0;
    for (double v : flatten(p)) norm2 += v * v;
    EXPECT_LT(std::sqrt(norm2), 0.1 * std::sqrt(static_cast<double>(allocated_param_count(p))));
    for (double v : flatten(p)) EXPECT_LT(std::abs(v), 0.1);
}

TEST(Adam, NonFiniteGradientThrowsBeforeUpdate) {
    ModelParams p = init_params(contrast_model(), 4);
    const auto before = flatten(p);
    GradientBundle g = zeros_like(p);
    g.trl.classes[1].bias = std::nan("");
    AdamState s = AdamState::for_params(p);
    EXPECT_THROW(adam_step(p, g, s, 0.1), NumericError);
    EXPECT_EQ(flatten(p), before);
    EXPECT_EQ(s.step, 0);
}

TEST(EarlyStopping, ConstantMetricStopsAfterPatience) {
    EarlyStopping es(20);
    Index stopped = 0;
    for (Index e = 1; e <= 300; ++e) {
        es.observe(e, 0.5);
        if (es.should_stop(e)) {
            stopped = e;
            break;
        }
    }
    EXPECT_EQ(stopped, 21);
    EXPECT_EQ(es.best_epoch(), 1);
}

TEST(EarlyStopping, StrictImprovementOnly) {
    EarlyStopping es(3);
    EXPECT_TRUE(es.observe(1, 0.2));
    EXPECT_FALSE(es.observe(2, 0.2));
    EXPECT_TRUE(es.observe(3, 0.3));
    EXPECT_FALSE(es.observe(4, 0.1));
    EXPECT_FALSE(es.should_stop(5));
    EXPECT_TRUE(es.should_stop(6));
    EXPECT_EQ(es.best_epoch(), 3);
    EXPECT_EQ(es.best_metric(), 0.3);
}

TEST(EarlyStopping, TrainingPlateauStopsAtPatiencePlusOne) {
    const auto windows = contrast_windows(30, 71);
    const auto split = split_10fold(static_cast<Index>(windows.size()), 1);
    TrainConfig c = fast_config();
    c.learning_rate = 1e-300;  // parameters never move measurably
    c.max_epochs = 100;
    c.patience = 20;
    const auto r = train_one_fold(windows, split.roles[0], contrast_model(), c);
    EXPECT_EQ(r.stopped_epoch, 21);
    EXPECT_EQ(r.best_epoch, 1);
    EXPECT_EQ(r.curves.val_accuracy.size(), 21u);
}

TEST(Metrics, HandBuiltConfusion) {
    const auto m = metrics_from_confusion(confusion({{2, 1, 0}, {0, 2, 0}, {1, 0, 1}}));
    EXPECT_NEAR(m.accuracy, 5.0 / 7.0, 1e-15);
    EXPECT_NEAR(m.precision[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(m.recall[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(m.precision[1], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(m.recall[1], 1.0, 1e-15);
    EXPECT_NEAR(m.precision[2], 1.0, 1e-15);
    EXPECT_NEAR(m.recall[2], 0.5, 1e-15);
    const double f1 = (2.0 / 3.0 + 0.8 + 2.0 / 3.0) / 3.0;
    EXPECT_NEAR(m.macro_f1, f1, 1e-15);
}

TEST(Metrics, MajorityPredictorOnReferenceCounts) {
    const std::array<Index, 7> counts{908, 1503, 134, 104, 97, 114, 437};
    ConfusionMatrix c = ConfusionMatrix::Zero(7, 7);
    for (Index l = 0; l < 7; ++l) c(l, 0) = counts[static_cast<std::size_t>(l)];
    const auto m = metrics_from_confusion(c);
    EXPECT_NEAR(m.accuracy, 908.0 / 3297.0, 1e-15);
    EXPECT_NEAR(m.f1[0], 2.0 * 908.0 / (908.0 + 3297.0), 1e-15);
    EXPECT_NEAR(m.macro_f1, m.f1[0] / 7.0, 1e-15);
}

TEST(Metrics, PerfectAndMissingClasses) {
    const auto m = metrics_from_confusion(confusion({{3, 0, 0}, {0, 4, 0}, {0, 0, 0}}));
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.macro_f1, 1.0);
    EXPECT_FALSE(m.observed[2]);
    EXPECT_EQ(m.f1[2], 0.0);
}

TEST(Predict, TiesGoToLowestIndex) {
    const ModelConfig c = make_cubic_config(2, 4, {2}, 3);
    ModelParams p = make_zero_params(c);
    SplitMix64 rng(72);
    const auto s = test::random_tensor(rng, {4, 6, 3});
    EXPECT_EQ(predict(p, s), 0);
    p.trl.classes[1].bias = 1.0;
    p.trl.classes[2].bias = 1.0;
    EXPECT_EQ(predict(p, s), 1);
}

TEST(TrainOneFold, DeterministicAndLearnsSeparableTask) {
    const auto windows = contrast_windows(60, 73);
    const auto split = split_10fold(static_cast<Index>(windows.size()), 2);
    std::vector<Index> all(windows.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Index>(i);
    const auto a = train_one_fold(windows, split.roles[3], contrast_model(), fast_config(), 3);
    const auto b = train_one_fold(windows, split.roles[3], contrast_model(), fast_config(), 3);
    EXPECT_EQ(flatten(a.params), flatten(b.params));
    EXPECT_EQ(a.curves.loss, b.curves.loss);
    EXPECT_GE(evaluate(a.params, windows, all).accuracy, 0.95);
    EXPECT_LT(a.curves.loss.back(), a.curves.loss.front());
    EXPECT_EQ(a.fold, 3);
    EXPECT_LE(a.best_epoch, a.stopped_epoch);
}

TEST(TrainOneFold, ReportsAbsentClassesAndRejectsEmptyRoles) {
    auto windows = contrast_windows(20, 74);
    const auto split = split_10fold(static_cast<Index>(windows.size()), 3);
    const ModelConfig three = make_cubic_config(2, 4, {2}, 3);
    TrainConfig c = fast_config();
    c.max_epochs = 3;
    c.patience = 2;
    std::vector<std::string> lines;
    const auto r = train_one_fold(windows, split.roles[0], three, c, 0, [&](std::string_view s) { lines.emplace_back(s); });
    EXPECT_EQ(r.absent_classes, (std::vector<Index>{2}));
    ASSERT_FALSE(lines.empty());
    EXPECT_NE(lines.front().find("absent"), std::string::npos);

    FoldRoles empty = split.roles[0];
    empty.validation.clear();
    EXPECT_THROW(train_one_fold(windows, empty, three, c), DataError);
    c.patience = 3;
    EXPECT_THROW(train_one_fold(windows, split.roles[0], three, c), ConfigError);
}

TEST(TrainOneFold, DivergenceNamesFold) {
    const auto windows = contrast_windows(20, 75);
    const auto split = split_10fold(static_cast<Index>(windows.size()), 4);
    ModelParams p = init_params(make_cubic_config(2, 4, {2}, 2, Activation::identity), 5);
    for (auto& f : p.tcls[0].factors) f.setConstant(1e300);
    TrainConfig c = fast_config();
    try {
        train_one_fold(windows, split.roles[0], p, c, 6);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_EQ(e.where().rfind("fold 6/", 0), 0u) << e.where();
    }
}

TEST(CrossValidate, TenFoldsAggregateAndParallelAgreement) {
    const auto windows = contrast_windows(30, 76);
    TrainConfig c = fast_config();
    c.max_epochs = 12;
    c.patience = 5;
    const auto serial = cross_validate(windows, contrast_model(), c);
    ASSERT_EQ(serial.folds.size(), 10u);
    EXPECT_TRUE(serial.failures.empty());
    double acc = 0.0, f1 = 0.0;
    Index tested = 0;
    for (std::size_t f = 0; f < 10; ++f) {
        EXPECT_EQ(serial.folds[f].fold, static_cast<Index>(f));
        acc += serial.folds[f].test.accuracy;
        f1 += serial.folds[f].test.macro_f1;
        tested += serial.folds[f].test.confusion.sum();
    }
    EXPECT_NEAR(serial.mean_accuracy, acc / 10.0, 1e-15);
    EXPECT_NEAR(serial.mean_macro_f1, f1 / 10.0, 1e-15);
    EXPECT_EQ(tested, static_cast<Index>(windows.size()));

    c.jobs = 4;
    const auto parallel = cross_validate(windows, contrast_model(), c);
    ASSERT_EQ(parallel.folds.size(), 10u);
    for (std::size_t f = 0; f < 10; ++f) EXPECT_EQ(flatten(parallel.folds[f].params), flatten(serial.folds[f].params));
    EXPECT_EQ(parallel.mean_accuracy, serial.mean_accuracy);
}
