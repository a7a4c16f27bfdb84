#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "sttn/gradients.hpp"
#include "sttn/loss.hpp"
#include "support.hpp"

using namespace sttn;
using sttn::test::random_matrix;
using sttn::test::random_tensor;

namespace {

VectorXd naive_softmax(const VectorXd& x) {
    VectorXd e = x.array().exp();
    return e / e.sum();
}

std::vector<double> random_weights(SplitMix64& rng, Index n) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (double& v : w) v = rng.uniform(0.5, 2.0);
    return w;
}

ModelConfig tiny_config(Activation act = Activation::sigmoid) {
    ModelConfig c = make_cubic_config(3, 4, {2}, 2, act);
    return c;
}

}  // namespace

TEST(WeightedCrossEntropy, Cases) {
    const std::vector<double> ones(7, 1.0);
    EXPECT_NEAR(weighted_ce_loss<double>(VectorXd::Constant(7, 0.3), 2, ones), std::log(7.0), 1e-15);

    VectorXd big = VectorXd::Zero(7);
    big[4] = 1000.0;
    EXPECT_EQ(weighted_ce_loss(big, 4, ones), 0.0);
    EXPECT_NEAR(weighted_ce_loss(big, 0, ones), 1000.0, 1e-9);
    EXPECT_TRUE(weighted_ce_logit_grad(big, 0, ones).allFinite());

    SplitMix64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const VectorXd x = test::random_vector(rng, 7, 3.0);
        const auto w = random_weights(rng, 7);
        const Index t = static_cast<Index>(rng.below(7));
        const double naive = -w[static_cast<std::size_t>(t)] * std::log(naive_softmax(x)[t]);
        EXPECT_NEAR(weighted_ce_loss(x, t, w), naive, 1e-10);
        EXPECT_GE(weighted_ce_loss(x, t, w), 0.0);
    }
    EXPECT_THROW(weighted_ce_loss<double>(VectorXd::Zero(3), 3, std::vector<double>(3, 1.0)), ShapeError);
    EXPECT_THROW(weighted_ce_loss<double>(VectorXd::Zero(3), 0, std::vector<double>(2, 1.0)), ShapeError);
}

TEST(Backward, BiasGradientIsSoftmaxMinusOneHot) {
    const ModelConfig c = make_cubic_config(3, 4, {2}, 4);
    ModelParams p = make_zero_params(c);
    SplitMix64 rng(32);
    for (auto& cls : p.trl.classes) cls.bias = rng.normal();
    const auto s = random_tensor(rng, {4, 6, 3});
    const std::vector<double> ones(4, 1.0);
    const auto lg = backward(p, s, 1, ones);
    VectorXd b(4);
    for (Index l = 0; l < 4; ++l) b[l] = p.trl.classes[static_cast<std::size_t>(l)].bias;
    const VectorXd sm = naive_softmax(b);
    for (Index l = 0; l < 4; ++l)
        EXPECT_NEAR(lg.grads.trl.classes[static_cast<std::size_t>(l)].bias, sm[l] - (l == 1 ? 1.0 : 0.0), 1e-14);

    // holds for any parameters and any weights
    const ModelParams q = init_params(c, 3);
    const auto w = random_weights(rng, 4);
    const auto lq = backward(q, s, 2, w);
    const VectorXd smq = softmax(model_forward(q, s));
    for (Index l = 0; l < 4; ++l)
        EXPECT_NEAR(lq.grads.trl.classes[static_cast<std::size_t>(l)].bias, w[2] * (smq[l] - (l == 2 ? 1.0 : 0.0)), 1e-14);
}

TEST(Backward, TinyModelMatchesFiniteDifferences) {
    SplitMix64 rng(33);
    for (auto act : {Activation::sigmoid, Activation::tanh, Activation::relu, Activation::identity}) {
        const ModelParams p = init_params(tiny_config(act), rng.next());
        const auto s = random_tensor(rng, {4, 5, 3});
        const auto w = random_weights(rng, 2);
        const auto report = finite_diff_check(p, s, 1, w, 1e-5);
        EXPECT_LE(report.max_rel_error, 1e-5) << to_string(act);
        EXPECT_EQ(report.checked + report.excluded, allocated_param_count(p));
    }
}

TEST(Backward, NoTclAndDeepChains) {
    SplitMix64 rng(34);
    for (const std::vector<Index>& dims : {std::vector<Index>{}, std::vector<Index>{3, 2, 2}}) {
        ModelConfig c = make_cubic_config(3, 3, dims, 3);
        const ModelParams p = init_params(c, rng.next());
        const auto report = finite_diff_check(p, random_tensor(rng, {3, 4, 3}), 0, random_weights(rng, 3), 1e-5);
        EXPECT_LE(report.max_rel_error, 1e-5);
    }
}

TEST(Backward, ScalesLinearlyInClassWeight) {
    SplitMix64 rng(35);
    const ModelParams p = init_params(tiny_config(), 4);
    const auto s = random_tensor(rng, {4, 5, 3});
    std::vector<double> w{0.7, 1.3};
    const auto a = backward(p, s, 1, w);
    w[1] *= 2.0;
    const auto b = backward(p, s, 1, w);
    EXPECT_NEAR(b.loss, 2.0 * a.loss, 1e-14);
    const auto fa = flatten(a.grads), fb = flatten(b.grads);
    for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_NEAR(fb[i], 2.0 * fa[i], 1e-14 * (1.0 + std::abs(fa[i])));
}

TEST(Backward, ClassPermutationLeavesLossUnchanged) {
    SplitMix64 rng(36);
    const ModelConfig c = make_cubic_config(3, 4, {2}, 3);
    const ModelParams p = init_params(c, 6);
    const auto s = random_tensor(rng, {4, 5, 3});
    const std::vector<double> w{0.5, 1.0, 2.0};
    ModelParams q = p;
    std::swap(q.trl.classes[0], q.trl.classes[2]);
    const std::vector<double> wq{2.0, 1.0, 0.5};
    EXPECT_NEAR(loss_value(p, s, 0, w), loss_value(q, s, 2, wq), 1e-14);
}

TEST(Backward, Errors) {
    SplitMix64 rng(37);
    ModelParams p = init_params(make_cubic_config(3, 4, {2}, 2, Activation::identity), 7);
    const auto s = random_tensor(rng, {4, 5, 3});
    EXPECT_THROW(backward(p, s, 0, std::vector<double>{-1.0, 1.0}), DataError);
    EXPECT_THROW(backward(p, s, 0, std::vector<double>{std::nan(""), 1.0}), DataError);
    EXPECT_THROW(backward(p, s, 2, std::vector<double>{1.0, 1.0}), ShapeError);

    for (auto& f : p.tcls[0].factors) f.setConstant(1e300);
    try {
        backward(p, s, 0, std::vector<double>{1.0, 1.0});
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_EQ(e.where(), "tcl1");
    }
}

TEST(FiniteDiffCheck, DetectsCorruptedGradient) {
    SplitMix64 rng(38);
    const ModelParams p = init_params(tiny_config(), 8);
    const auto s = random_tensor(rng, {4, 5, 3});
    const std::vector<double> w{1.0, 1.0};
    GradientBundle g = backward(p, s, 0, w).grads;
    // zero the largest entry
    double* worst = nullptr;
    for_each_block(g, [&](std::span<double> b) {
        for (double& v : b)
            if (!worst || std::abs(v) > std::abs(*worst)) worst = &v;
    });
    *worst = 0.0;
    EXPECT_GE(finite_diff_check(p, s, 0, w, 1e-5, g).max_rel_error, 1e-2);
    EXPECT_THROW(finite_diff_check(p, s, 0, w, 0.0), ConfigError);
}

TEST(FiniteDiffCheck, ZeroParamsSymmetricInputStaysFinite) {
    const ModelParams p = make_zero_params(tiny_config());
    const DenseTensor s = DenseTensor::constant({4, 5, 3}, 0.25);
    const auto report = finite_diff_check(p, s, 0, std::vector<double>{1.0, 1.0}, 1e-5);
    EXPECT_TRUE(std::isfinite(report.max_rel_error));
    EXPECT_TRUE(std::isfinite(backward(p, s, 0, std::vector<double>{1.0, 1.0}).loss));
}

TEST(FiniteDiffCheck, ReluExcludesCoordinatesNearKinks) {
    ModelParams p = init_params(tiny_config(Activation::relu), 9);
    SplitMix64 rng(39);
    const auto s = random_tensor(rng, {4, 5, 3});
    // drive one pre-activation to within a step of zero by shifting a factor entry
    const auto tr = forward_trace(p, s);
    const double z = tr.tcls[0].contraction.stages[3](0, 0, 0);
    const double h = tr.tcls[0].contraction.stages[2](0, 0, 0);
    // z depends on factor 2 entry (0,0) with slope h along the last mode at index 0
    ASSERT_NE(h, 0.0);
    p.tcls[0].factors[2](0, 0) -= (z - 1e-6 * (z > 0 ? 1 : -1)) / h;
    const auto report = finite_diff_check(p, s, 0, std::vector<double>{1.0, 1.0}, 1e-5);
    EXPECT_GT(report.excluded, 0);
    EXPECT_LE(report.max_rel_error, 1e-5);
}

TEST(ContractBackward, MatchesFiniteDifferencesOfBilinearForm) {
    SplitMix64 rng(40);
    const auto h = random_tensor(rng, {3, 4, 2});
    const std::array<MatrixXd, 3> f{random_matrix(rng, 3, 2), random_matrix(rng, 4, 3), random_matrix(rng, 2, 2)};
    const auto d = random_tensor(rng, {2, 3, 2});
    const auto tr = contract_transposed(h, f);
    std::array<MatrixXd, 3> df{MatrixXd::Zero(3, 2), MatrixXd::Zero(4, 3), MatrixXd::Zero(2, 2)};
    const DenseTensor dh = contract_transposed_backward(tr, f, d, df);

    auto form = [&](const DenseTensor& hh, const std::array<MatrixXd, 3>& ff) {
        return inner_product(contract_transposed(hh, ff).stages[3], d);
    };
    const double eps = 1e-6;
    for (int j = 0; j < 3; ++j)
        for (Index r = 0; r < f[j].rows(); ++r)
            for (Index c = 0; c < f[j].cols(); ++c) {
                auto up = f, down = f;
                up[j](r, c) += eps;
                down[j](r, c) -= eps;
                EXPECT_NEAR(df[j](r, c), (form(h, up) - form(h, down)) / (2 * eps), 1e-7);
            }
    for (std::size_t i = 0; i < h.data().size(); ++i) {
        DenseTensor up = h, down = h;
        up.data()[i] += eps;
        down.data()[i] -= eps;
        EXPECT_NEAR(dh.data()[i], (form(up, f) - form(down, f)) / (2 * eps), 1e-7);
    }
}
