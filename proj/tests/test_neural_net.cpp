// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"

using namespace autoduct;

namespace {

SplitDataset synthetic_split(std::size_t n, std::uint64_t seed)
{
    return split(generate_synthetic({n, 1.0, seed, {}}), {}, seed);
}

} // namespace

TEST(Activations, DerivativesMatchDifferences)
{
    for (auto a : kAllActivations)
        for (double x : {-3.0, -0.7, -0.01, 0.02, 0.4, 2.5}) {
            const double h = 1e-6;
            const double fd = (activate(a, x + h) - activate(a, x - h)) / (2 * h);
            EXPECT_NEAR(activation_derivative(a, x), fd, 1e-7) << to_string(a) << " at " << x;
        }
}

TEST(Activations, NamesRoundTrip)
{
    for (auto a : kAllActivations)
        EXPECT_EQ(activation_from_string(to_string(a)), a);
    EXPECT_THROW((void)activation_from_string("tanh"), Error);
}

TEST(Activations, SoftplusIsStableAtExtremes)
{
    EXPECT_EQ(softplus(800.0), 800.0);
    EXPECT_GT(softplus(-800.0), -1e-300);
    EXPECT_TRUE(std::isfinite(softplus(-800.0)));
    EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
}

TEST(Config, Validation)
{
    MLPConfig m;
    m.dropout_rate = 0.31;
    EXPECT_THROW(m.validate(), Error);
    m.dropout_rate = 0.3;
    EXPECT_NO_THROW(m.validate());
    m.hidden_layers = 0;
    EXPECT_THROW(m.validate(), Error);

    TrainConfig t;
    EXPECT_NO_THROW(t.validate(true));
    t.batch_size = 100;
    EXPECT_NO_THROW(t.validate());
    EXPECT_THROW(t.validate(true), Error);
    t.batch_size = 128;
    t.learning_rate = 0.05;
    EXPECT_THROW(t.validate(true), Error);
}

TEST(Forward, VarianceIsPositiveAndFloored)
{
    MLPConfig cfg{5, 2, 8, Activation::relu, 0.0};
    auto p = init_params(cfg, 1);
    p.bias(p.var_head())(0, 0) = -800.0;
    p.weight(p.var_head()).setZero();
    const double x[] = {0.1, 0.2, 0.3, 0.4, 0.5};
    const auto out = forward(p, cfg, x);
    EXPECT_GE(out.var, kVarianceFloor);
    EXPECT_LT(out.var, 2 * kVarianceFloor);
}

TEST(Forward, RejectsBadInput)
{
    MLPConfig cfg{5, 1, 4, Activation::gelu, 0.0};
    const auto p = init_params(cfg, 0);
    const double short_x[] = {1.0, 2.0};
    EXPECT_THROW((void)forward(p, cfg, short_x), Error);
    const double nan_x[] = {1.0, 2.0, NAN, 0.0, 0.0};
    EXPECT_THROW((void)forward(p, cfg, nan_x), Error);
}

TEST(Forward, DropoutInactiveAtInference)
{
    MLPConfig cfg{5, 3, 16, Activation::elu, 0.2};
    const auto p = init_params(cfg, 3);
    const double x[] = {0.3, -1.0, 0.5, 0.2, 1.1};
    EXPECT_EQ(forward(p, cfg, x), forward(p, cfg, x));
    MLPConfig no_drop = cfg;
    no_drop.dropout_rate = 0.0;
    EXPECT_EQ(forward(p, cfg, x), forward(p, no_drop, x));
    EXPECT_NE(forward(p, cfg, x, true, 1).mean, forward(p, cfg, x).mean);
}

TEST(Loss, WorkedFixture)
{
    // (y - mu)^2 / (2 var) + 0.5 log var with mu = 1, var = 4, y = 3: 0.5 + log 2
    const GaussianPrediction pred[] = {{1.0, 4.0}};
    const double y[] = {3.0};
    EXPECT_DOUBLE_EQ(nll_loss(pred, y), 0.5 + std::log(2.0));
    const GaussianPrediction bad[] = {{1.0, 0.0}};
    EXPECT_THROW((void)nll_loss(bad, y), Error);
    EXPECT_THROW((void)nll_loss(std::span<const GaussianPrediction>(pred, 1), std::span<const double>()), Error);
}

TEST(Loss, MinimizedAtTrueVariance)
{
    // For a fixed residual r the loss in var has its minimum at var = r^2.
    const double y[] = {2.0};
    const double r2 = 4.0;
    const GaussianPrediction at[] = {{0.0, r2}};
    for (double v : {0.5, 2.0, 3.9, 4.1, 8.0, 40.0}) {
        const GaussianPrediction other[] = {{0.0, v}};
        EXPECT_LT(nll_loss(at, y), nll_loss(other, y));
    }
}

class GradientByActivation : public ::testing::TestWithParam<Activation> {};

TEST_P(GradientByActivation, AnalyticMatchesFiniteDifferences)
{
    Rng rng(static_cast<std::uint64_t>(GetParam()) + 100);
    for (int trial = 0; trial < 3; ++trial) {
        const MLPConfig cfg{5, 1 + trial, 4 + 3 * trial, GetParam(), 0.0};
        const auto p = init_params(cfg, rng.next());
        const auto batch = oracles::random_batch(5, 7, rng);
        const auto check = oracles::check_gradient(p, cfg, batch);
        EXPECT_LT(check.rel_max_error, 1e-4) << to_string(GetParam()) << " trial " << trial;
        EXPECT_LT(check.skipped * 50, check.checked + check.skipped);
    }
}

INSTANTIATE_TEST_SUITE_P(All, GradientByActivation, ::testing::ValuesIn(kAllActivations),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Gradient, WeightDecayTermIsSeparate)
{
    const MLPConfig cfg{5, 2, 6, Activation::selu, 0.0};
    Rng rng(9);
    const auto p = init_params(cfg, 4);
    const auto batch = oracles::random_batch(5, 5, rng);
    const auto g0 = backward(p, cfg, batch, 0.0);
    const auto g1 = backward(p, cfg, batch, 0.01);
    EXPECT_EQ(g0.data, g1.data);
    for (std::size_t i = 0; i < p.tensors.size(); ++i)
        EXPECT_TRUE(g1.decay.tensors[i].isApprox(0.01 * p.tensors[i]));
    const auto total = g1.total();
    EXPECT_TRUE(total.tensors[0].isApprox(g1.data.tensors[0] + g1.decay.tensors[0]));
}

TEST(Parameters, FlattenAssignRoundTrip)
{
    const MLPConfig cfg{5, 2, 3, Activation::relu, 0.0};
    const auto p = init_params(cfg, 12);
    auto q = p.zeros_like();
    q.assign(p.flatten());
    EXPECT_EQ(p, q);
    EXPECT_EQ(p.count(), 5u * 3 + 3 + 3 * 3 + 3 + 2 * (3 + 1));
    EXPECT_THROW(q.assign(std::vector<double>(3)), Error);
}

TEST(Parameters, InitIsSeeded)
{
    const MLPConfig cfg;
    EXPECT_EQ(init_params(cfg, 5), init_params(cfg, 5));
    EXPECT_FALSE(init_params(cfg, 5) == init_params(cfg, 6));
}

TEST(Train, ReducesValidationLossAndIsDeterministic)
{
    const auto s = synthetic_split(800, 21);
    const auto norm = fit_normalizer(s.train);
    const MLPConfig mlp{5, 2, 24, Activation::gelu, 0.0};
    TrainConfig tc;
    tc.epochs = 40;
    tc.patience = 40;
    tc.batch_size = 64;
    tc.learning_rate = 3e-3;
    tc.seed = 2;
    const auto a = train(s, norm, mlp, tc);
    const auto b = train(s, norm, mlp, tc);
    EXPECT_EQ(a.params, b.params);
    EXPECT_TRUE(a.history.same_trajectory(b.history));
    ASSERT_EQ(a.history.epochs_run(), 40);
    EXPECT_LT(a.history.val_loss[static_cast<std::size_t>(a.history.best_epoch)], a.history.val_loss.front());
    EXPECT_LT(a.history.train_loss.back(), a.history.train_loss.front());
}

TEST(Train, ReturnsBestEpochParameters)
{
    const auto s = synthetic_split(400, 5);
    const auto norm = fit_normalizer(s.train);
    const MLPConfig mlp{5, 1, 8, Activation::relu, 0.0};
    TrainConfig tc;
    tc.epochs = 25;
    tc.patience = 25;
    tc.learning_rate = 1e-2;
    const auto net = train(s, norm, mlp, tc);
    const auto val = make_batch(s.validation, norm);
    const double loss = nll_loss(forward_batch(net.params, mlp, val.inputs), val.targets);
    const double best = *std::min_element(net.history.val_loss.begin(), net.history.val_loss.end());
    EXPECT_DOUBLE_EQ(loss, best);
}

TEST(Train, EarlyStopsAfterPatience)
{
    const auto s = synthetic_split(300, 6);
    const auto norm = fit_normalizer(s.train);
    TrainConfig tc;
    tc.epochs = 500;
    tc.patience = 3;
    tc.learning_rate = 1e-2;
    const auto net = train(s, norm, {5, 1, 8, Activation::relu, 0.0}, tc);
    EXPECT_LT(net.history.epochs_run(), 500);
    EXPECT_EQ(net.history.epochs_run(), net.history.best_epoch + 1 + 3);
}

TEST(Train, ZeroPatienceStillRunsOneExtraEpoch)
{
    const auto s = synthetic_split(300, 6);
    const auto norm = fit_normalizer(s.train);
    TrainConfig tc;
    tc.epochs = 50;
    tc.patience = 0;
    const auto net = train(s, norm, {5, 1, 8, Activation::relu, 0.0}, tc);
    EXPECT_EQ(net.history.epochs_run(), std::min(50, net.history.best_epoch + 2));
}

TEST(Train, DivergenceIsReported)
{
    const auto s = synthetic_split(300, 6);
    const auto norm = fit_normalizer(s.train);
    TrainConfig tc;
    tc.epochs = 30;
    tc.learning_rate = 1e12;
    try {
        (void)train(s, norm, {5, 2, 16, Activation::relu, 0.0}, tc);
        SUCCEED(); // a huge step can also land on finite values; only the code matters when it throws
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::diverged_loss);
    }
}

TEST(Train, NeedsValidationData)
{
    auto s = synthetic_split(100, 1);
    s.validation.points.clear();
    EXPECT_THROW((void)train(s, fit_normalizer(s.train), {}, {}), Error);
}

TEST(Predict, PhysicalUnitsFollowTargetScale)
{
    const auto s = synthetic_split(300, 3);
    const auto norm = fit_normalizer(s.train);
    const MLPConfig cfg{5, 2, 8, Activation::softplus, 0.0};
    const auto p = init_params(cfg, 8);
    const auto preds = predict_batch(p, cfg, norm, s.test.points);
    ASSERT_EQ(preds.size(), s.test.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto z = norm.apply(s.test.points[i].inputs());
        const auto raw = forward(p, cfg, z);
        EXPECT_NEAR(preds[i].mean, norm.invert_target(raw.mean), 1e-9 * std::abs(preds[i].mean) + 1e-9);
        EXPECT_NEAR(preds[i].var, raw.var * norm.target_scale() * norm.target_scale(), 1e-9 * preds[i].var);
    }
}

TEST(Serialization, RoundTripIsExact)
{
    const MLPConfig cfg{5, 3, 7, Activation::leaky_relu, 0.1};
    const auto p = init_params(cfg, 77);
    const auto norm = fit_normalizer(generate_synthetic({50, 1.0, 1, {}}));
    const auto doc = network_from_json(nlohmann::json::parse(network_to_json(p, cfg, norm).dump()));
    EXPECT_EQ(doc.params, p);
    EXPECT_EQ(doc.config, cfg);
    EXPECT_EQ(doc.normalizer, norm);
}

TEST(Serialization, RejectsVersionAndShapeProblems)
{
    const MLPConfig cfg{5, 1, 3, Activation::relu, 0.0};
    auto j = network_to_json(init_params(cfg, 1), cfg, Normalizer::identity());
    auto wrong_version = j;
    wrong_version["format_version"] = 99;
    try {
        (void)network_from_json(wrong_version);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::version_mismatch);
    }
    auto wrong_shape = j;
    wrong_shape["tensors"][0]["shape"] = {2, 5};
    try {
        (void)network_from_json(wrong_shape);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::corrupt_artifact);
    }
    auto missing = j;
    missing.erase("tensors");
    EXPECT_THROW((void)network_from_json(missing), Error);
}
