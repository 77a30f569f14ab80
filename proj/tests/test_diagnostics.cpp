#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "intentional/agents.hpp"
#include "intentional/bias.hpp"
#include "intentional/diagnostics.hpp"
#include "test_util.hpp"

using namespace intentional;
using intentional::testing::random_vector;

TEST(Fidelity, LinearLearnerIsExact)
{
    std::mt19937_64 rng(3);
    const auto arch = Architecture::linear(4, Head::scalar_value());
    LearnerConfig c;
    c.lambda = 0.0;
    ValueLearner v(arch, random_vector(rng, 4), c);
    std::vector<StepReport> reports;
    for (int k = 0; k < 300; ++k) {
        Transition tr;
        tr.s = {random_vector(rng, 4)};
        tr.r = std::uniform_real_distribution<double>(-1, 1)(rng);
        tr.s_next = {random_vector(rng, 4)};
        reports.push_back(v.td_step(tr));
    }
    const auto s = fidelity_summary(reports);
    EXPECT_NEAR(s.mean, 1.0, 1e-9);
    EXPECT_LT(s.std, 1e-9);
    EXPECT_EQ(s.n + s.excluded_degenerate + s.excluded_zero_intent, reports.size());
}

TEST(Fidelity, ExclusionsAndEmptyStream)
{
    std::vector<StepReport> r(3);
    r[0].degenerate = true;
    r[1].intended_change = 0.0;
    EXPECT_THROW(fidelity_summary(std::span<const StepReport>(r.data(), 2)), ConfigError);
    r[2].intended_change = 2.0;
    r[2].realized_change = 1.0;
    const auto s = fidelity_summary(r);
    EXPECT_EQ(s.n, 1u);
    EXPECT_EQ(s.excluded_degenerate, 1u);
    EXPECT_EQ(s.excluded_zero_intent, 1u);
    EXPECT_DOUBLE_EQ(s.mean, 0.5);
}

TEST(Summary, PercentilesInterpolate)
{
    std::vector<double> xs;
    for (int i = 0; i <= 100; ++i) xs.push_back(i);
    const auto s = summarize(xs);
    EXPECT_DOUBLE_EQ(s.p1, 1.0);
    EXPECT_DOUBLE_EQ(s.p99, 99.0);
    EXPECT_DOUBLE_EQ(s.mean, 50.0);
}

TEST(Flops, Totals)
{
    const auto m = flops_model();
    EXPECT_EQ(m.intentional_ac_total(), 46);
    EXPECT_EQ(m.sac_total(), 6433);
    EXPECT_NEAR(m.ratio(), 6433.0 / 46.0, 1e-12);
    const auto table = format_flops_table(m);
    EXPECT_NE(table.find("46N"), std::string::npos);
    EXPECT_NE(table.find("6433N"), std::string::npos);
}

TEST(KlProxy, SoftmaxSmallPerturbation)
{
    const SoftmaxPolicy a{{0.3, -0.2, 1.0}};
    const SoftmaxPolicy b{{0.31, -0.21, 1.005}};
    const auto r = kl_proxy_check(a, b);
    EXPECT_GT(r.kl, 0.0);
    EXPECT_NEAR(r.proxy / r.kl, 1.0, 0.02);
}

TEST(KlProxy, GaussianMonteCarlo)
{
    const GaussianPolicy a{{0.0}, {1.0}, {0.5413}};
    const GaussianPolicy b{{0.02}, {1.01}, {0.5563}};
    const auto r = kl_proxy_check(a, b, 200000, 7);
    EXPECT_NEAR(r.proxy / r.kl, 1.0, 0.1);
}

TEST(Rmse, MatchesHandComputation)
{
    const auto arch = Architecture::linear(1, Head::scalar_value());
    const std::vector<double> params{2.0};
    const std::vector<Observation> states{{{1.0}}, {{2.0}}};
    // predictions 2 and 4 against 1 and 4
    const double expected = std::sqrt(0.5);
    EXPECT_NEAR(prediction_rmse(params, arch, states, {1.0, 4.0}), expected, 1e-12);
    EXPECT_NEAR(prediction_rmse(params, arch, states, {1.0, 4.0}, {1.0, 0.0}), 1.0, 1e-12);
}

TEST(Bias, DemoFlipsOrdering)
{
    const auto r = action_bias_demo();
    EXPECT_TRUE(r.ordering_flipped);
    EXPECT_GT(r.normalized_pi2_rate, 0.0);
    EXPECT_LT(r.unnormalized_pi2_rate, 0.0);
    EXPECT_NEAR(r.equal_norm_cosine, 1.0, 1e-12);
    EXPECT_LT(r.equal_advantage_cosine, 1.0 - 1e-6);
}
