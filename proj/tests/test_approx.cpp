#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "intentional/approx.hpp"
#include "test_util.hpp"

using namespace intentional;
using intentional::testing::close_rel;
using intentional::testing::fd_gradient;

namespace {

// Straight-line forward pass for input 2 -> [4, 3] -> 1 with LayerNorm,
// indexing the flat vector by hand.
double reference_mlp_value(const std::vector<double>& p, double x0, double x1)
{
    auto leaky = [](double v) { return v > 0.0 ? v : 0.01 * v; };
    auto norm = [](std::vector<double> h, const double* gain, const double* shift) {
        double m = 0.0;
        for (double v : h) m += v;
        m /= static_cast<double>(h.size());
        double var = 0.0;
        for (double v : h) var += (v - m) * (v - m);
        var /= static_cast<double>(h.size());
        for (std::size_t i = 0; i < h.size(); ++i) h[i] = gain[i] * (h[i] - m) / std::sqrt(var + 1e-5) + shift[i];
        return h;
    };
    // layer 1: W 4x2 at 0, b at 8, gain at 12, shift at 16
    std::vector<double> h1(4);
    for (int o = 0; o < 4; ++o) h1[o] = p[2 * o] * x0 + p[2 * o + 1] * x1 + p[8 + o];
    h1 = norm(h1, &p[12], &p[16]);
    for (double& v : h1) v = leaky(v);
    // layer 2: W 3x4 at 20, b at 32, gain at 35, shift at 38
    std::vector<double> h2(3);
    for (int o = 0; o < 3; ++o) {
        double acc = p[32 + o];
        for (int i = 0; i < 4; ++i) acc += p[20 + 4 * o + i] * h1[i];
        h2[o] = acc;
    }
    h2 = norm(h2, &p[35], &p[38]);
    for (double& v : h2) v = leaky(v);
    // output: W 1x3 at 41, b at 44
    return p[41] * h2[0] + p[42] * h2[1] + p[43] * h2[2] + p[44];
}

ParamVector random_params(const Architecture& arch, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    auto p = intentional::testing::random_vector(rng, param_count(arch), -scale, scale);
    return p;
}

} // namespace

TEST(Approx, LinearForwardIsDotProduct)
{
    const auto arch = Architecture::linear(2, Head::scalar_value());
    EXPECT_DOUBLE_EQ(forward_value(ParamVector{1.0, 2.0}, arch, Observation{{3.0, 4.0}}), 11.0);
}

TEST(Approx, ZeroParamsGiveZeroValue)
{
    const auto mlp = Architecture::mlp(3, {5, 4}, Head::scalar_value(), false, 0.0);
    EXPECT_EQ(forward_value(ParamVector(param_count(mlp), 0.0), mlp, Observation{{0.3, -2.0, 1.0}}), 0.0);
}

TEST(Approx, MlpForwardMatchesStraightLineImplementation)
{
    const auto arch = Architecture::mlp(2, {4, 3}, Head::scalar_value(), true, 0.0);
    ASSERT_EQ(param_count(arch), 45u);
    const auto p = random_params(arch, 7);
    const double v = forward_value(p, arch, Observation{{0.5, -0.5}});
    EXPECT_NEAR(v, reference_mlp_value(p, 0.5, -0.5), 1e-12);
}

TEST(Approx, LinearGradientIsFeatures)
{
    const auto arch = Architecture::linear(3, Head::scalar_value());
    const std::vector<double> x{0.25, -7.0, 3.5};
    const auto g = grad_value(ParamVector{0.1, 0.2, 0.3}, arch, Observation{x});
    EXPECT_EQ(g, x);
}

TEST(Approx, ZeroMlpGradientOnlyThroughFinalBias)
{
    const auto arch = Architecture::mlp(2, {4, 3}, Head::scalar_value(), false, 0.0);
    const ParamVector p(param_count(arch), 0.0);
    const Observation s{{0.7, -1.3}};
    const auto g = grad_value(p, arch, s);
    const auto fd = fd_gradient([&](const std::vector<double>& q) { return forward_value(q, arch, s); }, p);
    for (std::size_t i = 0; i + 1 < g.size(); ++i) EXPECT_EQ(g[i], 0.0) << i;
    EXPECT_EQ(g.back(), 1.0);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_TRUE(close_rel(g[i], fd[i])) << i;
}

TEST(Approx, RandomMlpGradientMatchesFiniteDifferences)
{
    const auto arch = Architecture::mlp(3, {6, 5}, Head::scalar_value(), true, 0.0);
    const auto p = random_params(arch, 11);
    const Observation s{{0.4, -0.9, 1.2}};
    const auto g = grad_value(p, arch, s);
    const auto fd = fd_gradient([&](const std::vector<double>& q) { return forward_value(q, arch, s); }, p);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_TRUE(close_rel(g[i], fd[i])) << i << ": " << g[i] << " vs " << fd[i];
}

TEST(Approx, QValueGradientSelectsOneOutput)
{
    const auto arch = Architecture::mlp(2, {5}, Head::q_values(3), true, 0.0);
    const auto p = random_params(arch, 5);
    const Observation s{{0.2, 0.9}};
    for (std::size_t a = 0; a < 3; ++a) {
        const auto qg = q_value_and_grad(p, arch, s, a);
        EXPECT_DOUBLE_EQ(qg.value, q_values(p, arch, s)[a]);
        const auto fd = fd_gradient([&](const std::vector<double>& q) { return q_values(q, arch, s)[a]; }, p);
        for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_TRUE(close_rel(qg.grad[i], fd[i])) << a << "/" << i;
    }
    EXPECT_THROW(q_value_and_grad(p, arch, s, 3), ConfigError);
}

TEST(Approx, SoftplusStd)
{
    const auto arch = Architecture::linear(1, Head::gaussian_policy(1));
    const auto at = [&](double pre) {
        return std::get<GaussianPolicy>(policy_forward(ParamVector{0.0, pre}, arch, Observation{{1.0}})).std[0];
    };
    EXPECT_NEAR(at(0.0), std::log(2.0), 1e-15);
    EXPECT_EQ(at(25.0), 25.0);
    EXPECT_LT(std::abs(std::log1p(std::exp(20.0)) - 20.0), 3e-9);
    EXPECT_NEAR(at(20.0), at(std::nextafter(20.0, 21.0)), 1e-8);
}

TEST(Approx, SoftmaxUniformAndNormalized)
{
    const auto probs = SoftmaxPolicy{{0.0, 0.0}}.probabilities();
    EXPECT_DOUBLE_EQ(probs[0], 0.5);
    EXPECT_DOUBLE_EQ(probs[1], 0.5);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (int k = 0; k < 1000; ++k) {
        std::vector<double> logits(2 + k % 7);
        for (double& l : logits) l = u(rng);
        double sum = 0.0;
        for (double p : SoftmaxPolicy{logits}.probabilities()) sum += p;
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Approx, LogProbClosedForms)
{
    const auto softmax = Architecture::linear(1, Head::softmax_policy(2));
    EXPECT_NEAR(logprob_and_grad(ParamVector{0.0, 0.0}, softmax, Observation{{1.0}}, Action{std::size_t{0}}).value,
                std::log(0.5), 1e-15);
    const auto gauss = Architecture::linear(1, Head::gaussian_policy(1));
    const double pre_for_unit_std = std::log(std::exp(1.0) - 1.0);
    const auto lp = logprob_and_grad(ParamVector{0.0, pre_for_unit_std}, gauss, Observation{{1.0}},
                                     Action{std::vector<double>{0.0}});
    EXPECT_NEAR(lp.value, -0.5 * std::log(2.0 * std::numbers::pi), 1e-14);
    EXPECT_THROW(logprob_and_grad(ParamVector{0.0, 0.0}, softmax, Observation{{1.0}}, Action{std::size_t{2}}),
                 ConfigError);
}

TEST(Approx, LogProbGradientMatchesFiniteDifferences)
{
    const Observation s{{0.3, -0.6, 0.8}};
    const auto gauss = Architecture::mlp(3, {6, 6}, Head::gaussian_policy(2), true, 0.0);
    const auto pg = random_params(gauss, 13);
    const Action a = std::vector<double>{0.4, -1.7};
    const auto lp = logprob_and_grad(pg, gauss, s, a);
    const auto fd = fd_gradient([&](const std::vector<double>& q) { return logprob_and_grad(q, gauss, s, a).value; }, pg);
    for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_TRUE(close_rel(lp.grad[i], fd[i])) << i;

    const auto soft = Architecture::mlp(3, {6}, Head::softmax_policy(4), true, 0.0);
    const auto ps = random_params(soft, 13);
    const Action b = std::size_t{2};
    const auto ls = logprob_and_grad(ps, soft, s, b);
    const auto fs = fd_gradient([&](const std::vector<double>& q) { return logprob_and_grad(q, soft, s, b).value; }, ps);
    for (std::size_t i = 0; i < fs.size(); ++i) EXPECT_TRUE(close_rel(ls.grad[i], fs[i])) << i;
}

TEST(Approx, EntropyClosedFormsAndGradient)
{
    const auto soft = Architecture::linear(1, Head::softmax_policy(2));
    EXPECT_NEAR(entropy_and_grad(ParamVector{0.0, 0.0}, soft, Observation{{1.0}}).value, std::log(2.0), 1e-15);
    const auto gauss = Architecture::linear(1, Head::gaussian_policy(1));
    const double pre_for_unit_std = std::log(std::exp(1.0) - 1.0);
    EXPECT_NEAR(entropy_and_grad(ParamVector{0.3, pre_for_unit_std}, gauss, Observation{{1.0}}).value,
                0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e), 1e-14);

    const Observation s{{0.1, 0.9}};
    for (const auto& arch : {Architecture::mlp(2, {5}, Head::softmax_policy(3), true, 0.0),
                             Architecture::mlp(2, {5}, Head::gaussian_policy(2), true, 0.0)}) {
        const auto p = random_params(arch, 17);
        const auto e = entropy_and_grad(p, arch, s);
        const auto fd = fd_gradient([&](const std::vector<double>& q) { return entropy_and_grad(q, arch, s).value; }, p);
        for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_TRUE(close_rel(e.grad[i], fd[i])) << i;
    }
}

TEST(Approx, SparseInitZeroCountsAndDeterminism)
{
    auto arch = Architecture::mlp(10, {10, 10}, Head::scalar_value(), true, 0.9);
    const auto p = sparse_init(arch, 42);
    EXPECT_EQ(p, sparse_init(arch, 42));
    EXPECT_NE(p, sparse_init(arch, 43));
    for (const auto& l : layout(arch)) {
        for (std::size_t o = 0; o < l.out; ++o) {
            std::size_t zeros = 0;
            for (std::size_t i = 0; i < l.in; ++i) zeros += p[l.weight + o * l.in + i] == 0.0;
            EXPECT_EQ(zeros, 9u);
            for (std::size_t i = 0; i < l.in; ++i) EXPECT_LE(std::abs(p[l.weight + o * l.in + i]), 1.0 / std::sqrt(10.0));
        }
        if (l.has_bias) {
            for (std::size_t o = 0; o < l.out; ++o) EXPECT_EQ(p[l.bias + o], 0.0);
        }
        if (l.has_norm) {
            for (std::size_t o = 0; o < l.out; ++o) EXPECT_EQ(p[l.gain + o], 1.0);
        }
    }

    arch.sparse_init_ratio = 0.0;
    const auto dense = sparse_init(arch, 42);
    for (const auto& l : layout(arch))
        for (std::size_t k = 0; k < l.in * l.out; ++k) EXPECT_NE(dense[l.weight + k], 0.0);
}

TEST(Approx, DimensionMismatchIsConfigError)
{
    const auto arch = Architecture::linear(2, Head::scalar_value());
    EXPECT_THROW(forward_value(ParamVector{1.0}, arch, Observation{{1.0, 2.0}}), ConfigError);
    EXPECT_THROW(forward_value(ParamVector{1.0, 2.0}, arch, Observation{{1.0}}), ConfigError);
    EXPECT_THROW(grad_value(ParamVector{1.0, 2.0}, Architecture::linear(2, Head::q_values(2)), Observation{{1.0, 1.0}}),
                 ConfigError);
}
