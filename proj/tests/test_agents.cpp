#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "intentional/agents.hpp"
#include "intentional/envs.hpp"
#include "test_util.hpp"

using namespace intentional;
using intentional::testing::random_vector;

namespace {

LearnerConfig td0(double eta)
{
    LearnerConfig c;
    c.eta = eta;
    c.lambda = 0.0;
    c.gamma = 0.9;
    return c;
}

Transition make_tr(std::vector<double> s, double r, std::vector<double> s_next, bool terminated = false,
                   bool truncated = false)
{
    Transition tr;
    tr.s = {std::move(s)};
    tr.r = r;
    tr.s_next = {std::move(s_next)};
    tr.terminated = terminated;
    tr.truncated = truncated;
    return tr;
}

} // namespace

TEST(TdStep, OneStepHitsBootstrapTarget)
{
    const auto arch = Architecture::linear(3, Head::scalar_value());
    ValueLearner v(arch, {0.2, -0.4, 0.1}, td0(1.0));
    const auto tr = make_tr({1.0, 2.0, -1.0}, 0.7, {0.5, 0.0, 3.0});
    const double target = 0.7 + 0.9 * v.value(tr.s_next);
    const auto rep = v.td_step(tr);
    EXPECT_NEAR(v.value(tr.s), target, 1e-12);
    EXPECT_NEAR(rep.realized_change, rep.intended_change, 1e-12);
    EXPECT_FALSE(rep.degenerate);
}

TEST(TdStep, LinearContractionIsExact)
{
    std::mt19937_64 rng(3);
    const auto arch = Architecture::linear(6, Head::scalar_value());
    for (double eta : {0.05, 0.3, 0.77, 1.0}) {
        ValueLearner v(arch, random_vector(rng, 6), td0(eta));
        for (int k = 0; k < 200; ++k) {
            auto tr = make_tr(random_vector(rng, 6), std::uniform_real_distribution<double>(-1, 1)(rng),
                              random_vector(rng, 6));
            const double target = tr.r + 0.9 * v.value(tr.s_next);
            const double before = v.value(tr.s) - target;
            v.td_step(tr);
            const double after = v.value(tr.s) - target;
            ASSERT_NEAR(after / before, 1.0 - eta, 1e-9) << eta << " " << k;
        }
    }
}

TEST(TdStep, TerminationMasksBootstrap)
{
    const auto arch = Architecture::linear(2, Head::scalar_value());
    ValueLearner v(arch, {1.0, 1.0}, td0(1.0));
    auto tr = make_tr({1.0, 0.0}, 0.25, {0.0, 1.0}, true);
    EXPECT_EQ(v.td_error(tr), 0.25 - 1.0);
    v.td_step(tr);
    EXPECT_NEAR(v.value(tr.s), 0.25, 1e-12);
}

TEST(TdStep, TruncationBootstraps)
{
    const auto arch = Architecture::linear(2, Head::scalar_value());
    ValueLearner v(arch, {1.0, 2.0}, td0(1.0));
    const auto tr = make_tr({1.0, 0.0}, 0.5, {0.0, 1.0}, false, true);
    EXPECT_DOUBLE_EQ(v.td_error(tr), 0.5 + 0.9 * 2.0 - 1.0);
}

TEST(TdStep, EpisodeHygiene)
{
    LearnerConfig c;
    c.lambda = 0.8;
    const auto arch = Architecture::linear(2, Head::scalar_value());
    ValueLearner v(arch, {0.0, 0.0}, c);
    v.td_step(make_tr({1.0, 0.0}, 1.0, {0.0, 1.0}));
    v.td_step(make_tr({0.0, 1.0}, 1.0, {1.0, 0.0}, false, true));
    EXPECT_GT(v.optimizer().trace().sigma_bar(), 0.0);
    EXPECT_NE(v.optimizer().trace().z, (std::vector<double>{0.0, 0.0}));
    v.td_step(make_tr({1.0, 0.0}, 1.0, {0.0, 0.0}, true));
    EXPECT_EQ(v.optimizer().trace().sigma_bar(), 0.0);
    EXPECT_EQ(v.optimizer().trace().z, (std::vector<double>{0.0, 0.0}));
}

TEST(TdStep, NonFiniteErrorRaises)
{
    const auto arch = Architecture::linear(1, Head::scalar_value());
    ValueLearner v(arch, {0.0}, td0(0.5));
    EXPECT_THROW(v.td_step(make_tr({1.0}, std::nan(""), {1.0})), NumericalError);
    EXPECT_THROW(v.td_step(make_tr({1.0}, 1.0, {std::numeric_limits<double>::infinity()})), NumericalError);
}

TEST(QStep, TabularOneStepExact)
{
    // two states, two actions, one-hot features; Q rows are actions
    const auto arch = Architecture::linear(2, Head::q_values(2));
    ValueLearner q(arch, {0.3, -0.2, 0.5, 1.0}, td0(1.0));
    Transition tr = make_tr({1.0, 0.0}, 0.4, {0.0, 1.0});
    tr.a = std::size_t{1};
    const auto qn = q.action_values(tr.s_next);
    const double target = 0.4 + 0.9 * std::max(qn[0], qn[1]);
    const double other = q.action_values(tr.s)[0];
    q.q_step(tr);
    EXPECT_NEAR(q.action_values(tr.s)[1], target, 1e-12);
    EXPECT_EQ(q.action_values(tr.s)[0], other);
}

TEST(QStep, TerminationDropsMax)
{
    const auto arch = Architecture::linear(1, Head::q_values(2));
    ValueLearner q(arch, {3.0, 5.0}, td0(1.0));
    Transition tr = make_tr({1.0}, 1.0, {1.0}, true);
    tr.a = std::size_t{0};
    EXPECT_EQ(q.td_error(tr), 1.0 - 3.0);
    tr.a = std::size_t{2};
    EXPECT_THROW(q.td_error(tr), ConfigError);
}

TEST(PgStep, ZeroAdvantageLeavesParametersUnchanged)
{
    const auto arch = Architecture::mlp(2, {8}, Head::softmax_policy(3));
    PolicyLearner pi(arch, sparse_init(arch, 1), LearnerConfig{});
    const auto before = pi.params();
    Transition tr = make_tr({0.3, -0.7}, 0.0, {0.0, 0.0});
    tr.a = std::size_t{2};
    const auto rep = pi.pg_step(tr, 0.0);
    EXPECT_EQ(pi.params(), before);
    EXPECT_EQ(rep.param_step_norm, 0.0);
}

TEST(PgStep, LinearSoftmaxFirstStepHitsIntendedChange)
{
    LearnerConfig c;
    c.lambda = 0.0;
    c.xi = 0.0;
    c.eta = 0.05;
    const auto arch = Architecture::linear(2, Head::softmax_policy(3));
    PolicyLearner pi(arch, std::vector<double>(6, 0.0), c);
    Transition tr = make_tr({1.0, 0.5}, 0.0, {0.0, 0.0});
    tr.a = std::size_t{1};
    const auto rep = pi.pg_step(tr, 2.0);
    EXPECT_EQ(rep.delta_clipped, 1.0);
    // log-softmax is concave in the logits, so the realized change sits slightly below
    EXPECT_NEAR(rep.realized_change / rep.intended_change, 1.0, 0.05);
}

TEST(PgStep, BanditLearnsBetterArm)
{
    EnvSpec spec;
    spec.kind = BanditSpec{{1.0, 0.0}, {0.0, 0.0}};
    LearnerConfig actor_cfg;
    actor_cfg.eta = 0.05;
    actor_cfg.lambda = 0.0;
    actor_cfg.xi = 0.0;
    LearnerConfig critic_cfg;
    critic_cfg.lambda = 0.0;
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        PolicyLearner actor(Architecture::linear(1, Head::softmax_policy(2)), {0.0, 0.0}, actor_cfg);
        ValueLearner critic(Architecture::linear(1, Head::scalar_value()), {0.0}, critic_cfg);
        auto st = env_reset(spec, seed);
        std::mt19937_64 rng(seed + 100);
        for (int t = 0; t < 20000; ++t) {
            const auto tr = env_step(spec, st, actor.act(st.obs, rng));
            ac_step(actor, critic, tr);
            env_restart(spec, st);
        }
        const auto p = std::get<SoftmaxPolicy>(actor.policy(st.obs)).probabilities();
        if (p[0] > 0.95) ++wins;
    }
    EXPECT_GE(wins, 3);
}

TEST(AcStep, ZeroRewardMovementDecays)
{
    // a looping two-state chain with no reward; the critic starts from a random MLP
    const auto varch = Architecture::mlp(2, {16}, Head::scalar_value());
    const auto parch = Architecture::mlp(2, {16}, Head::softmax_policy(2));
    ValueLearner critic(varch, sparse_init(varch, 3), LearnerConfig{});
    PolicyLearner actor(parch, sparse_init(parch, 4), LearnerConfig{});
    const std::vector<Observation> states{{{1.0, 0.0}}, {{0.0, 1.0}}};
    std::mt19937_64 rng(0);
    std::size_t s = 0;
    double early = 0.0;
    double late = 0.0;
    const int n = 20000;
    for (int t = 0; t < n; ++t) {
        Transition tr;
        tr.s = states[s];
        tr.a = actor.act(tr.s, rng);
        s = 1 - s;
        tr.s_next = states[s];
        tr.r = 0.0;
        const auto rep = ac_step(actor, critic, tr);
        const double move = rep.actor.param_step_norm + rep.critic.param_step_norm;
        if (t < 1000) early += move;
        if (t >= n - 1000) late += move;
    }
    EXPECT_LT(late, 0.1 * early);
}

TEST(AcStep, OrderCriticErrorFeedsActor)
{
    LearnerConfig c;
    c.lambda = 0.0;
    ValueLearner critic(Architecture::linear(1, Head::scalar_value()), {0.5}, c);
    PolicyLearner actor(Architecture::linear(1, Head::softmax_policy(2)), {0.0, 0.0}, c);
    Transition tr = make_tr({1.0}, 2.0, {1.0}, true);
    tr.a = std::size_t{0};
    const auto rep = ac_step(actor, critic, tr);
    EXPECT_EQ(rep.critic.delta, 1.5);
    EXPECT_EQ(rep.actor.delta, rep.critic.delta_clipped);
}

TEST(Learners, DeterministicTrajectories)
{
    EnvSpec spec;
    spec.kind = PointMassSpec{0.1, 0.05, 4.0};
    spec.time_limit = 50;
    auto run = [&] {
        const auto varch = Architecture::mlp(2, {16}, Head::scalar_value());
        const auto parch = Architecture::mlp(2, {16}, Head::gaussian_policy(1));
        LearnerConfig ac;
        ac.eta = 0.05;
        ValueLearner critic(varch, sparse_init(varch, 1), LearnerConfig{});
        PolicyLearner actor(parch, sparse_init(parch, 2), ac);
        auto st = env_reset(spec, 9);
        std::mt19937_64 rng(10);
        int steps = 0;
        try {
            for (; steps < 500; ++steps) {
                const auto tr = env_step(spec, st, actor.act(st.obs, rng));
                ac_step(actor, critic, tr);
                if (st.done) env_restart(spec, st);
            }
        } catch (const NumericalError&) {
            // an abort is part of the trajectory; both runs must hit it at the same step
        }
        return std::make_tuple(steps, actor.params(), critic.params());
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(std::get<0>(a), std::get<0>(b));
    EXPECT_EQ(std::get<1>(a), std::get<1>(b));
    EXPECT_EQ(std::get<2>(a), std::get<2>(b));
}

TEST(ConstantAlpha, ZeroStepNeverMoves)
{
    LearnerConfig c;
    c.alpha_rule = AlphaRule::constant;
    c.constant_alpha = 0.0;
    const auto arch = Architecture::linear(3, Head::scalar_value());
    ValueLearner v(arch, {0.1, 0.2, 0.3}, c);
    std::mt19937_64 rng(2);
    for (int k = 0; k < 100; ++k) v.td_step(make_tr(random_vector(rng, 3), 1.0, random_vector(rng, 3)));
    EXPECT_EQ(v.params(), (std::vector<double>{0.1, 0.2, 0.3}));
}

TEST(ConstantAlpha, FeatureScaleSquaredVersusInvariant)
{
    auto walk = [](double scale) {
        EnvSpec s;
        s.kind = RandomWalkSpec{};
        s.feature_scale = scale;
        return s;
    };
    for (AlphaRule rule : {AlphaRule::constant, AlphaRule::intentional}) {
        LearnerConfig c;
        c.alpha_rule = rule;
        c.constant_alpha = 0.01;
        c.gamma = 1.0;
        c.eta = 0.1;
        const auto arch = Architecture::linear(19, Head::scalar_value());
        ValueLearner v1(arch, std::vector<double>(19, 0.0), c);
        ValueLearner v10(arch, std::vector<double>(19, 0.0), c);
        const auto s1 = walk(1.0);
        const auto s10 = walk(10.0);
        auto e1 = env_reset(s1, 5);
        auto e10 = env_reset(s10, 5);
        std::mt19937_64 rng(6);
        bool first_nonzero = true;
        for (int t = 0; t < 3000; ++t) {
            const std::size_t a = rng() % 2;
            const auto r1 = v1.td_step(env_step(s1, e1, Action{a}));
            const auto r10 = v10.td_step(env_step(s10, e10, Action{a}));
            if (rule == AlphaRule::intentional) {
                ASSERT_NEAR(r10.realized_change, r1.realized_change, 1e-4 * std::abs(r1.realized_change) + 1e-12);
            } else if (first_nonzero && r1.realized_change != 0.0) {
                EXPECT_NEAR(r10.realized_change / r1.realized_change, 100.0, 1e-9);
                first_nonzero = false;
            }
            if (e1.done) {
                env_restart(s1, e1);
                env_restart(s10, e10);
            }
        }
    }
}

TEST(NaiveTrace, SmallerStepsInCoherentStream)
{
    // repeated visits to one feature vector without terminals: coherent gradients
    LearnerConfig c;
    c.lambda = 0.8;
    c.gamma = 1.0;
    c.rmsprop = false;
    c.eta = 0.1;
    LearnerConfig naive = c;
    naive.alpha_rule = AlphaRule::naive_trace;
    const auto arch = Architecture::linear(2, Head::scalar_value());
    ValueLearner a(arch, {0.0, 0.0}, c);
    ValueLearner b(arch, {0.0, 0.0}, naive);
    std::vector<double> ratios;
    for (int t = 0; t < 60; ++t) {
        const auto tr = make_tr({1.0, 0.5}, 1.0, {1.0, 0.5});
        // identical error on both learners isolates the step-size rule
        const double delta = 1.0;
        const auto ra = a.apply(tr, delta, delta);
        const auto rb = b.apply(tr, delta, delta);
        ratios.push_back(rb.realized_change / ra.realized_change);
    }
    EXPECT_NEAR(ratios.front(), 1.0, 1e-12);
    EXPECT_NEAR(ratios.back(), 1.0 - 0.8, 1e-6);
    for (std::size_t i = 1; i < ratios.size(); ++i) EXPECT_LT(ratios[i], ratios[i - 1]);
}

TEST(Learners, ConfigValidation)
{
    LearnerConfig c;
    c.eta = 0.0;
    EXPECT_THROW(ValueLearner(Architecture::linear(1, Head::scalar_value()), {0.0}, c), ConfigError);
    EXPECT_THROW(ValueLearner(Architecture::linear(1, Head::softmax_policy(2)), {0.0, 0.0}, LearnerConfig{}),
                 ConfigError);
    EXPECT_THROW(PolicyLearner(Architecture::linear(1, Head::scalar_value()), {0.0}, LearnerConfig{}), ConfigError);
    EXPECT_THROW(ValueLearner(Architecture::linear(2, Head::scalar_value()), {0.0}, LearnerConfig{}), ConfigError);
}

TEST(Exploration, EpsilonSchedule)
{
    EXPECT_EQ(epsilon_schedule(0, 200000), 1.0);
    EXPECT_NEAR(epsilon_schedule(5000, 200000), 0.505, 1e-12);
    EXPECT_EQ(epsilon_schedule(10000, 200000), 0.01);
    EXPECT_EQ(epsilon_schedule(199999, 200000), 0.01);
}
