#pragma once

// Desk-scale streaming environments with exact oracles for the tabular ones.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "intentional/errors.hpp"
#include "intentional/transition.hpp"

namespace intentional {

/// Classic 1-D walk: nonterminal states 1..n, terminals at 0 and n+1.
struct RandomWalkSpec {
    std::size_t n_states = 19;
    bool zero_one_rewards = false; ///< left terminal pays 0 instead of -1

    bool operator==(const RandomWalkSpec&) const = default;
};

struct Cell {
    std::size_t col = 0;
    std::size_t row = 0;
    bool operator==(const Cell&) const = default;
};

/// Four-action grid with boundary walls; entering a goal ends the episode.
struct GridworldSpec {
    std::size_t width = 5;
    std::size_t height = 5;
    std::vector<Cell> goals{Cell{4, 4}};
    Cell start{0, 0};
    double goal_reward = 1.0;
    double step_cost = 0.0;

    bool operator==(const GridworldSpec&) const = default;
};

/// Single-state task with Gaussian arm rewards; every pull is a terminal step.
struct BanditSpec {
    std::vector<double> arm_means{1.0, 0.0};
    std::vector<double> arm_stds{0.0, 0.0};

    bool operator==(const BanditSpec&) const = default;
};

/// 1-D double integrator on [-position_limit, position_limit], action
/// clamped to [-1, 1], reward -(x^2 + 0.1 v^2 + 0.01 u^2).
struct PointMassSpec {
    double dt = 0.1;
    double noise_std = 0.0;
    double position_limit = 4.0;

    bool operator==(const PointMassSpec&) const = default;
};

using EnvKind = std::variant<RandomWalkSpec, GridworldSpec, BanditSpec, PointMassSpec>;

struct EnvSpec {
    EnvKind kind = RandomWalkSpec{};
    std::optional<std::size_t> time_limit;
    bool append_time_feature = false;
    double feature_scale = 1.0; ///< multiplies every feature except the time feature

    bool operator==(const EnvSpec&) const = default;

    void validate() const
    {
        detail::require(!append_time_feature || time_limit.has_value(),
                        "env.append_time_feature requires env.time_limit");
        detail::require(!time_limit || *time_limit > 0, "env.time_limit must be positive");
        detail::require(feature_scale > 0.0, "env.feature_scale must be positive");
        if (const auto* rw = std::get_if<RandomWalkSpec>(&kind)) {
            detail::require(rw->n_states >= 1, "random_walk needs at least one state");
        } else if (const auto* g = std::get_if<GridworldSpec>(&kind)) {
            detail::require(g->width > 0 && g->height > 0, "gridworld dimensions must be positive");
            detail::require(g->start.col < g->width && g->start.row < g->height, "gridworld start outside grid");
            for (const auto& c : g->goals)
                detail::require(c.col < g->width && c.row < g->height, "gridworld goal outside grid");
        } else if (const auto* b = std::get_if<BanditSpec>(&kind)) {
            detail::require(!b->arm_means.empty(), "bandit needs at least one arm");
            detail::require(b->arm_means.size() == b->arm_stds.size(), "bandit arm_means and arm_stds differ in length");
            for (double s : b->arm_stds) detail::require(s >= 0.0, "bandit arm_stds must be non-negative");
        } else {
            const auto& pm = std::get<PointMassSpec>(kind);
            detail::require(pm.dt > 0.0, "point_mass dt must be positive");
            detail::require(pm.noise_std >= 0.0, "point_mass noise_std must be non-negative");
            detail::require(pm.position_limit > 0.0, "point_mass position_limit must be positive");
        }
    }
};

/// Remaining-time feature: t/limit - 1/2, so -1/2 at reset and +1/2 at the limit.
inline double time_feature(std::size_t t, std::size_t limit)
{
    if (limit == 0 || t > limit) throw ConfigError("time_feature needs 0 <= t <= limit");
    return static_cast<double>(t) / static_cast<double>(limit) - 0.5;
}

struct ActionSpace {
    bool discrete = true;
    std::size_t size = 2; ///< action count, or action dimension when continuous
};

inline ActionSpace action_space(const EnvSpec& spec)
{
    return std::visit(
        [](const auto& k) -> ActionSpace {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, RandomWalkSpec>) return {true, 2};
            else if constexpr (std::is_same_v<K, GridworldSpec>) return {true, 4};
            else if constexpr (std::is_same_v<K, BanditSpec>) return {true, k.arm_means.size()};
            else return {false, 1};
        },
        spec.kind);
}

/// Number of features before the optional time feature.
inline std::size_t base_feature_dim(const EnvSpec& spec)
{
    return std::visit(
        [](const auto& k) -> std::size_t {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, RandomWalkSpec>) return k.n_states;
            else if constexpr (std::is_same_v<K, GridworldSpec>) return k.width * k.height;
            else if constexpr (std::is_same_v<K, BanditSpec>) return 1;
            else return 2;
        },
        spec.kind);
}

inline std::size_t observation_dim(const EnvSpec& spec)
{
    return base_feature_dim(spec) + (spec.append_time_feature ? 1 : 0);
}

inline bool is_tabular(const EnvSpec& spec)
{
    return std::holds_alternative<RandomWalkSpec>(spec.kind) || std::holds_alternative<GridworldSpec>(spec.kind);
}

/// Nonterminal and terminal states of a tabular environment, indexed 0..n-1.
inline std::size_t tabular_state_count(const EnvSpec& spec)
{
    if (const auto* rw = std::get_if<RandomWalkSpec>(&spec.kind)) return rw->n_states + 2;
    if (const auto* g = std::get_if<GridworldSpec>(&spec.kind)) return g->width * g->height;
    throw ConfigError("environment is not tabular");
}

/// Mutable episode state. Advanced in place by env_step.
struct EnvState {
    std::size_t cell = 0; ///< tabular state index (random walk: 0..n+1)
    double x = 0.0;
    double v = 0.0;
    std::size_t t = 0; ///< steps taken in the current episode
    bool done = false;
    Observation obs;
    std::mt19937_64 rng;
};

namespace detail {

inline bool is_goal(const GridworldSpec& g, std::size_t cell)
{
    return std::any_of(g.goals.begin(), g.goals.end(),
                       [&](const Cell& c) { return c.row * g.width + c.col == cell; });
}

inline bool is_terminal_state(const EnvSpec& spec, std::size_t cell)
{
    if (const auto* rw = std::get_if<RandomWalkSpec>(&spec.kind)) return cell == 0 || cell == rw->n_states + 1;
    if (const auto* g = std::get_if<GridworldSpec>(&spec.kind)) return is_goal(*g, cell);
    return false;
}

} // namespace detail

/// Features of tabular state `cell` (one-hot; all zeros for terminals).
inline std::vector<double> tabular_features(const EnvSpec& spec, std::size_t cell)
{
    std::vector<double> f(base_feature_dim(spec), 0.0);
    if (const auto* rw = std::get_if<RandomWalkSpec>(&spec.kind)) {
        (void)rw;
        if (!detail::is_terminal_state(spec, cell)) f[cell - 1] = spec.feature_scale;
    } else if (!detail::is_terminal_state(spec, cell)) {
        f[cell] = spec.feature_scale;
    }
    return f;
}

namespace detail {

inline Observation make_observation(const EnvSpec& spec, EnvState& st)
{
    Observation o;
    if (is_tabular(spec)) {
        o.features = tabular_features(spec, st.cell);
    } else if (std::holds_alternative<BanditSpec>(spec.kind)) {
        o.features = {spec.feature_scale};
    } else {
        const auto& pm = std::get<PointMassSpec>(spec.kind);
        double px = st.x;
        double pv = st.v;
        if (pm.noise_std > 0.0) {
            std::normal_distribution<double> noise(0.0, pm.noise_std);
            px += noise(st.rng);
            pv += noise(st.rng);
        }
        o.features = {px * spec.feature_scale, pv * spec.feature_scale};
    }
    if (spec.append_time_feature) o.features.push_back(time_feature(std::min(st.t, *spec.time_limit), *spec.time_limit));
    return o;
}

inline std::size_t discrete_action(const EnvSpec& spec, const Action& a)
{
    const auto* i = std::get_if<std::size_t>(&a);
    if (!i) throw ConfigError("environment expects a discrete action");
    if (*i >= action_space(spec).size) throw ConfigError("action index " + std::to_string(*i) + " out of range");
    return *i;
}

/// Deterministic successor and reward of a tabular state under `action`.
inline std::pair<std::size_t, double> tabular_dynamics(const EnvSpec& spec, std::size_t cell, std::size_t action)
{
    if (const auto* rw = std::get_if<RandomWalkSpec>(&spec.kind)) {
        const std::size_t next = action == 0 ? cell - 1 : cell + 1;
        double r = 0.0;
        if (next == 0) r = rw->zero_one_rewards ? 0.0 : -1.0;
        if (next == rw->n_states + 1) r = 1.0;
        return {next, r};
    }
    const auto& g = std::get<GridworldSpec>(spec.kind);
    std::size_t row = cell / g.width;
    std::size_t col = cell % g.width;
    switch (action) {
    case 0: if (row > 0) --row; break;            // up
    case 1: if (col + 1 < g.width) ++col; break;  // right
    case 2: if (row + 1 < g.height) ++row; break; // down
    default: if (col > 0) --col; break;           // left
    }
    const std::size_t next = row * g.width + col;
    double r = -g.step_cost;
    if (is_goal(g, next)) r += g.goal_reward;
    return {next, r};
}

} // namespace detail

/// Starts an episode on an existing state, keeping its random stream.
inline void env_restart(const EnvSpec& spec, EnvState& st)
{
    st.t = 0;
    st.done = false;
    if (const auto* rw = std::get_if<RandomWalkSpec>(&spec.kind)) {
        st.cell = (rw->n_states + 1) / 2;
    } else if (const auto* g = std::get_if<GridworldSpec>(&spec.kind)) {
        st.cell = g->start.row * g->width + g->start.col;
    } else if (std::holds_alternative<PointMassSpec>(spec.kind)) {
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        st.x = unif(st.rng);
        st.v = 0.0;
    }
    st.obs = detail::make_observation(spec, st);
}

/// Fresh environment state, deterministic in `seed`.
inline EnvState env_reset(const EnvSpec& spec, std::uint64_t seed)
{
    spec.validate();
    EnvState st;
    st.rng.seed(seed);
    env_restart(spec, st);
    return st;
}

/// Advances `st` by one step and returns the transition taken.
inline Transition env_step(const EnvSpec& spec, EnvState& st, const Action& action)
{
    if (st.done) throw ConfigError("env_step called on a finished episode; restart it first");
    Transition tr;
    tr.s = st.obs;
    tr.a = action;
    if (is_tabular(spec)) {
        const auto [next, r] = detail::tabular_dynamics(spec, st.cell, detail::discrete_action(spec, action));
        st.cell = next;
        tr.r = r;
        tr.terminated = detail::is_terminal_state(spec, next);
    } else if (const auto* b = std::get_if<BanditSpec>(&spec.kind)) {
        const std::size_t arm = detail::discrete_action(spec, action);
        tr.r = b->arm_means[arm];
        if (b->arm_stds[arm] > 0.0) {
            std::normal_distribution<double> noise(0.0, b->arm_stds[arm]);
            tr.r += noise(st.rng);
        }
        tr.terminated = true;
    } else {
        const auto& pm = std::get<PointMassSpec>(spec.kind);
        const auto* u = std::get_if<std::vector<double>>(&action);
        if (!u || u->size() != 1) throw ConfigError("point_mass expects a 1-D continuous action");
        const double force = std::clamp((*u)[0], -1.0, 1.0);
        st.v += force * pm.dt;
        st.x += st.v * pm.dt;
        if (std::abs(st.x) > pm.position_limit) {
            st.x = std::clamp(st.x, -pm.position_limit, pm.position_limit);
            st.v = 0.0;
        }
        tr.r = -(st.x * st.x + 0.1 * st.v * st.v + 0.01 * force * force);
    }
    ++st.t;
    tr.truncated = !tr.terminated && spec.time_limit && st.t >= *spec.time_limit;
    st.done = tr.terminated || tr.truncated;
    st.obs = detail::make_observation(spec, st);
    tr.s_next = st.obs;
    return tr;
}

/// pi(a|s) for every tabular state, rows indexed like tabular_state_count.
using TabularPolicy = std::vector<std::vector<double>>;

inline TabularPolicy uniform_policy(const EnvSpec& spec)
{
    const std::size_t n_actions = action_space(spec).size;
    return TabularPolicy(tabular_state_count(spec), std::vector<double>(n_actions, 1.0 / static_cast<double>(n_actions)));
}

/// Exact V^pi from the Bellman linear system; terminals are fixed at 0.
inline std::vector<double> analytic_values(const EnvSpec& spec, const TabularPolicy& policy, double gamma)
{
    if (!is_tabular(spec)) throw ConfigError("analytic_values needs a tabular environment");
    const std::size_t n = tabular_state_count(spec);
    const std::size_t n_actions = action_space(spec).size;
    detail::require(policy.size() == n, "policy row count differs from state count");
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t s = 0; s < n; ++s) {
        if (detail::is_terminal_state(spec, s)) continue;
        detail::require(policy[s].size() == n_actions, "policy row has the wrong action count");
        for (std::size_t a = 0; a < n_actions; ++a) {
            const double p = policy[s][a];
            if (p == 0.0) continue;
            const auto [next, r] = detail::tabular_dynamics(spec, s, a);
            const auto si = static_cast<Eigen::Index>(s);
            b[si] += p * r;
            if (!detail::is_terminal_state(spec, next)) A(si, static_cast<Eigen::Index>(next)) -= gamma * p;
        }
    }
    const Eigen::VectorXd v = A.partialPivLu().solve(b);
    return {v.data(), v.data() + v.size()};
}

/// Q* by value iteration until the sup-norm change falls below `tol`.
inline std::vector<std::vector<double>> optimal_q_values(const EnvSpec& spec, double gamma, double tol = 1e-12)
{
    if (!is_tabular(spec)) throw ConfigError("optimal_q_values needs a tabular environment");
    detail::require(gamma < 1.0, "value iteration needs gamma < 1");
    const std::size_t n = tabular_state_count(spec);
    const std::size_t n_actions = action_space(spec).size;
    std::vector<double> v(n, 0.0);
    std::vector<std::vector<double>> q(n, std::vector<double>(n_actions, 0.0));
    for (int iter = 0; iter < 100000; ++iter) {
        double change = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            if (detail::is_terminal_state(spec, s)) continue;
            for (std::size_t a = 0; a < n_actions; ++a) {
                const auto [next, r] = detail::tabular_dynamics(spec, s, a);
                q[s][a] = r + (detail::is_terminal_state(spec, next) ? 0.0 : gamma * v[next]);
            }
            const double best = *std::max_element(q[s].begin(), q[s].end());
            change = std::max(change, std::abs(best - v[s]));
            v[s] = best;
        }
        if (change < tol) break;
    }
    return q;
}

/// Max over states of |V(s) - sum_a pi(a|s) (r + gamma V(s'))|.
inline double bellman_residual(const EnvSpec& spec, const TabularPolicy& policy, const std::vector<double>& v, double gamma)
{
    double worst = 0.0;
    for (std::size_t s = 0; s < v.size(); ++s) {
        if (detail::is_terminal_state(spec, s)) continue;
        double backup = 0.0;
        for (std::size_t a = 0; a < policy[s].size(); ++a) {
            const auto [next, r] = detail::tabular_dynamics(spec, s, a);
            backup += policy[s][a] * (r + (detail::is_terminal_state(spec, next) ? 0.0 : gamma * v[next]));
        }
        worst = std::max(worst, std::abs(v[s] - backup));
    }
    return worst;
}

inline bool is_terminal_state(const EnvSpec& spec, std::size_t cell) { return detail::is_terminal_state(spec, cell); }

} // namespace intentional
