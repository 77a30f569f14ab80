#pragma once

// Canned experiment configurations backing the acceptance checks.

#include <numeric>
#include <string>
#include <vector>

#include "intentional/config.hpp"

namespace intentional {

inline std::vector<std::uint64_t> seed_range(std::size_t n)
{
    std::vector<std::uint64_t> s(n);
    std::iota(s.begin(), s.end(), std::uint64_t{0});
    return s;
}

inline const std::vector<std::string>& suite_names()
{
    static const std::vector<std::string> names{"td_prediction", "ablation_naive", "ablation_constant",
                                                "q_control",     "pg_bandit",      "ac_control",
                                                "fidelity",      "bias_demo",      "flops"};
    return names;
}

namespace detail {

inline RunConfig random_walk_prediction(Experiment e)
{
    RunConfig c;
    c.experiment = e;
    c.env.kind = RandomWalkSpec{19, false};
    c.agent.lambda = 0.8;
    c.agent.gamma = 1.0;
    c.agent.eta = 0.01;
    c.seeds = seed_range(30);
    c.episodes = 5000;
    c.log_every = 250;
    return c;
}

} // namespace detail

inline RunConfig suite_config(const std::string& name)
{
    RunConfig c;
    if (name == "td_prediction") {
        c = detail::random_walk_prediction(Experiment::td_prediction);
    } else if (name == "ablation_naive") {
        c = detail::random_walk_prediction(Experiment::ablation_naive);
        c.episodes = 2000;
        c.log_every = 100;
    } else if (name == "ablation_constant") {
        c = detail::random_walk_prediction(Experiment::ablation_constant);
        c.seeds = seed_range(10);
        c.episodes = 2000;
        c.log_every = 100;
    } else if (name == "q_control") {
        c.experiment = Experiment::q_control;
        c.env.kind = GridworldSpec{};
        c.agent.eta = 0.25;
        c.agent.lambda = 0.8;
        c.agent.gamma = 0.95;
        c.seeds = seed_range(10);
        c.total_steps = 200000;
        c.log_every = 10000;
    } else if (name == "pg_bandit") {
        c.experiment = Experiment::pg_bandit;
        c.env.kind = BanditSpec{{1.0, 0.0}, {0.0, 0.0}};
        c.agent.lambda = 0.0;
        c.eta_actor = 0.05;
        c.xi = 0.0;
        c.seeds = seed_range(30);
        c.total_steps = 20000;
        c.log_every = 500;
    } else if (name == "ac_control" || name == "fidelity") {
        c.experiment = name == "fidelity" ? Experiment::fidelity : Experiment::ac_control;
        c.env.kind = PointMassSpec{};
        c.env.time_limit = 200;
        c.env.append_time_feature = true;
        c.net.mlp = true;
        c.net.hidden = {32, 32};
        c.warmup_steps = 10000;
        if (name == "fidelity") {
            c.agent.lambda = 0.0;
            c.seeds = {0};
            c.total_steps = 110000;
        } else {
            c.seeds = seed_range(30);
            c.total_steps = 500000;
        }
        c.log_every = 5000;
    } else if (name == "bias_demo") {
        c.experiment = Experiment::bias_demo;
    } else if (name == "flops") {
        c.experiment = Experiment::flops;
    } else {
        throw ConfigError("unknown suite '" + name + "'");
    }
    c.output_dir = "runs/" + name;
    return c;
}

} // namespace intentional
