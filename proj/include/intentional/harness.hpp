#pragma once

// Seeded experiment runner: the canned experiments, seed-parallel
// execution, aggregation, and CSV / JSON emission.

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "intentional/agents.hpp"
#include "intentional/bias.hpp"
#include "intentional/config.hpp"
#include "intentional/diagnostics.hpp"
#include "intentional/envs.hpp"

namespace intentional {

using json = nlohmann::json;

inline constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();

/// One learning-curve point. Fields that do not apply to an experiment are NaN.
struct LogRow {
    std::size_t step = 0;
    std::size_t episodes = 0;
    double return_mean = nan_value; ///< episodes finished since the previous row
    double rmse = nan_value;
    double alpha_mean = nan_value;
    double alpha_max = nan_value;
    std::size_t degenerate = 0;
    double metric = nan_value;          ///< the experiment's headline quantity
    double baseline_metric = nan_value; ///< its comparison run, where there is one

    bool operator==(const LogRow&) const = default;
};

inline constexpr std::array<const char*, 9> csv_columns{
    "step", "episodes", "return_mean", "rmse", "alpha_mean", "alpha_max", "degenerate", "metric", "baseline_metric"};

inline constexpr std::array<const char*, 4> aggregate_columns{"step", "mean", "ci95_low", "ci95_high"};

struct SeedResult {
    std::uint64_t seed = 0;
    std::vector<LogRow> rows;
    json diagnostics = json::object();
    std::optional<std::string> abort_message; ///< set when a NumericalError ended the run
    std::vector<StepReport> value_reports;    ///< kept only by the fidelity experiment
    std::vector<StepReport> policy_reports;
};

struct AggregateRow {
    std::size_t step = 0;
    double mean = nan_value;
    double ci95_low = nan_value;
    double ci95_high = nan_value;
};

struct RunRecord {
    RunConfig config;
    std::vector<SeedResult> seeds;
    std::vector<AggregateRow> aggregate;
    json diagnostics = json::object();
    double wall_time_s = 0.0;

    bool aborted() const
    {
        for (const auto& s : seeds)
            if (s.abort_message) return true;
        return false;
    }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent stream per (seed, purpose).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    return splitmix64(splitmix64(seed) ^ (stream * 0x632be59bd9b4e019ULL));
}

enum Stream : std::uint64_t { env_stream = 1, policy_stream, critic_init, actor_init, baseline_env, baseline_policy };

/// Mean and normal-approximation 95% half-width (sample std over sqrt(n)).
struct MeanCi {
    double mean = nan_value;
    double half_width = nan_value;
    std::size_t n = 0;
};

inline MeanCi mean_ci(const std::vector<double>& xs)
{
    MeanCi out;
    std::vector<double> v;
    for (double x : xs)
        if (std::isfinite(x)) v.push_back(x);
    out.n = v.size();
    if (v.empty()) return out;
    double s = 0.0;
    for (double x : v) s += x;
    out.mean = s / static_cast<double>(v.size());
    if (v.size() < 2) {
        out.half_width = 0.0;
        return out;
    }
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    out.half_width = 1.96 * sd / std::sqrt(static_cast<double>(v.size()));
    return out;
}

/// Running statistics between two log points.
struct Window {
    double alpha_sum = 0.0;
    double alpha_max = nan_value;
    std::size_t updates = 0;
    std::size_t degenerate = 0;
    double return_sum = 0.0;
    std::size_t returns = 0;
    double baseline_sum = 0.0;
    std::size_t baseline_returns = 0;

    void add(const StepReport& r)
    {
        alpha_sum += r.alpha;
        alpha_max = updates == 0 ? r.alpha : std::max(alpha_max, r.alpha);
        ++updates;
        if (r.degenerate) ++degenerate;
    }

    LogRow row(std::size_t step, std::size_t episodes) const
    {
        LogRow out;
        out.step = step;
        out.episodes = episodes;
        if (returns > 0) out.return_mean = return_sum / static_cast<double>(returns);
        if (updates > 0) {
            out.alpha_mean = alpha_sum / static_cast<double>(updates);
            out.alpha_max = alpha_max;
        }
        out.degenerate = degenerate;
        return out;
    }
};

inline ParamVector zero_params(const Architecture& arch) { return ParamVector(param_count(arch), 0.0); }

inline Architecture value_architecture(const RunConfig& cfg, std::size_t input_dim, Head head)
{
    if (!cfg.net.mlp) return Architecture::linear(input_dim, head);
    return Architecture::mlp(input_dim, cfg.net.hidden, head, cfg.net.layernorm, cfg.net.sparsity);
}

inline Action random_action(const ActionSpace& space, std::mt19937_64& rng)
{
    if (space.discrete) return std::uniform_int_distribution<std::size_t>(0, space.size - 1)(rng);
    std::vector<double> u(space.size);
    for (double& x : u) x = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    return u;
}

inline Observation scaled(const Observation& o, double k)
{
    if (k == 1.0) return o;
    Observation out = o;
    for (double& x : out.features) x *= k;
    return out;
}

inline Transition scaled(const Transition& tr, double k)
{
    if (k == 1.0) return tr;
    Transition out = tr;
    out.s = scaled(tr.s, k);
    out.s_next = scaled(tr.s_next, k);
    return out;
}

inline double tail_mean(const std::vector<double>& xs, double fraction = 0.2)
{
    if (xs.empty()) return nan_value;
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(xs.size()))));
    double s = 0.0;
    for (std::size_t i = xs.size() - n; i < xs.size(); ++i) s += xs[i];
    return s / static_cast<double>(n);
}

inline json ratio_json(const RatioSummary& r)
{
    return json{{"mean", r.mean},
                {"std", r.std},
                {"p1", r.p1},
                {"p99", r.p99},
                {"n", r.n},
                {"excluded_degenerate", r.excluded_degenerate},
                {"excluded_zero_intent", r.excluded_zero_intent}};
}

inline json ratio_json_or_null(std::span<const StepReport> reports)
{
    try {
        return ratio_json(fidelity_summary(reports));
    } catch (const ConfigError&) {
        return nullptr;
    }
}

/// Fraction of non-degenerate, non-zero-intent steps with realized / intended in [lo, hi].
inline double fraction_in_window(std::span<const StepReport> reports, double lo, double hi)
{
    std::size_t n = 0;
    std::size_t in = 0;
    for (const auto& r : reports) {
        if (r.degenerate || r.intended_change == 0.0) continue;
        const double q = r.realized_change / r.intended_change;
        ++n;
        if (q >= lo && q <= hi) ++in;
    }
    return n ? static_cast<double>(in) / static_cast<double>(n) : nan_value;
}

inline constexpr double divergence_rmse = 1e6;

// ---------------------------------------------------------------------------
// Prediction family: several linear learners on one random-policy stream

struct PredictionLearner {
    LearnerConfig cfg;
    double feature_scale = 1.0; ///< applied on top of the environment's own scale
    bool may_diverge = false;
};

struct PredictionCurves {
    std::vector<LogRow> rows;              ///< alpha statistics of learner 0
    std::vector<std::vector<double>> rmse; ///< per learner, per row
    std::vector<bool> diverged;
};

inline PredictionCurves run_prediction(const RunConfig& cfg, std::uint64_t seed,
                                       const std::vector<PredictionLearner>& specs)
{
    const EnvSpec& env = cfg.env;
    const std::size_t n_states = tabular_state_count(env);
    const auto oracle_all = analytic_values(env, uniform_policy(env), cfg.agent.gamma);
    std::vector<Observation> states;
    std::vector<double> oracle;
    for (std::size_t c = 0; c < n_states; ++c) {
        if (intentional::is_terminal_state(env, c)) continue;
        states.push_back(Observation{tabular_features(env, c)});
        oracle.push_back(oracle_all[c]);
    }
    const auto arch = Architecture::linear(observation_dim(env), Head::scalar_value());
    std::vector<ValueLearner> learners;
    std::vector<std::vector<Observation>> learner_states;
    for (const auto& s : specs) {
        learners.emplace_back(arch, zero_params(arch), s.cfg);
        std::vector<Observation> st;
        for (const auto& o : states) st.push_back(scaled(o, s.feature_scale));
        learner_states.push_back(std::move(st));
    }

    PredictionCurves out;
    out.rmse.resize(specs.size());
    out.diverged.assign(specs.size(), false);
    auto st = env_reset(env, derive_seed(seed, env_stream));
    std::mt19937_64 policy_rng(derive_seed(seed, policy_stream));
    const auto space = action_space(env);
    const bool by_episode = cfg.episodes > 0;
    Window win;
    double ret = 0.0;
    std::size_t episodes = 0;

    auto log = [&](std::size_t step) {
        auto row = win.row(step, episodes);
        for (std::size_t i = 0; i < learners.size(); ++i) {
            double e = std::numeric_limits<double>::infinity();
            if (!out.diverged[i]) {
                e = prediction_rmse(learners[i].params(), arch, learner_states[i], oracle);
                if (!std::isfinite(e) || e > divergence_rmse) {
                    if (!specs[i].may_diverge) throw NumericalError("prediction error diverged");
                    out.diverged[i] = true;
                    e = std::numeric_limits<double>::infinity();
                }
            }
            out.rmse[i].push_back(e);
        }
        row.rmse = out.rmse[0].back();
        out.rows.push_back(row);
        win = Window{};
    };

    for (std::size_t step = 1;; ++step) {
        if (!by_episode && step > cfg.total_steps) break;
        const auto tr = env_step(env, st, random_action(space, policy_rng));
        ret += tr.r;
        for (std::size_t i = 0; i < learners.size(); ++i) {
            if (out.diverged[i]) continue;
            try {
                const auto rep = learners[i].td_step(scaled(tr, specs[i].feature_scale));
                if (i == 0) win.add(rep);
            } catch (const NumericalError&) {
                if (!specs[i].may_diverge) throw;
                out.diverged[i] = true;
            }
        }
        bool log_now = !by_episode && step % cfg.log_every == 0;
        if (st.done) {
            ++episodes;
            win.return_sum += ret;
            ++win.returns;
            ret = 0.0;
            env_restart(env, st);
            if (by_episode && episodes % cfg.log_every == 0) log_now = true;
            if (by_episode && episodes >= cfg.episodes) {
                log(step);
                break;
            }
        }
        if (log_now) log(step);
    }
    return out;
}

inline LearnerConfig with_rule(LearnerConfig c, AlphaRule rule, double alpha = 0.0)
{
    c.alpha_rule = rule;
    if (rule == AlphaRule::constant) c.constant_alpha = alpha;
    return c;
}

} // namespace detail

/// Per-state realized change of the naive rule divided by that of the
/// aggregate rule on a stream whose gradient never changes; entry t-1
/// belongs to step t. Preconditioning and clipping are switched off so the
/// ratio depends only on lambda * gamma.
inline std::vector<double> coherent_stream_ratios(double lambda, double gamma, double eta, std::size_t steps,
                                                  std::uint64_t seed)
{
    LearnerConfig c;
    c.eta = eta;
    c.lambda = lambda;
    c.gamma = gamma;
    c.rmsprop = false;
    c.clip_mode = ClipMode::off;
    const auto arch = Architecture::linear(3, Head::scalar_value());
    ValueLearner naive(arch, {0.0, 0.0, 0.0}, detail::with_rule(c, AlphaRule::naive_trace));
    ValueLearner aggregate(arch, {0.0, 0.0, 0.0}, c);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> reward(0.5, 1.5);
    Transition tr;
    tr.s = Observation{{0.6, -1.2, 0.9}};
    tr.s_next = Observation{{0.0, 0.0, 0.0}};
    std::vector<double> out;
    for (std::size_t t = 0; t < steps; ++t) {
        tr.r = reward(rng);
        const auto a = aggregate.td_step(tr);
        const auto n = naive.td_step(tr);
        out.push_back((n.realized_change / n.delta_clipped) / (a.realized_change / a.delta_clipped));
    }
    return out;
}

namespace detail {

// ---------------------------------------------------------------------------
// Per-seed experiment bodies

inline SeedResult seed_td_prediction(const RunConfig& cfg, std::uint64_t seed)
{
    SeedResult out;
    const auto curves = run_prediction(cfg, seed, {{cfg.agent, 1.0, false}});
    out.rows = curves.rows;
    for (auto& r : out.rows) r.metric = r.rmse;
    out.diagnostics["final_rmse"] = out.rows.empty() ? nan_value : out.rows.back().rmse;
    return out;
}

inline SeedResult seed_ablation_naive(const RunConfig& cfg, std::uint64_t seed)
{
    SeedResult out;
    const auto curves = run_prediction(
        cfg, seed, {{with_rule(cfg.agent, AlphaRule::naive_trace), 1.0, false}, {with_rule(cfg.agent, AlphaRule::intentional), 1.0, false}});
    out.rows = curves.rows;
    for (std::size_t k = 0; k < out.rows.size(); ++k) {
        out.rows[k].metric = curves.rmse[0][k];
        out.rows[k].baseline_metric = curves.rmse[1][k];
    }
    out.diagnostics["final_rmse_naive"] = tail_mean(curves.rmse[0]);
    out.diagnostics["final_rmse_intentional"] = tail_mean(curves.rmse[1]);
    return out;
}

inline SeedResult seed_ablation_constant(const RunConfig& cfg, std::uint64_t seed, double tuned_alpha)
{
    SeedResult out;
    const double k = cfg.ablation_feature_scale;
    const auto constant = with_rule(cfg.agent, AlphaRule::constant, tuned_alpha);
    const auto curves = run_prediction(cfg, seed,
                                       {{cfg.agent, k, false},
                                        {constant, k, true},
                                        {cfg.agent, 1.0, false},
                                        {constant, 1.0, true}});
    out.rows = curves.rows;
    for (std::size_t r = 0; r < out.rows.size(); ++r) {
        out.rows[r].metric = curves.rmse[0][r];
        out.rows[r].baseline_metric = curves.rmse[1][r];
    }
    out.diagnostics["final_rmse_intentional_scaled"] = tail_mean(curves.rmse[0]);
    out.diagnostics["final_rmse_constant_scaled"] = tail_mean(curves.rmse[1]);
    out.diagnostics["final_rmse_intentional"] = tail_mean(curves.rmse[2]);
    out.diagnostics["final_rmse_constant"] = tail_mean(curves.rmse[3]);
    out.diagnostics["constant_scaled_diverged"] = static_cast<bool>(curves.diverged[1]);
    return out;
}

/// Greedy actions of `q` that are optimal under `q_star` (ties accepted), over all cells.
inline std::size_t policy_matches(const ValueLearner& q, const EnvSpec& env,
                                  const std::vector<std::vector<double>>& q_star)
{
    std::size_t match = 0;
    for (std::size_t c = 0; c < q_star.size(); ++c) {
        const auto a = q.greedy_action(Observation{tabular_features(env, c)});
        const double best = *std::max_element(q_star[c].begin(), q_star[c].end());
        if (q_star[c][a] >= best - 1e-9) ++match;
    }
    return match;
}

inline SeedResult seed_q_control(const RunConfig& cfg, std::uint64_t seed)
{
    SeedResult out;
    const EnvSpec& env = cfg.env;
    const auto space = action_space(env);
    const auto arch = Architecture::linear(observation_dim(env), Head::q_values(space.size));
    ValueLearner q(arch, zero_params(arch), cfg.agent);
    const auto q_star = optimal_q_values(env, cfg.agent.gamma);
    auto st = env_reset(env, derive_seed(seed, env_stream));
    std::mt19937_64 rng(derive_seed(seed, policy_stream));
    Window win;
    double ret = 0.0;
    std::size_t episodes = 0;
    for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
        const double eps =
            epsilon_schedule(step - 1, cfg.total_steps, cfg.explore_fraction, cfg.explore_start, cfg.explore_end);
        const auto a = epsilon_greedy(q, st.obs, eps, rng);
        const auto tr = env_step(env, st, Action{a});
        ret += tr.r;
        try {
            win.add(q.q_step(tr));
        } catch (const NumericalError& e) {
            out.abort_message = e.what();
            break;
        }
        if (st.done) {
            ++episodes;
            win.return_sum += ret;
            ++win.returns;
            ret = 0.0;
            env_restart(env, st);
        }
        if (step % cfg.log_every == 0) {
            auto row = win.row(step, episodes);
            row.metric = static_cast<double>(policy_matches(q, env, q_star));
            out.rows.push_back(row);
            win = Window{};
        }
    }
    out.diagnostics["policy_match"] = policy_matches(q, env, q_star);
    out.diagnostics["states"] = q_star.size();
    return out;
}

inline SeedResult seed_pg_bandit(const RunConfig& cfg, std::uint64_t seed)
{
    SeedResult out;
    const EnvSpec& env = cfg.env;
    const auto& bandit = std::get<BanditSpec>(env.kind);
    const std::size_t best = static_cast<std::size_t>(
        std::max_element(bandit.arm_means.begin(), bandit.arm_means.end()) - bandit.arm_means.begin());
    const auto parch = Architecture::linear(1, Head::softmax_policy(bandit.arm_means.size()));
    const auto varch = Architecture::linear(1, Head::scalar_value());
    PolicyLearner actor(parch, zero_params(parch), cfg.actor_config());
    ValueLearner critic(varch, zero_params(varch), cfg.agent);
    auto st = env_reset(env, derive_seed(seed, env_stream));
    std::mt19937_64 rng(derive_seed(seed, policy_stream));
    auto best_probability = [&] { return std::get<SoftmaxPolicy>(actor.policy(st.obs)).probabilities()[best]; };
    Window win;
    std::optional<std::size_t> reached;
    std::vector<StepReport> reports;
    for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
        const auto tr = env_step(env, st, actor.act(st.obs, rng));
        try {
            const auto reps = ac_step(actor, critic, tr);
            win.add(reps.actor);
            reports.push_back(reps.actor);
        } catch (const NumericalError& e) {
            out.abort_message = e.what();
            break;
        }
        win.return_sum += tr.r;
        ++win.returns;
        env_restart(env, st);
        const double p = best_probability();
        if (!reached && p > 0.95) reached = step;
        if (step % cfg.log_every == 0) {
            auto row = win.row(step, step);
            row.metric = p;
            out.rows.push_back(row);
            win = Window{};
        }
    }
    out.diagnostics["final_best_probability"] = best_probability();
    out.diagnostics["first_step_above_0_95"] = reached ? json(*reached) : json(nullptr);
    out.diagnostics["policy_ratio"] = ratio_json_or_null(reports);
    out.diagnostics["policy_ratio_fraction_in_0_9_1_1"] = fraction_in_window(reports, 0.9, 1.1);
    return out;
}

inline SeedResult seed_actor_critic(const RunConfig& cfg, std::uint64_t seed, bool keep_reports)
{
    SeedResult out;
    const EnvSpec& env = cfg.env;
    const auto space = action_space(env);
    const std::size_t dim = observation_dim(env);
    const auto varch = value_architecture(cfg, dim, Head::scalar_value());
    const auto parch =
        value_architecture(cfg, dim, space.discrete ? Head::softmax_policy(space.size) : Head::gaussian_policy(space.size));
    ValueLearner critic(varch, sparse_init(varch, derive_seed(seed, critic_init)), cfg.agent);
    PolicyLearner actor(parch, sparse_init(parch, derive_seed(seed, actor_init)), cfg.actor_config());
    auto st = env_reset(env, derive_seed(seed, env_stream));
    auto base = env_reset(env, derive_seed(seed, baseline_env));
    std::mt19937_64 rng(derive_seed(seed, policy_stream));
    std::mt19937_64 base_rng(derive_seed(seed, baseline_policy));
    Window win;
    double ret = 0.0;
    double base_ret = 0.0;
    std::size_t episodes = 0;
    std::size_t step = 1;
    std::size_t actor_steps = 0;
    for (; step <= cfg.total_steps; ++step) {
        const auto tr = env_step(env, st, actor.act(st.obs, rng));
        ret += tr.r;
        try {
            if (step <= cfg.warmup_steps) {
                const auto rep = critic.td_step(tr);
                if (keep_reports) out.value_reports.push_back(rep);
            } else {
                const auto reps = ac_step(actor, critic, tr);
                ++actor_steps;
                win.add(reps.actor);
                if (keep_reports) {
                    out.value_reports.push_back(reps.critic);
                    out.policy_reports.push_back(reps.actor);
                }
            }
        } catch (const NumericalError& e) {
            out.abort_message = e.what();
            break;
        }
        if (st.done) {
            ++episodes;
            win.return_sum += ret;
            ++win.returns;
            ret = 0.0;
            env_restart(env, st);
        }
        base_ret += env_step(env, base, random_action(space, base_rng)).r;
        if (base.done) {
            win.baseline_sum += base_ret;
            ++win.baseline_returns;
            base_ret = 0.0;
            env_restart(env, base);
        }
        if (step % cfg.log_every == 0) {
            auto row = win.row(step, episodes);
            row.metric = row.return_mean;
            row.baseline_metric =
                win.baseline_returns ? win.baseline_sum / static_cast<double>(win.baseline_returns) : nan_value;
            out.rows.push_back(row);
            win = Window{};
        }
    }
    out.diagnostics["steps_completed"] = step - 1;
    out.diagnostics["actor_steps"] = actor_steps;
    out.diagnostics["episodes"] = episodes;
    if (out.abort_message) out.diagnostics["aborted_at_step"] = step;
    return out;
}


/// Runs `body(seed)` for every seed on up to `threads` workers; results keep seed order.
template <class Body>
std::vector<SeedResult> for_each_seed(const RunConfig& cfg, Body body)
{
    std::vector<SeedResult> results(cfg.seeds.size());
    std::size_t workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    auto work = [&] {
        for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
            try {
                results[i] = body(cfg.seeds[i]);
            } catch (const NumericalError& e) {
                results[i].abort_message = e.what();
            } catch (...) {
                errors[i] = std::current_exception();
            }
            results[i].seed = cfg.seeds[i];
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

inline std::vector<double> final_metrics(const std::vector<SeedResult>& seeds)
{
    std::vector<double> out;
    for (const auto& s : seeds) out.push_back(s.rows.empty() ? nan_value : s.rows.back().metric);
    return out;
}

inline json mean_ci_json(const std::vector<double>& xs)
{
    const auto m = mean_ci(xs);
    return json{{"mean", m.mean}, {"ci95_low", m.mean - m.half_width}, {"ci95_high", m.mean + m.half_width}, {"n", m.n}};
}

inline std::vector<double> seed_values(const std::vector<SeedResult>& seeds, const std::string& key)
{
    std::vector<double> out;
    for (const auto& s : seeds) {
        const auto it = s.diagnostics.find(key);
        out.push_back(it != s.diagnostics.end() && it->is_number() ? it->get<double>() : nan_value);
    }
    return out;
}

inline std::vector<double> row_column(const SeedResult& s, double LogRow::*field)
{
    std::vector<double> out;
    for (const auto& r : s.rows) out.push_back(r.*field);
    return out;
}

inline double finite_mean(const std::vector<double>& xs) { return mean_ci(xs).mean; }

inline json bias_demo_json()
{
    const auto r = action_bias_demo();
    return json{{"probabilities", r.updates.probabilities},
                {"advantages", r.advantages},
                {"grad_norm_sq", r.updates.grad_norm_sq},
                {"scaled_advantages", r.scaled_advantages},
                {"ordering_flipped", r.ordering_flipped},
                {"expected_normalized_update", r.updates.normalized},
                {"expected_unnormalized_update", r.updates.unnormalized},
                {"normalized_gap_rate", r.normalized_gap_rate},
                {"unnormalized_gap_rate", r.unnormalized_gap_rate},
                {"normalized_pi2_rate", r.normalized_pi2_rate},
                {"unnormalized_pi2_rate", r.unnormalized_pi2_rate},
                {"cosine", r.updates.cosine},
                {"equal_norm_cosine", r.equal_norm_cosine},
                {"equal_advantage_cosine", r.equal_advantage_cosine}};
}

inline json flops_json()
{
    const auto m = flops_model();
    return json{{"intentional_network", m.intentional_network_total()},
                {"intentional_total", m.intentional_ac_total()},
                {"sac_network", m.sac_network_total()},
                {"sac_total", m.sac_total()},
                {"ratio", m.ratio()},
                {"table", format_flops_table(m)}};
}

} // namespace detail

inline std::vector<AggregateRow> aggregate_rows(const std::vector<SeedResult>& seeds, bool by_episode)
{
    std::vector<AggregateRow> out;
    std::size_t n_rows = 0;
    for (const auto& s : seeds) n_rows = std::max(n_rows, s.rows.size());
    for (std::size_t k = 0; k < n_rows; ++k) {
        std::vector<double> xs;
        AggregateRow row;
        for (const auto& s : seeds) {
            if (k >= s.rows.size()) continue;
            xs.push_back(s.rows[k].metric);
            row.step = by_episode ? s.rows[k].episodes : s.rows[k].step;
        }
        const auto m = detail::mean_ci(xs);
        row.mean = m.mean;
        row.ci95_low = m.mean - m.half_width;
        row.ci95_high = m.mean + m.half_width;
        out.push_back(row);
    }
    return out;
}

inline RunRecord run_experiment(const RunConfig& cfg)
{
    using namespace detail;
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.config = cfg;
    json& diag = rec.diagnostics;

    switch (cfg.experiment) {
    case Experiment::td_prediction:
        rec.seeds = for_each_seed(cfg, [&](std::uint64_t s) { return seed_td_prediction(cfg, s); });
        diag["final_rmse"] = mean_ci_json(final_metrics(rec.seeds));
        break;
    case Experiment::ablation_naive: {
        rec.seeds = for_each_seed(cfg, [&](std::uint64_t s) { return seed_ablation_naive(cfg, s); });
        const double naive = finite_mean(seed_values(rec.seeds, "final_rmse_naive"));
        const double intent = finite_mean(seed_values(rec.seeds, "final_rmse_intentional"));
        diag["final_rmse_naive"] = naive;
        diag["final_rmse_intentional"] = intent;
        const auto ratios = coherent_stream_ratios(cfg.agent.lambda, cfg.agent.gamma, cfg.agent.eta, 200, cfg.seeds.front());
        const double lg = cfg.agent.lambda * cfg.agent.gamma;
        double worst = 0.0;
        for (std::size_t t = 1; t <= ratios.size(); ++t) {
            const double predicted = lg == 0.0 ? 1.0 : (1.0 - lg) / (1.0 - std::pow(lg, static_cast<double>(t)));
            worst = std::max(worst, std::abs(ratios[t - 1] / predicted - 1.0));
        }
        diag["coherent_stream"] = json{{"final_ratio", ratios.back()},
                                       {"limit_ratio", 1.0 - lg},
                                       {"max_relative_error", worst}};
        break;
    }
    case Experiment::ablation_constant: {
        // tune the constant step on unscaled features, averaged over seeds
        std::vector<PredictionLearner> sweep;
        for (double a : cfg.ablation_alphas) sweep.push_back({with_rule(cfg.agent, AlphaRule::constant, a), 1.0, true});
        auto tuning = for_each_seed(cfg, [&](std::uint64_t s) {
            SeedResult r;
            const auto curves = run_prediction(cfg, s, sweep);
            for (std::size_t i = 0; i < sweep.size(); ++i)
                r.diagnostics["alpha_" + std::to_string(i)] =
                    curves.diverged[i] ? std::numeric_limits<double>::infinity() : tail_mean(curves.rmse[i]);
            return r;
        });
        json table = json::array();
        double best = std::numeric_limits<double>::infinity();
        double tuned = cfg.ablation_alphas.front();
        for (std::size_t i = 0; i < sweep.size(); ++i) {
            const auto v = seed_values(tuning, "alpha_" + std::to_string(i));
            double m = 0.0;
            for (double x : v) m += std::isfinite(x) ? x : std::numeric_limits<double>::infinity();
            m /= static_cast<double>(v.size());
            table.push_back(json{{"alpha", cfg.ablation_alphas[i]}, {"final_rmse", std::isfinite(m) ? json(m) : json("diverged")}});
            if (m < best) {
                best = m;
                tuned = cfg.ablation_alphas[i];
            }
        }
        rec.seeds = for_each_seed(cfg, [&](std::uint64_t s) { return seed_ablation_constant(cfg, s, tuned); });
        std::size_t diverged = 0;
        for (const auto& s : rec.seeds) diverged += s.diagnostics.value("constant_scaled_diverged", false) ? 1 : 0;
        const double iu = finite_mean(seed_values(rec.seeds, "final_rmse_intentional"));
        const double is = finite_mean(seed_values(rec.seeds, "final_rmse_intentional_scaled"));
        const double cu = finite_mean(seed_values(rec.seeds, "final_rmse_constant"));
        const double cs = diverged ? std::numeric_limits<double>::infinity()
                                   : finite_mean(seed_values(rec.seeds, "final_rmse_constant_scaled"));
        diag["alpha_sweep"] = table;
        diag["tuned_alpha"] = tuned;
        diag["feature_scale"] = cfg.ablation_feature_scale;
        diag["final_rmse_intentional"] = iu;
        diag["final_rmse_intentional_scaled"] = is;
        diag["final_rmse_constant"] = cu;
        diag["final_rmse_constant_scaled"] = std::isfinite(cs) ? json(cs) : json("diverged");
        diag["constant_scaled_diverged_seeds"] = diverged;
        diag["intentional_degradation"] = is / iu;
        diag["constant_degradation"] = std::isfinite(cs) ? json(cs / cu) : json("diverged");
        break;
    }
    case Experiment::q_control: {
        rec.seeds = for_each_seed(cfg, [&](std::uint64_t s) { return seed_q_control(cfg, s); });
        const auto states = tabular_state_count(cfg.env);
        std::size_t good = 0;
        json matches = json::array();
        for (const auto& s : rec.seeds) {
            const auto m = s.diagnostics.value("policy_match", std::size_t{0});
            matches.push_back(m);
            if (m + 1 >= states) ++good;
        }
        diag["policy_match"] = matches;
        diag["states"] = states;
        diag["seeds_within_one_state"] = good;
        break;
    }
    case Experiment::pg_bandit: {
        rec.seeds = for_each_seed(cfg, [&](std::uint64_t s) { return seed_pg_bandit(cfg, s); });
        std::size_t above = 0;
        for (const auto& s : rec.seeds) above += s.diagnostics.value("final_best_probability", 0.0) > 0.95 ? 1 : 0;
        diag["seeds_above_0_95"] = above;
        diag["final_best_probability"] = mean_ci_json(seed_values(rec.seeds, "final_best_probability"));
        diag["policy_ratio_fraction_in_0_9_1_1"] = mean_ci_json(seed_values(rec.seeds, "policy_ratio_fraction_in_0_9_1_1"));
        break;
    }
    case Experiment::ac_control:
    case Experiment::fidelity: {
        const bool keep = cfg.experiment == Experiment::fidelity;
        rec.seeds = for_each_seed(cfg, [&](std::uint64_t s) { return seed_actor_critic(cfg, s, keep); });
        std::vector<double> agent;
        std::vector<double> random;
        for (auto& s : rec.seeds) {
            s.diagnostics["final_return"] = tail_mean(row_column(s, &LogRow::metric));
            s.diagnostics["random_policy_return"] = tail_mean(row_column(s, &LogRow::baseline_metric));
            agent.push_back(s.diagnostics["final_return"].is_number() ? s.diagnostics["final_return"].get<double>() : nan_value);
            random.push_back(s.diagnostics["random_policy_return"].is_number()
                                 ? s.diagnostics["random_policy_return"].get<double>()
                                 : nan_value);
        }
        const auto a = mean_ci(agent);
        const auto r = mean_ci(random);
        diag["final_return"] = mean_ci_json(agent);
        diag["random_policy_return"] = mean_ci_json(random);
        const double se = std::hypot(a.half_width, r.half_width) / 1.96;
        diag["standard_errors_above_random"] = se > 0.0 ? json((a.mean - r.mean) / se) : json(nullptr);
        if (keep) {
            std::vector<StepReport> values;
            std::vector<StepReport> policies;
            for (auto& s : rec.seeds) {
                s.diagnostics["value_ratio"] = ratio_json_or_null(s.value_reports);
                s.diagnostics["policy_ratio"] = ratio_json_or_null(s.policy_reports);
                values.insert(values.end(), s.value_reports.begin(), s.value_reports.end());
                policies.insert(policies.end(), s.policy_reports.begin(), s.policy_reports.end());
            }
            diag["value_ratio"] = ratio_json_or_null(values);
            diag["policy_ratio"] = ratio_json_or_null(policies);
            diag["policy_ratio_fraction_in_0_9_1_1"] = fraction_in_window(policies, 0.9, 1.1);
            try {
                diag["value_effective_update_ratio"] = effective_update_summary(values);
                diag["policy_effective_update_ratio"] = effective_update_summary(policies);
            } catch (const ConfigError&) {
            }
        }
        break;
    }
    case Experiment::bias_demo:
        diag["bias_demo"] = bias_demo_json();
        break;
    case Experiment::flops:
        diag["flops"] = flops_json();
        break;
    }

    std::size_t aborted = 0;
    for (const auto& s : rec.seeds) aborted += s.abort_message ? 1 : 0;
    if (!rec.seeds.empty()) diag["aborted_seeds"] = aborted;
    rec.aggregate = aggregate_rows(rec.seeds, cfg.episodes > 0 && cfg.experiment != Experiment::q_control &&
                                                  cfg.experiment != Experiment::pg_bandit);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    diag["wall_time_s"] = rec.wall_time_s;
    return rec;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::string csv_number(double x)
{
    if (std::isnan(x)) return "";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

inline json config_json(const RunConfig& cfg)
{
    json out = json::object();
    for (const auto& [k, v] : run_config_to_map(cfg)) {
        std::visit(
            [&](const auto& x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, ConfigList>) {
                    json arr = json::array();
                    for (const auto& item : x) {
                        const auto typed = parse_value(item);
                        std::visit([&](const auto& y) {
                            if constexpr (std::is_same_v<std::decay_t<decltype(y)>, ConfigList>) arr.push_back(item);
                            else arr.push_back(y);
                        }, typed);
                    }
                    out[k] = arr;
                } else {
                    out[k] = x;
                }
            },
            v);
    }
    return out;
}

} // namespace detail

inline std::string seed_csv(const SeedResult& s)
{
    using detail::csv_number;
    std::string out;
    for (std::size_t i = 0; i < csv_columns.size(); ++i) out += std::string(i ? "," : "") + csv_columns[i];
    out += "\n";
    for (const auto& r : s.rows) {
        out += std::to_string(r.step) + "," + std::to_string(r.episodes) + "," + csv_number(r.return_mean) + "," +
               csv_number(r.rmse) + "," + csv_number(r.alpha_mean) + "," + csv_number(r.alpha_max) + "," +
               std::to_string(r.degenerate) + "," + csv_number(r.metric) + "," + csv_number(r.baseline_metric) + "\n";
    }
    return out;
}

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows)
{
    using detail::csv_number;
    std::string out = "step,mean,ci95_low,ci95_high\n";
    for (const auto& r : rows)
        out += std::to_string(r.step) + "," + csv_number(r.mean) + "," + csv_number(r.ci95_low) + "," +
               csv_number(r.ci95_high) + "\n";
    return out;
}

inline json summary_json(const RunRecord& rec)
{
    json per_seed = json::array();
    for (const auto& s : rec.seeds) {
        json j = {{"seed", s.seed},
                  {"rows", s.rows.size()},
                  {"final_metric", s.rows.empty() ? nan_value : s.rows.back().metric},
                  {"aborted", s.abort_message.has_value()},
                  {"diagnostics", s.diagnostics}};
        if (s.abort_message) j["abort_message"] = *s.abort_message;
        per_seed.push_back(j);
    }
    json aggregate = detail::mean_ci_json(detail::final_metrics(rec.seeds));
    aggregate["n_seeds"] = rec.seeds.size();
    aggregate["x"] = rec.config.episodes > 0 && rec.config.experiment != Experiment::q_control &&
                             rec.config.experiment != Experiment::pg_bandit
                         ? "episodes"
                         : "step";
    return json{{"config", detail::config_json(rec.config)},
                {"per_seed", per_seed},
                {"aggregate", aggregate},
                {"diagnostics", rec.diagnostics}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

/// seed_<n>.csv per seed, aggregate.csv, summary.json and the echoed config.
inline void write_outputs(const RunRecord& rec, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
    for (const auto& s : rec.seeds) write_text(dir / ("seed_" + std::to_string(s.seed) + ".csv"), seed_csv(s));
    if (!rec.seeds.empty()) write_text(dir / "aggregate.csv", aggregate_csv(rec.aggregate));
    write_text(dir / "summary.json", summary_json(rec).dump(2) + "\n");
    write_text(dir / "config.cfg", serialize_run_config(rec.config));
}

} // namespace intentional
