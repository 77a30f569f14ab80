#pragma once

// Streaming learners: Intentional TD(lambda), Intentional Q(lambda),
// Intentional Policy Gradient, their actor-critic composition, and the
// constant-step and naive-trace baselines. One update per transition.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "intentional/approx.hpp"
#include "intentional/errors.hpp"
#include "intentional/intent.hpp"
#include "intentional/transition.hpp"

namespace intentional {

enum class AlphaRule {
    intentional, ///< eta / sqrt(sigma_bar <rho z, z>)
    naive_trace, ///< eta / <rho z, z>
    constant,    ///< fixed alpha, no preconditioning, no sigma_bar
};

struct LearnerConfig {
    double eta = 0.5;
    double lambda = 0.8;
    double gamma = 0.99;
    double xi = 0.01; ///< entropy coefficient, policy learners only
    double beta_nu = 0.999;
    double beta_clip = 0.9998;
    double beta_norm = 0.9998;
    double epsilon = 1e-8;
    double clip_C = 20.0;
    std::optional<double> alpha_cap;
    ClipMode clip_mode = ClipMode::adaptive;
    bool rmsprop = true;
    bool guard = false; ///< two-scale guard on the trace denominator
    double beta_guard = 0.999;
    AlphaRule alpha_rule = AlphaRule::intentional;
    double constant_alpha = 0.01;
    SigmaBarMode sigma_bar_mode = SigmaBarMode::running_average;

    bool operator==(const LearnerConfig&) const = default;

    void validate() const
    {
        detail::require(eta > 0.0, "eta must be positive");
        detail::require(epsilon > 0.0, "epsilon must be positive");
        detail::require(lambda >= 0.0 && lambda < 1.0, "lambda must lie in [0, 1)");
        detail::require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
        detail::require(xi >= 0.0, "xi must be non-negative");
        for (double b : {beta_nu, beta_clip, beta_norm, beta_guard})
            detail::require(b >= 0.0 && b < 1.0, "decay rates must lie in [0, 1)");
        detail::require(clip_C > 0.0, "clip_C must be positive");
        detail::require(!alpha_cap || *alpha_cap > 0.0, "alpha_cap must be positive");
        detail::require(constant_alpha >= 0.0, "constant_alpha must be non-negative");
    }
};

/// Per-update diagnostics. For policy steps `delta` is the advantage handed
/// to the actor and `delta_clipped` its normalized value.
struct StepReport {
    double alpha = 0.0;
    double delta = 0.0;
    double delta_clipped = 0.0;
    double intended_change = 0.0;
    double realized_change = 0.0;
    double grad_norm_sq = 0.0;
    double trace_norm_sq_preconditioned = 0.0;
    bool degenerate = false;
    double param_step_norm = 0.0;
};

/// RMS preconditioner, eligibility trace, sigma-bar and step-size rule for
/// one parameter vector. Applies w += alpha * signal * rho (.) z.
class TraceOptimizer {
public:
    TraceOptimizer() = default;

    TraceOptimizer(std::size_t dim, const LearnerConfig& cfg)
        : cfg_(cfg),
          nu_(cfg.beta_nu, std::vector<double>(dim, 0.0)),
          trace_(dim, cfg.lambda, cfg.gamma, cfg.sigma_bar_mode),
          guard_scale_(cfg.beta_guard),
          rho_(dim, 1.0),
          g_sq_(dim, 0.0)
    {
    }

    struct Result {
        AlphaResult alpha;
        double sigma = 0.0;
        double trace_norm_sq = 0.0; ///< <rho z, z>
        double step_norm = 0.0;     ///< ||w_{t+1} - w_t||
    };

    Result apply(ParamVector& params, std::span<const double> g, double signal)
    {
        const std::size_t n = params.size();
        detail::require(g.size() == n, "gradient dimension differs from parameter dimension");
        Result res;
        const bool constant = cfg_.alpha_rule == AlphaRule::constant;
        if (cfg_.rmsprop && !constant) {
            for (std::size_t i = 0; i < n; ++i) g_sq_[i] = g[i] * g[i];
            nu_.update(g_sq_);
            for (std::size_t i = 0; i < n; ++i) rho_[i] = 1.0 / (std::sqrt(nu_.value[i]) + cfg_.epsilon);
        }
        if (constant) {
            trace_.accumulate(g);
            res.alpha = {cfg_.constant_alpha, false};
        } else {
            res.sigma = trace_.update_sigma_bar(g, rho_);
            trace_.accumulate(g);
            res.trace_norm_sq = weighted_dot(rho_, trace_.z, trace_.z);
            switch (cfg_.alpha_rule) {
            case AlphaRule::naive_trace:
                res.alpha = naive_trace_alpha(trace_, rho_, cfg_.eta);
                break;
            default:
                res.alpha = intentional_alpha_trace(trace_, rho_, cfg_.eta);
                if (cfg_.guard) {
                    const double d = std::sqrt(std::max(trace_.sigma_bar(), 0.0) * res.trace_norm_sq);
                    guard_scale_.update(d);
                    res.alpha = guarded_alpha(d, guard_scale_.value, cfg_.eta);
                }
                break;
            }
            res.alpha = apply_cap(res.alpha, cfg_.alpha_cap);
        }
        const double k = res.alpha.alpha * signal;
        if (!std::isfinite(k)) throw NumericalError("non-finite step: alpha=" + std::to_string(res.alpha.alpha) +
                                                    " signal=" + std::to_string(signal));
        double step_sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dw = k * rho_[i] * trace_.z[i];
            params[i] += dw;
            step_sq += dw * dw;
        }
        res.step_norm = std::sqrt(step_sq);
        return res;
    }

    void reset_episode() { trace_.reset(); }

    const TraceState& trace() const { return trace_; }
    const std::vector<double>& rho() const { return rho_; }
    const Ema<std::vector<double>>& nu() const { return nu_; }

private:
    LearnerConfig cfg_;
    Ema<std::vector<double>> nu_;
    TraceState trace_;
    Ema<double> guard_scale_;
    std::vector<double> rho_;
    std::vector<double> g_sq_;
};

namespace detail {

inline void check_finite(double x, const char* what, const Transition& tr)
{
    if (std::isfinite(x)) return;
    std::ostringstream os;
    os << what << " is not finite (r=" << tr.r << ", terminated=" << tr.terminated << ", truncated=" << tr.truncated
       << ")";
    throw NumericalError(os.str());
}

inline double squared_norm(std::span<const double> v) { return dot(v, v); }

} // namespace detail

/// State-value (td_step) or action-value (q_step) learner.
class ValueLearner {
public:
    ValueLearner(Architecture arch, ParamVector params, LearnerConfig cfg)
        : arch_(std::move(arch)), params_(std::move(params)), cfg_(cfg)
    {
        arch_.validate();
        cfg_.validate();
        detail::require(arch_.head.kind == HeadKind::scalar_value || arch_.head.kind == HeadKind::q_values,
                        "value learner needs a scalar_value or q_values head");
        detail::require(params_.size() == param_count(arch_), "initial parameters do not match the architecture");
        opt_ = TraceOptimizer(params_.size(), cfg_);
        clipper_ = DeltaClipper(cfg_.beta_clip, cfg_.clip_C, cfg_.clip_mode);
    }

    double value(const Observation& s) const { return forward_value(params_, arch_, s); }
    std::vector<double> action_values(const Observation& s) const { return q_values(params_, arch_, s); }

    std::size_t greedy_action(const Observation& s) const
    {
        const auto q = action_values(s);
        return static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
    }

    /// Raw TD error with the current parameters. Truncation bootstraps.
    double td_error(const Transition& tr) const
    {
        const double cont = tr.terminated ? 0.0 : cfg_.gamma;
        if (arch_.head.kind == HeadKind::scalar_value) {
            const double next = tr.terminated ? 0.0 : value(tr.s_next);
            return tr.r + cont * next - value(tr.s);
        }
        const auto* a = std::get_if<std::size_t>(&tr.a);
        if (!a || *a >= arch_.head.size) throw ConfigError("q_step needs a valid discrete action index");
        double next = 0.0;
        if (!tr.terminated) {
            const auto qn = action_values(tr.s_next);
            next = *std::max_element(qn.begin(), qn.end());
        }
        return tr.r + cont * next - action_values(tr.s)[*a];
    }

    /// Advances the clip state with the raw error and returns the clipped one.
    double clip(double delta) { return clipper_.clip(delta); }

    /// Gradient step with an already computed (delta, clipped delta) pair.
    StepReport apply(const Transition& tr, double delta, double delta_clipped)
    {
        StepReport rep;
        rep.delta = delta;
        rep.delta_clipped = delta_clipped;
        double before = 0.0;
        ParamVector g;
        if (arch_.head.kind == HeadKind::scalar_value) {
            before = value(tr.s);
            g = grad_value(params_, arch_, tr.s);
        } else {
            auto qg = q_value_and_grad(params_, arch_, tr.s, std::get<std::size_t>(tr.a));
            before = qg.value;
            g = std::move(qg.grad);
        }
        rep.grad_norm_sq = detail::squared_norm(g);
        const auto res = opt_.apply(params_, g, delta_clipped);
        rep.alpha = res.alpha.alpha;
        rep.degenerate = res.alpha.degenerate;
        rep.trace_norm_sq_preconditioned = res.trace_norm_sq;
        rep.param_step_norm = res.step_norm;
        if (cfg_.alpha_rule == AlphaRule::constant) {
            // first-order change at s for a fixed step
            rep.intended_change = rep.alpha * delta_clipped * dot(g, opt_.trace().z);
        } else {
            rep.intended_change = cfg_.eta * delta_clipped;
        }
        const double after = arch_.head.kind == HeadKind::scalar_value
                                 ? value(tr.s)
                                 : action_values(tr.s)[std::get<std::size_t>(tr.a)];
        rep.realized_change = after - before;
        detail::check_finite(rep.realized_change, "value after update", tr);
        if (tr.terminated) opt_.reset_episode();
        return rep;
    }

    StepReport td_step(const Transition& tr)
    {
        detail::require(arch_.head.kind == HeadKind::scalar_value, "td_step needs a scalar value head");
        return step(tr);
    }

    /// Max-bootstrapped step; traces are not cut on exploratory actions.
    StepReport q_step(const Transition& tr)
    {
        detail::require(arch_.head.kind == HeadKind::q_values, "q_step needs a q_values head");
        return step(tr);
    }

    const ParamVector& params() const { return params_; }
    ParamVector& mutable_params() { return params_; }
    const Architecture& arch() const { return arch_; }
    const LearnerConfig& config() const { return cfg_; }
    const TraceOptimizer& optimizer() const { return opt_; }
    const DeltaClipper& clipper() const { return clipper_; }

private:
    StepReport step(const Transition& tr)
    {
        const double delta = td_error(tr);
        detail::check_finite(delta, "TD error", tr);
        const double clipped = clip(delta);
        return apply(tr, delta, clipped);
    }

    Architecture arch_;
    ParamVector params_;
    LearnerConfig cfg_;
    TraceOptimizer opt_;
    DeltaClipper clipper_;
};

/// Intentional Policy Gradient. The advantage comes from outside (the
/// critic's clipped TD error in actor-critic use).
class PolicyLearner {
public:
    PolicyLearner(Architecture arch, ParamVector params, LearnerConfig cfg)
        : arch_(std::move(arch)), params_(std::move(params)), cfg_(cfg), adv_scale_(cfg.beta_norm)
    {
        arch_.validate();
        cfg_.validate();
        detail::require(arch_.head.is_policy(), "policy learner needs a gaussian or softmax policy head");
        detail::require(params_.size() == param_count(arch_), "initial parameters do not match the architecture");
        opt_ = TraceOptimizer(params_.size(), cfg_);
    }

    PolicyDistribution policy(const Observation& s) const { return policy_forward(params_, arch_, s); }

    template <class Rng>
    Action act(const Observation& s, Rng& rng) const
    {
        return dist::sample(policy(s), rng);
    }

    StepReport pg_step(const Transition& tr, double advantage)
    {
        detail::check_finite(advantage, "advantage", tr);
        StepReport rep;
        rep.delta = advantage;
        const double norm_adv = advantage_normalize(adv_scale_, advantage, cfg_.epsilon);
        rep.delta_clipped = norm_adv;

        auto lp = logprob_and_grad(params_, arch_, tr.s, tr.a);
        ParamVector g = std::move(lp.grad);
        const double s = sign(norm_adv);
        if (cfg_.xi > 0.0 && s != 0.0) {
            const auto ent = entropy_and_grad(params_, arch_, tr.s);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += cfg_.xi * s * ent.grad[i];
        }
        for (double v : g)
            if (!std::isfinite(v)) throw NumericalError("non-finite policy gradient");
        rep.grad_norm_sq = detail::squared_norm(g);

        const auto res = opt_.apply(params_, g, norm_adv);
        rep.alpha = res.alpha.alpha;
        rep.degenerate = res.alpha.degenerate;
        rep.trace_norm_sq_preconditioned = res.trace_norm_sq;
        rep.param_step_norm = res.step_norm;
        rep.intended_change = cfg_.eta * norm_adv;
        rep.realized_change = logprob_and_grad(params_, arch_, tr.s, tr.a).value - lp.value;
        detail::check_finite(rep.realized_change, "log-probability after update", tr);
        if (tr.terminated) opt_.reset_episode();
        return rep;
    }

    const ParamVector& params() const { return params_; }
    ParamVector& mutable_params() { return params_; }
    const Architecture& arch() const { return arch_; }
    const LearnerConfig& config() const { return cfg_; }
    const TraceOptimizer& optimizer() const { return opt_; }
    const Ema<double>& advantage_scale() const { return adv_scale_; }

private:
    Architecture arch_;
    ParamVector params_;
    LearnerConfig cfg_;
    Ema<double> adv_scale_;
    TraceOptimizer opt_;
};

struct ActorCriticReports {
    StepReport actor;
    StepReport critic;
};

/// Critic error first, clipped once; the actor consumes the clipped error as
/// its advantage, then the critic applies its own update.
inline ActorCriticReports ac_step(PolicyLearner& actor, ValueLearner& critic, const Transition& tr)
{
    const double delta = critic.td_error(tr);
    detail::check_finite(delta, "TD error", tr);
    const double clipped = critic.clip(delta);
    ActorCriticReports out;
    out.actor = actor.pg_step(tr, clipped);
    out.critic = critic.apply(tr, delta, clipped);
    return out;
}

/// Linear 1 -> 0.01 decay over the first `fraction` of `total_steps`.
inline double epsilon_schedule(std::size_t step, std::size_t total_steps, double fraction = 0.05,
                               double start = 1.0, double end = 0.01)
{
    const double horizon = fraction * static_cast<double>(total_steps);
    if (horizon <= 0.0 || static_cast<double>(step) >= horizon) return end;
    return start + (end - start) * static_cast<double>(step) / horizon;
}

template <class Rng>
std::size_t epsilon_greedy(const ValueLearner& q, const Observation& s, double epsilon, Rng& rng)
{
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (unif(rng) < epsilon) {
        std::uniform_int_distribution<std::size_t> pick(0, q.arch().head.size - 1);
        return pick(rng);
    }
    return q.greedy_action(s);
}

} // namespace intentional
