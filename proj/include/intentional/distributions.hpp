#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "intentional/errors.hpp"

namespace intentional {

/// Inputs above this go through the identity instead of log(1 + e^x).
inline constexpr double softplus_linear_threshold = 20.0;

inline double softplus(double x)
{
    if (x > softplus_linear_threshold) return x;
    return std::log1p(std::exp(x));
}

inline double softplus_derivative(double x)
{
    if (x > softplus_linear_threshold) return 1.0;
    return 1.0 / (1.0 + std::exp(-x));
}

/// Diagonal Gaussian. `pre_std` is the raw head output before SoftPlus.
struct GaussianPolicy {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<double> pre_std;
};

struct SoftmaxPolicy {
    std::vector<double> logits;

    std::vector<double> log_probabilities() const
    {
        const double top = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double l : logits) sum += std::exp(l - top);
        const double log_norm = top + std::log(sum);
        std::vector<double> out(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
        return out;
    }

    std::vector<double> probabilities() const
    {
        auto out = log_probabilities();
        for (double& v : out) v = std::exp(v);
        return out;
    }
};

using PolicyDistribution = std::variant<GaussianPolicy, SoftmaxPolicy>;

/// Discrete actions are indices, continuous actions are real vectors.
using Action = std::variant<std::size_t, std::vector<double>>;

namespace dist {

inline const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);
inline const double half_log_two_pi_e = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);

/// Log-density and its derivative with respect to the raw head outputs.
///
/// Gaussian head outputs are laid out as [mean..., pre_std...]; softmax head
/// outputs are the logits.
struct HeadDerivative {
    double value = 0.0;
    std::vector<double> d_outputs;
};

inline HeadDerivative log_prob(const GaussianPolicy& p, const std::vector<double>& a)
{
    const std::size_t n = p.mean.size();
    detail::require(a.size() == n, "gaussian action dimension mismatch");
    HeadDerivative out;
    out.d_outputs.assign(2 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = p.std[i];
        const double u = (a[i] - p.mean[i]) / s;
        out.value += -0.5 * u * u - std::log(s) - half_log_two_pi;
        out.d_outputs[i] = u / s;
        const double d_std = (u * u - 1.0) / s;
        out.d_outputs[n + i] = d_std * softplus_derivative(p.pre_std[i]);
    }
    return out;
}

inline HeadDerivative log_prob(const SoftmaxPolicy& p, std::size_t a)
{
    if (a >= p.logits.size()) throw ConfigError("softmax action index out of range");
    const auto logp = p.log_probabilities();
    HeadDerivative out;
    out.value = logp[a];
    out.d_outputs.resize(logp.size());
    for (std::size_t i = 0; i < logp.size(); ++i)
        out.d_outputs[i] = (i == a ? 1.0 : 0.0) - std::exp(logp[i]);
    return out;
}

inline HeadDerivative log_prob(const PolicyDistribution& p, const Action& a)
{
    if (const auto* g = std::get_if<GaussianPolicy>(&p)) {
        const auto* x = std::get_if<std::vector<double>>(&a);
        if (!x) throw ConfigError("gaussian policy needs a continuous action");
        return log_prob(*g, *x);
    }
    const auto* i = std::get_if<std::size_t>(&a);
    if (!i) throw ConfigError("softmax policy needs a discrete action");
    return log_prob(std::get<SoftmaxPolicy>(p), *i);
}

inline HeadDerivative entropy(const GaussianPolicy& p)
{
    const std::size_t n = p.mean.size();
    HeadDerivative out;
    out.d_outputs.assign(2 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        out.value += half_log_two_pi_e + std::log(p.std[i]);
        out.d_outputs[n + i] = softplus_derivative(p.pre_std[i]) / p.std[i];
    }
    return out;
}

// dH/dl_j = -p_j (log p_j + H)
inline HeadDerivative entropy(const SoftmaxPolicy& p)
{
    const auto logp = p.log_probabilities();
    HeadDerivative out;
    for (double lp : logp) {
        const double pr = std::exp(lp);
        if (pr > 0.0) out.value -= pr * lp;
    }
    out.d_outputs.resize(logp.size());
    for (std::size_t i = 0; i < logp.size(); ++i) {
        const double pr = std::exp(logp[i]);
        out.d_outputs[i] = pr > 0.0 ? -pr * (logp[i] + out.value) : 0.0;
    }
    return out;
}

inline HeadDerivative entropy(const PolicyDistribution& p)
{
    return std::visit([](const auto& d) { return entropy(d); }, p);
}

template <class Rng>
Action sample(const PolicyDistribution& p, Rng& rng)
{
    if (const auto* g = std::get_if<GaussianPolicy>(&p)) {
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> a(g->mean.size());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = g->mean[i] + g->std[i] * normal(rng);
        return a;
    }
    const auto probs = std::get<SoftmaxPolicy>(p).probabilities();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

/// KL(p || q) for diagonal Gaussians, closed form.
inline double kl(const GaussianPolicy& p, const GaussianPolicy& q)
{
    double out = 0.0;
    for (std::size_t i = 0; i < p.mean.size(); ++i) {
        const double ratio = p.std[i] / q.std[i];
        const double diff = (p.mean[i] - q.mean[i]) / q.std[i];
        out += 0.5 * (ratio * ratio + diff * diff - 1.0) - std::log(ratio);
    }
    return out;
}

inline double kl(const SoftmaxPolicy& p, const SoftmaxPolicy& q)
{
    const auto lp = p.log_probabilities();
    const auto lq = q.log_probabilities();
    double out = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i) out += std::exp(lp[i]) * (lp[i] - lq[i]);
    return out;
}

} // namespace dist

} // namespace intentional
