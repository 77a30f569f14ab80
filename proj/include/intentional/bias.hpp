#pragma once

// Action reweighting by per-sample normalization. At a single state with a
// tabular softmax policy, compares the exact expected update
//   E_a[A(a) g(a)]                 (fixed step)
//   E_a[A(a) g(a) / ||g(a)||^2]    (per-sample normalized step)
// where g(a) = grad log pi(a). Both expectations are exact sums over actions.

#include <cmath>
#include <vector>

#include "intentional/approx.hpp"
#include "intentional/intent.hpp"

namespace intentional {

struct ExpectedUpdates {
    std::vector<double> probabilities;
    std::vector<double> grad_norm_sq;       ///< ||g(a)||^2 per action
    std::vector<double> normalized;         ///< expected normalized update (logit space)
    std::vector<double> unnormalized;       ///< expected fixed-step update (logit space)
    double cosine = 0.0;                    ///< cos(normalized, unnormalized)
};

inline double cosine_similarity(std::span<const double> a, std::span<const double> b)
{
    const double na = std::sqrt(dot(a, a));
    const double nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

inline ExpectedUpdates expected_policy_updates(const std::vector<double>& logits, const std::vector<double>& advantages)
{
    const std::size_t n = logits.size();
    detail::require(advantages.size() == n, "one advantage per action required");
    const auto arch = Architecture::linear(1, Head::softmax_policy(n));
    const Observation s{{1.0}};
    ExpectedUpdates out;
    out.probabilities = SoftmaxPolicy{logits}.probabilities();
    out.normalized.assign(n, 0.0);
    out.unnormalized.assign(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        const auto lp = logprob_and_grad(logits, arch, s, Action{a});
        const double norm_sq = dot(lp.grad, lp.grad);
        out.grad_norm_sq.push_back(norm_sq);
        const double p = out.probabilities[a];
        for (std::size_t i = 0; i < n; ++i) {
            out.unnormalized[i] += p * advantages[a] * lp.grad[i];
            out.normalized[i] += p * advantages[a] * lp.grad[i] / norm_sq;
        }
    }
    out.cosine = cosine_similarity(out.normalized, out.unnormalized);
    return out;
}

/// First-order rate of change of pi(a) when the logits move along `direction`.
inline double probability_rate(const std::vector<double>& probabilities, const std::vector<double>& direction,
                               std::size_t a)
{
    double mean = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) mean += probabilities[i] * direction[i];
    return probabilities[a] * (direction[a] - mean);
}

struct BiasDemoReport {
    /// Engineered two-action instance: A(a1) > A(a2) > 0, pi = (0.2, 0.8).
    std::vector<double> logits;
    std::vector<double> advantages;
    ExpectedUpdates updates;
    std::vector<double> scaled_advantages; ///< A(a) / ||g(a)||^2
    bool ordering_flipped = false;
    double normalized_gap_rate = 0.0;      ///< d/dt (logit a2 - logit a1), normalized
    double unnormalized_gap_rate = 0.0;
    double normalized_pi2_rate = 0.0;      ///< d/dt pi(a2), normalized
    double unnormalized_pi2_rate = 0.0;

    /// Control: equal gradient norms (uniform two-action policy).
    double equal_norm_cosine = 0.0;
    /// Equal advantages on two actions with unequal norms, third action at A = 0.
    double equal_advantage_cosine = 0.0;
};

inline BiasDemoReport action_bias_demo()
{
    BiasDemoReport r;
    r.logits = {std::log(0.2), std::log(0.8)};
    r.advantages = {2.0, 1.0};
    r.updates = expected_policy_updates(r.logits, r.advantages);
    for (std::size_t a = 0; a < 2; ++a) r.scaled_advantages.push_back(r.advantages[a] / r.updates.grad_norm_sq[a]);
    r.ordering_flipped = r.advantages[0] > r.advantages[1] && r.scaled_advantages[0] < r.scaled_advantages[1];
    r.normalized_gap_rate = r.updates.normalized[1] - r.updates.normalized[0];
    r.unnormalized_gap_rate = r.updates.unnormalized[1] - r.updates.unnormalized[0];
    r.normalized_pi2_rate = probability_rate(r.updates.probabilities, r.updates.normalized, 1);
    r.unnormalized_pi2_rate = probability_rate(r.updates.probabilities, r.updates.unnormalized, 1);

    r.equal_norm_cosine = expected_policy_updates({0.0, 0.0}, {2.0, 1.0}).cosine;
    // with only two actions every expected update lies on one axis, so the
    // unequal-norm case needs a third (zero-advantage) action
    r.equal_advantage_cosine =
        expected_policy_updates({std::log(0.1), std::log(0.6), std::log(0.3)}, {1.0, 1.0, 0.0}).cosine;
    return r;
}

} // namespace intentional
