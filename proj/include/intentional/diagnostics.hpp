#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "intentional/agents.hpp"
#include "intentional/approx.hpp"
#include "intentional/distributions.hpp"
#include "intentional/errors.hpp"

namespace intentional {

struct RatioSummary {
    double mean = 0.0;
    double std = 0.0; ///< population standard deviation
    double p1 = 0.0;
    double p99 = 0.0;
    std::size_t n = 0;
    std::size_t excluded_degenerate = 0;
    std::size_t excluded_zero_intent = 0;
};

/// Linear-interpolated percentile of sorted data, q in [0, 1].
inline double percentile_sorted(const std::vector<double>& sorted, double q)
{
    detail::require(!sorted.empty(), "percentile of an empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline RatioSummary summarize(std::vector<double> values)
{
    detail::require(!values.empty(), "cannot summarize an empty sample");
    RatioSummary s;
    s.n = values.size();
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n));
    std::sort(values.begin(), values.end());
    s.p1 = percentile_sorted(values, 0.01);
    s.p99 = percentile_sorted(values, 0.99);
    return s;
}

/// realized / intended change, skipping floored-denominator steps.
inline RatioSummary fidelity_summary(std::span<const StepReport> reports)
{
    std::vector<double> ratios;
    ratios.reserve(reports.size());
    std::size_t degenerate = 0;
    std::size_t zero = 0;
    for (const auto& r : reports) {
        if (r.degenerate) {
            ++degenerate;
        } else if (r.intended_change == 0.0) {
            ++zero;
        } else {
            ratios.push_back(r.realized_change / r.intended_change);
        }
    }
    if (ratios.empty()) throw ConfigError("fidelity_summary: no usable steps in the report stream");
    auto s = summarize(std::move(ratios));
    s.excluded_degenerate = degenerate;
    s.excluded_zero_intent = zero;
    return s;
}

/// 99th percentile over mean of ||w_{t+1} - w_t|| / |delta_t|.
inline double effective_update_summary(std::span<const StepReport> reports)
{
    std::vector<double> eff;
    for (const auto& r : reports)
        if (std::abs(r.delta) > 1e-12) eff.push_back(r.param_step_norm / std::abs(r.delta));
    detail::require(!eff.empty(), "effective_update_summary: no steps with |delta| > 1e-12");
    const double mean = std::accumulate(eff.begin(), eff.end(), 0.0) / static_cast<double>(eff.size());
    std::sort(eff.begin(), eff.end());
    return percentile_sorted(eff, 0.99) / mean;
}

struct KlProxy {
    double kl = 0.0;    ///< KL(before || after), exact
    double proxy = 0.0; ///< 0.5 * E_{a ~ before}[(log after(a) - log before(a))^2]
};

inline KlProxy kl_proxy_check(const SoftmaxPolicy& before, const SoftmaxPolicy& after)
{
    const auto lb = before.log_probabilities();
    const auto la = after.log_probabilities();
    KlProxy out;
    out.kl = dist::kl(before, after);
    for (std::size_t i = 0; i < lb.size(); ++i) {
        const double d = la[i] - lb[i];
        out.proxy += 0.5 * std::exp(lb[i]) * d * d;
    }
    return out;
}

/// Gaussian: closed-form KL, Monte Carlo proxy over `n_samples` draws.
inline KlProxy kl_proxy_check(const GaussianPolicy& before, const GaussianPolicy& after, std::size_t n_samples,
                              std::uint64_t seed)
{
    detail::require(n_samples > 0, "kl_proxy_check needs at least one sample");
    KlProxy out;
    out.kl = dist::kl(before, after);
    std::mt19937_64 rng(seed);
    const PolicyDistribution pb = before;
    double acc = 0.0;
    for (std::size_t k = 0; k < n_samples; ++k) {
        const auto a = std::get<std::vector<double>>(dist::sample(pb, rng));
        const double d = dist::log_prob(after, a).value - dist::log_prob(before, a).value;
        acc += d * d;
    }
    out.proxy = 0.5 * acc / static_cast<double>(n_samples);
    return out;
}

inline KlProxy kl_proxy_check(const PolicyDistribution& before, const PolicyDistribution& after,
                              std::size_t n_samples = 10000, std::uint64_t seed = 0)
{
    if (const auto* g = std::get_if<GaussianPolicy>(&before))
        return kl_proxy_check(*g, std::get<GaussianPolicy>(after), n_samples, seed);
    return kl_proxy_check(std::get<SoftmaxPolicy>(before), std::get<SoftmaxPolicy>(after));
}

/// Root of the (weighted) mean squared error between V and the oracle values.
inline double prediction_rmse(std::span<const double> params, const Architecture& arch,
                              const std::vector<Observation>& states, const std::vector<double>& oracle,
                              const std::vector<double>& weights = {})
{
    detail::require(states.size() == oracle.size() && !states.empty(), "prediction_rmse: states and oracle differ");
    detail::require(weights.empty() || weights.size() == states.size(), "prediction_rmse: weight count mismatch");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        const double e = forward_value(params, arch, states[i]) - oracle[i];
        num += w * e * e;
        den += w;
    }
    return std::sqrt(num / den);
}

/// Per-update floating-point work in units of N, the parameter count of one network.
struct FlopsModel {
    struct Item {
        std::string name;
        std::int64_t cost = 0;
    };
    std::vector<Item> intentional_per_network;
    std::int64_t intentional_networks = 2;
    std::int64_t intentional_td_target = 2;
    std::vector<Item> sac_gradient_per_network; ///< already multiplied by the batch size
    std::vector<Item> sac_adam_per_network;
    std::int64_t sac_batch = 256;
    std::int64_t sac_updated_networks = 3;
    std::int64_t sac_target_networks = 2;

    static std::int64_t sum(const std::vector<Item>& items)
    {
        std::int64_t s = 0;
        for (const auto& i : items) s += i.cost;
        return s;
    }

    std::int64_t intentional_network_total() const { return sum(intentional_per_network); }
    std::int64_t intentional_ac_total() const
    {
        return intentional_networks * intentional_network_total() + intentional_td_target;
    }
    std::int64_t sac_network_total() const { return sum(sac_gradient_per_network) + sum(sac_adam_per_network); }
    /// Target networks only run a batched forward pass.
    std::int64_t sac_total() const
    {
        return sac_updated_networks * sac_network_total() + sac_target_networks * sac_batch * 2;
    }
    double ratio() const
    {
        return static_cast<double>(sac_total()) / static_cast<double>(intentional_ac_total());
    }
};

inline FlopsModel flops_model()
{
    FlopsModel m;
    m.intentional_per_network = {{"forward pass", 2},         {"backward pass", 4},
                                 {"RMS scaling", 5},          {"gradient norm <rho g, g>", 3},
                                 {"eligibility trace", 2},    {"trace norm <rho z, z>", 3},
                                 {"parameter update", 3}};
    m.sac_gradient_per_network = {{"forward pass", 2 * m.sac_batch},
                                  {"backward pass", 4 * m.sac_batch},
                                  {"batch aggregation", 1 * m.sac_batch}};
    m.sac_adam_per_network = {{"RMS term update", 5}, {"momentum update", 3}, {"parameter update", 3}};
    return m;
}

inline std::string format_flops_table(const FlopsModel& m)
{
    std::ostringstream os;
    os << "Intentional AC, per network\n";
    for (const auto& i : m.intentional_per_network) os << "  " << std::left << std::setw(28) << i.name << i.cost << "N\n";
    os << "  " << std::setw(28) << "network total" << m.intentional_network_total() << "N\n";
    os << "  " << std::setw(28) << "TD target" << m.intentional_td_target << "N\n";
    os << "  " << std::setw(28) << "update total" << m.intentional_networks << " x " << m.intentional_network_total()
       << "N + " << m.intentional_td_target << "N = " << m.intentional_ac_total() << "N\n";
    os << "SAC, per network (batch " << m.sac_batch << ")\n";
    for (const auto& i : m.sac_gradient_per_network) os << "  " << std::setw(28) << i.name << i.cost << "N\n";
    for (const auto& i : m.sac_adam_per_network) os << "  " << std::setw(28) << i.name << i.cost << "N\n";
    os << "  " << std::setw(28) << "network total" << m.sac_network_total() << "N\n";
    os << "  " << std::setw(28) << "update total" << m.sac_updated_networks << " x " << m.sac_network_total() << "N + "
       << m.sac_target_networks << " x " << m.sac_batch << " x 2N = " << m.sac_total() << "N\n";
    os << "ratio SAC / Intentional AC = " << m.sac_total() << " / " << m.intentional_ac_total() << " = "
       << std::fixed << std::setprecision(2) << m.ratio() << " (~" << std::llround(m.ratio()) << ")\n";
    return os.str();
}

} // namespace intentional
