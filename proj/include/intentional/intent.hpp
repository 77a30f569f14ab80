#pragma once

// Step-size machinery shared by every intentional learner: bias-corrected
// exponential averages, RMS preconditioning, eligibility traces with their
// sigma-bar normalizer, adaptive TD-error clipping, advantage normalization
// and the step-size rules themselves.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "intentional/approx.hpp"
#include "intentional/errors.hpp"

namespace intentional {

/// Hard floor on every step-size denominator. Steps that hit it are flagged.
inline constexpr double denominator_floor = 1e-12;

/// Exponential moving average with Adam-style bias correction:
/// value += (1 - beta) / (1 - beta^t) * (x - value), so the first update
/// copies x exactly.
template <class T>
struct Ema {
    T value{};
    double beta = 0.0;
    std::uint64_t t = 0;
    double beta_pow = 1.0; ///< beta^t

    Ema() = default;

    explicit Ema(double beta_, T initial = T{}) : value(std::move(initial)), beta(beta_)
    {
        if (!(beta >= 0.0 && beta < 1.0))
            throw ConfigError("EMA decay must lie in [0, 1), got " + std::to_string(beta));
    }

    void update(const T& x)
    {
        ++t;
        beta_pow *= beta;
        const double c = (1.0 - beta) / (1.0 - beta_pow);
        if constexpr (std::is_arithmetic_v<T>) {
            value += c * (x - value);
        } else {
            detail::require(x.size() == value.size(), "EMA input dimension mismatch");
            for (std::size_t i = 0; i < value.size(); ++i) value[i] += c * (x[i] - value[i]);
        }
    }

    void reset()
    {
        if constexpr (std::is_arithmetic_v<T>) {
            value = T{};
        } else {
            std::fill(value.begin(), value.end(), 0.0);
        }
        t = 0;
        beta_pow = 1.0;
    }
};

inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// <a, rho * b>
inline double weighted_dot(std::span<const double> rho, std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += rho[i] * a[i] * b[i];
    return s;
}

/// rho_i = 1 / (sqrt(nu_i) + eps)
inline std::vector<double> rms_precondition(std::span<const double> nu, double epsilon = 1e-8)
{
    std::vector<double> rho(nu.size());
    for (std::size_t i = 0; i < nu.size(); ++i) rho[i] = 1.0 / (std::sqrt(nu[i]) + epsilon);
    return rho;
}

enum class ClipMode { adaptive, range, off };

/// Clips a TD error to C times its long-run root mean square. The average
/// sees the raw error, and is updated before the bound is taken.
struct DeltaClipper {
    Ema<double> mean_square;
    double C = 20.0;
    ClipMode mode = ClipMode::adaptive;

    DeltaClipper() : mean_square(0.9998) {}
    DeltaClipper(double beta_clip, double C_, ClipMode mode_ = ClipMode::adaptive)
        : mean_square(beta_clip), C(C_), mode(mode_)
    {
        detail::require(C > 0.0, "clip multiplier C must be positive");
    }

    double bound() const { return C * std::sqrt(mean_square.value); }

    double clip(double delta)
    {
        switch (mode) {
        case ClipMode::off:
            return delta;
        case ClipMode::range:
            return std::clamp(delta, -1.0, 1.0);
        case ClipMode::adaptive:
            break;
        }
        mean_square.update(delta * delta);
        return sign(delta) * std::min(std::abs(delta), bound());
    }
};

/// How sigma-bar aggregates the preconditioned squared gradient norms.
///
/// `running_average` is the bias-corrected average with rate (1 - lambda*gamma)
/// used by the learners. `discounted_sum` keeps the plain discounted sum
/// sum_tau (lambda*gamma)^(t-tau) sigma_tau, for which the aggregate change
/// bound holds exactly in the linear case.
enum class SigmaBarMode { running_average, discounted_sum };

struct TraceState {
    ParamVector z;
    double lambda = 0.0;
    double gamma = 1.0;
    Ema<double> sigma_average;
    double sigma_sum = 0.0;
    SigmaBarMode mode = SigmaBarMode::running_average;

    TraceState() = default;
    TraceState(std::size_t dim, double lambda_, double gamma_, SigmaBarMode mode_ = SigmaBarMode::running_average)
        : z(dim, 0.0), lambda(lambda_), gamma(gamma_), mode(mode_)
    {
        detail::require(lambda >= 0.0 && lambda < 1.0, "trace lambda must lie in [0, 1)");
        detail::require(gamma >= 0.0 && gamma <= 1.0, "discount gamma must lie in [0, 1]");
        sigma_average = Ema<double>(decay());
    }

    double decay() const { return lambda * gamma; }

    double sigma_bar() const { return mode == SigmaBarMode::running_average ? sigma_average.value : sigma_sum; }

    /// z <- lambda*gamma*z + g
    void accumulate(std::span<const double> g)
    {
        detail::require(g.size() == z.size(), "trace and gradient dimensions differ");
        const double k = decay();
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = k * z[i] + g[i];
    }

    /// Folds sigma = <rho g, g> into sigma-bar and returns sigma.
    double update_sigma_bar(std::span<const double> g, std::span<const double> rho)
    {
        detail::require(g.size() == rho.size(), "gradient and preconditioner dimensions differ");
        const double sigma = weighted_dot(rho, g, g);
        sigma_average.update(sigma);
        sigma_sum = decay() * sigma_sum + sigma;
        return sigma;
    }

    /// Episode boundary: trace and sigma-bar restart from their initial state.
    void reset()
    {
        std::fill(z.begin(), z.end(), 0.0);
        sigma_average.reset();
        sigma_sum = 0.0;
    }
};

struct AlphaResult {
    double alpha = 0.0;
    bool degenerate = false; ///< the denominator was floored
};

namespace detail {

inline AlphaResult divide_floored(double numerator, double denominator)
{
    if (std::abs(denominator) < denominator_floor || !std::isfinite(denominator)) {
        const double floored = denominator < 0.0 ? -denominator_floor : denominator_floor;
        return {numerator / floored, true};
    }
    return {numerator / denominator, false};
}

} // namespace detail

inline AlphaResult apply_cap(AlphaResult r, std::optional<double> cap)
{
    if (cap) r.alpha = std::min(r.alpha, *cap);
    return r;
}

enum class NlmsMode { exact, cauchy_schwarz };

/// Step size so that y(w + alpha d) - y(w) = delta_target to first order.
inline AlphaResult nlms_alpha(double delta_target, std::span<const double> grad_y, std::span<const double> direction,
                              NlmsMode mode = NlmsMode::exact)
{
    detail::require(grad_y.size() == direction.size(), "nlms_alpha dimension mismatch");
    double den = 0.0;
    if (mode == NlmsMode::exact) {
        den = dot(grad_y, direction);
    } else {
        den = std::sqrt(dot(direction, direction)) * std::sqrt(dot(grad_y, grad_y));
    }
    return detail::divide_floored(delta_target, den);
}

/// eta / sqrt(sigma_bar * <rho z, z>)
inline AlphaResult intentional_alpha_trace(const TraceState& tr, std::span<const double> rho, double eta,
                                           std::optional<double> cap = std::nullopt)
{
    const double den = std::sqrt(std::max(tr.sigma_bar(), 0.0) * weighted_dot(rho, tr.z, tr.z));
    return apply_cap(detail::divide_floored(eta, den), cap);
}

/// eta / <rho z, z>; shrinks the per-state change as the trace grows.
inline AlphaResult naive_trace_alpha(const TraceState& tr, std::span<const double> rho, double eta,
                                     std::optional<double> cap = std::nullopt)
{
    return apply_cap(detail::divide_floored(eta, weighted_dot(rho, tr.z, tr.z)), cap);
}

/// eta / max(u, sqrt(u * u_bar)): never larger than eta / u.
inline AlphaResult guarded_alpha(double u, double u_bar, double eta)
{
    detail::require(u >= 0.0 && u_bar >= 0.0, "guarded_alpha needs non-negative sensitivities");
    const double den = std::max(u, std::sqrt(u * u_bar));
    return detail::divide_floored(eta, den);
}

/// Updates the |A| scale, then returns A / max(A_bar, eps).
inline double advantage_normalize(Ema<double>& scale, double advantage, double epsilon = 1e-8)
{
    scale.update(std::abs(advantage));
    return advantage / std::max(scale.value, epsilon);
}

} // namespace intentional
