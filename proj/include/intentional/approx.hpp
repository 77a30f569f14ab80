#pragma once

// Linear and small-MLP function approximators over a flat parameter vector,
// with hand-written reverse-mode gradients. Every gradient the learners need
// is a vector-Jacobian product of the raw head outputs, so the networks only
// expose `forward_pass` and `backward_pass`; the value, action-value, log-prob
// and entropy operations are thin wrappers choosing the output cotangent.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "intentional/distributions.hpp"
#include "intentional/errors.hpp"

namespace intentional {

using ParamVector = std::vector<double>;

struct Observation {
    std::vector<double> features;
};

enum class NetKind { linear, mlp };

enum class HeadKind { scalar_value, q_values, gaussian_policy, softmax_policy };

struct Head {
    HeadKind kind = HeadKind::scalar_value;
    std::size_t size = 1; ///< number of actions, or action dimension for Gaussian heads

    static Head scalar_value() { return {HeadKind::scalar_value, 1}; }
    static Head q_values(std::size_t n_actions) { return {HeadKind::q_values, n_actions}; }
    static Head gaussian_policy(std::size_t action_dim) { return {HeadKind::gaussian_policy, action_dim}; }
    static Head softmax_policy(std::size_t n_actions) { return {HeadKind::softmax_policy, n_actions}; }

    /// Gaussian heads carry a mean and a pre-std sub-head of equal width.
    std::size_t output_width() const { return kind == HeadKind::gaussian_policy ? 2 * size : size; }

    bool is_policy() const { return kind == HeadKind::gaussian_policy || kind == HeadKind::softmax_policy; }

    bool operator==(const Head&) const = default;
};

struct Architecture {
    NetKind kind = NetKind::linear;
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden; ///< hidden layer widths, MLP only
    bool layernorm = false;          ///< LayerNorm before each hidden activation
    Head head;
    double sparse_init_ratio = 0.0;

    static constexpr double leaky_slope = 0.01;
    static constexpr double layernorm_eps = 1e-5;

    static Architecture linear(std::size_t input_dim, Head head)
    {
        Architecture a;
        a.kind = NetKind::linear;
        a.input_dim = input_dim;
        a.head = head;
        return a;
    }

    static Architecture mlp(std::size_t input_dim, std::vector<std::size_t> hidden, Head head,
                            bool layernorm = true, double sparse_init_ratio = 0.9)
    {
        Architecture a;
        a.kind = NetKind::mlp;
        a.input_dim = input_dim;
        a.hidden = std::move(hidden);
        a.layernorm = layernorm;
        a.head = head;
        a.sparse_init_ratio = sparse_init_ratio;
        return a;
    }

    void validate() const
    {
        detail::require(input_dim > 0, "architecture input_dim must be positive");
        detail::require(head.size > 0, "architecture head size must be positive");
        detail::require(sparse_init_ratio >= 0.0 && sparse_init_ratio < 1.0,
                        "sparse_init_ratio must lie in [0, 1)");
        if (kind == NetKind::linear) {
            detail::require(hidden.empty(), "linear architecture takes no hidden layers");
        } else {
            detail::require(!hidden.empty(), "mlp architecture needs at least one hidden layer");
            for (std::size_t w : hidden) detail::require(w > 0, "hidden widths must be positive");
        }
    }

    bool operator==(const Architecture&) const = default;
};

/// Offsets of one affine layer inside the flat parameter vector.
struct LayerLayout {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight = 0; ///< row-major out x in
    std::size_t bias = 0;
    std::size_t gain = 0;
    std::size_t shift = 0;
    bool has_bias = false;
    bool has_norm = false;
    bool activated = false;
};

inline std::vector<LayerLayout> layout(const Architecture& arch)
{
    std::vector<LayerLayout> layers;
    std::size_t offset = 0;
    std::size_t in = arch.input_dim;
    auto add = [&](std::size_t out, bool bias, bool norm, bool act) {
        LayerLayout l;
        l.in = in;
        l.out = out;
        l.weight = offset;
        offset += in * out;
        l.has_bias = bias;
        if (bias) {
            l.bias = offset;
            offset += out;
        }
        l.has_norm = norm;
        if (norm) {
            l.gain = offset;
            offset += out;
            l.shift = offset;
            offset += out;
        }
        l.activated = act;
        layers.push_back(l);
        in = out;
    };
    if (arch.kind == NetKind::linear) {
        add(arch.head.output_width(), false, false, false);
    } else {
        for (std::size_t w : arch.hidden) add(w, true, arch.layernorm, true);
        add(arch.head.output_width(), true, false, false);
    }
    return layers;
}

inline std::size_t param_count(const Architecture& arch)
{
    const auto layers = layout(arch);
    const auto& last = layers.back();
    std::size_t end = last.weight + last.in * last.out;
    if (last.has_bias) end += last.out;
    return end;
}

/// Cached intermediate values of one forward evaluation.
struct ForwardPass {
    std::vector<std::vector<double>> inputs;     ///< input of each layer
    std::vector<std::vector<double>> normalized; ///< LayerNorm output before gain/shift
    std::vector<std::vector<double>> act_inputs; ///< argument of the activation
    std::vector<double> inv_std;                 ///< LayerNorm 1/sqrt(var + eps)
    std::vector<double> output;
};

namespace detail {

inline void check_dims(std::span<const double> params, const Architecture& arch, const Observation& obs)
{
    if (params.size() != param_count(arch))
        throw ConfigError("parameter vector has " + std::to_string(params.size()) + " entries, architecture needs " +
                          std::to_string(param_count(arch)));
    if (obs.features.size() != arch.input_dim)
        throw ConfigError("observation has " + std::to_string(obs.features.size()) + " features, architecture expects " +
                          std::to_string(arch.input_dim));
}

inline double leaky(double x) { return x > 0.0 ? x : Architecture::leaky_slope * x; }
inline double leaky_derivative(double x) { return x > 0.0 ? 1.0 : Architecture::leaky_slope; }

} // namespace detail

inline ForwardPass forward_pass(std::span<const double> params, const Architecture& arch, const Observation& obs)
{
    detail::check_dims(params, arch, obs);
    const auto layers = layout(arch);
    ForwardPass fp;
    fp.inputs.resize(layers.size());
    fp.normalized.resize(layers.size());
    fp.act_inputs.resize(layers.size());
    fp.inv_std.assign(layers.size(), 0.0);

    std::vector<double> x = obs.features;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& l = layers[li];
        fp.inputs[li] = x;
        std::vector<double> h(l.out, 0.0);
        for (std::size_t o = 0; o < l.out; ++o) {
            const double* row = params.data() + l.weight + o * l.in;
            double acc = l.has_bias ? params[l.bias + o] : 0.0;
            for (std::size_t i = 0; i < l.in; ++i) acc += row[i] * x[i];
            h[o] = acc;
        }
        if (l.has_norm) {
            const double mean = std::accumulate(h.begin(), h.end(), 0.0) / static_cast<double>(l.out);
            double var = 0.0;
            for (double v : h) var += (v - mean) * (v - mean);
            var /= static_cast<double>(l.out);
            const double inv = 1.0 / std::sqrt(var + Architecture::layernorm_eps);
            fp.inv_std[li] = inv;
            auto& y = fp.normalized[li];
            y.resize(l.out);
            for (std::size_t o = 0; o < l.out; ++o) {
                y[o] = (h[o] - mean) * inv;
                h[o] = params[l.gain + o] * y[o] + params[l.shift + o];
            }
        }
        if (l.activated) {
            fp.act_inputs[li] = h;
            for (double& v : h) v = detail::leaky(v);
        }
        x = std::move(h);
    }
    fp.output = std::move(x);
    return fp;
}

/// Gradient of <d_output, output(params)> with respect to params.
inline ParamVector backward_pass(std::span<const double> params, const Architecture& arch, const ForwardPass& fp,
                                 std::span<const double> d_output)
{
    const auto layers = layout(arch);
    detail::require(d_output.size() == layers.back().out, "output cotangent has the wrong width");
    ParamVector grad(params.size(), 0.0);
    std::vector<double> d(d_output.begin(), d_output.end());
    for (std::size_t li = layers.size(); li-- > 0;) {
        const auto& l = layers[li];
        if (l.activated) {
            const auto& a = fp.act_inputs[li];
            for (std::size_t o = 0; o < l.out; ++o) d[o] *= detail::leaky_derivative(a[o]);
        }
        if (l.has_norm) {
            const auto& y = fp.normalized[li];
            std::vector<double> dy(l.out);
            double mean_dy = 0.0;
            double mean_dy_y = 0.0;
            for (std::size_t o = 0; o < l.out; ++o) {
                grad[l.gain + o] = d[o] * y[o];
                grad[l.shift + o] = d[o];
                dy[o] = d[o] * params[l.gain + o];
                mean_dy += dy[o];
                mean_dy_y += dy[o] * y[o];
            }
            mean_dy /= static_cast<double>(l.out);
            mean_dy_y /= static_cast<double>(l.out);
            for (std::size_t o = 0; o < l.out; ++o)
                d[o] = fp.inv_std[li] * (dy[o] - mean_dy - y[o] * mean_dy_y);
        }
        const auto& x = fp.inputs[li];
        std::vector<double> dx(l.in, 0.0);
        for (std::size_t o = 0; o < l.out; ++o) {
            const double g = d[o];
            if (l.has_bias) grad[l.bias + o] = g;
            if (g == 0.0) continue;
            double* grow = grad.data() + l.weight + o * l.in;
            const double* wrow = params.data() + l.weight + o * l.in;
            for (std::size_t i = 0; i < l.in; ++i) {
                grow[i] = g * x[i];
                dx[i] += g * wrow[i];
            }
        }
        d = std::move(dx);
    }
    return grad;
}

inline double forward_value(std::span<const double> params, const Architecture& arch, const Observation& obs)
{
    detail::require(arch.head.kind == HeadKind::scalar_value, "forward_value needs a scalar value head");
    return forward_pass(params, arch, obs).output[0];
}

inline std::vector<double> q_values(std::span<const double> params, const Architecture& arch, const Observation& obs)
{
    detail::require(arch.head.kind == HeadKind::q_values, "q_values needs an action-value head");
    return forward_pass(params, arch, obs).output;
}

inline ParamVector grad_value(std::span<const double> params, const Architecture& arch, const Observation& obs)
{
    detail::require(arch.head.kind == HeadKind::scalar_value, "grad_value needs a scalar value head");
    const auto fp = forward_pass(params, arch, obs);
    const double one = 1.0;
    return backward_pass(params, arch, fp, std::span<const double>(&one, 1));
}

/// Value of Q(s, action) together with its parameter gradient.
struct ValueAndGrad {
    double value = 0.0;
    ParamVector grad;
};

inline ValueAndGrad q_value_and_grad(std::span<const double> params, const Architecture& arch,
                                     const Observation& obs, std::size_t action)
{
    detail::require(arch.head.kind == HeadKind::q_values, "q_value_and_grad needs an action-value head");
    if (action >= arch.head.size) throw ConfigError("action index out of range");
    const auto fp = forward_pass(params, arch, obs);
    std::vector<double> d(arch.head.size, 0.0);
    d[action] = 1.0;
    return {fp.output[action], backward_pass(params, arch, fp, d)};
}

namespace detail {

inline PolicyDistribution to_policy(const Head& head, const std::vector<double>& out)
{
    if (head.kind == HeadKind::gaussian_policy) {
        GaussianPolicy g;
        g.mean.assign(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(head.size));
        g.pre_std.assign(out.begin() + static_cast<std::ptrdiff_t>(head.size), out.end());
        g.std.resize(head.size);
        for (std::size_t i = 0; i < head.size; ++i) g.std[i] = softplus(g.pre_std[i]);
        return g;
    }
    if (head.kind == HeadKind::softmax_policy) return SoftmaxPolicy{out};
    throw ConfigError("policy operation needs a gaussian or softmax policy head");
}

} // namespace detail

inline PolicyDistribution policy_forward(std::span<const double> params, const Architecture& arch,
                                         const Observation& obs)
{
    const auto fp = forward_pass(params, arch, obs);
    return detail::to_policy(arch.head, fp.output);
}

/// log pi(a|s) and its gradient. Continuous actions are the pre-clamp sample.
inline ValueAndGrad logprob_and_grad(std::span<const double> params, const Architecture& arch,
                                     const Observation& obs, const Action& action)
{
    const auto fp = forward_pass(params, arch, obs);
    const auto hd = dist::log_prob(detail::to_policy(arch.head, fp.output), action);
    return {hd.value, backward_pass(params, arch, fp, hd.d_outputs)};
}

inline ValueAndGrad entropy_and_grad(std::span<const double> params, const Architecture& arch,
                                     const Observation& obs)
{
    const auto fp = forward_pass(params, arch, obs);
    const auto hd = dist::entropy(detail::to_policy(arch.head, fp.output));
    return {hd.value, backward_pass(params, arch, fp, hd.d_outputs)};
}

/// Fan-in scaled uniform weights with exactly floor(ratio * fan_in) zeros per
/// row of every weight matrix. Biases and LayerNorm shifts start at zero,
/// LayerNorm gains at one.
inline ParamVector sparse_init(const Architecture& arch, std::uint64_t seed)
{
    arch.validate();
    std::mt19937_64 rng(seed);
    ParamVector p(param_count(arch), 0.0);
    for (const auto& l : layout(arch)) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
        std::uniform_real_distribution<double> unif(-bound, bound);
        // the small offset keeps products like 0.29 * 100 from flooring one short
        const auto n_zero = static_cast<std::size_t>(std::floor(arch.sparse_init_ratio * static_cast<double>(l.in) + 1e-9));
        std::vector<std::size_t> idx(l.in);
        for (std::size_t o = 0; o < l.out; ++o) {
            double* row = p.data() + l.weight + o * l.in;
            for (std::size_t i = 0; i < l.in; ++i) row[i] = unif(rng);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            for (std::size_t k = 0; k < n_zero; ++k) {
                std::uniform_int_distribution<std::size_t> pick(k, l.in - 1);
                std::swap(idx[k], idx[pick(rng)]);
                row[idx[k]] = 0.0;
            }
        }
        if (l.has_norm)
            for (std::size_t o = 0; o < l.out; ++o) p[l.gain + o] = 1.0;
    }
    return p;
}

} // namespace intentional
