#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace intentional::testing {

/// Central finite differences of a scalar function of the parameters.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> params, double h = 1e-5)
{
    std::vector<double> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double up = f(params);
        params[i] = keep - h;
        const double down = f(params);
        params[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// Relative agreement; entries where both sides are below `abs_floor` in
/// difference are accepted (finite-difference round-off is ~1e-11 there).
inline bool close_rel(double a, double b, double rel = 1e-4, double abs_floor = 1e-8)
{
    const double diff = std::abs(a - b);
    return diff <= abs_floor || diff <= rel * std::max(std::abs(a), std::abs(b));
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

} // namespace intentional::testing
