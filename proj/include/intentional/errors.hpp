#pragma once

#include <stdexcept>
#include <string>

namespace intentional {

/// Invalid configuration, dimension mismatch or out-of-range argument.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A learning step produced a non-finite quantity and was aborted.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what)
{
    if (!ok) throw ConfigError(what);
}

} // namespace detail

} // namespace intentional
