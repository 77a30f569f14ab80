#pragma once

#include "intentional/approx.hpp"
#include "intentional/distributions.hpp"

namespace intentional {

/// One streaming sample. `terminated` marks a true terminal; `truncated` a
/// timeout, which still bootstraps from s_next.
struct Transition {
    Observation s;
    Action a = std::size_t{0};
    double r = 0.0;
    Observation s_next;
    bool terminated = false;
    bool truncated = false;
};

} // namespace intentional
