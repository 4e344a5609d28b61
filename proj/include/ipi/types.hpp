#pragma once

#include <cstdint>
#include <vector>

namespace ipi {

/// Signed 64-bit index used for states, actions, rows and nonzero offsets.
using index_t = std::int64_t;

/// Dense real vector; value functions are vectors of length n.
using Vector = std::vector<double>;

/// Deterministic policy: one action index per state.
using Policy = std::vector<index_t>;

}  // namespace ipi
