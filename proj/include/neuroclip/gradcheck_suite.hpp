#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neuroclip/grad_check.hpp"

namespace neuroclip {

// Component selectors run by `--all`, in order.
const std::vector<std::string>& gradcheck_components();

// Runs the finite-difference check for one component on a tiny random
// problem (batch of 4). Accepts every name in gradcheck_components(), the
// aliases "catf" (for "fusion") and "pipeline" (whole model loss), and
// "corrupted", a negative control whose gradient rule is wrong on purpose.
// Unknown names raise ConfigError.
GradCheckReport run_gradcheck(const std::string& component, std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace neuroclip
