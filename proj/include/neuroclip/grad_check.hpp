#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "neuroclip/parameter.hpp"

namespace neuroclip {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Coordinates probed per parameter; 0 probes every coordinate. Larger
  // tensors are subsampled with `seed`.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t coords = 0;
  double max_abs_error = 0.0;
  // max |analytic - numeric| over probed coordinates, divided by the largest
  // gradient magnitude (analytic or numeric) seen on that parameter.
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed = true;
  double max_rel_error = 0.0;
};

// Compares reverse-mode gradients of the scalar `loss` against central
// differences for each parameter. `loss` must be deterministic and rebuild its
// graph on every call; parameters must be trainable leaves.
GradCheckReport grad_check(const std::function<Tensor()>& loss, std::span<const Parameter> params,
                           const GradCheckOptions& options = {});

std::string format_report(const GradCheckReport& report);

}  // namespace neuroclip
