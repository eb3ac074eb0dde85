#include "neuroclip/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "neuroclip/errors.hpp"

namespace neuroclip {

GradCheckReport grad_check(const std::function<Tensor()>& loss, std::span<const Parameter> params,
                           const GradCheckOptions& options) {
  std::vector<Parameter> ps(params.begin(), params.end());
  for (Parameter& p : ps) {
    if (!p.value.requires_grad()) throw ContractError("grad_check: parameter '" + p.name + "' is not trainable");
    p.value.clear_grad();
  }
  loss().backward();

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (Parameter& p : ps) {
    const Tensor analytic = p.value.grad_tensor();
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords > 0 && coords.size() > options.max_coords) {
      std::vector<std::size_t> picked;
      std::sample(coords.begin(), coords.end(), std::back_inserter(picked), options.max_coords, rng);
      coords = std::move(picked);
    }

    GradCheckEntry entry{p.name, coords.size(), 0.0, 0.0, true};
    double scale = 0.0;
    auto values = p.value.mutable_data();
    {
      NoGradGuard no_grad;
      for (std::size_t i : coords) {
        const double saved = values[i];
        values[i] = saved + options.step;
        const double up = loss().item();
        values[i] = saved - options.step;
        const double down = loss().item();
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * options.step);
        const double a = analytic.data()[i];
        entry.max_abs_error = std::max(entry.max_abs_error, std::abs(a - numeric));
        scale = std::max({scale, std::abs(a), std::abs(numeric)});
      }
    }
    entry.max_rel_error = scale > 0.0 ? entry.max_abs_error / scale : 0.0;
    if (!std::isfinite(entry.max_rel_error)) entry.max_rel_error = INFINITY;
    entry.passed = entry.max_rel_error < options.tolerance;
    report.passed = report.passed && entry.passed;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
    p.value.clear_grad();
  }
  return report;
}

std::string format_report(const GradCheckReport& report) {
  std::ostringstream os;
  char line[256];
  for (const auto& e : report.entries) {
    std::snprintf(line, sizeof line, "  %-34s coords=%-5zu max_rel=%.3e max_abs=%.3e %s\n", e.name.c_str(), e.coords,
                  e.max_rel_error, e.max_abs_error, e.passed ? "ok" : "FAIL");
    os << line;
  }
  return os.str();
}

}  // namespace neuroclip
