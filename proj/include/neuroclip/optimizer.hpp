#pragma once

#include <span>
#include <string>
#include <vector>

#include "neuroclip/parameter.hpp"

namespace neuroclip {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer over one parameter group. Frozen parameters are
// rejected at construction; an absent gradient counts as zero.
class Adam {
 public:
  Adam(std::vector<Parameter> params, AdamConfig config);

  void step();
  void zero_grad();
  const std::vector<Parameter>& params() const { return params_; }
  std::size_t steps() const { return t_; }

 private:
  std::vector<Parameter> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// One Adam per group: A at lr_a, B at lr_b. Frozen parameters are skipped.
class DualOptimizer {
 public:
  DualOptimizer(std::span<const Parameter> registry, double lr_a, double lr_b);

  // Optional global-norm clipping across both groups (0 disables), then one
  // step of each optimizer.
  void step(double clip_norm = 0.0);
  void zero_grad();

  const Adam& group_a() const { return a_; }
  const Adam& group_b() const { return b_; }

 private:
  Adam a_, b_;
};

// Names of trainable registry entries not covered by exactly one of the two
// optimizers, plus frozen entries that either optimizer touches.
std::vector<std::string> coverage_violations(std::span<const Parameter> registry, const DualOptimizer& opt);

}  // namespace neuroclip
