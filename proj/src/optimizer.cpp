#include "neuroclip/optimizer.hpp"

#include <cmath>

#include "neuroclip/errors.hpp"

namespace neuroclip {

namespace {

std::vector<Parameter> select(std::span<const Parameter> registry, Group g) {
  std::vector<Parameter> out;
  for (const Parameter& p : registry) {
    if (!p.frozen && p.group == g) out.push_back(p);
  }
  return out;
}

}  // namespace

Adam::Adam(std::vector<Parameter> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const Parameter& p : params_) {
    if (p.frozen) throw ContractError("optimizer given frozen parameter '" + p.name + "'");
    if (!p.value.requires_grad()) throw ContractError("optimizer given non-trainable tensor '" + p.name + "'");
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, double(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor value = params_[k].value;
    if (!value.has_grad()) continue;
    auto g = value.grad();
    auto x = value.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      x[i] -= config_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (const Parameter& p : params_) {
    Tensor t = p.value;
    t.zero_grad();
  }
}

DualOptimizer::DualOptimizer(std::span<const Parameter> registry, double lr_a, double lr_b)
    : a_(select(registry, Group::A), AdamConfig{lr_a}), b_(select(registry, Group::B), AdamConfig{lr_b}) {}

void DualOptimizer::step(double clip_norm) {
  if (clip_norm > 0.0) {
    double sq = 0.0;
    for (const Adam* opt : {&a_, &b_}) {
      for (const Parameter& p : opt->params()) {
        for (double g : p.value.grad()) sq += g * g;
      }
    }
    const double norm = std::sqrt(sq);
    if (norm > clip_norm) {
      const double s = clip_norm / norm;
      for (const Adam* opt : {&a_, &b_}) {
        for (const Parameter& p : opt->params()) {
          Tensor t = p.value;
          t.scale_grad(s);
        }
      }
    }
  }
  a_.step();
  b_.step();
}

void DualOptimizer::zero_grad() {
  a_.zero_grad();
  b_.zero_grad();
}

std::vector<std::string> coverage_violations(std::span<const Parameter> registry, const DualOptimizer& opt) {
  std::vector<std::string> bad;
  for (const Parameter& p : registry) {
    int touched = 0;
    for (const Adam* o : {&opt.group_a(), &opt.group_b()}) {
      for (const Parameter& q : o->params()) touched += q.value.same_storage(p.value);
    }
    if (p.frozen ? touched != 0 : touched != 1) bad.push_back(p.name);
  }
  return bad;
}

}  // namespace neuroclip
