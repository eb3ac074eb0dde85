#include "neuroclip/fusion.hpp"

#include <cmath>

#include "neuroclip/backbone.hpp"
#include "neuroclip/errors.hpp"
#include "neuroclip/ops.hpp"
#include "neuroclip/parameter.hpp"

namespace neuroclip {

FusionStrategy parse_fusion_strategy(const std::string& name) {
  if (name == "catf") return FusionStrategy::Catf;
  if (name == "bilinear") return FusionStrategy::Bilinear;
  throw ConfigError("fusion.strategy: expected 'catf' or 'bilinear', got '" + name + "'");
}

std::string to_string(FusionStrategy s) { return s == FusionStrategy::Catf ? "catf" : "bilinear"; }

CatfParams CatfParams::init(std::size_t width, const FusionConfig& config, std::mt19937_64& rng) {
  if (config.heads == 0 || width % config.heads != 0) {
    throw ConfigError("fusion.heads: width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(config.heads));
  }
  const std::size_t half = std::max<std::size_t>(width / 2, 1);
  const double s = 1.0 / std::sqrt(double(width));
  CatfParams p;
  p.heads = config.heads;
  p.wq = trainable(Tensor::randn({width, width}, rng, s));
  p.wk = trainable(Tensor::randn({width, width}, rng, s));
  p.wv = trainable(Tensor::randn({width, width}, rng, s));
  p.gate1_w = trainable(Tensor::randn({width, half}, rng, s));
  p.gate1_b = trainable(Tensor::zeros({half}));
  p.gate2_w = trainable(Tensor::randn({half, 1}, rng, 1.0 / std::sqrt(double(half))));
  p.gate2_b = trainable(Tensor::full({1}, config.gate_bias_init));
  return p;
}

CatfResult catf_forward(const Tensor& x_orig, const Tensor& x_filt, const CatfParams& p) {
  if (x_orig.shape() != x_filt.shape() || x_orig.rank() != 3) {
    throw DimensionError("catf: streams must share a [B, N, w] shape, got " + to_string(x_orig.shape()) + " and " +
                         to_string(x_filt.shape()));
  }
  if (p.wq.shape()[0] != x_orig.shape()[2]) {
    throw DimensionError("catf: token width " + std::to_string(x_orig.shape()[2]) + " vs projection " +
                         to_string(p.wq.shape()));
  }
  CatfResult r;
  Tensor q = matmul(x_orig, p.wq);
  Tensor k = matmul(x_filt, p.wk);
  Tensor v = matmul(x_filt, p.wv);
  Tensor z = multi_head_attention(q, k, v, p.heads, &r.attention);
  Tensor hidden = gelu(add(matmul(z, p.gate1_w), p.gate1_b));
  r.gate = sigmoid(add(matmul(hidden, p.gate2_w), p.gate2_b));
  r.fused = add(mul(r.gate, x_filt), mul(add_scalar(neg(r.gate), 1.0), x_orig));
  return r;
}

BilinearParams BilinearParams::init(double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw DomainError("bilinear mixing weight must lie in (0, 1)");
  return {trainable(Tensor::full({1}, std::log(lambda / (1.0 - lambda))))};
}

double BilinearParams::lambda() const { return 1.0 / (1.0 + std::exp(-logit.item())); }

Tensor bilinear_mix(const Tensor& image, const Tensor& filtered, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw DomainError("bilinear_mix: lambda must lie strictly inside (0, 1), got " + std::to_string(lambda));
  }
  if (image.shape() != filtered.shape()) {
    throw DimensionError("bilinear_mix: " + to_string(image.shape()) + " vs " + to_string(filtered.shape()));
  }
  return add(scale(filtered, lambda), scale(image, 1.0 - lambda));
}

Tensor bilinear_mix(const Tensor& image, const Tensor& filtered, const BilinearParams& p) {
  if (image.shape() != filtered.shape()) {
    throw DimensionError("bilinear_mix: " + to_string(image.shape()) + " vs " + to_string(filtered.shape()));
  }
  Tensor lambda = sigmoid(p.logit);
  return add(mul(lambda, filtered), mul(add_scalar(neg(lambda), 1.0), image));
}

}  // namespace neuroclip
