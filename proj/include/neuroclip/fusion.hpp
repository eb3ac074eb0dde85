#pragma once

#include <random>
#include <string>

#include "neuroclip/tensor.hpp"

namespace neuroclip {

enum class FusionStrategy { Catf, Bilinear };

FusionStrategy parse_fusion_strategy(const std::string& name);
std::string to_string(FusionStrategy s);

struct FusionConfig {
  FusionStrategy strategy = FusionStrategy::Catf;
  std::size_t heads = 1;
  double gate_bias_init = -2.0;
  // Initial mixing weight of the bilinear adapter.
  double bilinear_init = 0.5;
};

// Cross-attention token fusion: queries from the original stream, keys and
// values from the filtered stream, and a per-token sigmoid gate.
struct CatfParams {
  std::size_t heads = 1;
  Tensor wq, wk, wv;        // [w, w]
  Tensor gate1_w, gate1_b;  // [w, w/2], [w/2]
  Tensor gate2_w, gate2_b;  // [w/2, 1], [1]

  static CatfParams init(std::size_t width, const FusionConfig& config, std::mt19937_64& rng);
};

struct CatfResult {
  Tensor fused;      // [B, N, w]
  Tensor gate;       // [B, N, 1]
  Tensor attention;  // [B, N, N] (or [B, h, N, N])
};

CatfResult catf_forward(const Tensor& x_orig, const Tensor& x_filt, const CatfParams& p);

// X_fused = a * X_filt + (1 - a) * X_orig with a = sigmoid(FFN(Z)).
inline Tensor catf(const Tensor& x_orig, const Tensor& x_filt, const CatfParams& p) {
  return catf_forward(x_orig, x_filt, p).fused;
}

// Image-space convex blend with a logit-parameterized weight.
struct BilinearParams {
  Tensor logit;  // [1]
  static BilinearParams init(double lambda);
  double lambda() const;
};

// lambda * I_filt + (1 - lambda) * I, lambda strictly inside (0, 1).
Tensor bilinear_mix(const Tensor& image, const Tensor& filtered, double lambda);
Tensor bilinear_mix(const Tensor& image, const Tensor& filtered, const BilinearParams& p);

}  // namespace neuroclip
