#pragma once

#include <random>

#include "neuroclip/tensor.hpp"

namespace neuroclip {

struct FilterGeneratorConfig {
  std::size_t kernel_h = 5;
  std::size_t kernel_w = 5;
  std::size_t stem1 = 8;
  std::size_t stem2 = 16;
  std::size_t hidden = 64;
};

// Generator network: two stride-2 3x3 convolutions with GELU, global average
// pooling, then a one-hidden-layer MLP emitting 3*kh*kw kernel taps.
struct FilterGeneratorParams {
  std::size_t kernel_h = 5;
  std::size_t kernel_w = 5;
  Tensor conv1_w, conv1_b;  // [stem1, 3, 3, 3], [stem1]
  Tensor conv2_w, conv2_b;  // [stem2, stem1, 3, 3], [stem2]
  Tensor fc1_w, fc1_b;      // [stem2, hidden], [hidden]
  Tensor fc2_w, fc2_b;      // [hidden, 3*kh*kw], [3*kh*kw]

  // The output bias is a delta kernel per channel and the output weights are
  // small, so initial kernels are close to the identity filter.
  static FilterGeneratorParams init(const FilterGeneratorConfig& config, std::mt19937_64& rng);

  std::size_t taps() const { return 3 * kernel_h * kernel_w; }
};

// Smallest image side the stem accepts (receptive field of the two convs).
inline constexpr std::size_t kFilterStemReceptiveField = 7;

// [B, 3, H, W] -> [B, 3*kh*kw]; row b holds channel-major kernels for image b.
Tensor generate_filters(const Tensor& images, const FilterGeneratorParams& p);

// Per-image, per-channel same-size cross-correlation with zero padding.
// filters is [B, 3*kh*kw] laid out as [channel][row][col].
Tensor apply_dynamic_filter(const Tensor& images, const Tensor& filters, std::size_t kernel_h, std::size_t kernel_w);

// [B, 3*kh*kw] of delta kernels (center tap 1).
Tensor delta_filters(std::size_t batch, std::size_t kernel_h, std::size_t kernel_w);

}  // namespace neuroclip
