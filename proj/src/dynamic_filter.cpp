#include "neuroclip/dynamic_filter.hpp"

#include <cmath>

#include "neuroclip/errors.hpp"
#include "neuroclip/ops.hpp"
#include "neuroclip/parameter.hpp"

namespace neuroclip {

namespace {

void check_odd(std::size_t kh, std::size_t kw) {
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ConfigError("dynamic filter kernel must be odd-sized, got " + std::to_string(kh) + "x" + std::to_string(kw));
  }
}

Tensor delta_taps(std::size_t kh, std::size_t kw) {
  Tensor t({3 * kh * kw});
  auto d = t.mutable_data();
  for (std::size_t c = 0; c < 3; ++c) d[c * kh * kw + (kh / 2) * kw + kw / 2] = 1.0;
  return t;
}

}  // namespace

FilterGeneratorParams FilterGeneratorParams::init(const FilterGeneratorConfig& config, std::mt19937_64& rng) {
  check_odd(config.kernel_h, config.kernel_w);
  FilterGeneratorParams p;
  p.kernel_h = config.kernel_h;
  p.kernel_w = config.kernel_w;
  auto he = [](std::size_t fan_in) { return 1.0 / std::sqrt(double(fan_in)); };
  p.conv1_w = trainable(Tensor::randn({config.stem1, 3, 3, 3}, rng, he(27)));
  p.conv1_b = trainable(Tensor::zeros({config.stem1}));
  p.conv2_w = trainable(Tensor::randn({config.stem2, config.stem1, 3, 3}, rng, he(config.stem1 * 9)));
  p.conv2_b = trainable(Tensor::zeros({config.stem2}));
  p.fc1_w = trainable(Tensor::randn({config.stem2, config.hidden}, rng, he(config.stem2)));
  p.fc1_b = trainable(Tensor::zeros({config.hidden}));
  p.fc2_w = trainable(Tensor::randn({config.hidden, p.taps()}, rng, 0.1 * he(config.hidden)));
  p.fc2_b = trainable(delta_taps(p.kernel_h, p.kernel_w));
  return p;
}

Tensor generate_filters(const Tensor& images, const FilterGeneratorParams& p) {
  if (images.rank() != 4 || images.shape()[1] != 3) {
    throw DimensionError("generate_filters: expected [B, 3, H, W], got " + to_string(images.shape()));
  }
  if (images.shape()[2] < kFilterStemReceptiveField || images.shape()[3] < kFilterStemReceptiveField) {
    throw DimensionError("generate_filters: image " + to_string(images.shape()) + " smaller than the stem receptive field");
  }
  const std::size_t batch = images.shape()[0];
  Tensor h = gelu(conv2d(images, p.conv1_w, p.conv1_b, 2, 1));
  h = gelu(conv2d(h, p.conv2_w, p.conv2_b, 2, 1));
  const std::size_t channels = h.shape()[1];
  Tensor pooled = mean_axis(reshape(h, {batch, channels, h.shape()[2] * h.shape()[3]}), 2);
  Tensor hidden = gelu(add(matmul(pooled, p.fc1_w), p.fc1_b));
  return add(matmul(hidden, p.fc2_w), p.fc2_b);
}

Tensor apply_dynamic_filter(const Tensor& images, const Tensor& filters, std::size_t kernel_h, std::size_t kernel_w) {
  check_odd(kernel_h, kernel_w);
  if (images.rank() != 4 || images.shape()[1] != 3) {
    throw DimensionError("apply_dynamic_filter: expected [B, 3, H, W], got " + to_string(images.shape()));
  }
  const std::size_t B = images.shape()[0], H = images.shape()[2], W = images.shape()[3];
  const std::size_t K = kernel_h * kernel_w;
  if (filters.shape() != Shape{B, 3 * K}) {
    throw DimensionError("apply_dynamic_filter: filters " + to_string(filters.shape()) + " do not match images " +
                         to_string(images.shape()) + " with a " + std::to_string(kernel_h) + "x" +
                         std::to_string(kernel_w) + " kernel");
  }
  Tensor cols = unfold(images, kernel_h, kernel_w, 1, kernel_h / 2, kernel_w / 2);  // [B, 3K, HW]
  Tensor out = matmul(reshape(filters, {B, 3, 1, K}), reshape(cols, {B, 3, K, H * W}));
  return reshape(out, {B, 3, H, W});
}

Tensor delta_filters(std::size_t batch, std::size_t kernel_h, std::size_t kernel_w) {
  check_odd(kernel_h, kernel_w);
  return broadcast_to(delta_taps(kernel_h, kernel_w), {batch, 3 * kernel_h * kernel_w}).detach();
}

}  // namespace neuroclip
