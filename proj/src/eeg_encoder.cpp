#include "neuroclip/eeg_encoder.hpp"

#include <array>
#include <cmath>
#include <string_view>

#include "neuroclip/errors.hpp"
#include "neuroclip/ops.hpp"
#include "neuroclip/parameter.hpp"

namespace neuroclip {

PerturbationParams PerturbationParams::identity(std::size_t channels, std::size_t samples) {
  return {trainable(Tensor::ones({channels, samples})), trainable(Tensor::zeros({channels, samples}))};
}

Tensor perturb(const Tensor& eeg, const PerturbationParams& p) {
  if (eeg.rank() != 3 || Shape(eeg.shape().begin() + 1, eeg.shape().end()) != p.gain.shape() ||
      p.offset.shape() != p.gain.shape()) {
    throw DimensionError("perturb: EEG " + to_string(eeg.shape()) + " does not match gain " +
                         to_string(p.gain.shape()) + " / offset " + to_string(p.offset.shape()));
  }
  return add(mul(eeg, p.gain), p.offset);
}

LightProjectorParams LightProjectorParams::init(std::size_t in_features, std::size_t embed_dim, std::mt19937_64& rng) {
  return {trainable(Tensor::randn({in_features, embed_dim}, rng, 1.0 / std::sqrt(double(in_features)))),
          trainable(Tensor::zeros({embed_dim}))};
}

Tensor encode_linear(const Tensor& perturbed, const LightProjectorParams& p) {
  if (perturbed.rank() < 2) throw DimensionError("encode: expected [B, C, T], got " + to_string(perturbed.shape()));
  const std::size_t batch = perturbed.shape()[0];
  const std::size_t features = batch == 0 ? 0 : perturbed.size() / batch;
  if (p.weight.rank() != 2 || p.weight.shape()[0] != features) {
    throw DimensionError("encode: flattened EEG has " + std::to_string(features) + " features, projector expects " +
                         to_string(p.weight.shape()));
  }
  return add(matmul(reshape(perturbed, {batch, features}), p.weight), p.bias);
}

Tensor encode(const Tensor& perturbed, const LightProjectorParams& p) {
  return l2_normalize(encode_linear(perturbed, p));
}

void check_encoder_name(const std::string& name) {
  if (name == "lightprojector") return;
  static constexpr std::array<std::string_view, 6> kKnown = {"tsconv",  "shallownet", "deepnet",
                                                             "eegnet",  "eegfusenet", "eegproject"};
  for (auto known : kKnown) {
    if (name == known) throw ConfigError("encoder.name: '" + name + "' is not implemented (use 'lightprojector')");
  }
  throw ConfigError("encoder.name: unknown encoder '" + name + "'");
}

}  // namespace neuroclip
