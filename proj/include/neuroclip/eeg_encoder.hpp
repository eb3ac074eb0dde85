#pragma once

#include <random>
#include <string>

#include "neuroclip/tensor.hpp"

namespace neuroclip {

// Elementwise affine map over (channel, time), shared across the batch.
struct PerturbationParams {
  Tensor gain;    // [C, T]
  Tensor offset;  // [C, T]

  // gain = 1, offset = 0, so the map starts as the identity.
  static PerturbationParams identity(std::size_t channels, std::size_t samples);
};

// E_hat[b, c, t] = E[b, c, t] * gain[c, t] + offset[c, t]
Tensor perturb(const Tensor& eeg, const PerturbationParams& p);

// Single fully connected layer from flattened EEG to the embedding space.
struct LightProjectorParams {
  Tensor weight;  // [C*T, d]
  Tensor bias;    // [d]

  static LightProjectorParams init(std::size_t in_features, std::size_t embed_dim, std::mt19937_64& rng);
};

// flatten(E_hat) * weight + bias, before normalization.
Tensor encode_linear(const Tensor& perturbed, const LightProjectorParams& p);
// encode_linear followed by row l2 normalization.
Tensor encode(const Tensor& perturbed, const LightProjectorParams& p);

// Accepts "lightprojector". The other encoder names are recognised and
// rejected as not implemented; anything else is an unknown-name ConfigError.
void check_encoder_name(const std::string& name);

}  // namespace neuroclip
