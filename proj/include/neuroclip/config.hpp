#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "neuroclip/backbone.hpp"
#include "neuroclip/dynamic_filter.hpp"
#include "neuroclip/fusion.hpp"
#include "neuroclip/loss.hpp"

namespace neuroclip {

struct DataConfig {
  std::vector<std::size_t> channel_mask;  // empty keeps every channel
  std::size_t time_begin = 0;
  std::size_t time_end = 0;  // 0 means T
};

struct EncoderConfig {
  std::string name = "lightprojector";
  std::size_t embed_dim = 128;
};

struct TrainerConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr_a = 0.002;
  double lr_b = 0.02;
  std::uint64_t seed = 0;
  double grad_clip = 0.0;  // global norm; 0 disables
  std::size_t repeats = 1;
};

struct EvalConfig {
  std::vector<std::size_t> ks = {1, 3, 5};
};

struct RunConfig {
  DataConfig data;
  EncoderConfig encoder;
  FilterGeneratorConfig filter;
  FusionConfig fusion;
  BackboneConfig backbone;  // image_size is taken from the dataset
  std::size_t projection_depth = 1;
  LossWeights loss;
  double tau_init = 1.0 / 14.0;
  TrainerConfig trainer;
  EvalConfig eval;

  // Range checks that do not need the dataset. Throws ConfigError / DomainError.
  void validate() const;
};

std::string to_json(const RunConfig& c);
// Missing keys keep their defaults; unknown keys raise ConfigError naming the
// full key path.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Applies `section.key=value` overrides. Values are parsed as JSON when
// possible and as bare strings otherwise.
RunConfig apply_overrides(const RunConfig& base, const std::vector<std::pair<std::string, std::string>>& overrides);

// Environment variable naming the default config file.
inline constexpr const char* kConfigEnvVar = "NEUROCLIP_CONFIG";

}  // namespace neuroclip
