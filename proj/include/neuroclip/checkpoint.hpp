#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "neuroclip/config.hpp"
#include "neuroclip/data.hpp"
#include "neuroclip/model.hpp"

namespace neuroclip {

struct Checkpoint {
  RunConfig config;
  Dims dims;
  std::size_t epoch = 0;
  double val_loss = 0.0;
  std::vector<std::int64_t> train_classes;  // sorted, unique
  std::vector<Parameter> parameters;        // deep copies, registry order

  // Model rebuilt from the config with these values loaded.
  NeuroClip restore() const;
};

// Deep copy of the model's current state.
Checkpoint snapshot(const NeuroClip& model, std::size_t epoch, double val_loss,
                    std::vector<std::int64_t> train_classes);

// 64-bit FNV-1a over every parameter name, shape and payload byte.
std::uint64_t state_hash(const std::vector<Parameter>& params);
// Same, restricted to frozen parameters.
std::uint64_t frozen_hash(const std::vector<Parameter>& params);

// Directory layout: checkpoint.json (config, dims, epoch, val_loss,
// train_classes, parameter index) plus parameters.bin.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace neuroclip
