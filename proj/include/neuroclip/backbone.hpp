#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "neuroclip/tensor.hpp"

namespace neuroclip {

struct BackboneConfig {
  std::size_t image_size = 32;
  std::size_t patch = 8;
  std::size_t width = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t prompts = 4;

  std::size_t num_patches() const { return (image_size / patch) * (image_size / patch); }
  std::size_t sequence_length() const { return 1 + prompts + num_patches(); }
  // Throws ConfigError on inconsistent geometry.
  void validate() const;
};

// Pre-norm transformer block: x + MHA(LN(x)), then x + MLP(LN(x)).
struct TransformerBlock {
  Tensor ln1_g, ln1_b;
  Tensor wq, bq, wk, bk, wv, bv;  // [w, w], [w]
  Tensor wo, bo;
  Tensor ln2_g, ln2_b;
  Tensor fc1_w, fc1_b;  // [w, ratio*w]
  Tensor fc2_w, fc2_b;  // [ratio*w, w]
};

// Frozen vision transformer. Nothing here records gradients.
struct BackboneParams {
  BackboneConfig config;
  Tensor patch_w;     // [3*p*p, w]
  Tensor patch_b;     // [w]
  Tensor cls;         // [w]
  Tensor pos_cls;     // [1, w]
  Tensor pos_prompt;  // [prompts, w]
  Tensor pos_patch;   // [N, w]
  std::vector<TransformerBlock> blocks;

  // Seeded Gaussian weights scaled by 1/sqrt(fan_in). Prompt positional rows
  // come from a separate stream so the other tensors do not depend on the
  // prompt count.
  static BackboneParams init(const BackboneConfig& config, std::uint64_t seed);

  // [1 + prompts + N, w]: CLS row, prompt rows, patch rows.
  Tensor positional() const;
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
};

// Shared-level prompt tokens, [prompts, w].
struct PromptSet {
  Tensor tokens;
  static PromptSet init(std::size_t count, std::size_t width, std::mt19937_64& rng);
};

// Trainable head: (depth - 1) GELU layers of width w, then w -> d.
struct ProjectionParams {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  static ProjectionParams init(std::size_t width, std::size_t embed_dim, std::size_t depth, std::mt19937_64& rng);
};

// Non-overlapping patches, linearly embedded: [B, 3, H, W] -> [B, N, w].
Tensor patch_embed(const Tensor& images, const BackboneParams& p);

// [CLS; P; X_fused] plus positional embeddings: -> [B, 1 + prompts + N, w].
Tensor insert_prompts(const BackboneParams& p, const PromptSet& prompts, const Tensor& x_fused);

Tensor transformer_block(const Tensor& x, const TransformerBlock& block, std::size_t heads);

// Runs all blocks over exactly 1 + prompts + N tokens and returns the CLS output [B, w].
Tensor vit_forward(const Tensor& sequence, const BackboneParams& p);

// Linear head followed by row l2 normalization.
Tensor project(const Tensor& z_vit, const ProjectionParams& p);

// Splits already-projected q, k, v ([B, S, w]) into heads, attends, merges.
// No output projection.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            Tensor* weights = nullptr);

}  // namespace neuroclip
