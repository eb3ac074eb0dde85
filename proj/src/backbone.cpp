#include "neuroclip/backbone.hpp"

#include <array>
#include <cmath>

#include "neuroclip/errors.hpp"
#include "neuroclip/ops.hpp"
#include "neuroclip/parameter.hpp"

namespace neuroclip {

void BackboneConfig::validate() const {
  if (patch == 0 || image_size % patch != 0) {
    throw ConfigError("backbone.patch: image size " + std::to_string(image_size) + " is not divisible by patch " +
                      std::to_string(patch));
  }
  if (width == 0 || heads == 0 || width % heads != 0) {
    throw ConfigError("backbone.heads: width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (mlp_ratio == 0) throw ConfigError("backbone.mlp_ratio must be positive");
}

BackboneParams BackboneParams::init(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t w = config.width;
  const std::size_t fan_patch = 3 * config.patch * config.patch;
  const double pos_scale = 1.0 / std::sqrt(double(w));

  BackboneParams p;
  p.config = config;
  p.patch_w = Tensor::randn({fan_patch, w}, rng, 1.0 / std::sqrt(double(fan_patch)));
  p.patch_b = Tensor::randn({w}, rng, 0.02);
  p.cls = Tensor::randn({w}, rng, pos_scale);
  p.pos_cls = Tensor::randn({1, w}, rng, pos_scale);
  p.pos_patch = Tensor::randn({config.num_patches(), w}, rng, pos_scale);
  const std::size_t hidden = config.mlp_ratio * w;
  for (std::size_t l = 0; l < config.depth; ++l) {
    TransformerBlock b;
    b.ln1_g = Tensor::ones({w});
    b.ln1_b = Tensor::zeros({w});
    b.wq = Tensor::randn({w, w}, rng, 1.0 / std::sqrt(double(w)));
    b.bq = Tensor::zeros({w});
    b.wk = Tensor::randn({w, w}, rng, 1.0 / std::sqrt(double(w)));
    b.bk = Tensor::zeros({w});
    b.wv = Tensor::randn({w, w}, rng, 1.0 / std::sqrt(double(w)));
    b.bv = Tensor::zeros({w});
    b.wo = Tensor::randn({w, w}, rng, 1.0 / std::sqrt(double(w)));
    b.bo = Tensor::zeros({w});
    b.ln2_g = Tensor::ones({w});
    b.ln2_b = Tensor::zeros({w});
    b.fc1_w = Tensor::randn({w, hidden}, rng, 1.0 / std::sqrt(double(w)));
    b.fc1_b = Tensor::zeros({hidden});
    b.fc2_w = Tensor::randn({hidden, w}, rng, 1.0 / std::sqrt(double(hidden)));
    b.fc2_b = Tensor::zeros({w});
    p.blocks.push_back(std::move(b));
  }
  std::mt19937_64 prompt_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  p.pos_prompt = Tensor::randn({config.prompts, w}, prompt_rng, pos_scale);
  return p;
}

Tensor BackboneParams::positional() const {
  const std::array<Tensor, 3> parts = {pos_cls, pos_prompt, pos_patch};
  return concat(parts, 0);
}

std::vector<std::pair<std::string, Tensor>> BackboneParams::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out = {
      {"backbone.patch.weight", patch_w}, {"backbone.patch.bias", patch_b},       {"backbone.cls", cls},
      {"backbone.pos.cls", pos_cls},      {"backbone.pos.prompt", pos_prompt}, {"backbone.pos.patch", pos_patch},
  };
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    const std::string pre = "backbone.block" + std::to_string(l) + ".";
    for (const auto& [name, t] : std::initializer_list<std::pair<const char*, Tensor>>{
             {"ln1.gain", b.ln1_g}, {"ln1.bias", b.ln1_b}, {"attn.wq", b.wq},    {"attn.bq", b.bq},
             {"attn.wk", b.wk},     {"attn.bk", b.bk},     {"attn.wv", b.wv},    {"attn.bv", b.bv},
             {"attn.wo", b.wo},     {"attn.bo", b.bo},     {"ln2.gain", b.ln2_g}, {"ln2.bias", b.ln2_b},
             {"mlp.fc1.weight", b.fc1_w}, {"mlp.fc1.bias", b.fc1_b}, {"mlp.fc2.weight", b.fc2_w},
             {"mlp.fc2.bias", b.fc2_b}}) {
      out.emplace_back(pre + name, t);
    }
  }
  return out;
}

PromptSet PromptSet::init(std::size_t count, std::size_t width, std::mt19937_64& rng) {
  return {trainable(Tensor::randn({count, width}, rng, 1.0 / std::sqrt(double(width))))};
}

ProjectionParams ProjectionParams::init(std::size_t width, std::size_t embed_dim, std::size_t depth,
                                        std::mt19937_64& rng) {
  if (depth == 0) throw ConfigError("backbone.projection_depth must be at least 1");
  ProjectionParams p;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t out = l + 1 == depth ? embed_dim : width;
    p.weights.push_back(trainable(Tensor::randn({width, out}, rng, 1.0 / std::sqrt(double(width)))));
    p.biases.push_back(trainable(Tensor::zeros({out})));
  }
  return p;
}

Tensor patch_embed(const Tensor& images, const BackboneParams& p) {
  const std::size_t patch = p.config.patch;
  if (images.rank() != 4 || images.shape()[1] != 3) {
    throw DimensionError("patch_embed: expected [B, 3, H, W], got " + to_string(images.shape()));
  }
  if (images.shape()[2] % patch != 0 || images.shape()[3] % patch != 0) {
    throw ConfigError("patch_embed: image " + to_string(images.shape()) + " is not divisible by patch size " +
                      std::to_string(patch));
  }
  Tensor cols = unfold(images, patch, patch, patch, 0);  // [B, 3pp, N]
  const std::array<std::size_t, 3> swap = {0, 2, 1};
  return add(matmul(permute(cols, swap), p.patch_w), p.patch_b);
}

Tensor insert_prompts(const BackboneParams& p, const PromptSet& prompts, const Tensor& x_fused) {
  const std::size_t w = p.config.width;
  if (x_fused.rank() != 3 || x_fused.shape()[2] != w) {
    throw DimensionError("insert_prompts: tokens " + to_string(x_fused.shape()) + " do not have width " +
                         std::to_string(w));
  }
  if (prompts.tokens.rank() != 2 || prompts.tokens.shape()[1] != w) {
    throw DimensionError("insert_prompts: prompt tokens " + to_string(prompts.tokens.shape()) +
                         " do not have width " + std::to_string(w));
  }
  const std::size_t batch = x_fused.shape()[0];
  const std::array<Tensor, 3> parts = {broadcast_to(p.cls, {batch, 1, w}),
                                       broadcast_to(prompts.tokens, {batch, prompts.tokens.shape()[0], w}), x_fused};
  Tensor seq = concat(parts, 1);
  const Tensor pos = p.positional();
  if (seq.shape()[1] != pos.shape()[0]) {
    throw DimensionError("insert_prompts: sequence of " + std::to_string(seq.shape()[1]) +
                         " tokens but positional table has " + std::to_string(pos.shape()[0]) + " rows");
  }
  return add(seq, pos);
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, Tensor* weights) {
  const std::size_t B = q.shape()[0], Sq = q.shape()[1], Sk = k.shape()[1], w = q.shape()[2];
  if (heads == 1) return scaled_dot_product_attention(q, k, v, weights);
  const std::size_t dh = w / heads;
  const std::array<std::size_t, 4> split = {0, 2, 1, 3};
  auto heads_first = [&](const Tensor& t, std::size_t s) { return permute(reshape(t, {B, s, heads, dh}), split); };
  Tensor out = scaled_dot_product_attention(heads_first(q, Sq), heads_first(k, Sk), heads_first(v, Sk), weights);
  return reshape(permute(out, split), {B, Sq, w});
}

Tensor transformer_block(const Tensor& x, const TransformerBlock& b, std::size_t heads) {
  Tensor h = layer_norm(x, b.ln1_g, b.ln1_b);
  Tensor q = add(matmul(h, b.wq), b.bq);
  Tensor k = add(matmul(h, b.wk), b.bk);
  Tensor v = add(matmul(h, b.wv), b.bv);
  Tensor y = add(x, add(matmul(multi_head_attention(q, k, v, heads), b.wo), b.bo));
  h = layer_norm(y, b.ln2_g, b.ln2_b);
  h = add(matmul(gelu(add(matmul(h, b.fc1_w), b.fc1_b)), b.fc2_w), b.fc2_b);
  return add(y, h);
}

Tensor vit_forward(const Tensor& sequence, const BackboneParams& p) {
  const std::size_t expected = p.config.sequence_length();
  if (sequence.rank() != 3 || sequence.shape()[1] != expected || sequence.shape()[2] != p.config.width) {
    throw DimensionError("vit_forward: expected [B, " + std::to_string(expected) + ", " +
                         std::to_string(p.config.width) + "], got " + to_string(sequence.shape()));
  }
  Tensor x = sequence;
  for (const auto& block : p.blocks) x = transformer_block(x, block, p.config.heads);
  return reshape(slice(x, 1, 0, 1), {sequence.shape()[0], p.config.width});
}

Tensor project(const Tensor& z_vit, const ProjectionParams& p) {
  Tensor h = z_vit;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    if (h.rank() != 2 || h.shape()[1] != p.weights[l].shape()[0]) {
      throw DimensionError("project: input " + to_string(h.shape()) + " vs layer " + to_string(p.weights[l].shape()));
    }
    h = add(matmul(h, p.weights[l]), p.biases[l]);
    if (l + 1 < p.weights.size()) h = gelu(h);
  }
  return l2_normalize(h);
}

}  // namespace neuroclip
