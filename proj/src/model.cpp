#include "neuroclip/model.hpp"

#include <cmath>
#include <random>

#include "neuroclip/errors.hpp"
#include "neuroclip/ops.hpp"

namespace neuroclip {

namespace {

std::size_t masked_channels(const RunConfig& c, const Dims& d) {
  return c.data.channel_mask.empty() ? d.channels : c.data.channel_mask.size();
}

std::size_t masked_samples(const RunConfig& c, const Dims& d) {
  const std::size_t end = c.data.time_end == 0 ? d.samples : c.data.time_end;
  if (c.data.time_begin >= end || end > d.samples) {
    throw ConfigError("data.time_window does not fit T=" + std::to_string(d.samples));
  }
  return end - c.data.time_begin;
}

BackboneConfig backbone_for(const RunConfig& c, const Dims& d) {
  if (d.height != d.width) throw ConfigError("images must be square");
  if (d.height < kFilterStemReceptiveField) throw ConfigError("images are smaller than the filter stem");
  BackboneConfig b = c.backbone;
  b.image_size = d.height;
  b.validate();
  return b;
}

}  // namespace

NeuroClip::NeuroClip(const RunConfig& config, const Dims& dims) : config_(config), dims_(dims) {
  config_.validate();
  for (std::size_t ch : config_.data.channel_mask) {
    if (ch >= dims.channels) throw ConfigError("data.channel_mask: channel " + std::to_string(ch) + " out of range");
  }
  const std::size_t c = masked_channels(config_, dims), t = masked_samples(config_, dims);
  const BackboneConfig bc = backbone_for(config_, dims);
  const std::uint64_t seed = config_.trainer.seed;

  // Separate streams keep each component's initialization independent of the
  // sizes of the others.
  std::mt19937_64 eeg_rng(seed * 4 + 1), filter_rng(seed * 4 + 2), fusion_rng(seed * 4 + 3), head_rng(seed * 4 + 4);
  perturbation = PerturbationParams::identity(c, t);
  projector = LightProjectorParams::init(c * t, config_.encoder.embed_dim, eeg_rng);
  filter = FilterGeneratorParams::init(config_.filter, filter_rng);
  if (config_.fusion.strategy == FusionStrategy::Catf) {
    catf = CatfParams::init(bc.width, config_.fusion, fusion_rng);
  } else {
    bilinear = BilinearParams::init(config_.fusion.bilinear_init);
  }
  backbone = BackboneParams::init(bc, seed);
  prompts = PromptSet::init(bc.prompts, bc.width, head_rng);
  projection = ProjectionParams::init(bc.width, config_.encoder.embed_dim, config_.projection_depth, head_rng);
  log_tau = trainable(Tensor::full({1}, std::log(config_.tau_init)));
}

Tensor NeuroClip::embed_eeg(const Tensor& eeg) const {
  if (eeg.rank() != 3 || eeg.shape()[1] != dims_.channels || eeg.shape()[2] != dims_.samples) {
    throw DimensionError("embed_eeg: expected [B, " + std::to_string(dims_.channels) + ", " +
                         std::to_string(dims_.samples) + "], got " + to_string(eeg.shape()));
  }
  const bool whole = config_.data.channel_mask.empty() && config_.data.time_begin == 0 &&
                     (config_.data.time_end == 0 || config_.data.time_end == dims_.samples);
  const Tensor x = whole ? eeg : select_eeg(eeg, config_.data.channel_mask, config_.data.time_begin, config_.data.time_end);
  return encode(perturb(x, perturbation), projector);
}

ImageTrace NeuroClip::trace_images(const Tensor& images) const {
  ImageTrace tr;
  tr.filters = generate_filters(images, filter);
  tr.filtered = apply_dynamic_filter(images, tr.filters, filter.kernel_h, filter.kernel_w);
  if (config_.fusion.strategy == FusionStrategy::Catf) {
    tr.x_orig = patch_embed(images, backbone);
    tr.x_filt = patch_embed(tr.filtered, backbone);
    CatfResult r = catf_forward(tr.x_orig, tr.x_filt, catf);
    tr.gate = r.gate;
    tr.fused = r.fused;
  } else {
    tr.fused = patch_embed(bilinear_mix(images, tr.filtered, bilinear), backbone);
  }
  tr.sequence = insert_prompts(backbone, prompts, tr.fused);
  tr.cls = vit_forward(tr.sequence, backbone);
  tr.embedding = project(tr.cls, projection);
  return tr;
}

Tensor NeuroClip::embed_images(const Tensor& images) const { return trace_images(images).embedding; }

Tensor NeuroClip::temperature() const { return exp(log_tau); }

LossBreakdown NeuroClip::loss(const PairedBatch& batch) const {
  return total_loss(embed_eeg(batch.eeg), embed_images(batch.images), temperature(), config_.loss);
}

std::vector<Parameter> NeuroClip::parameters() const {
  std::vector<Parameter> ps;
  auto add = [&](std::string name, const Tensor& t, Group g) {
    if (t.size() > 0) ps.push_back({std::move(name), t, false, g});
  };
  add("perturbation.gain", perturbation.gain, Group::A);
  add("perturbation.offset", perturbation.offset, Group::A);
  add("encoder.weight", projector.weight, Group::A);
  add("encoder.bias", projector.bias, Group::A);
  for (std::size_t l = 0; l < projection.weights.size(); ++l) {
    add("projection." + std::to_string(l) + ".weight", projection.weights[l], Group::A);
    add("projection." + std::to_string(l) + ".bias", projection.biases[l], Group::A);
  }
  add("loss.log_tau", log_tau, Group::A);

  add("filter.conv1.weight", filter.conv1_w, Group::B);
  add("filter.conv1.bias", filter.conv1_b, Group::B);
  add("filter.conv2.weight", filter.conv2_w, Group::B);
  add("filter.conv2.bias", filter.conv2_b, Group::B);
  add("filter.fc1.weight", filter.fc1_w, Group::B);
  add("filter.fc1.bias", filter.fc1_b, Group::B);
  add("filter.fc2.weight", filter.fc2_w, Group::B);
  add("filter.fc2.bias", filter.fc2_b, Group::B);
  if (config_.fusion.strategy == FusionStrategy::Catf) {
    add("fusion.catf.wq", catf.wq, Group::B);
    add("fusion.catf.wk", catf.wk, Group::B);
    add("fusion.catf.wv", catf.wv, Group::B);
    add("fusion.catf.gate1.weight", catf.gate1_w, Group::B);
    add("fusion.catf.gate1.bias", catf.gate1_b, Group::B);
    add("fusion.catf.gate2.weight", catf.gate2_w, Group::B);
    add("fusion.catf.gate2.bias", catf.gate2_b, Group::B);
  } else {
    add("fusion.bilinear.logit", bilinear.logit, Group::B);
  }
  add("prompts.tokens", prompts.tokens, Group::B);

  for (auto& [name, t] : backbone.named_tensors()) {
    if (t.size() > 0) ps.push_back({name, t, true, Group::A});
  }
  return ps;
}

std::vector<Parameter> NeuroClip::trainable_parameters() const {
  std::vector<Parameter> out;
  for (auto& p : parameters()) {
    if (!p.frozen) out.push_back(std::move(p));
  }
  return out;
}

void NeuroClip::load_state(const std::map<std::string, Tensor>& tensors) {
  const auto ps = parameters();
  for (const Parameter& p : ps) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw ConfigError("checkpoint lacks tensor '" + p.name + "'");
    if (it->second.shape() != p.value.shape()) {
      throw ConfigError("checkpoint tensor '" + p.name + "' has shape " + to_string(it->second.shape()) +
                        ", model expects " + to_string(p.value.shape()));
    }
  }
  if (tensors.size() != ps.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model has " +
                      std::to_string(ps.size()));
  }
  for (const Parameter& p : ps) {
    Tensor dst = p.value;
    auto src = tensors.at(p.name).data();
    std::copy(src.begin(), src.end(), dst.mutable_data().begin());
  }
}

}  // namespace neuroclip
