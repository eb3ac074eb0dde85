#include "neuroclip/gradcheck_suite.hpp"

#include <cmath>
#include <random>

#include "neuroclip/backbone.hpp"
#include "neuroclip/data.hpp"
#include "neuroclip/dynamic_filter.hpp"
#include "neuroclip/eeg_encoder.hpp"
#include "neuroclip/errors.hpp"
#include "neuroclip/fusion.hpp"
#include "neuroclip/loss.hpp"
#include "neuroclip/model.hpp"
#include "neuroclip/ops.hpp"

namespace neuroclip {

namespace {

constexpr std::size_t kBatch = 4;
constexpr std::size_t kChannels = 3, kSamples = 8, kImage = 8, kWidth = 8, kEmbed = 6;

Tensor leaf(Tensor t) { return trainable(std::move(t)); }

BackboneConfig tiny_backbone() {
  BackboneConfig c;
  c.image_size = kImage;
  c.patch = 4;
  c.width = kWidth;
  c.depth = 1;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.prompts = 2;
  return c;
}

RunConfig tiny_run(std::uint64_t seed) {
  RunConfig c;
  c.encoder.embed_dim = kEmbed;
  c.filter = {3, 3, 4, 4, 8};
  c.backbone = tiny_backbone();
  c.tau_init = 0.5;
  c.loss.detach_targets = false;  // the probe differentiates the whole objective
  c.trainer.seed = seed;
  c.trainer.batch_size = kBatch;
  return c;
}

struct Problem {
  std::function<Tensor()> f;
  std::vector<Parameter> params;
};

// Embeddings and log-temperature for the loss-term checks. tau = 0.5 keeps
// every probability far from the KL clamp.
struct LossInputs {
  Tensor ze, zi, log_tau;
  std::vector<Parameter> params() const {
    return {{"z_eeg", ze, false, Group::A}, {"z_img", zi, false, Group::A}, {"log_tau", log_tau, false, Group::A}};
  }
};

LossInputs loss_inputs(std::mt19937_64& rng) {
  return {leaf(Tensor::randn({kBatch, kEmbed}, rng)), leaf(Tensor::randn({kBatch, kEmbed}, rng)),
          leaf(Tensor::full({1}, std::log(0.5)))};
}

struct CrossTerms {
  Tensor p_ei, p_ie;
  SoftTargets t;
};

CrossTerms cross_terms(const LossInputs& in, double beta) {
  const Tensor tau = exp(in.log_tau);
  const Tensor l = div(cosine_sim_matrix(in.ze, in.zi), reshape(tau, {}));
  return {softmax_rows(l), softmax_rows(transpose(l)), soft_targets(in.ze, in.zi, tau, beta)};
}

Problem build(const std::string& name, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Problem p;
  // Each check probes <output, R> with a fixed random R so every output entry matters.
  auto images = [&] { return Tensor::uniform({kBatch, 3, kImage, kImage}, rng, 0.0, 1.0); };

  if (name == "perturbation") {
    PerturbationParams pp{leaf(Tensor::uniform({kChannels, kSamples}, rng, 0.5, 1.5)),
                          leaf(Tensor::randn({kChannels, kSamples}, rng, 0.1))};
    Tensor e = leaf(Tensor::randn({kBatch, kChannels, kSamples}, rng));
    Tensor r = Tensor::randn({kBatch, kChannels, kSamples}, rng);
    p.f = [=] { return sum(mul(perturb(e, pp), r)); };
    p.params = {{"perturbation.gain", pp.gain}, {"perturbation.offset", pp.offset}, {"eeg", e}};
  } else if (name == "encoder") {
    LightProjectorParams lp = LightProjectorParams::init(kChannels * kSamples, kEmbed, rng);
    lp.bias = leaf(Tensor::randn({kEmbed}, rng, 0.1));
    Tensor x = leaf(Tensor::randn({kBatch, kChannels, kSamples}, rng));
    Tensor r = Tensor::randn({kBatch, kEmbed}, rng);
    p.f = [=] { return sum(mul(encode(x, lp), r)); };
    p.params = {{"encoder.weight", lp.weight}, {"encoder.bias", lp.bias}, {"eeg", x}};
  } else if (name == "filter_generator") {
    FilterGeneratorParams fg = FilterGeneratorParams::init({3, 3, 4, 4, 8}, rng);
    fg.fc2_w = leaf(Tensor::randn(fg.fc2_w.shape(), rng, 0.3));
    Tensor img = leaf(images());
    Tensor r = Tensor::randn({kBatch, fg.taps()}, rng);
    p.f = [=] { return sum(mul(generate_filters(img, fg), r)); };
    p.params = {{"filter.conv1.weight", fg.conv1_w}, {"filter.conv1.bias", fg.conv1_b},
                {"filter.conv2.weight", fg.conv2_w}, {"filter.conv2.bias", fg.conv2_b},
                {"filter.fc1.weight", fg.fc1_w},     {"filter.fc1.bias", fg.fc1_b},
                {"filter.fc2.weight", fg.fc2_w},     {"filter.fc2.bias", fg.fc2_b},
                {"images", img}};
  } else if (name == "dynamic_filter") {
    Tensor img = leaf(images());
    Tensor f = leaf(Tensor::randn({kBatch, 3 * 3 * 3}, rng));
    Tensor r = Tensor::randn({kBatch, 3, kImage, kImage}, rng);
    p.f = [=] { return sum(mul(apply_dynamic_filter(img, f, 3, 3), r)); };
    p.params = {{"images", img}, {"filters", f}};
  } else if (name == "fusion" || name == "catf") {
    FusionConfig fc;
    fc.heads = 1;
    CatfParams cp = CatfParams::init(kWidth, fc, rng);
    cp.gate2_b = leaf(Tensor::full({1}, 0.3));
    Tensor xo = leaf(Tensor::randn({kBatch, 4, kWidth}, rng));
    Tensor xf = leaf(Tensor::randn({kBatch, 4, kWidth}, rng));
    Tensor r = Tensor::randn({kBatch, 4, kWidth}, rng);
    p.f = [=] { return sum(mul(catf(xo, xf, cp), r)); };
    p.params = {{"fusion.catf.wq", cp.wq, false, Group::B},
                {"fusion.catf.wk", cp.wk, false, Group::B},
                {"fusion.catf.wv", cp.wv, false, Group::B},
                {"fusion.catf.gate1.weight", cp.gate1_w, false, Group::B},
                {"fusion.catf.gate1.bias", cp.gate1_b, false, Group::B},
                {"fusion.catf.gate2.weight", cp.gate2_w, false, Group::B},
                {"fusion.catf.gate2.bias", cp.gate2_b, false, Group::B},
                {"x_orig", xo},
                {"x_filt", xf}};
  } else if (name == "bilinear") {
    BilinearParams bp = BilinearParams::init(0.3);
    Tensor a = leaf(images()), b = leaf(images());
    Tensor r = Tensor::randn(a.shape(), rng);
    p.f = [=] { return sum(mul(bilinear_mix(a, b, bp), r)); };
    p.params = {{"fusion.bilinear.logit", bp.logit, false, Group::B}, {"images", a}, {"filtered", b}};
  } else if (name == "prompts") {
    const BackboneConfig bc = tiny_backbone();
    const BackboneParams bb = BackboneParams::init(bc, seed);
    PromptSet ps = PromptSet::init(bc.prompts, bc.width, rng);
    Tensor fused = leaf(Tensor::randn({kBatch, bc.num_patches(), bc.width}, rng));
    Tensor r = Tensor::randn({kBatch, bc.width}, rng);
    p.f = [=] { return sum(mul(vit_forward(insert_prompts(bb, ps, fused), bb), r)); };
    p.params = {{"prompts.tokens", ps.tokens, false, Group::B}, {"x_fused", fused}};
  } else if (name == "projection") {
    ProjectionParams pp = ProjectionParams::init(kWidth, kEmbed, 2, rng);
    for (Tensor& b : pp.biases) b = leaf(Tensor::randn(b.shape(), rng, 0.1));
    Tensor z = leaf(Tensor::randn({kBatch, kWidth}, rng));
    Tensor r = Tensor::randn({kBatch, kEmbed}, rng);
    p.f = [=] { return sum(mul(project(z, pp), r)); };
    for (std::size_t l = 0; l < pp.weights.size(); ++l) {
      p.params.push_back({"projection." + std::to_string(l) + ".weight", pp.weights[l]});
      p.params.push_back({"projection." + std::to_string(l) + ".bias", pp.biases[l]});
    }
    p.params.push_back({"z_vit", z});
  } else if (name == "loss_clip") {
    LossInputs in = loss_inputs(rng);
    p.f = [=] { return infonce(cosine_sim_matrix(in.ze, in.zi), exp(in.log_tau)); };
    p.params = in.params();
  } else if (name == "loss_soft") {
    LossInputs in = loss_inputs(rng);
    p.f = [=] {
      const CrossTerms c = cross_terms(in, 0.3);
      return soft_loss(c.t.t_eeg, c.t.t_img, c.p_ei, c.p_ie);
    };
    p.params = in.params();
  } else if (name == "loss_rel") {
    LossInputs in = loss_inputs(rng);
    p.f = [=] {
      const CrossTerms c = cross_terms(in, 0.3);
      return relation_loss(c.t.p_ee, c.t.p_ii, c.p_ei, c.p_ie);
    };
    p.params = in.params();
  } else if (name == "pipeline") {
    const RunConfig rc = tiny_run(seed);
    auto model = std::make_shared<NeuroClip>(rc, Dims{kChannels, kSamples, kImage, kImage});
    // Move away from the near-delta initial filters, where the filtered and
    // original streams coincide and the fusion gradients vanish.
    model->catf.gate2_b.mutable_data()[0] = 0.3;
    for (double& w : model->filter.fc2_w.mutable_data()) w = 0.5 * std::normal_distribution<double>()(rng);
    PairedBatch batch;
    batch.eeg = Tensor::randn({kBatch, kChannels, kSamples}, rng);
    batch.images = images();
    for (std::size_t i = 0; i < kBatch; ++i) {
      batch.ids.push_back("s" + std::to_string(i));
      batch.class_ids.push_back(std::int64_t(i));
    }
    p.f = [model, batch] { return model->loss(batch).total; };
    p.params = model->trainable_parameters();
  } else if (name == "corrupted") {
    // x^2 with a backward rule of 3x instead of 2x.
    Tensor x = leaf(Tensor::randn({5}, rng));
    Tensor r = Tensor::randn({5}, rng);
    p.f = [=] {
      std::vector<double> y(x.size());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] * x.data()[i];
      const Tensor in[] = {x};
      Tensor sq = Tensor::from_op("corrupted_square", x.shape(), std::move(y), in,
                                  [xv = x.detach()](std::span<const double> g, std::span<const double>,
                                                    std::span<detail::GradSink> sinks) {
                                    if (sinks[0].empty()) return;
                                    for (std::size_t i = 0; i < g.size(); ++i) sinks[0][i] += 3.0 * xv.data()[i] * g[i];
                                  });
      return sum(mul(sq, r));
    };
    p.params = {{"x", x}};
  } else {
    throw ConfigError("gradcheck: unknown component '" + name + "'");
  }
  return p;
}

}  // namespace

const std::vector<std::string>& gradcheck_components() {
  static const std::vector<std::string> names = {
      "perturbation", "encoder",   "filter_generator", "dynamic_filter", "fusion",   "bilinear",
      "prompts",      "projection", "loss_clip",       "loss_soft",      "loss_rel", "pipeline"};
  return names;
}

GradCheckReport run_gradcheck(const std::string& component, std::uint64_t seed, const GradCheckOptions& options) {
  const Problem p = build(component, seed);
  GradCheckOptions o = options;
  o.seed = seed;
  GradCheckReport r = grad_check(p.f, p.params, o);
  for (auto& e : r.entries) e.name = component + "/" + e.name;
  return r;
}

}  // namespace neuroclip
