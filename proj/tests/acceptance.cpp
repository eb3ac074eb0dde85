// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "neuroclip/checkpoint.hpp"
#include "neuroclip/data.hpp"
#include "neuroclip/dynamic_filter.hpp"
#include "neuroclip/gradcheck_suite.hpp"
#include "neuroclip/loss.hpp"
#include "neuroclip/metrics.hpp"
#include "neuroclip/ops.hpp"
#include "neuroclip/trainer.hpp"

using namespace neuroclip;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& why) {
    if (!ok && pass) detail << "first failure: " << why << "; ";
    pass = pass && ok;
  }
};

const Dims kTinyDims{4, 16, 16, 16};

RunConfig tiny_config(std::uint64_t seed) {
  RunConfig c;
  c.encoder.embed_dim = 16;
  c.filter = {3, 3, 4, 4, 8};
  c.backbone.width = 16;
  c.backbone.depth = 1;
  c.backbone.heads = 2;
  c.backbone.prompts = 2;
  c.trainer.batch_size = 8;
  c.trainer.epochs = 3;
  c.trainer.seed = seed;
  return c;
}

DatasetManifest tiny_splits() {
  SyntheticConfig s;
  s.seed = 11;
  s.classes = 12;
  s.per_class = 4;
  s.dims = kTinyDims;
  return zero_shot_split(generate_synthetic(s), 4, 6, 3);
}

Matrix random_matrix(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix s(n, n);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = u(rng);
  return s;
}

// 1-based position of the ground truth after a full sort (score desc, index asc).
std::vector<std::size_t> full_sort_ranks(const Matrix& s) {
  std::vector<std::size_t> ranks;
  std::vector<std::size_t> order(std::size_t(s.cols()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double sa = s(i, Eigen::Index(a)), sb = s(i, Eigen::Index(b));
      return sa != sb ? sa > sb : a < b;
    });
    ranks.push_back(std::size_t(std::find(order.begin(), order.end(), std::size_t(i)) - order.begin()) + 1);
  }
  return ranks;
}

Tensor naive_filter(const Tensor& img, const Tensor& f, std::size_t kh, std::size_t kw) {
  const std::size_t B = img.dim(0), H = img.dim(2), W = img.dim(3);
  Tensor out({B, 3, H, W});
  auto o = out.mutable_data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          double acc = 0.0;
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const long yy = long(y + i) - long(kh / 2), xx = long(x + j) - long(kw / 2);
              if (yy < 0 || xx < 0 || yy >= long(H) || xx >= long(W)) continue;
              acc += img.at({b, c, std::size_t(yy), std::size_t(xx)}) * f.at({b, c * kh * kw + i * kw + j});
            }
          o[((b * 3 + c) * H + y) * W + x] = acc;
        }
  return out;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome gradient_integrity() {
  Outcome o;
  double worst = 0.0;
  std::size_t checks = 0;
  for (const std::string& c : gradcheck_components())
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const GradCheckReport r = run_gradcheck(c, seed, {});
      worst = std::max(worst, r.max_rel_error);
      ++checks;
      o.require(r.passed && r.max_rel_error < 1e-4, c + " seed " + std::to_string(seed));
    }
  o.detail << checks << " component/seed checks, max rel error " << worst << " (< 1e-4)";
  return o;
}

Outcome freeze_contract() {
  Outcome o;
  SyntheticConfig s;
  s.seed = 21;
  const DatasetManifest data = generate_synthetic(s);
  const PairedBatch& all = data.split("all");
  Trainer t(RunConfig{}, data.dims);
  const auto before = t.model().parameters();
  std::map<std::string, std::vector<double>> initial;
  for (const Parameter& p : before) initial[p.name].assign(p.value.data().begin(), p.value.data().end());
  const std::uint64_t frozen = frozen_hash(before);

  std::mt19937_64 rng(21);
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  for (int step = 0; step < 20; ++step) {
    std::shuffle(order.begin(), order.end(), rng);
    t.train_step(take(all, std::span(order).first(32)));
  }
  const auto after = t.model().parameters();
  o.require(frozen_hash(after) == frozen, "frozen hash changed");
  std::size_t changed = 0, trainable = 0;
  for (const Parameter& p : after) {
    if (p.frozen) continue;
    ++trainable;
    const bool moved = !std::equal(p.value.data().begin(), p.value.data().end(), initial[p.name].begin());
    changed += moved;
    o.require(moved, p.name + " did not change");
  }
  o.detail << "frozen hash stable over 20 steps; " << changed << "/" << trainable << " trainable tensors changed";
  return o;
}

Outcome loss_degeneracy() {
  Outcome o;
  RunConfig c = tiny_config(31);
  c.loss.mu = 1.0, c.loss.alpha = 0.0, c.loss.lambda = 0.0;
  NeuroClip model(c, kTinyDims);
  SyntheticConfig s;
  s.seed = 31;
  s.classes = 20;
  s.per_class = 3;
  s.dims = kTinyDims;
  const PairedBatch all = generate_synthetic(s).split("all");
  std::mt19937_64 rng(31);
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t b = 2 + std::size_t(trial) % 15;
    model.log_tau.mutable_data()[0] = std::uniform_real_distribution<double>(-3.0, 0.5)(rng);
    const PairedBatch batch = take(all, std::span(order).first(b));
    NoGradGuard guard;
    const double total = model.loss(batch).total_value;
    const double clip =
        infonce(cosine_sim_matrix(model.embed_eeg(batch.eeg), model.embed_images(batch.images)), model.temperature())
            .item();
    worst = std::max(worst, std::abs(total - clip));
  }
  o.require(worst < 1e-9, "L_total differs from InfoNCE");

  bool identity = true;
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor ze = Tensor::randn({6, 5}, rng), zi = Tensor::randn({6, 5}, rng);
    const SoftTargets t = soft_targets(ze, zi, Tensor::scalar(0.1 + 0.1 * trial), 0.0);
    identity = identity && bitwise_equal(t.t_eeg, Tensor::eye(6)) && bitwise_equal(t.t_img, Tensor::eye(6));
  }
  o.require(identity, "beta=0 targets are not the identity");
  o.detail << "100 batches, max |L_total - InfoNCE| = " << worst << " (< 1e-9); beta=0 targets exactly identity";
  return o;
}

Outcome architectural_reduction() {
  Outcome o;
  RunConfig c;
  c.backbone.prompts = 0;
  c.trainer.seed = 41;
  NeuroClip model(c, Dims{});
  std::fill(model.filter.fc2_w.mutable_data().begin(), model.filter.fc2_w.mutable_data().end(), 0.0);
  model.catf.gate2_b.mutable_data()[0] = -1e4;

  std::mt19937_64 rng(41);
  const Tensor images = Tensor::uniform({6, 3, 32, 32}, rng, 0.0, 1.0);
  NoGradGuard guard;
  const ImageTrace trace = model.trace_images(images);
  o.require(max_abs_diff(trace.filters, delta_filters(6, c.filter.kernel_h, c.filter.kernel_w)) == 0.0,
            "filters are not delta kernels");
  const PromptSet none{Tensor(Shape{0, c.backbone.width})};
  const Tensor plain = project(vit_forward(insert_prompts(model.backbone, none, patch_embed(images, model.backbone)),
                                           model.backbone),
                               model.projection);
  const double diff = max_abs_diff(model.embed_images(images), plain);
  o.require(diff < 1e-9, "embedding differs from plain ViT");
  o.detail << "max |z_I - ViT+projection| = " << diff << " (< 1e-9)";
  return o;
}

Outcome oracle_equivalence() {
  Outcome o;
  std::mt19937_64 rng(51);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < 50; ++trial) {
    const std::size_t kh = 1 + 2 * (trial % 4), kw = 1 + 2 * ((trial / 4) % 3);
    const Tensor img = Tensor::randn({2, 3, 5 + trial % 7, 6 + trial % 5}, rng);
    const Tensor f = Tensor::randn({2, 3 * kh * kw}, rng);
    worst = std::max(worst, max_abs_diff(apply_dynamic_filter(img, f, kh, kw), naive_filter(img, f, kh, kw)));
  }
  o.require(worst < 1e-9, "dynamic filter differs from the naive convolution");

  const std::vector<std::size_t> ks = {1, 3, 5, 10, 50, 200};
  bool exact = true;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix s = random_matrix(200, rng);
    const auto ranks = full_sort_ranks(s);
    const auto topk = topk_accuracy(s, ks);
    for (std::size_t k : ks) {
      std::size_t hits = 0;
      for (std::size_t r : ranks) hits += r <= k;
      exact = exact && topk.at(k) == double(hits) / 200.0;
    }
    double ap = 0.0;
    for (std::size_t r : ranks) ap += 1.0 / double(r);
    exact = exact && mean_average_precision(s) == ap / 200.0;
  }
  o.require(exact, "Top-k/mAP differ from the full-sort oracle");
  o.detail << "50 filter cases max diff " << worst << " (< 1e-9); 20 random 200x200 matrices exact";
  return o;
}

Outcome hand_values() {
  Outcome o;
  const double clip = infonce(Tensor::eye(2), 1.0).item();
  o.require(std::abs(clip - 0.313262) <= 1e-6, "InfoNCE hand value");
  Matrix s = Matrix::Zero(5, 5);
  for (Eigen::Index i = 0; i < 5; ++i) s(i, i) = 0.5, s(i, (i + 2) % 5) = 0.8;
  const double map = mean_average_precision(s);
  o.require(map == 0.5, "rank-2 mAP");
  o.detail << "InfoNCE(I_2, tau=1) = " << clip << ", rank-2 mAP = " << map;
  return o;
}

Outcome learning_signal() {
  Outcome o;
  SyntheticConfig s;
  s.seed = 2024;
  s.classes = 50;
  s.per_class = 20;
  s.noise = 0.1;
  const DatasetManifest data = zero_shot_split(generate_synthetic(s), 10, 40, 2024);
  const PairedBatch &train = data.split("train"), &val = data.split("val"), &test = data.split("test");

  std::vector<double> trained;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    RunConfig c;
    c.trainer.epochs = 10;
    c.trainer.seed = seed;
    Trainer t(c, data.dims);
    const FitResult fit = t.fit(train, val);
    trained.push_back(evaluate_zero_shot(fit.best.restore(), test, fit.best.train_classes, {1}).top_k.at(1));
  }
  std::vector<double> sorted = trained;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[1];

  std::vector<std::int64_t> train_classes(train.class_ids.begin(), train.class_ids.end());
  double untrained = 0.0;
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    RunConfig c;
    c.trainer.seed = seed;
    untrained += evaluate_zero_shot(NeuroClip(c, data.dims), test, train_classes, {1}).top_k.at(1) / 20.0;
  }
  o.require(median >= 0.2, "median trained Top-1 below 0.2");
  o.require(untrained >= 0.0 && untrained <= 0.3, "untrained baseline outside [0, 0.3]");
  o.detail << "trained Top-1 " << trained[0] << "/" << trained[1] << "/" << trained[2] << " (median " << median
           << " >= 0.2, chance 0.1); untrained mean over 20 inits " << untrained << " in [0, 0.3]";
  return o;
}

Outcome metric_sanity() {
  Outcome o;
  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix s = random_matrix(30, rng);
    std::vector<std::size_t> ks(30);
    std::iota(ks.begin(), ks.end(), 1);
    const auto acc = topk_accuracy(s, ks);
    for (std::size_t k = 1; k < 30; ++k) o.require(acc.at(k) <= acc.at(k + 1), "Top-k not monotone");
    const Matrix t = s.unaryExpr([](double v) { return std::atan(5.0 * v) + 2.0; });
    o.require(ground_truth_ranks(s) == ground_truth_ranks(t) && topk_accuracy(s, ks) == topk_accuracy(t, ks) &&
                  mean_average_precision(s) == mean_average_precision(t),
              "metrics changed under a strictly increasing transform");
  }

  const RunConfig c = tiny_config(81);
  const NeuroClip model(c, kTinyDims);
  SyntheticConfig s;
  s.seed = 81;
  s.classes = 8;
  s.per_class = 1;
  s.dims = kTinyDims;
  const PairedBatch batch = generate_synthetic(s).split("all");
  NoGradGuard guard;
  const LossBreakdown base = model.loss(batch);
  std::vector<std::size_t> perm(batch.size());
  std::iota(perm.begin(), perm.end(), 0);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const LossBreakdown l = model.loss(take(batch, perm));
    worst = std::max({worst, std::abs(l.clip - base.clip), std::abs(l.soft - base.soft), std::abs(l.rel - base.rel)});
  }
  o.require(worst < 1e-12, "loss components changed under batch permutation");
  o.detail << "Top-k monotone, ranks invariant under atan transform; 10 permutations max loss diff " << worst
           << " (< 1e-12)";
  return o;
}

Outcome determinism() {
  Outcome o;
  const DatasetManifest data = tiny_splits();
  const fs::path root = fs::temp_directory_path() / "neuroclip_acceptance_ckpt";
  fs::remove_all(root);
  std::vector<Checkpoint> best;
  for (int run = 0; run < 2; ++run) {
    Trainer t(tiny_config(91), kTinyDims);
    best.push_back(t.fit(data.split("train"), data.split("val")).best);
    save_checkpoint(best.back(), root / std::to_string(run));
  }
  const bool same_hash = state_hash(best[0].parameters) == state_hash(best[1].parameters);
  bool same_bytes = true;
  for (const char* f : {"checkpoint.json", "parameters.bin"})
    same_bytes = same_bytes && file_bytes(root / "0" / f) == file_bytes(root / "1" / f);
  o.require(same_hash && same_bytes, "repeated runs differ");

  const Checkpoint back = load_checkpoint(root / "0");
  Trainer fresh(back.config, back.dims);
  std::map<std::string, Tensor> state;
  for (const Parameter& p : back.parameters) state.emplace(p.name, p.value);
  fresh.model().load_state(state);
  const double diff = std::abs(fresh.validation_loss(data.split("val")) - best[0].val_loss);
  o.require(diff <= 1e-9, "reloaded validation loss differs");
  fs::remove_all(root);
  o.detail << "two runs give byte-identical checkpoints; reload |dval| = " << diff << " (<= 1e-9)";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient integrity", gradient_integrity},   {"freeze contract", freeze_contract},
      {"loss degeneracy", loss_degeneracy},         {"architectural reduction", architectural_reduction},
      {"oracle equivalence", oracle_equivalence},   {"hand values", hand_values},
      {"learning signal", learning_signal},         {"metric sanity", metric_sanity},
      {"determinism and persistence", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("%s [%zu] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.str().c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
