#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "neuroclip/checkpoint.hpp"
#include "neuroclip/config.hpp"
#include "neuroclip/data.hpp"
#include "neuroclip/errors.hpp"
#include "neuroclip/ops.hpp"
#include "neuroclip/optimizer.hpp"
#include "neuroclip/trainer.hpp"

using namespace neuroclip;
namespace fs = std::filesystem;

namespace {

const Dims kDims{4, 16, 16, 16};

RunConfig tiny_config(std::uint64_t seed = 0) {
  RunConfig c;
  c.encoder.embed_dim = 16;
  c.filter = {3, 3, 4, 4, 8};
  c.backbone.image_size = 16;
  c.backbone.width = 16;
  c.backbone.depth = 1;
  c.backbone.heads = 2;
  c.backbone.prompts = 2;
  c.trainer.batch_size = 8;
  c.trainer.epochs = 2;
  c.trainer.seed = seed;
  return c;
}

DatasetManifest tiny_data(std::size_t classes = 12, std::size_t per_class = 4, double noise = 0.1) {
  SyntheticConfig s;
  s.seed = 5;
  s.classes = classes;
  s.per_class = per_class;
  s.noise = noise;
  s.dims = kDims;
  return generate_synthetic(s);
}

DatasetManifest tiny_splits() { return zero_shot_split(tiny_data(), 4, 6, 1); }

std::map<std::string, Tensor> as_map(const std::vector<Parameter>& params) {
  std::map<std::string, Tensor> out;
  for (const Parameter& p : params) out.emplace(p.name, p.value);
  return out;
}

std::map<std::string, std::vector<double>> values(const NeuroClip& m) {
  std::map<std::string, std::vector<double>> out;
  for (const Parameter& p : m.parameters()) out[p.name].assign(p.value.data().begin(), p.value.data().end());
  return out;
}

}  // namespace

TEST(TrainStep, ZeroLearningRatesLeaveParametersUnchanged) {
  RunConfig c = tiny_config();
  c.trainer.lr_a = c.trainer.lr_b = 0.0;
  Trainer t(c, kDims);
  const auto data = tiny_data();
  const std::uint64_t before = state_hash(t.model().parameters());
  const LossBreakdown l = t.train_step(data.split("all"));
  EXPECT_TRUE(std::isfinite(l.total_value));
  EXPECT_EQ(state_hash(t.model().parameters()), before);
}

TEST(TrainStep, UpdatesEveryTrainableTensorAndNoFrozenOne) {
  Trainer t(tiny_config(), kDims);
  const auto data = tiny_data();
  const auto before = values(t.model());
  const std::uint64_t frozen = frozen_hash(t.model().parameters());
  std::vector<std::size_t> idx(8);
  for (int s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < 8; ++i) idx[i] = (s * 8 + i * 5) % data.split("all").size();
    t.train_step(take(data.split("all"), idx));
  }
  EXPECT_EQ(frozen_hash(t.model().parameters()), frozen);
  const auto after = values(t.model());
  for (const Parameter& p : t.model().parameters()) {
    if (p.frozen)
      EXPECT_EQ(after.at(p.name), before.at(p.name)) << p.name;
    else
      EXPECT_NE(after.at(p.name), before.at(p.name)) << p.name;
  }
}

TEST(TrainStep, NoiseFreeTwoClassDescent) {
  const auto data = tiny_data(2, 4, 0.0);
  Trainer t(tiny_config(), kDims);
  const double first = t.train_step(data.split("all")).total_value;
  double last = first;
  for (int s = 1; s < 50; ++s) last = t.train_step(data.split("all")).total_value;
  EXPECT_LT(last, first);
}

TEST(TrainStep, SingletonBatchIsContractError) {
  Trainer t(tiny_config(), kDims);
  const auto data = tiny_data();
  const std::vector<std::size_t> one = {0};
  EXPECT_THROW(t.train_step(take(data.split("all"), one)), ContractError);
}

TEST(TrainStep, NonFiniteLossNamesTheComponent) {
  Trainer t(tiny_config(), kDims);
  const std::vector<std::size_t> idx = {0, 5, 9};
  PairedBatch b = take(tiny_data().split("all"), idx);
  b.eeg.mutable_data()[3] = NAN;
  try {
    t.train_step(b);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("L_clip"), std::string::npos) << e.what();
  }
}

TEST(Fit, ZeroEpochsReturnsInitialState) {
  RunConfig c = tiny_config();
  c.trainer.epochs = 0;
  Trainer t(c, kDims);
  const std::uint64_t initial = state_hash(t.model().parameters());
  const auto splits = tiny_splits();
  const FitResult r = t.fit(splits.split("train"), splits.split("val"));
  EXPECT_EQ(r.best.epoch, 0u);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(state_hash(r.best.parameters), initial);
}

TEST(Fit, SelectsLowestValidationLoss) {
  RunConfig c = tiny_config();
  c.trainer.epochs = 4;
  Trainer t(c, kDims);
  const auto splits = tiny_splits();
  std::ostringstream log;
  const FitResult r = t.fit(splits.split("train"), splits.split("val"), &log);
  ASSERT_EQ(r.history.size(), 5u);
  const auto best = std::min_element(r.history.begin(), r.history.end(),
                                     [](const EpochStats& a, const EpochStats& b) { return a.val_loss < b.val_loss; });
  EXPECT_EQ(r.best.epoch, best->epoch);
  EXPECT_EQ(r.best.val_loss, best->val_loss);
  if (std::is_sorted(r.history.begin(), r.history.end(),
                     [](const EpochStats& a, const EpochStats& b) { return a.val_loss > b.val_loss; })) {
    EXPECT_EQ(r.best.epoch, 4u);
  }

  std::istringstream lines(log.str());
  std::string line;
  std::size_t epochs = 0, steps = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.at("type") == "epoch") {
      ++epochs;
      EXPECT_TRUE(j.contains("val_loss"));
      if (j.at("epoch") != 0) {
        for (const char* k : {"L_clip", "L_soft", "L_rel", "L_total"}) EXPECT_TRUE(j.contains(k)) << k;
      }
    } else {
      ++steps;
    }
  }
  EXPECT_EQ(epochs, 5u);
  EXPECT_EQ(steps, 4 * r.history[1].steps);
}

TEST(Fit, SameSeedGivesIdenticalCheckpoint) {
  const auto splits = tiny_splits();
  Trainer a(tiny_config(3), kDims), b(tiny_config(3), kDims);
  const FitResult ra = a.fit(splits.split("train"), splits.split("val"));
  const FitResult rb = b.fit(splits.split("train"), splits.split("val"));
  EXPECT_EQ(state_hash(ra.best.parameters), state_hash(rb.best.parameters));
  EXPECT_EQ(state_hash(a.model().parameters()), state_hash(b.model().parameters()));
  Trainer c(tiny_config(4), kDims);
  c.fit(splits.split("train"), splits.split("val"));
  EXPECT_NE(state_hash(c.model().parameters()), state_hash(a.model().parameters()));
}

TEST(Fit, ReloadedCheckpointReproducesValidationLoss) {
  const auto splits = tiny_splits();
  Trainer t(tiny_config(), kDims);
  const FitResult r = t.fit(splits.split("train"), splits.split("val"));
  const fs::path dir = fs::temp_directory_path() / "neuroclip_test_trainer_ckpt";
  fs::remove_all(dir);
  save_checkpoint(r.best, dir);
  const Checkpoint back = load_checkpoint(dir);
  EXPECT_EQ(state_hash(back.parameters), state_hash(r.best.parameters));
  EXPECT_EQ(back.val_loss, r.best.val_loss);
  EXPECT_EQ(back.epoch, r.best.epoch);
  EXPECT_EQ(back.train_classes, r.best.train_classes);
  EXPECT_EQ(to_json(back.config), to_json(r.best.config));

  Trainer fresh(back.config, back.dims);
  fresh.model().load_state(as_map(back.parameters));
  EXPECT_NEAR(fresh.validation_loss(splits.split("val")), r.best.val_loss, 1e-9);
  EXPECT_EQ(state_hash(back.restore().parameters()), state_hash(back.parameters));
  fs::remove_all(dir);
}

TEST(Fit, LoadStateRejectsMismatches) {
  NeuroClip m(tiny_config(), kDims);
  auto state = as_map(m.parameters());
  state.erase("loss.log_tau");
  EXPECT_THROW(m.load_state(state), ConfigError);
  state = as_map(m.parameters());
  state["loss.log_tau"] = Tensor({2});
  EXPECT_THROW(m.load_state(state), ConfigError);
}

TEST(Optimizer, ZeroGradientLeavesParameterUnchanged) {
  Tensor x = trainable(Tensor({3}, {0.5, -1.0, 2.0}));
  Adam opt({{"x", x}}, {.lr = 0.1});
  sum(scale(x, 0.0)).backward();
  opt.step();
  EXPECT_EQ(std::vector<double>(x.data().begin(), x.data().end()), (std::vector<double>{0.5, -1.0, 2.0}));
}

TEST(Optimizer, ConstantGradientStepsDownhill) {
  for (double g : {3.0, -0.01}) {
    Tensor x = trainable(Tensor({1}, {1.0}));
    Adam opt({{"x", x}}, {.lr = 0.01});
    sum(scale(x, g)).backward();
    opt.step();
    // The first bias-corrected step has magnitude lr * |g| / (|g| + eps).
    EXPECT_NEAR(x.data()[0], 1.0 - std::copysign(0.01 * std::abs(g) / (std::abs(g) + 1e-8), g), 1e-15) << g;
  }
}

TEST(Optimizer, RejectsFrozenParameters) {
  EXPECT_THROW(Adam({{"w", trainable(Tensor({1})), true}}, {}), ContractError);
}

TEST(Optimizer, GroupsPartitionTheRegistry) {
  for (const char* fusion : {"catf", "bilinear"}) {
    RunConfig c = tiny_config();
    c.fusion.strategy = parse_fusion_strategy(fusion);
    const NeuroClip m(c, kDims);
    const auto registry = m.parameters();
    const DualOptimizer opt(registry, 0.002, 0.02);
    EXPECT_TRUE(coverage_violations(registry, opt).empty());
    for (const Parameter& p : registry) {
      if (p.frozen) {
        EXPECT_EQ(p.name.rfind("backbone.", 0), 0u) << p.name;
        continue;
      }
      const bool group_a = p.name.starts_with("perturbation.") || p.name.starts_with("encoder.") ||
                           p.name.starts_with("projection.") || p.name == "loss.log_tau";
      EXPECT_EQ(p.group, group_a ? Group::A : Group::B) << p.name;
    }
  }
}

TEST(Evaluate, HeldOutClassesOnly) {
  const auto splits = tiny_splits();
  const NeuroClip m(tiny_config(), kDims);
  const PairedBatch& test = splits.split("test");
  const RetrievalReport r = evaluate_zero_shot(m, test, splits.split("train").class_ids, {1, 4});
  EXPECT_EQ(r.top_k.at(4), 1.0);
  EXPECT_EQ(r.ranks.size(), 4u);
  EXPECT_THROW(evaluate_zero_shot(m, test, test.class_ids, {1}), ContractError);
}

TEST(Evaluate, ExhaustiveKOnTenPairs) {
  const auto splits = zero_shot_split(tiny_data(), 10, 2, 2);
  const NeuroClip m(tiny_config(), kDims);
  EXPECT_EQ(evaluate_zero_shot(m, splits.split("test"), splits.split("train").class_ids, {10}).top_k.at(10), 1.0);
}

TEST(Config, RoundTripAndOverrides) {
  const RunConfig c = tiny_config(7);
  EXPECT_EQ(to_json(parse_config(to_json(c))), to_json(c));
  const RunConfig o = apply_overrides(c, {{"loss.mu", "1"}, {"fusion.strategy", "bilinear"}, {"eval.ks", "[1, 2]"}});
  EXPECT_EQ(o.loss.mu, 1.0);
  EXPECT_EQ(o.fusion.strategy, FusionStrategy::Bilinear);
  EXPECT_EQ(o.eval.ks, (std::vector<std::size_t>{1, 2}));
  EXPECT_THROW(apply_overrides(c, {{"loss.gamma", "1"}}), ConfigError);
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
  try {
    parse_config(R"({"loss": {"muu": 0.5}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("loss.muu"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config(R"({"trainer": {"batch_size": 1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"filter": {"kernel_h": 4}})"), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
  const RunConfig d = parse_config("{}");
  EXPECT_EQ(d.trainer.lr_a, 0.002);
  EXPECT_EQ(d.trainer.lr_b, 0.02);
  EXPECT_NEAR(d.tau_init, 1.0 / 14.0, 1e-15);
}
