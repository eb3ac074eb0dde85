#include "neuroclip/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>

#include "neuroclip/errors.hpp"
#include "neuroclip/loss.hpp"
#include "neuroclip/ops.hpp"

namespace neuroclip {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what + " (" + std::to_string(v) + ")");
}

void check_loss(const LossBreakdown& l) {
  require_finite(l.clip, "L_clip");
  require_finite(l.soft, "L_soft");
  require_finite(l.rel, "L_rel");
  require_finite(l.total_value, "L_total");
}

}  // namespace

Trainer::Trainer(const RunConfig& config, const Dims& dims) : config_(config), model_(config, dims) {
  const auto registry = model_.parameters();
  optimizer_ = std::make_unique<DualOptimizer>(registry, config_.trainer.lr_a, config_.trainer.lr_b);
}

LossBreakdown Trainer::train_step(const PairedBatch& batch) {
  batch.validate();
  if (batch.size() < 2) throw ContractError("train_step needs a batch of at least 2 pairs");
  optimizer_->zero_grad();
  LossBreakdown l = model_.loss(batch);
  check_loss(l);
  l.total.backward();
  for (const Parameter& p : model_.trainable_parameters()) {
    for (double g : p.value.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + p.name);
    }
  }
  optimizer_->step(config_.trainer.grad_clip);
  ++step_;
  l.total = Tensor();  // release the graph
  return l;
}

double Trainer::validation_loss(const PairedBatch& val) const {
  const std::size_t n = val.size();
  if (n < 2) throw ContractError("validation split needs at least 2 pairs");
  NoGradGuard guard;
  const std::size_t bs = config_.trainer.batch_size;
  double weighted = 0.0;
  for (std::size_t start = 0; start < n;) {
    std::size_t len = std::min(bs, n - start);
    if (n - start - len == 1) ++len;  // never leave a single pair behind
    std::vector<std::size_t> idx(len);
    std::iota(idx.begin(), idx.end(), start);
    const LossBreakdown l = model_.loss(take(val, idx));
    check_loss(l);
    weighted += l.total_value * double(len);
    start += len;
  }
  return weighted / double(n);
}

FitResult Trainer::fit(const PairedBatch& train, const PairedBatch& val, std::ostream* log) {
  train.validate();
  val.validate();
  const std::size_t n = train.size();
  const std::size_t bs = config_.trainer.batch_size;
  if (n < 2) throw ContractError("training split needs at least 2 pairs");

  FitResult result;
  double best = validation_loss(val);
  result.best = snapshot(model_, 0, best, train.class_ids);
  result.history.push_back({0, 0, 0, 0, 0, 0, best});
  if (log) {
    *log << nlohmann::ordered_json{{"type", "epoch"}, {"epoch", 0}, {"val_loss", best}, {"tau", model_.temperature().item()}}
         << '\n';
  }

  std::mt19937_64 rng(config_.trainer.seed ^ 0xda7aULL);
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= config_.trainer.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats st;
    st.epoch = epoch;
    for (std::size_t start = 0; start + 2 <= n; start += bs) {
      const std::size_t len = std::min(bs, n - start);
      if (len < 2) break;
      const LossBreakdown l = train_step(take(train, std::span(order).subspan(start, len)));
      st.clip += l.clip;
      st.soft += l.soft;
      st.rel += l.rel;
      st.total += l.total_value;
      ++st.steps;
      if (log) {
        *log << nlohmann::ordered_json{{"type", "step"}, {"epoch", epoch},     {"step", step_},
                               {"L_clip", l.clip}, {"L_soft", l.soft}, {"L_rel", l.rel},
                               {"L_total", l.total_value}}
             << '\n';
      }
    }
    if (st.steps) {
      st.clip /= double(st.steps);
      st.soft /= double(st.steps);
      st.rel /= double(st.steps);
      st.total /= double(st.steps);
    }
    st.val_loss = validation_loss(val);
    result.history.push_back(st);
    if (log) {
      *log << nlohmann::ordered_json{{"type", "epoch"},     {"epoch", epoch},   {"L_clip", st.clip},
                             {"L_soft", st.soft},   {"L_rel", st.rel},  {"L_total", st.total},
                             {"val_loss", st.val_loss}, {"tau", model_.temperature().item()}}
           << '\n';
    }
    if (st.val_loss < best) {
      best = st.val_loss;
      result.best = snapshot(model_, epoch, best, train.class_ids);
    }
  }
  return result;
}

Matrix similarity_matrix(const NeuroClip& model, const PairedBatch& batch) {
  batch.validate();
  NoGradGuard guard;
  return to_matrix(cosine_sim_matrix(model.embed_eeg(batch.eeg), model.embed_images(batch.images)));
}

RetrievalReport evaluate_zero_shot(const NeuroClip& model, const PairedBatch& test,
                                   std::span<const std::int64_t> train_classes, const std::vector<std::size_t>& ks) {
  for (std::int64_t c : test.class_ids) {
    if (std::find(train_classes.begin(), train_classes.end(), c) != train_classes.end()) {
      throw ContractError("test class " + std::to_string(c) + " also occurs in the training split");
    }
  }
  return retrieval_report(similarity_matrix(model, test), ks);
}

}  // namespace neuroclip
