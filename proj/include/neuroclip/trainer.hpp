#pragma once

#include <memory>
#include <ostream>
#include <span>
#include <vector>

#include "neuroclip/checkpoint.hpp"
#include "neuroclip/metrics.hpp"
#include "neuroclip/model.hpp"
#include "neuroclip/optimizer.hpp"

namespace neuroclip {

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double clip = 0.0, soft = 0.0, rel = 0.0, total = 0.0;  // means over steps
  double val_loss = 0.0;
};

struct FitResult {
  Checkpoint best;
  std::vector<EpochStats> history;  // entry 0 is the initial state
};

class Trainer {
 public:
  Trainer(const RunConfig& config, const Dims& dims);

  NeuroClip& model() { return model_; }
  const NeuroClip& model() const { return model_; }

  // One forward/backward/update. Throws ContractError for B < 2 and
  // NumericError naming the component when a loss term is not finite.
  LossBreakdown train_step(const PairedBatch& batch);

  // Mean total loss over chunks of batch_size, weighted by chunk size.
  double validation_loss(const PairedBatch& val) const;

  // Runs config.trainer.epochs epochs and returns the state with the lowest
  // validation loss, the initial state included. When `log` is set, one JSON
  // line per step and one per epoch are written to it.
  FitResult fit(const PairedBatch& train, const PairedBatch& val, std::ostream* log = nullptr);

 private:
  RunConfig config_;
  NeuroClip model_;
  std::unique_ptr<DualOptimizer> optimizer_;
  std::size_t step_ = 0;
};

// S[i][j] between EEG i and image j, computed without recording gradients.
Matrix similarity_matrix(const NeuroClip& model, const PairedBatch& batch);

// Throws ContractError when any test class occurs in `train_classes`.
RetrievalReport evaluate_zero_shot(const NeuroClip& model, const PairedBatch& test,
                                   std::span<const std::int64_t> train_classes, const std::vector<std::size_t>& ks);

}  // namespace neuroclip
