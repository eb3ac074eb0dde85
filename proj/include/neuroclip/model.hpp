#pragma once

#include <map>
#include <string>
#include <vector>

#include "neuroclip/backbone.hpp"
#include "neuroclip/config.hpp"
#include "neuroclip/data.hpp"
#include "neuroclip/dynamic_filter.hpp"
#include "neuroclip/eeg_encoder.hpp"
#include "neuroclip/fusion.hpp"
#include "neuroclip/loss.hpp"
#include "neuroclip/parameter.hpp"

namespace neuroclip {

// Intermediate values of the image branch.
struct ImageTrace {
  Tensor filters;   // [B, 3*kh*kw]
  Tensor filtered;  // [B, 3, H, W]
  Tensor x_orig;    // [B, N, w] (catf only)
  Tensor x_filt;    // [B, N, w] (catf only)
  Tensor gate;      // [B, N, 1] (catf only)
  Tensor fused;     // [B, N, w]
  Tensor sequence;  // [B, 1 + prompts + N, w]
  Tensor cls;       // [B, w]
  Tensor embedding; // [B, d]
};

class NeuroClip {
 public:
  // `dims` describes the raw dataset; channel mask and time window from the
  // config are applied inside embed_eeg.
  NeuroClip(const RunConfig& config, const Dims& dims);

  const RunConfig& config() const { return config_; }
  const Dims& dims() const { return dims_; }

  // [B, C, T] raw EEG -> [B, d] unit rows.
  Tensor embed_eeg(const Tensor& eeg) const;
  // [B, 3, H, W] -> [B, d] unit rows.
  Tensor embed_images(const Tensor& images) const;
  ImageTrace trace_images(const Tensor& images) const;

  // exp(log_tau)
  Tensor temperature() const;

  LossBreakdown loss(const PairedBatch& batch) const;

  // Every tensor with its name, frozen flag and group. Only the active fusion
  // strategy's parameters are listed.
  std::vector<Parameter> parameters() const;
  std::vector<Parameter> trainable_parameters() const;

  // Copies values by name. Throws ConfigError on a missing name or shape mismatch.
  void load_state(const std::map<std::string, Tensor>& tensors);

  PerturbationParams perturbation;
  LightProjectorParams projector;
  FilterGeneratorParams filter;
  CatfParams catf;
  BilinearParams bilinear;
  BackboneParams backbone;
  PromptSet prompts;
  ProjectionParams projection;
  Tensor log_tau;  // [1]

 private:
  RunConfig config_;
  Dims dims_;
};

}  // namespace neuroclip
