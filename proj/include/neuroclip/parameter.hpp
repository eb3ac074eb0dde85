#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "neuroclip/tensor.hpp"

namespace neuroclip {

// Optimizer partition. A: EEG perturbation, EEG encoder, image projection,
// temperature. B: filter generator, fusion, shared prompts.
enum class Group { A, B };

inline std::string_view to_string(Group g) { return g == Group::A ? "A" : "B"; }

struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;
  Group group = Group::A;
};

// Leaf tensor that records gradients.
inline Tensor trainable(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

}  // namespace neuroclip
