#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neuroclip/tensor.hpp"

namespace neuroclip {

struct Dims {
  std::size_t channels = 17;
  std::size_t samples = 250;
  std::size_t height = 32;
  std::size_t width = 32;

  bool operator==(const Dims&) const = default;
};

// Position i of eeg, images, ids and class_ids is one stimulus pair.
struct PairedBatch {
  Tensor eeg;     // [B, C, T]
  Tensor images;  // [B, 3, H, W], values in [0, 1]
  std::vector<std::string> ids;
  std::vector<std::int64_t> class_ids;

  std::size_t size() const { return ids.size(); }
  // Throws DimensionError when the four fields disagree on B.
  void validate() const;
};

// Rows of `b` at `indices`, in that order.
PairedBatch take(const PairedBatch& b, std::span<const std::size_t> indices);

struct DatasetManifest {
  Dims dims;
  std::size_t classes = 0;
  std::optional<std::uint64_t> seed;
  std::map<std::string, PairedBatch> splits;

  const PairedBatch& split(const std::string& name) const;
};

struct SyntheticConfig {
  std::uint64_t seed = 0;
  std::size_t classes = 50;
  std::size_t per_class = 20;
  Dims dims;
  double noise = 0.1;
  // Backbone patch size; H and W must be multiples of it.
  std::size_t patch = 8;
};

// Latent dimension of the class codes.
inline constexpr std::size_t kLatentDim = 16;

// One split named "all" holding classes * per_class pairs, class-major.
DatasetManifest generate_synthetic(const SyntheticConfig& config);

// Noise-free renderings, exposed for tests.
Tensor render_image(std::span<const double> latent, std::size_t height, std::size_t width);  // [3, H, W]
Tensor eeg_mixing_matrix(std::uint64_t seed, const Dims& dims);                             // [C*T, kLatentDim]

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
  std::vector<std::int64_t> test_classes;
};

// Index-level split over per-sample class labels. Held-out classes each give
// exactly one test sample; validation samples are drawn uniformly from the
// samples of the remaining classes; everything else is training data. Every
// index list is sorted ascending.
SplitIndices zero_shot_split(std::span<const std::int64_t> class_ids, std::size_t n_test_classes,
                             std::size_t n_val_samples, std::uint64_t seed);

// Applies the index split to the manifest's "all" split (or its only split).
DatasetManifest zero_shot_split(const DatasetManifest& manifest, std::size_t n_test_classes, std::size_t n_val_samples,
                                std::uint64_t seed);

// Directory layout: manifest.json plus <split>_eeg.bin and <split>_images.bin.
void save_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir);
// A split may declare `repetitions` R > 1, in which case its EEG file is
// [n, R, C, T] and repetitions are averaged on load.
DatasetManifest load_dataset(const std::filesystem::path& dir);

// Channel subset and [t_begin, t_end) window of a [B, C, T] tensor. An empty
// channel list keeps all channels; t_end = 0 means T.
Tensor select_eeg(const Tensor& eeg, const std::vector<std::size_t>& channels, std::size_t t_begin,
                  std::size_t t_end);

}  // namespace neuroclip
