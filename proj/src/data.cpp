#include "neuroclip/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <random>
#include <sstream>

#include "neuroclip/errors.hpp"
#include "neuroclip/serialize.hpp"

namespace neuroclip {

namespace {

using json = nlohmann::ordered_json;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string sample_id(std::int64_t cls, std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "c%05lld_s%03zu", static_cast<long long>(cls), k);
  return buf;
}

// Leading-axis rows of t listed in idx.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx) {
  Shape shape = t.shape();
  const std::size_t row = t.shape()[0] ? t.size() / t.shape()[0] : 0;
  shape[0] = idx.size();
  std::vector<double> out(idx.size() * row);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= t.shape()[0]) throw DimensionError("take: index " + std::to_string(idx[i]) + " out of range");
    std::copy_n(t.data().begin() + std::ptrdiff_t(idx[i] * row), row, out.begin() + std::ptrdiff_t(i * row));
  }
  return Tensor(std::move(shape), std::move(out));
}

}  // namespace

void PairedBatch::validate() const {
  const std::size_t n = ids.size();
  if (class_ids.size() != n || eeg.rank() != 3 || images.rank() != 4 || eeg.shape()[0] != n ||
      images.shape()[0] != n || images.shape()[1] != 3) {
    throw DimensionError("paired batch disagrees: " + std::to_string(n) + " ids, " +
                         std::to_string(class_ids.size()) + " labels, eeg " + to_string(eeg.shape()) + ", images " +
                         to_string(images.shape()));
  }
}

PairedBatch take(const PairedBatch& b, std::span<const std::size_t> indices) {
  PairedBatch out;
  out.eeg = gather_rows(b.eeg, indices);
  out.images = gather_rows(b.images, indices);
  for (std::size_t i : indices) {
    out.ids.push_back(b.ids[i]);
    out.class_ids.push_back(b.class_ids[i]);
  }
  return out;
}

const PairedBatch& DatasetManifest::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) throw ConfigError("dataset has no split named '" + name + "'");
  return it->second;
}

Tensor render_image(std::span<const double> latent, std::size_t height, std::size_t width) {
  if (latent.size() != kLatentDim) throw DimensionError("render_image: latent must have 16 entries");
  double u[kLatentDim];
  for (std::size_t i = 0; i < kLatentDim; ++i) u[i] = sigmoid(latent[i]);
  const double side = double(std::min(height, width));
  struct Blob {
    double cx, cy, r, rgb[3];
  } blobs[2];
  for (int b = 0; b < 2; ++b) {
    const double* v = u + 6 * b;
    blobs[b] = {double(width) * (0.2 + 0.6 * v[0]), double(height) * (0.2 + 0.6 * v[1]), side * (0.1 + 0.2 * v[2]),
                {v[3], v[4], v[5]}};
  }
  const double angle = std::numbers::pi * u[12];
  const double freq = 1.0 + 3.0 * u[13];
  const double amp = 0.25 * u[14];
  const double bg = 0.15 + 0.3 * u[15];

  Tensor img({3, height, width});
  auto px = img.mutable_data();
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double phase = (double(x) * std::cos(angle) + double(y) * std::sin(angle)) / side;
      double rgb[3];
      for (int c = 0; c < 3; ++c) rgb[c] = bg + amp * std::sin(2.0 * std::numbers::pi * freq * phase);
      for (const Blob& b : blobs) {
        const double dist = std::hypot(double(x) + 0.5 - b.cx, double(y) + 0.5 - b.cy);
        const double m = sigmoid(b.r - dist);
        for (int c = 0; c < 3; ++c) rgb[c] = rgb[c] * (1.0 - m) + b.rgb[c] * m;
      }
      for (std::size_t c = 0; c < 3; ++c) px[(c * height + y) * width + x] = std::clamp(rgb[c], 0.0, 1.0);
    }
  }
  return img;
}

Tensor eeg_mixing_matrix(std::uint64_t seed, const Dims& dims) {
  std::mt19937_64 rng(seed ^ 0x5eedeeULL);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit;
  const std::size_t c_n = dims.channels, t_n = dims.samples;
  const double tscale = double(t_n) / 250.0;
  Tensor m({c_n * t_n, kLatentDim});
  auto out = m.mutable_data();
  for (std::size_t j = 0; j < kLatentDim; ++j) {
    std::vector<double> spatial(c_n);
    for (double& s : spatial) s = gauss(rng);
    const double latency = (50.0 + 150.0 * unit(rng)) * tscale;
    const double width = (8.0 + 22.0 * unit(rng)) * tscale;
    const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < c_n; ++c) {
      for (std::size_t t = 0; t < t_n; ++t) {
        const double z = (double(t) - latency) / std::max(width, 1e-9);
        out[(c * t_n + t) * kLatentDim + j] = sign * spatial[c] * std::exp(-0.5 * z * z);
      }
    }
  }
  // Unit RMS response to a standard normal latent.
  double sq = 0.0;
  for (double v : out) sq += v * v;
  const double s = std::sqrt(double(c_n * t_n) / std::max(sq, 1e-300));
  for (double& v : out) v *= s;
  return m;
}

DatasetManifest generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (cfg.per_class < 1) throw ConfigError("synthetic data needs at least 1 sample per class");
  if (!(cfg.noise >= 0.0)) throw ConfigError("noise must be nonnegative");
  const Dims& d = cfg.dims;
  if (cfg.patch == 0 || d.height % cfg.patch != 0 || d.width % cfg.patch != 0) {
    throw ConfigError("image size " + std::to_string(d.height) + "x" + std::to_string(d.width) +
                      " is not divisible by patch size " + std::to_string(cfg.patch));
  }
  if (d.channels == 0 || d.samples == 0) throw ConfigError("EEG dims must be positive");

  // Latents and noise use separate streams, so datasets that differ only in
  // noise level share their class codes.
  std::mt19937_64 latent_rng(cfg.seed), noise_rng(cfg.seed ^ 0x6e6f697365ULL);
  std::normal_distribution<double> gauss;
  const Tensor mix = eeg_mixing_matrix(cfg.seed, d);
  const std::size_t ct = d.channels * d.samples, hw3 = 3 * d.height * d.width;
  const std::size_t n = cfg.classes * cfg.per_class;

  std::vector<double> eeg(n * ct), images(n * hw3);
  PairedBatch all;
  std::vector<double> latent(kLatentDim), clean_eeg(ct);
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    for (double& z : latent) z = gauss(latent_rng);
    const Tensor clean = render_image(latent, d.height, d.width);
    for (std::size_t r = 0; r < ct; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < kLatentDim; ++j) s += mix.data()[r * kLatentDim + j] * latent[j];
      clean_eeg[r] = s;
    }
    for (std::size_t s = 0; s < cfg.per_class; ++s) {
      const std::size_t i = k * cfg.per_class + s;
      for (std::size_t r = 0; r < ct; ++r) eeg[i * ct + r] = clean_eeg[r] + cfg.noise * gauss(noise_rng);
      for (std::size_t p = 0; p < hw3; ++p) {
        const double v = clean.data()[p];
        images[i * hw3 + p] = cfg.noise > 0.0 ? std::clamp(v + cfg.noise * gauss(noise_rng), 0.0, 1.0) : v;
      }
      all.ids.push_back(sample_id(std::int64_t(k), s));
      all.class_ids.push_back(std::int64_t(k));
    }
  }
  all.eeg = Tensor({n, d.channels, d.samples}, std::move(eeg));
  all.images = Tensor({n, 3, d.height, d.width}, std::move(images));

  DatasetManifest m;
  m.dims = d;
  m.classes = cfg.classes;
  m.seed = cfg.seed;
  m.splits["all"] = std::move(all);
  return m;
}

SplitIndices zero_shot_split(std::span<const std::int64_t> class_ids, std::size_t n_test_classes,
                             std::size_t n_val_samples, std::uint64_t seed) {
  std::vector<std::int64_t> classes(class_ids.begin(), class_ids.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (n_test_classes >= classes.size()) {
    throw ConfigError("cannot hold out " + std::to_string(n_test_classes) + " of " + std::to_string(classes.size()) +
                      " classes");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(classes.begin(), classes.end(), rng);
  std::vector<std::int64_t> held(classes.begin(), classes.begin() + std::ptrdiff_t(n_test_classes));
  std::sort(held.begin(), held.end());

  SplitIndices out;
  out.test_classes = held;
  std::map<std::int64_t, std::vector<std::size_t>> held_members;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    if (std::binary_search(held.begin(), held.end(), class_ids[i])) {
      held_members[class_ids[i]].push_back(i);
    } else {
      pool.push_back(i);
    }
  }
  for (auto& [cls, members] : held_members) {
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    out.test.push_back(members[pick(rng)]);
  }
  if (n_val_samples >= pool.size()) {
    throw ConfigError("insufficient samples: " + std::to_string(pool.size()) + " training-class samples cannot supply " +
                      std::to_string(n_val_samples) + " validation samples and a nonempty training set");
  }
  std::vector<std::size_t> shuffled = pool;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  out.val.assign(shuffled.begin(), shuffled.begin() + std::ptrdiff_t(n_val_samples));
  out.train.assign(shuffled.begin() + std::ptrdiff_t(n_val_samples), shuffled.end());
  std::sort(out.test.begin(), out.test.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

DatasetManifest zero_shot_split(const DatasetManifest& manifest, std::size_t n_test_classes, std::size_t n_val_samples,
                                std::uint64_t seed) {
  const PairedBatch* all = nullptr;
  if (auto it = manifest.splits.find("all"); it != manifest.splits.end()) {
    all = &it->second;
  } else if (manifest.splits.size() == 1) {
    all = &manifest.splits.begin()->second;
  } else {
    throw ConfigError("zero_shot_split needs an 'all' split");
  }
  const SplitIndices idx = zero_shot_split(all->class_ids, n_test_classes, n_val_samples, seed);
  DatasetManifest out;
  out.dims = manifest.dims;
  out.classes = manifest.classes;
  out.seed = manifest.seed;
  out.splits["train"] = take(*all, idx.train);
  out.splits["val"] = take(*all, idx.val);
  out.splits["test"] = take(*all, idx.test);
  return out;
}

void save_dataset(const DatasetManifest& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json j;
  j["format"] = "neuroclip-dataset";
  j["version"] = 1;
  j["dims"] = {{"channels", m.dims.channels}, {"samples", m.dims.samples}, {"height", m.dims.height},
               {"width", m.dims.width}};
  j["classes"] = m.classes;
  j["seed"] = m.seed ? json(*m.seed) : json(nullptr);
  json splits = json::object();
  for (const auto& [name, b] : m.splits) {
    b.validate();
    const std::string eeg_file = name + "_eeg.bin", img_file = name + "_images.bin";
    save_tensors(dir / eeg_file, {b.eeg});
    save_tensors(dir / img_file, {b.images});
    splits[name] = {{"eeg", eeg_file}, {"images", img_file}, {"repetitions", 1}, {"ids", b.ids},
                    {"class_ids", b.class_ids}};
  }
  j["splits"] = splits;
  std::ofstream os(dir / "manifest.json");
  os << j.dump(1) << '\n';
  if (!os) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
}

namespace {

Tensor load_single(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string(), 0);
  std::uint64_t offset = 0;
  Tensor t = read_tensor(is, offset);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes", offset);
  return t;
}

// Header occupies 4 * (1 + rank) bytes; the payload begins right after.
std::uint64_t payload_offset(const Tensor& t) { return 4 * (1 + t.rank()); }

Tensor average_repetitions(const Tensor& t, std::size_t reps) {
  const std::size_t n = t.shape()[0], row = t.shape()[2] * t.shape()[3];
  std::vector<double> out(n * row, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < reps; ++r) {
      const double* src = t.data().data() + (i * reps + r) * row;
      for (std::size_t k = 0; k < row; ++k) out[i * row + k] += src[k];
    }
    for (std::size_t k = 0; k < row; ++k) out[i * row + k] /= double(reps);
  }
  return Tensor({n, t.shape()[2], t.shape()[3]}, std::move(out));
}

}  // namespace

DatasetManifest load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream is(manifest_path);
  if (!is) throw FormatError("cannot open " + manifest_path.string(), 0);
  std::stringstream text;
  text << is.rdbuf();
  json j;
  try {
    j = json::parse(text.str());
  } catch (const json::parse_error& e) {
    throw FormatError(manifest_path.string() + ": " + e.what(), e.byte);
  }
  DatasetManifest m;
  try {
    if (j.at("format") != "neuroclip-dataset") throw FormatError("not a neuroclip dataset manifest", 0);
    const auto& d = j.at("dims");
    m.dims = {d.at("channels").get<std::size_t>(), d.at("samples").get<std::size_t>(),
              d.at("height").get<std::size_t>(), d.at("width").get<std::size_t>()};
    m.classes = j.at("classes").get<std::size_t>();
    if (j.contains("seed") && !j["seed"].is_null()) m.seed = j["seed"].get<std::uint64_t>();
    for (const auto& [name, s] : j.at("splits").items()) {
      PairedBatch b;
      b.ids = s.at("ids").get<std::vector<std::string>>();
      b.class_ids = s.at("class_ids").get<std::vector<std::int64_t>>();
      const std::size_t reps = s.value("repetitions", std::size_t{1});
      const std::size_t n = b.ids.size();
      const auto eeg_path = dir / s.at("eeg").get<std::string>();
      const auto img_path = dir / s.at("images").get<std::string>();
      Tensor eeg = load_single(eeg_path);
      const Shape want_eeg =
          reps > 1 ? Shape{n, reps, m.dims.channels, m.dims.samples} : Shape{n, m.dims.channels, m.dims.samples};
      if (eeg.shape() != want_eeg) {
        throw FormatError(eeg_path.string() + ": shape " + to_string(eeg.shape()) + " does not match manifest " +
                              to_string(want_eeg),
                          0);
      }
      b.eeg = reps > 1 ? average_repetitions(eeg, reps) : eeg;
      b.images = load_single(img_path);
      const Shape want_img{n, 3, m.dims.height, m.dims.width};
      if (b.images.shape() != want_img) {
        throw FormatError(img_path.string() + ": shape " + to_string(b.images.shape()) + " does not match manifest " +
                              to_string(want_img),
                          0);
      }
      for (std::size_t p = 0; p < b.images.size(); ++p) {
        const double v = b.images.data()[p];
        if (!(v >= 0.0 && v <= 1.0)) {
          throw FormatError(img_path.string() + ": pixel outside [0, 1]", payload_offset(b.images) + 8 * p);
        }
      }
      if (b.class_ids.size() != n) throw FormatError(manifest_path.string() + ": split '" + name + "' label count", 0);
      m.splits[name] = std::move(b);
    }
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what(), 0);
  }
  return m;
}

Tensor select_eeg(const Tensor& eeg, const std::vector<std::size_t>& channels, std::size_t t_begin,
                  std::size_t t_end) {
  if (eeg.rank() != 3) throw DimensionError("select_eeg: expected [B, C, T], got " + to_string(eeg.shape()));
  const std::size_t b_n = eeg.shape()[0], c_n = eeg.shape()[1], t_n = eeg.shape()[2];
  if (t_end == 0) t_end = t_n;
  if (t_begin >= t_end || t_end > t_n) {
    throw ConfigError("data.time_window [" + std::to_string(t_begin) + ", " + std::to_string(t_end) +
                      ") does not fit T=" + std::to_string(t_n));
  }
  std::vector<std::size_t> keep = channels;
  if (keep.empty()) {
    for (std::size_t c = 0; c < c_n; ++c) keep.push_back(c);
  }
  for (std::size_t c : keep) {
    if (c >= c_n) throw ConfigError("data.channel_mask: channel " + std::to_string(c) + " >= C=" + std::to_string(c_n));
  }
  const std::size_t w = t_end - t_begin;
  std::vector<double> out;
  out.reserve(b_n * keep.size() * w);
  for (std::size_t b = 0; b < b_n; ++b) {
    for (std::size_t c : keep) {
      const double* src = eeg.data().data() + (b * c_n + c) * t_n + t_begin;
      out.insert(out.end(), src, src + w);
    }
  }
  return Tensor({b_n, keep.size(), w}, std::move(out));
}

}  // namespace neuroclip
