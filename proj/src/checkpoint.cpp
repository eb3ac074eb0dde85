#include "neuroclip/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "neuroclip/errors.hpp"
#include "neuroclip/serialize.hpp"

namespace neuroclip {

namespace {

using json = nlohmann::ordered_json;

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      const unsigned char b = static_cast<unsigned char>(v >> (8 * i));
      bytes(&b, 1);
    }
  }
};

std::uint64_t hash_where(const std::vector<Parameter>& params, bool frozen_only) {
  Fnv f;
  for (const Parameter& p : params) {
    if (frozen_only && !p.frozen) continue;
    f.bytes(p.name.data(), p.name.size());
    f.u64(p.value.rank());
    for (std::size_t d : p.value.shape()) f.u64(d);
    for (double v : p.value.data()) f.u64(std::bit_cast<std::uint64_t>(v));
  }
  return f.h;
}

}  // namespace

std::uint64_t state_hash(const std::vector<Parameter>& params) { return hash_where(params, false); }
std::uint64_t frozen_hash(const std::vector<Parameter>& params) { return hash_where(params, true); }

Checkpoint snapshot(const NeuroClip& model, std::size_t epoch, double val_loss,
                    std::vector<std::int64_t> train_classes) {
  Checkpoint c;
  c.config = model.config();
  c.dims = model.dims();
  c.epoch = epoch;
  c.val_loss = val_loss;
  std::sort(train_classes.begin(), train_classes.end());
  train_classes.erase(std::unique(train_classes.begin(), train_classes.end()), train_classes.end());
  c.train_classes = std::move(train_classes);
  for (const Parameter& p : model.parameters()) c.parameters.push_back({p.name, p.value.detach(), p.frozen, p.group});
  return c;
}

NeuroClip Checkpoint::restore() const {
  NeuroClip model(config, dims);
  std::map<std::string, Tensor> tensors;
  for (const Parameter& p : parameters) tensors.emplace(p.name, p.value);
  model.load_state(tensors);
  return model;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json j;
  j["format"] = "neuroclip-checkpoint";
  j["version"] = 1;
  j["config"] = json::parse(to_json(ckpt.config));
  j["dims"] = {{"channels", ckpt.dims.channels}, {"samples", ckpt.dims.samples}, {"height", ckpt.dims.height},
               {"width", ckpt.dims.width}};
  j["epoch"] = ckpt.epoch;
  // Hex float text keeps the value bit-exact across the round trip.
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", ckpt.val_loss);
  j["val_loss"] = buf;
  j["train_classes"] = ckpt.train_classes;
  json index = json::array();
  std::vector<Tensor> tensors;
  for (const Parameter& p : ckpt.parameters) {
    index.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"frozen", p.frozen},
                     {"group", std::string(to_string(p.group))}});
    tensors.push_back(p.value);
  }
  j["parameters"] = index;
  j["state_hash"] = state_hash(ckpt.parameters);
  save_tensors(dir / "parameters.bin", tensors);
  std::ofstream os(dir / "checkpoint.json");
  os << j.dump(1) << '\n';
  if (!os) throw std::runtime_error("cannot write " + (dir / "checkpoint.json").string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto path = dir / "checkpoint.json";
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string(), 0);
  std::stringstream text;
  text << is.rdbuf();
  Checkpoint c;
  try {
    const json j = json::parse(text.str());
    if (j.at("format") != "neuroclip-checkpoint") throw FormatError(path.string() + ": not a checkpoint", 0);
    c.config = parse_config(j.at("config").dump());
    const auto& d = j.at("dims");
    c.dims = {d.at("channels").get<std::size_t>(), d.at("samples").get<std::size_t>(),
              d.at("height").get<std::size_t>(), d.at("width").get<std::size_t>()};
    c.epoch = j.at("epoch").get<std::size_t>();
    c.val_loss = std::strtod(j.at("val_loss").get<std::string>().c_str(), nullptr);
    c.train_classes = j.at("train_classes").get<std::vector<std::int64_t>>();
    const auto tensors = load_tensors(dir / "parameters.bin");
    const auto& index = j.at("parameters");
    if (index.size() != tensors.size()) {
      throw FormatError(path.string() + ": index lists " + std::to_string(index.size()) + " tensors, file holds " +
                            std::to_string(tensors.size()),
                        0);
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& e = index[i];
      if (e.at("shape").get<Shape>() != tensors[i].shape()) {
        throw FormatError("parameters.bin: tensor " + std::to_string(i) + " shape differs from the index", 0);
      }
      c.parameters.push_back({e.at("name").get<std::string>(), tensors[i], e.at("frozen").get<bool>(),
                              e.at("group").get<std::string>() == "B" ? Group::B : Group::A});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what(), 0);
  }
  return c;
}

}  // namespace neuroclip
