#include "neuroclip/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "neuroclip/eeg_encoder.hpp"
#include "neuroclip/errors.hpp"

namespace neuroclip {

namespace {

using json = nlohmann::ordered_json;

json tree(const RunConfig& c) {
  json j;
  j["data"] = {{"channel_mask", c.data.channel_mask}, {"time_window", {c.data.time_begin, c.data.time_end}}};
  j["encoder"] = {{"name", c.encoder.name}, {"embed_dim", c.encoder.embed_dim}};
  j["filter"] = {{"kernel_h", c.filter.kernel_h}, {"kernel_w", c.filter.kernel_w}, {"stem1", c.filter.stem1},
                 {"stem2", c.filter.stem2},       {"hidden", c.filter.hidden}};
  j["fusion"] = {{"strategy", to_string(c.fusion.strategy)},
                 {"heads", c.fusion.heads},
                 {"gate_bias_init", c.fusion.gate_bias_init},
                 {"bilinear_init", c.fusion.bilinear_init}};
  j["backbone"] = {{"width", c.backbone.width},         {"depth", c.backbone.depth},
                   {"heads", c.backbone.heads},         {"mlp_ratio", c.backbone.mlp_ratio},
                   {"patch", c.backbone.patch},         {"prompts", c.backbone.prompts},
                   {"projection_depth", c.projection_depth}};
  j["loss"] = {{"mu", c.loss.mu},       {"alpha", c.loss.alpha},       {"lambda", c.loss.lambda},
               {"beta", c.loss.beta},   {"tau_init", c.tau_init},      {"detach_targets", c.loss.detach_targets}};
  j["trainer"] = {{"epochs", c.trainer.epochs}, {"batch_size", c.trainer.batch_size}, {"lr_a", c.trainer.lr_a},
                  {"lr_b", c.trainer.lr_b},     {"seed", c.trainer.seed},             {"grad_clip", c.trainer.grad_clip},
                  {"repeats", c.trainer.repeats}};
  j["eval"] = {{"ks", c.eval.ks}};
  return j;
}

// Walks `in` against the default tree, rejecting keys the defaults lack.
void check_keys(const json& in, const json& defaults, const std::string& path) {
  if (!in.is_object()) throw ConfigError(path.empty() ? "config root must be an object" : path + ": expected an object");
  for (const auto& [key, value] : in.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + here + "'");
    if (defaults[key].is_object()) check_keys(value, defaults[key], here);
  }
}

template <typename T>
void read(const json& j, const char* section, const char* key, T& out) {
  if (!j.contains(section) || !j[section].contains(key)) return;
  try {
    out = j[section][key].get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(section) + "." + key + ": wrong value type (" + j[section][key].dump() + ")");
  }
}

RunConfig from_tree(const json& j) {
  check_keys(j, tree(RunConfig{}), "");
  RunConfig c;
  read(j, "data", "channel_mask", c.data.channel_mask);
  std::vector<std::size_t> window{c.data.time_begin, c.data.time_end};
  read(j, "data", "time_window", window);
  if (window.size() != 2) throw ConfigError("data.time_window: expected [begin, end]");
  c.data.time_begin = window[0];
  c.data.time_end = window[1];
  read(j, "encoder", "name", c.encoder.name);
  read(j, "encoder", "embed_dim", c.encoder.embed_dim);
  read(j, "filter", "kernel_h", c.filter.kernel_h);
  read(j, "filter", "kernel_w", c.filter.kernel_w);
  read(j, "filter", "stem1", c.filter.stem1);
  read(j, "filter", "stem2", c.filter.stem2);
  read(j, "filter", "hidden", c.filter.hidden);
  std::string strategy = to_string(c.fusion.strategy);
  read(j, "fusion", "strategy", strategy);
  c.fusion.strategy = parse_fusion_strategy(strategy);
  read(j, "fusion", "heads", c.fusion.heads);
  read(j, "fusion", "gate_bias_init", c.fusion.gate_bias_init);
  read(j, "fusion", "bilinear_init", c.fusion.bilinear_init);
  read(j, "backbone", "width", c.backbone.width);
  read(j, "backbone", "depth", c.backbone.depth);
  read(j, "backbone", "heads", c.backbone.heads);
  read(j, "backbone", "mlp_ratio", c.backbone.mlp_ratio);
  read(j, "backbone", "patch", c.backbone.patch);
  read(j, "backbone", "prompts", c.backbone.prompts);
  read(j, "backbone", "projection_depth", c.projection_depth);
  read(j, "loss", "mu", c.loss.mu);
  read(j, "loss", "alpha", c.loss.alpha);
  read(j, "loss", "lambda", c.loss.lambda);
  read(j, "loss", "beta", c.loss.beta);
  read(j, "loss", "tau_init", c.tau_init);
  read(j, "loss", "detach_targets", c.loss.detach_targets);
  read(j, "trainer", "epochs", c.trainer.epochs);
  read(j, "trainer", "batch_size", c.trainer.batch_size);
  read(j, "trainer", "lr_a", c.trainer.lr_a);
  read(j, "trainer", "lr_b", c.trainer.lr_b);
  read(j, "trainer", "seed", c.trainer.seed);
  read(j, "trainer", "grad_clip", c.trainer.grad_clip);
  read(j, "trainer", "repeats", c.trainer.repeats);
  read(j, "eval", "ks", c.eval.ks);
  c.validate();
  return c;
}

}  // namespace

void RunConfig::validate() const {
  check_encoder_name(encoder.name);
  if (encoder.embed_dim == 0) throw ConfigError("encoder.embed_dim must be positive");
  if (filter.kernel_h % 2 == 0 || filter.kernel_w % 2 == 0) throw ConfigError("filter kernel sizes must be odd");
  if (filter.stem1 == 0 || filter.stem2 == 0 || filter.hidden == 0) throw ConfigError("filter widths must be positive");
  if (fusion.heads == 0 || backbone.width % fusion.heads != 0) {
    throw ConfigError("fusion.heads must divide backbone.width");
  }
  if (!(fusion.bilinear_init > 0.0 && fusion.bilinear_init < 1.0)) {
    throw ConfigError("fusion.bilinear_init must lie in (0, 1)");
  }
  if (backbone.width == 0 || backbone.heads == 0 || backbone.width % backbone.heads != 0) {
    throw ConfigError("backbone.heads must divide backbone.width");
  }
  if (backbone.patch == 0) throw ConfigError("backbone.patch must be positive");
  if (projection_depth == 0) throw ConfigError("backbone.projection_depth must be at least 1");
  try {
    loss.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (!(tau_init > 0.0)) throw ConfigError("loss.tau_init must be positive");
  if (trainer.batch_size < 2) throw ConfigError("trainer.batch_size must be at least 2");
  if (!(trainer.lr_a >= 0.0) || !(trainer.lr_b >= 0.0)) throw ConfigError("learning rates must be nonnegative");
  if (!(trainer.grad_clip >= 0.0)) throw ConfigError("trainer.grad_clip must be nonnegative");
  if (trainer.repeats == 0) throw ConfigError("trainer.repeats must be at least 1");
  if (eval.ks.empty()) throw ConfigError("eval.ks must not be empty");
  if (data.time_end != 0 && data.time_begin >= data.time_end) throw ConfigError("data.time_window is empty");
  std::set<std::size_t> seen;
  for (std::size_t c : data.channel_mask) {
    if (!seen.insert(c).second) throw ConfigError("data.channel_mask lists channel " + std::to_string(c) + " twice");
  }
}

std::string to_json(const RunConfig& c) { return tree(c).dump(2); }

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_tree(j);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

RunConfig apply_overrides(const RunConfig& base, const std::vector<std::pair<std::string, std::string>>& overrides) {
  json j = tree(base);
  for (const auto& [key, text] : overrides) {
    const auto dot = key.find('.');
    if (dot == std::string::npos || key.find('.', dot + 1) != std::string::npos) {
      throw ConfigError("override '" + key + "' must have the form section.key");
    }
    const std::string section = key.substr(0, dot), name = key.substr(dot + 1);
    if (!j.contains(section) || !j[section].contains(name)) throw ConfigError("unknown config key '" + key + "'");
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    j[section][name] = value;
  }
  return from_tree(j);
}

}  // namespace neuroclip
