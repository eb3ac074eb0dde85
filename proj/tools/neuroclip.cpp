// neuroclip: data generation, training, evaluation and gradient checks.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "neuroclip/checkpoint.hpp"
#include "neuroclip/config.hpp"
#include "neuroclip/data.hpp"
#include "neuroclip/errors.hpp"
#include "neuroclip/gradcheck_suite.hpp"
#include "neuroclip/trainer.hpp"

namespace fs = std::filesystem;
using namespace neuroclip;

namespace {

// Deletes a path on scope exit unless released; used so that failed commands
// leave nothing half-written behind.
class OutputGuard {
 public:
  explicit OutputGuard(fs::path p) : path_(std::move(p)) {}
  ~OutputGuard() {
    if (!path_.empty()) {
      std::error_code ec;
      fs::remove_all(path_, ec);
    }
  }
  void release() { path_.clear(); }

 private:
  fs::path path_;
};

void claim_output(const fs::path& out, bool force) {
  if (fs::exists(out)) {
    if (!force) throw ConfigError(out.string() + " already exists (use --force to overwrite)");
    fs::remove_all(out);
  }
}

// `--section.key value` and `--section.key=value` pairs left over by CLI11.
std::vector<std::pair<std::string, std::string>> dotted_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.find('.') == std::string::npos) {
      throw ConfigError("unrecognised argument '" + a + "'");
    }
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("override " + a + " has no value");
      out.emplace_back(a.substr(2), extras[++i]);
    }
  }
  return out;
}

RunConfig resolve_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig base;
  std::string file = path;
  if (file.empty()) {
    if (const char* env = std::getenv(kConfigEnvVar)) file = env;
  }
  if (!file.empty()) base = load_config(file);
  return apply_overrides(base, overrides);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
  if (!text.empty() && text.back() != '\n') os << '\n';
  if (!os) throw std::runtime_error("cannot write " + p.string());
}

std::vector<std::size_t> resolve_ks(const std::vector<std::size_t>& ks, std::size_t n) {
  std::vector<std::size_t> out;
  for (std::size_t k : ks) {
    if (k <= n) out.push_back(k);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

struct GenDataArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t classes = 50, per_class = 20, channels = 17, samples = 250, size = 32, patch = 8;
  std::size_t held_out = 10, val = 40;
  double noise = 0.1;
  bool force = false;
};

int cmd_gen_data(const GenDataArgs& a) {
  const fs::path out(a.out);
  claim_output(out, a.force);
  OutputGuard guard(out);
  SyntheticConfig sc;
  sc.seed = a.seed;
  sc.classes = a.classes;
  sc.per_class = a.per_class;
  sc.dims = {a.channels, a.samples, a.size, a.size};
  sc.noise = a.noise;
  sc.patch = a.patch;
  const DatasetManifest split = zero_shot_split(generate_synthetic(sc), a.held_out, a.val, a.seed);
  save_dataset(split, out);
  guard.release();
  std::cout << "wrote " << out.string() << ": train " << split.split("train").size() << ", val "
            << split.split("val").size() << ", test " << split.split("test").size() << " pairs\n";
  return 0;
}

struct TrainArgs {
  std::string config, data, out;
  long long epochs = -1;
  std::size_t repeats = 0;
  bool force = false;
  std::vector<std::pair<std::string, std::string>> overrides;
};

int cmd_train(const TrainArgs& a) {
  auto overrides = a.overrides;
  if (a.epochs >= 0) overrides.emplace_back("trainer.epochs", std::to_string(a.epochs));
  if (a.repeats > 0) overrides.emplace_back("trainer.repeats", std::to_string(a.repeats));
  const RunConfig config = resolve_config(a.config, overrides);
  const DatasetManifest data = load_dataset(a.data);
  const PairedBatch& train = data.split("train");
  const PairedBatch& val = data.split("val");

  const fs::path out(a.out);
  claim_output(out, a.force);
  OutputGuard guard(out);
  fs::create_directories(out);
  write_text(out / "config.json", to_json(config));

  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < config.trainer.repeats; ++r) {
    RunConfig rc = config;
    rc.trainer.seed = config.trainer.seed + r;
    const fs::path run = config.trainer.repeats == 1 ? out : out / ("repeat_" + std::to_string(r));
    fs::create_directories(run);
    std::ofstream log(run / "train_log.jsonl");
    Trainer trainer(rc, data.dims);
    const FitResult fit = trainer.fit(train, val, &log);
    save_checkpoint(fit.best, run / "checkpoint");
    nlohmann::ordered_json entry{{"seed", rc.trainer.seed},
                                 {"best_epoch", fit.best.epoch},
                                 {"val_loss", fit.best.val_loss},
                                 {"state_hash", state_hash(fit.best.parameters)}};
    if (auto it = data.splits.find("test"); it != data.splits.end() && it->second.size() >= 2) {
      const NeuroClip best = fit.best.restore();
      const auto report = evaluate_zero_shot(best, it->second, fit.best.train_classes,
                                             resolve_ks(rc.eval.ks, it->second.size()));
      entry["test"] = nlohmann::ordered_json::parse(report.to_json());
      entry["test"].erase("ranks");
    }
    std::cout << entry.dump() << '\n';
    summary.push_back(entry);
  }
  write_text(out / "summary.json", summary.dump(2));
  guard.release();
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, split = "test", out, report;
  std::vector<std::size_t> ks;
  bool force = false;
};

NeuroClip restore_for(const Checkpoint& ckpt, const DatasetManifest& data) {
  if (!(ckpt.dims == data.dims)) {
    throw ConfigError("checkpoint was trained on dims " + std::to_string(ckpt.dims.channels) + "x" +
                      std::to_string(ckpt.dims.samples) + " / " + std::to_string(ckpt.dims.height) +
                      "px, dataset has " + std::to_string(data.dims.channels) + "x" +
                      std::to_string(data.dims.samples) + " / " + std::to_string(data.dims.height) + "px");
  }
  return ckpt.restore();
}

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const DatasetManifest data = load_dataset(a.data);
  const NeuroClip model = restore_for(ckpt, data);
  const PairedBatch& test = data.split(a.split);
  const auto ks = a.ks.empty() ? resolve_ks(ckpt.config.eval.ks, test.size()) : a.ks;
  const RetrievalReport report = evaluate_zero_shot(model, test, ckpt.train_classes, ks);
  const std::string json = report.to_json();
  if (a.out.empty()) {
    std::cout << json << '\n';
  } else {
    claim_output(a.out, a.force);
    write_text(a.out, json);
  }
  return 0;
}

int cmd_export_sim(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const DatasetManifest data = load_dataset(a.data);
  const NeuroClip model = restore_for(ckpt, data);
  const PairedBatch& test = data.split(a.split);
  for (std::int64_t c : test.class_ids) {
    if (std::binary_search(ckpt.train_classes.begin(), ckpt.train_classes.end(), c)) {
      throw ContractError("test class " + std::to_string(c) + " also occurs in the training split");
    }
  }
  const Matrix s = similarity_matrix(model, test);
  const fs::path csv(a.out);
  claim_output(csv, a.force);
  OutputGuard guard(csv);
  {
    std::ofstream os(csv);
    write_similarity_csv(os, s);
    if (!os) throw std::runtime_error("cannot write " + csv.string());
  }
  RetrievalReport report = retrieval_report(s, a.ks.empty() ? resolve_ks(ckpt.config.eval.ks, test.size()) : a.ks);
  report.similarity_path = csv.string();
  const fs::path report_path = a.report.empty() ? fs::path(csv).replace_extension(".json") : fs::path(a.report);
  claim_output(report_path, a.force);
  OutputGuard report_guard(report_path);
  write_text(report_path, report.to_json());
  report_guard.release();
  guard.release();
  std::cout << "wrote " << csv.string() << " and " << report_path.string() << '\n';
  return 0;
}

struct GradArgs {
  std::vector<std::string> components;
  bool all = false;
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  double tolerance = 1e-4;
};

int cmd_gradcheck(const GradArgs& a) {
  std::vector<std::string> names = a.components;
  if (a.all) names.insert(names.end(), gradcheck_components().begin(), gradcheck_components().end());
  if (names.empty()) throw ConfigError("gradcheck: name a component or pass --all");
  bool ok = true;
  for (const std::string& name : names) {
    for (std::size_t s = 0; s < a.seeds; ++s) {
      GradCheckOptions o;
      o.tolerance = a.tolerance;
      const GradCheckReport r = run_gradcheck(name, a.seed + s, o);
      std::cout << format_report(r);
      std::cout << (r.passed ? "PASS " : "FAIL ") << name << " seed " << (a.seed + s) << " max_rel " << r.max_rel_error
                << '\n';
      ok = ok && r.passed;
    }
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG-image contrastive alignment with dynamic visual prompting"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic paired dataset with a zero-shot split");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed);
  g->add_option("--classes", gen.classes);
  g->add_option("--per-class", gen.per_class);
  g->add_option("--channels", gen.channels);
  g->add_option("--samples", gen.samples);
  g->add_option("--size", gen.size, "Image height and width");
  g->add_option("--patch", gen.patch, "Backbone patch size the images must fit");
  g->add_option("--noise", gen.noise);
  g->add_option("--held-out", gen.held_out, "Zero-shot test classes");
  g->add_option("--val", gen.val, "Validation samples drawn from the training classes");
  g->add_flag("--force", gen.force);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Fit a model and keep the lowest-validation-loss checkpoint");
  t->allow_extras();
  t->add_option("--config", tr.config, std::string("JSON config (default: $") + kConfigEnvVar + ")");
  t->add_option("--data", tr.data)->required();
  t->add_option("--out", tr.out)->required();
  t->add_option("--epochs", tr.epochs);
  t->add_option("--repeats", tr.repeats);
  t->add_flag("--force", tr.force);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Zero-shot retrieval report for a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--data", ev.data)->required();
  e->add_option("--split", ev.split);
  e->add_option("--ks", ev.ks)->delimiter(',');
  e->add_option("--out", ev.out, "Write the JSON report here instead of stdout");
  e->add_flag("--force", ev.force);

  EvalArgs ex;
  auto* x = app.add_subcommand("export-sim", "Write the similarity matrix as CSV plus a JSON report");
  x->add_option("--checkpoint", ex.checkpoint)->required();
  x->add_option("--data", ex.data)->required();
  x->add_option("--split", ex.split);
  x->add_option("--out", ex.out, "CSV path")->required();
  x->add_option("--report", ex.report, "JSON report path (default: CSV path with .json)");
  x->add_option("--ks", ex.ks)->delimiter(',');
  x->add_flag("--force", ex.force);

  GradArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  c->add_option("components", gc.components, "perturbation, encoder, filter_generator, dynamic_filter, fusion, ...");
  c->add_flag("--all", gc.all);
  c->add_option("--seed", gc.seed);
  c->add_option("--seeds", gc.seeds, "Number of consecutive seeds");
  c->add_option("--tolerance", gc.tolerance);

  CLI11_PARSE(app, argc, argv);

  try {
    if (g->parsed()) return cmd_gen_data(gen);
    if (t->parsed()) {
      tr.overrides = dotted_overrides(t->remaining());
      return cmd_train(tr);
    }
    if (e->parsed()) return cmd_eval(ev);
    if (x->parsed()) return cmd_export_sim(ex);
    if (c->parsed()) return cmd_gradcheck(gc);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 1;
}
