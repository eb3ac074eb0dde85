#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("neuroclip_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "tiny.json") << R"({
      "encoder": {"embed_dim": 16},
      "filter": {"kernel_h": 3, "kernel_w": 3, "stem1": 4, "stem2": 4, "hidden": 8},
      "backbone": {"width": 16, "depth": 1, "heads": 2, "prompts": 2},
      "trainer": {"batch_size": 8}
    })";
  }
  void TearDown() override { fs::remove_all(dir); }

  Result run(const std::string& args) const { return shell("'" NEUROCLIP_CLI "' " + args); }

  Result shell(const std::string& line) const {
    const std::string cmd = "cd '" + dir.string() + "' && " + line + " 2>&1";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

  Result gen(const std::string& out, const std::string& extra = "") const {
    return run("gen-data --out " + out + " --classes 14 --per-class 3 --channels 4 --samples 16 --size 16 --val 4 " + extra);
  }

  std::string slurp(const fs::path& p) const {
    std::ifstream in(dir / p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }
};

}  // namespace

TEST_F(Cli, GenDataWritesTenHeldOutPairs) {
  const Result r = gen("d");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto m = nlohmann::json::parse(slurp("d/manifest.json"));
  EXPECT_EQ(m.at("splits").at("test").at("ids").size(), 10u);
  EXPECT_EQ(m.at("splits").at("val").at("ids").size(), 4u);
  EXPECT_EQ(m.at("splits").at("train").at("ids").size(), 8u);
  EXPECT_EQ(m.at("dims").at("channels"), 4);
}

TEST_F(Cli, GenDataIsDeterministicAndRefusesToOverwrite) {
  ASSERT_EQ(gen("a").code, 0);
  ASSERT_EQ(gen("b").code, 0);
  for (const char* f : {"manifest.json", "train_eeg.bin", "test_images.bin"})
    EXPECT_EQ(slurp(fs::path("a") / f), slurp(fs::path("b") / f)) << f;
  const Result again = gen("a");
  EXPECT_NE(again.code, 0);
  EXPECT_NE(again.out.find("--force"), std::string::npos) << again.out;
  EXPECT_EQ(gen("a", "--force").code, 0);
  const Result bad = run("gen-data --out c --size 20 --patch 8");
  EXPECT_NE(bad.code, 0);
  EXPECT_FALSE(fs::exists(dir / "c"));
}

TEST_F(Cli, TrainZeroEpochsClipOnlyThenEvaluate) {
  ASSERT_EQ(gen("d").code, 0);
  const Result t = run("train --data d --out r --config tiny.json --epochs 0 --loss.mu=1 --loss.alpha 0 --loss.lambda 0");
  ASSERT_EQ(t.code, 0) << t.out;
  for (const char* f : {"config.json", "train_log.jsonl", "summary.json", "checkpoint/checkpoint.json",
                        "checkpoint/parameters.bin"})
    EXPECT_TRUE(fs::exists(dir / "r" / f)) << f;
  const auto config = nlohmann::json::parse(slurp("r/config.json"));
  EXPECT_EQ(config.at("loss").at("mu"), 1.0);
  const auto summary = nlohmann::json::parse(slurp("r/summary.json"));
  EXPECT_EQ(summary.at(0).at("best_epoch"), 0);

  const Result e = run("eval --checkpoint r/checkpoint --data d");
  ASSERT_EQ(e.code, 0) << e.out;
  const auto report = nlohmann::json::parse(e.out);
  for (const char* k : {"top1", "top3", "top5"}) EXPECT_TRUE(report.at("top_k").contains(k)) << k;
  EXPECT_TRUE(report.contains("mAP"));
  EXPECT_EQ(report.at("ranks").size(), 10u);
}

TEST_F(Cli, ClipOnlyLogEqualsInfoNceTerm) {
  ASSERT_EQ(gen("d").code, 0);
  ASSERT_EQ(run("train --data d --out r --config tiny.json --epochs 1 --loss.mu=1 --loss.alpha=0 --loss.lambda=0").code, 0);
  std::istringstream log(slurp("r/train_log.jsonl"));
  std::string line;
  std::size_t steps = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.at("type") != "step") continue;
    ++steps;
    EXPECT_EQ(j.at("L_total").get<double>(), j.at("L_clip").get<double>());
    EXPECT_EQ(j.at("L_soft").get<double>(), 0.0);
    EXPECT_EQ(j.at("L_rel").get<double>(), 0.0);
  }
  EXPECT_EQ(steps, 1u);
}

TEST_F(Cli, BilinearStrategyAndRepeats) {
  ASSERT_EQ(gen("d").code, 0);
  const Result t = run("train --data d --out r --config tiny.json --epochs 1 --repeats 2 --fusion.strategy bilinear");
  ASSERT_EQ(t.code, 0) << t.out;
  const auto summary = nlohmann::json::parse(slurp("r/summary.json"));
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_NE(summary.at(0).at("seed"), summary.at(1).at("seed"));
  const auto ckpt = nlohmann::json::parse(slurp("r/repeat_1/checkpoint/checkpoint.json"));
  EXPECT_EQ(ckpt.at("config").at("fusion").at("strategy"), "bilinear");
}

TEST_F(Cli, ExportSimilarityMatrix) {
  ASSERT_EQ(gen("d").code, 0);
  ASSERT_EQ(run("train --data d --out r --config tiny.json --epochs 1").code, 0);
  const Result r = run("export-sim --checkpoint r/checkpoint --data d --out s.csv");
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream csv(slurp("s.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9);
  }
  EXPECT_EQ(rows, 10u);
  EXPECT_EQ(nlohmann::json::parse(slurp("s.json")).at("similarity"), "s.csv");
  EXPECT_NE(run("export-sim --checkpoint r/checkpoint --data d --out s.csv").code, 0);
}

TEST_F(Cli, MismatchedDatasetIsRejected) {
  ASSERT_EQ(gen("d").code, 0);
  ASSERT_EQ(run("gen-data --out other --classes 14 --per-class 3 --channels 5 --samples 16 --size 16 --val 4").code, 0);
  ASSERT_EQ(run("train --data d --out r --config tiny.json --epochs 0").code, 0);
  const Result e = run("eval --checkpoint r/checkpoint --data other");
  EXPECT_NE(e.code, 0);
  EXPECT_NE(e.out.find("dims"), std::string::npos) << e.out;
}

TEST_F(Cli, InvalidConfigFailsCleanly) {
  ASSERT_EQ(gen("d").code, 0);
  std::ofstream(dir / "bad.json") << R"({"loss": {"gamma": 1}})";
  const Result r = run("train --data d --out r --config bad.json");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("loss.gamma"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(dir / "r"));
  EXPECT_NE(run("train --data d --out r --config tiny.json --trainer.batch_size 1").code, 0);
  EXPECT_NE(run("train --data missing --out r --config tiny.json").code, 0);
  const Result env = shell("NEUROCLIP_CONFIG=bad.json '" NEUROCLIP_CLI "' train --data d --out r2");
  EXPECT_NE(env.code, 0);
}

TEST_F(Cli, GradcheckPassesAndCatchesCorruption) {
  const Result ok = run("gradcheck fusion dynamic_filter");
  EXPECT_EQ(ok.code, 0) << ok.out;
  const Result bad = run("gradcheck corrupted");
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos) << bad.out;
  EXPECT_NE(run("gradcheck nonsense").code, 0);
}
