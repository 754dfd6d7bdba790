#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "mdvit/cli.hpp"
#include "mdvit/config.hpp"
#include "test_util.hpp"

using namespace mdvit;
using mdvit::test_util::TempDir;

namespace {

struct Run {
  int rc = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.rc = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::filesystem::path write_tiny_config(const std::filesystem::path& dir, int64_t num_domains) {
  ExperimentConfig c;
  c.model = test_util::tiny_config(num_domains, 32);
  c.train.epochs = 1;
  c.train.batch_size = 2 * num_domains;
  c.train.augment.enabled = false;
  const auto path = dir / "tiny.cfg";
  std::ofstream(path) << serialize_config(c);
  return path;
}

}  // namespace

TEST(Cli, ParamsDefault) {
  const auto r = run({"params"});
  EXPECT_EQ(r.rc, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("# effective config (params)"), std::string::npos);
  EXPECT_NE(r.out.find("base_inference"), std::string::npos);
  EXPECT_NE(r.out.find("mdvit_per_peer"), std::string::npos);
}

TEST(Cli, ParamsJson) {
  const auto r = run({"--json", "params"});
  ASSERT_EQ(r.rc, cli::kExitOk) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("num_domains").get<int64_t>(), 4);
  EXPECT_GT(j.at("mdvit_inference").get<int64_t>(), j.at("base_inference").get<int64_t>());
  EXPECT_EQ(j.at("mdvit_training_total").get<int64_t>(),
            j.at("mdvit_universal").get<int64_t>() + 4 * j.at("mdvit_per_peer").get<int64_t>());
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).rc, cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).rc, cli::kExitUsage);
  EXPECT_EQ(run({"params", "--bogus"}).rc, cli::kExitUsage);
  const auto r = run({"train", "--paradigm", "mat", "--out", "x"});
  EXPECT_EQ(r.rc, cli::kExitUsage);
  EXPECT_NE(r.err.find("--data"), std::string::npos);
  EXPECT_EQ(run({"train", "--data", "d", "--paradigm", "xt", "--out", "x"}).rc, cli::kExitUsage);
  EXPECT_EQ(run({"train", "--data", "d", "--paradigm", "st", "--out", "x", "--fold", "7"}).rc,
            cli::kExitUsage);
}

TEST(Cli, HelpIsNotAnError) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.rc, cli::kExitOk);
  EXPECT_NE(r.out.find("train"), std::string::npos);
}

TEST(Cli, RuntimeErrorsAreNamed) {
  TempDir tmp("cli_bad");
  std::ofstream(tmp.path() / "bad.cfg") << "num_heads = many\n";
  auto r = run({"params", "--config", (tmp.path() / "bad.cfg").string()});
  EXPECT_EQ(r.rc, cli::kExitRuntime);
  EXPECT_NE(r.err.find("parse error:"), std::string::npos);

  std::ofstream(tmp.path() / "invalid.cfg") << "num_heads = 0\n";
  r = run({"params", "--config", (tmp.path() / "invalid.cfg").string()});
  EXPECT_EQ(r.rc, cli::kExitRuntime);
  EXPECT_NE(r.err.find("validation error:"), std::string::npos);

  r = run({"params", "--config", (tmp.path() / "absent.cfg").string()});
  EXPECT_EQ(r.rc, cli::kExitRuntime);
  EXPECT_NE(r.err.find("data error:"), std::string::npos);

  r = run({"eval", "--ckpt", (tmp.path() / "none.ckpt").string(), "--data", tmp.path().string()});
  EXPECT_EQ(r.rc, cli::kExitRuntime);
}

TEST(Cli, SynthWritesDomainFolders) {
  TempDir tmp("cli_synth");
  const auto r = run({"synth", "--out", tmp.path().string(), "--domains", "4", "--n", "8", "--size", "32"});
  ASSERT_EQ(r.rc, cli::kExitOk) << r.err;
  int folders = 0;
  for (const auto& entry : std::filesystem::directory_iterator(tmp.path())) {
    ++folders;
    int images = 0;
    for ([[maybe_unused]] const auto& f : std::filesystem::directory_iterator(entry.path() / "images")) ++images;
    EXPECT_EQ(images, 8);
    EXPECT_TRUE(std::filesystem::exists(entry.path() / "folds.json"));
  }
  EXPECT_EQ(folders, 4);
}

TEST(Cli, TrainEvalCompare) {
  TempDir tmp("cli_flow");
  const auto data = (tmp.path() / "data").string();
  ASSERT_EQ(run({"synth", "--out", data, "--domains", "2", "--n", "10", "--size", "32"}).rc, 0);
  const auto cfg = write_tiny_config(tmp.path(), 2).string();

  const auto mat_out = (tmp.path() / "mat").string();
  auto r = run({"train", "--config", cfg, "--data", data, "--paradigm", "mat", "--out", mat_out,
                "--max-steps", "2"});
  ASSERT_EQ(r.rc, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("# effective config (train)"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "mat" / "mat.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "mat" / "mat_train.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "mat" / "report.json"));

  const auto st_out = (tmp.path() / "st").string();
  r = run({"--json", "train", "--config", cfg, "--data", data, "--paradigm", "st", "--out", st_out,
           "--max-steps", "1"});
  ASSERT_EQ(r.rc, cli::kExitOk) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("report").at("paradigm"), "st");

  // Re-evaluating the saved model reproduces the training-time report.
  r = run({"--json", "eval", "--ckpt", mat_out + "/mat.ckpt", "--data", data});
  ASSERT_EQ(r.rc, cli::kExitOk) << r.err;
  std::ifstream in(tmp.path() / "mat" / "report.json");
  const auto saved = nlohmann::json::parse(in);
  const auto again = nlohmann::json::parse(r.out);
  EXPECT_EQ(again.at("paradigm"), "mat");
  EXPECT_EQ(again.at("dice"), saved.at("dice"));

  r = run({"compare", "--reports", st_out + "/report.json", mat_out + "/report.json", "--margin", "1.0"});
  EXPECT_EQ(r.rc, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("Dice (%)"), std::string::npos);

  r = run({"train", "--config", cfg, "--data", (tmp.path() / "nope").string(), "--paradigm", "jt",
           "--out", (tmp.path() / "jt").string()});
  EXPECT_EQ(r.rc, cli::kExitRuntime);
  EXPECT_NE(r.err.find("data error:"), std::string::npos);
}
