// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end runs of the egru-lm binary on a tiny corpus.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "egru/checkpoint.hpp"
#include "egru/corpus.hpp"
#include "egru/metrics.hpp"
#include "egru/pruning.hpp"
#include "egru/random.hpp"
#include "egru/trainer.hpp"
#include "json.hpp"

namespace egru {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string chain_text(std::uint64_t seed, std::size_t words) {
  static const char* kWords[] = {"the", "cat", "sat", "on", "a", "mat", "and", "then", "it", "slept"};
  Rng rng(seed);
  std::string out;
  std::size_t w = 0;
  for (std::size_t k = 0; k < words; ++k) {
    w = rng.uniform() < 0.75 ? (w + 1) % 10 : rng.below(10);
    out += kWords[w];
    out += (k % 9 == 8) ? "\n" : " ";
  }
  return out;
}

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "egru_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_ / "data");
    write_text_file((root_ / "data/train.txt").string(), chain_text(1, 2000));
    write_text_file((root_ / "data/valid.txt").string(), chain_text(2, 400));
    write_text_file((root_ / "data/test.txt").string(), chain_text(3, 400));
    write_text_file((root_ / "data/empty.txt").string(), "");
    std::ofstream cfg(root_ / "tiny.json");
    cfg << R"({"embed_dim": 6, "hidden_dim": 10, "batch_size": 4, "bptt_len": 8, "eval_batch_size": 3,)"
        << R"( "lr": 0.005, "epochs": 1, "precision": "f64",)"
        << R"( "train_path": ")" << (root_ / "data/train.txt").string() << R"(",)"
        << R"( "valid_path": ")" << (root_ / "data/valid.txt").string() << R"(",)"
        << R"( "test_path": ")" << (root_ / "data/test.txt").string() << R"("})";
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static int run(const std::string& args) {
    const std::string cmd = std::string(EGRU_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  static std::string cfg_flag() { return "--config " + (root_ / "tiny.json").string(); }
  static std::string out(const std::string& name) { return (root_ / name).string(); }

  static fs::path root_;
};

fs::path Cli::root_;

TEST_F(Cli, BuildVocabGoldenAndStable) {
  const std::string golden = EGRU_SOURCE_DIR "/tests/golden/desk_vocab.txt";
  ASSERT_EQ(run("build-vocab --out " + out("v1") + " --corpus " EGRU_SOURCE_DIR "/data/desk/train.txt"), 0);
  ASSERT_EQ(run("build-vocab --out " + out("v2") + " --corpus " EGRU_SOURCE_DIR "/data/desk/train.txt"), 0);
  EXPECT_EQ(slurp(root_ / "v1/vocab.txt"), slurp(golden));
  EXPECT_EQ(slurp(root_ / "v1/vocab.txt"), slurp(root_ / "v2/vocab.txt"));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("build-vocab --out " + out("e1") + " --corpus " + out("data/empty.txt")), 3);
  EXPECT_EQ(run("build-vocab --out " + out("e2") + " --corpus " + out("data/missing.txt")), 5);
  EXPECT_EQ(run("train --out " + out("e3") + " " + cfg_flag() + " --set no_such_key=1"), 2);
  EXPECT_EQ(run("train --out " + out("e4") + " " + cfg_flag() + " --set lr=-1"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("eval --out " + out("e5") + " --checkpoint " + out("data/train.txt")), 3);
}

TEST_F(Cli, TrainEvalPruneSweep) {
  // Train twice with the same seed: identical logs.
  ASSERT_EQ(run("train --out " + out("t1") + " " + cfg_flag()), 0);
  ASSERT_EQ(run("train --out " + out("t2") + " " + cfg_flag()), 0);
  const std::string log = slurp(root_ / "t1/train_log.csv");
  EXPECT_EQ(log, slurp(root_ / "t2/train_log.csv"));
  EXPECT_TRUE(fs::exists(root_ / "t1/model.ckpt"));
  const auto resolved = json::parse(slurp(root_ / "t1/config.resolved.json"));
  EXPECT_EQ(resolved["hidden_dim"], 10);
  EXPECT_TRUE(resolved.contains("code_version"));

  // One epoch beats the uniform model.
  std::istringstream rows(log);
  std::string header, first;
  std::getline(rows, header);
  std::getline(rows, first);
  const auto vocab = Vocab::load(out("t1/vocab.txt"));
  std::vector<double> cols;
  std::stringstream ss(first);
  for (std::string c; std::getline(ss, c, ',');) cols.push_back(std::stod(c));
  ASSERT_EQ(cols.size(), 5u);
  EXPECT_LT(cols[2], static_cast<double>(vocab.size()));
  EXPECT_GT(cols[3], 0.0);  // EGRU activity sparsity

  // Eval twice gives identical numbers.
  const std::string ckpt = out("t1/model.ckpt");
  ASSERT_EQ(run("eval --out " + out("ev1") + " --checkpoint " + ckpt), 0);
  ASSERT_EQ(run("eval --out " + out("ev2") + " --checkpoint " + ckpt + " --threads 3"), 0);
  const auto e1 = json::parse(slurp(root_ / "ev1/eval.json"));
  const auto e2 = json::parse(slurp(root_ / "ev2/eval.json"));
  EXPECT_EQ(e1["test_ppl"], e2["test_ppl"]);
  EXPECT_EQ(e1["macs_per_step"], e2["macs_per_step"]);
  EXPECT_EQ(e1["weight_sparsity"], 0.0);

  // macs_per_step matches an independent ledger run on the checkpoint.
  const auto loaded = load_checkpoint<double>(ckpt);
  const auto data = load_splits(loaded.meta.config, &vocab);
  const auto direct = evaluate(loaded.model, data.test, 3, 8, 1);
  EXPECT_EQ(e1["macs_per_step"].get<double>(), direct.macs_per_step);
  EXPECT_EQ(e1["test_ppl"].get<double>(), direct.ppl);

  // Prune to 50% in 10-point steps.
  ASSERT_EQ(run("prune --out " + out("p") + " --checkpoint " + ckpt + " --set prune_target=0.5 --set "
                "prune_finetune_epochs=1 --set max_train_batches=4"),
            0);
  std::istringstream trace(slurp(root_ / "p/prune_trace.csv"));
  std::getline(trace, header);
  auto unpruned = loaded.model;
  const std::size_t n = unpruned.prune_scope().total();
  std::vector<double> achieved;
  for (std::string line; std::getline(trace, line);) {
    std::stringstream ls(line);
    std::string c;
    std::getline(ls, c, ',');
    std::getline(ls, c, ',');
    std::getline(ls, c, ',');
    achieved.push_back(std::stod(c));
  }
  ASSERT_EQ(achieved.size(), 4u);
  const double want[] = {0.2, 0.3, 0.4, 0.5};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(achieved[k], static_cast<double>(prune_count(want[k], n)) / static_cast<double>(n));
  }
  std::string curve_header = slurp(root_ / "p/prune_curve.csv");
  EXPECT_EQ(curve_header.substr(0, curve_header.find('\n')), "weight_sparsity,macs,test_ppl");

  // Empty schedule is a no-op.
  EXPECT_EQ(run("prune --out " + out("p0") + " --checkpoint " + ckpt + " --set prune_target=0"), 0);
  EXPECT_FALSE(fs::exists(root_ / "p0/prune_trace.csv"));

  // 1 x 1 sweep.
  ASSERT_EQ(run("sweep-decay --out " + out("s") + " " + cfg_flag() + " --decay-w 0.14 --decay-b 0.01"), 0);
  std::istringstream sweep(slurp(root_ / "s/sweep.csv"));
  std::getline(sweep, header);
  std::string row;
  ASSERT_TRUE(std::getline(sweep, row));
  EXPECT_FALSE(std::getline(sweep, row));
  const auto swept = load_checkpoint<double>(out("s/sweep_1.ckpt"));
  EXPECT_EQ(swept.meta.config.decay_w, 0.14);
  std::stringstream rs(slurp(root_ / "s/sweep.csv").substr(header.size() + 1));
  std::vector<std::string> fields;
  for (std::string c; std::getline(rs, c, ',');) fields.push_back(c);
  EXPECT_EQ(std::stod(fields[4]), weight_stats(swept.model).mean);
}

TEST_F(Cli, LstmActivityColumnZero) {
  ASSERT_EQ(run("train --out " + out("l") + " " + cfg_flag() + " --set cell_kind=lstm"), 0);
  std::istringstream rows(slurp(root_ / "l/train_log.csv"));
  std::string line;
  std::getline(rows, line);
  std::getline(rows, line);
  std::stringstream ss(line);
  std::vector<std::string> cols;
  for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
  ASSERT_EQ(cols.size(), 5u);
  EXPECT_EQ(std::stod(cols[3]), 0.0);
}

TEST_F(Cli, EnvOverride) {
  const std::string cmd = "EGRU_HIDDEN_DIM=7 " + std::string(EGRU_CLI) + " train --out " + out("env") + " " +
                          cfg_flag() + " --set epochs=0 > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_EQ(json::parse(slurp(root_ / "env/config.resolved.json"))["hidden_dim"], 7);
}

}  // namespace
}  // namespace egru
