#include "cli.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace uld;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_dir(const std::string& tag) {
  std::random_device rd;
  auto dir = fs::temp_directory_path() / ("uld_cli_" + tag + "_" + std::to_string(rd()));
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<nlohmann::json> read_jsonl(const fs::path& p) {
  std::vector<nlohmann::json> rows;
  std::ifstream f(p);
  for (std::string line; std::getline(f, line);)
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

// Shrunk networks so a few hundred steps take well under a second.
std::vector<std::string> small_train(const std::string& env, int seed, int t_total, const fs::path& dir) {
  return {"train",          "--env",          env,  "--seed",        std::to_string(seed),
          "--t-total",      std::to_string(t_total), "--out-dir",   dir.string(),
          "--state-dim",    "6",              "--state-action-dim", "6",  "--hidden", "12",
          "--hidden-layers", "1",             "--n-bins",       "11", "--batch-size", "8",
          "--warmup",       "20",             "--f-eval",       "50", "--n-eval", "2",
          "--t-target",     "5"};
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const std::string& value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    ::setenv(name, value.c_str(), 1);
  }
  ~ScopedEnv() {
    if (old_)
      ::setenv(name_, old_->c_str(), 1);
    else
      ::unsetenv(name_);
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

}  // namespace

// ------------------------------------------------------------------ train

TEST(Train, ZeroStepsGivesSingleInitialRecord) {
  const auto dir = temp_dir("t0");
  const auto r = invoke({"train", "--env", "grid_sparse", "--seed", "1", "--t-total", "0", "--out-dir", dir.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto rows = read_jsonl(dir / "metrics.jsonl");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0]["t"], 0);
  EXPECT_EQ(rows[0]["updates"], 0);
  EXPECT_TRUE(fs::exists(dir / "config.txt"));
  EXPECT_TRUE(fs::exists(dir / "final.ckpt"));
  fs::remove_all(dir);
}

TEST(Train, SameCommandTwiceGivesIdenticalMetrics) {
  const auto a = temp_dir("da"), b = temp_dir("db");
  ASSERT_EQ(invoke(small_train("grid_sparse", 3, 160, a)).code, cli::kOk);
  ASSERT_EQ(invoke(small_train("grid_sparse", 3, 160, b)).code, cli::kOk);
  const auto ma = slurp(a / "metrics.jsonl");
  EXPECT_EQ(read_jsonl(a / "metrics.jsonl").size(), 4u);
  EXPECT_EQ(ma, slurp(b / "metrics.jsonl"));
  EXPECT_EQ(slurp(a / "final.ckpt"), slurp(b / "final.ckpt"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Train, SnapshotRerunReproducesMetrics) {
  const auto a = temp_dir("sa"), b = temp_dir("sb");
  ASSERT_EQ(invoke(small_train("chain_sparse", 5, 120, a)).code, cli::kOk);
  // Rerun from the snapshot alone, redirecting the output directory.
  const auto r = invoke({"train", "--config", (a / "config.txt").string(), "--out-dir", b.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_EQ(slurp(a / "metrics.jsonl"), slurp(b / "metrics.jsonl"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Train, SnapshotListsEveryKeyWithResolvedDirectory) {
  const auto dir = temp_dir("snap");
  ASSERT_EQ(invoke({"train", "--t-total", "0", "--gamma", "0.9", "--out-dir", dir.string()}).code, cli::kOk);
  const auto text = slurp(dir / "config.txt");
  EXPECT_NE(text.find("gamma=0.9\n"), std::string::npos);
  EXPECT_NE(text.find("out_dir=" + dir.string() + "\n"), std::string::npos);
  for (const auto& f : agent::config_fields()) EXPECT_NE(text.find(f.key + "="), std::string::npos) << f.key;
  fs::remove_all(dir);
}

TEST(Train, InvalidValueExitsOneNamingTheKey) {
  const auto dir = temp_dir("bad");
  const auto r = invoke({"train", "--gamma", "1.5", "--t-total", "0", "--out-dir", dir.string()});
  EXPECT_EQ(r.code, cli::kConfigError);
  EXPECT_NE(r.err.find("gamma"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir));
}

TEST(Train, UnknownConfigKeyRejected) {
  const auto dir = temp_dir("typo");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "run.cfg");
    f << "# comment\n\nenv=grid_sparse\nlamda_r=2\n";
  }
  const auto r = invoke({"train", "--config", (dir / "run.cfg").string(), "--t-total", "0"});
  EXPECT_EQ(r.code, cli::kConfigError);
  EXPECT_NE(r.err.find("lamda_r"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Train, FlagsOverrideConfigFile) {
  const auto dir = temp_dir("ovr");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "run.cfg");
    f << "seed=4\ngamma=0.8\nt_total=0\n";
  }
  const auto out = dir / "run";
  ASSERT_EQ(invoke({"train", "--config", (dir / "run.cfg").string(), "--gamma", "0.7", "--out-dir", out.string()}).code,
            cli::kOk);
  const auto text = slurp(out / "config.txt");
  EXPECT_NE(text.find("seed=4\n"), std::string::npos);
  EXPECT_NE(text.find("gamma=0.7\n"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Train, MalformedLineIsConfigError) {
  const auto dir = temp_dir("mal");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "run.cfg");
    f << "gamma 0.9\n";
  }
  EXPECT_EQ(invoke({"train", "--config", (dir / "run.cfg").string()}).code, cli::kConfigError);
  fs::remove_all(dir);
}

TEST(Train, UnknownFlagAndSubcommandExitOne) {
  EXPECT_EQ(invoke({"train", "--gama", "0.9"}).code, cli::kConfigError);
  EXPECT_EQ(invoke({"fly"}).code, cli::kConfigError);
  EXPECT_EQ(invoke({}).code, cli::kConfigError);
}

TEST(Train, OutputRootVariableChoosesRunDirectory) {
  const auto root = temp_dir("root");
  const auto cwd_before = std::vector<fs::path>(fs::directory_iterator(fs::current_path()), {});
  {
    ScopedEnv env(cli::kOutputRootVar, root.string());
    ASSERT_EQ(invoke({"train", "--env", "chain_sparse", "--seed", "2", "--t-total", "0"}).code, cli::kOk);
  }
  const auto run = root / "chain_sparse_seed2";
  EXPECT_TRUE(fs::exists(run / "metrics.jsonl"));
  EXPECT_TRUE(fs::exists(run / "config.txt"));
  // Every artifact sits directly in the run directory.
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) {
      EXPECT_EQ(e.path().parent_path(), run) << e.path();
    }
  const auto cwd_after = std::vector<fs::path>(fs::directory_iterator(fs::current_path()), {});
  EXPECT_EQ(cwd_before.size(), cwd_after.size());
  fs::remove_all(root);
}

// ------------------------------------------------------------------ eval

TEST(Eval, TwiceGivesIdenticalOutput) {
  const auto dir = temp_dir("ev");
  ASSERT_EQ(invoke(small_train("grid_sparse", 6, 100, dir)).code, cli::kOk);
  const auto ck = (dir / "final.ckpt").string();
  const auto a = invoke({"eval", "--checkpoint", ck, "--episodes", "3"});
  const auto b = invoke({"eval", "--checkpoint", ck, "--episodes", "3"});
  ASSERT_EQ(a.code, cli::kOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out.rfind("J_eval ", 0), 0u);
  const auto log = read_jsonl(dir / "eval.jsonl");
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0]["returns"].size(), 3u);
  EXPECT_EQ(log[0], log[1]);
  fs::remove_all(dir);
}

TEST(Eval, SpecMismatchRefusedShowingBothSpecs) {
  const auto dir = temp_dir("mm");
  ASSERT_EQ(invoke({"train", "--env", "grid_sparse", "--t-total", "0", "--out-dir", dir.string()}).code, cli::kOk);
  const auto r = invoke({"eval", "--checkpoint", (dir / "final.ckpt").string(), "--env", "pendulum_c"});
  EXPECT_EQ(r.code, cli::kConfigError);
  EXPECT_NE(r.err.find("grid_sparse"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("pendulum_c"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "eval.jsonl"));
  fs::remove_all(dir);
}

TEST(Eval, RandomInitBanditWithinArmRange) {
  const auto dir = temp_dir("bd");
  ASSERT_EQ(invoke({"train", "--env", "bandit_d", "--t-total", "0", "--out-dir", dir.string()}).code, cli::kOk);
  ASSERT_EQ(invoke({"eval", "--checkpoint", (dir / "final.ckpt").string(), "--episodes", "20"}).code, cli::kOk);
  const auto rec = read_jsonl(dir / "eval.jsonl").at(0);
  // Arm means span [-0.5, 1.0]; reward noise has std 0.1.
  for (double g : rec["returns"]) {
    EXPECT_GE(g, -0.5 - 0.6);
    EXPECT_LE(g, 1.0 + 0.6);
  }
  fs::remove_all(dir);
}

TEST(Eval, MissingCheckpointIsRuntimeFault) {
  EXPECT_EQ(invoke({"eval", "--checkpoint", "/nonexistent/x.ckpt"}).code, cli::kRuntimeFault);
  EXPECT_EQ(invoke({"eval"}).code, cli::kConfigError);
}

// ------------------------------------------------------------------ lab

TEST(Lab, FiftyTrialsAllPass) {
  const auto dir = temp_dir("lab");
  const auto r = invoke({"lab", "--trials", "50", "--seed", "7", "--out-dir", dir.string()});
  EXPECT_EQ(r.code, cli::kOk) << r.out;
  EXPECT_NE(r.out.find("50/50 pass"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("violating instance flagged"), std::string::npos) << r.out;
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(report["failed"], 0);
  EXPECT_EQ(read_jsonl(dir / "trials.jsonl").size(), 50u + 21u);
  fs::remove_all(dir);
}

TEST(Lab, TabularFeaturesReportZeroValueError) {
  const auto dir = temp_dir("tab");
  const auto r = invoke({"lab", "--trials", "1", "--tabular", "--out-dir", dir.string()});
  EXPECT_EQ(r.code, cli::kOk);
  const auto rows = read_jsonl(dir / "trials.jsonl");
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0]["kind"], "equivalence");
  EXPECT_LE(rows[0]["max_value_error"].get<double>(), 1e-10);
  fs::remove_all(dir);
}

TEST(Lab, RankDeficientGivesDiagnosticNotFailure) {
  const auto dir = temp_dir("rd");
  const auto r = invoke({"lab", "--trials", "3", "--rank-deficient", "--out-dir", dir.string()});
  EXPECT_EQ(r.code, cli::kOk) << r.out;
  EXPECT_NE(r.out.find("skipped"), std::string::npos) << r.out;
  for (const auto& row : read_jsonl(dir / "trials.jsonl"))
    if (row["kind"] == "equivalence") {
      EXPECT_FALSE(row["diagnostic"].get<std::string>().empty());
    }
  fs::remove_all(dir);
}

TEST(Lab, ZeroTrialsIsConfigError) {
  EXPECT_EQ(invoke({"lab", "--trials", "0"}).code, cli::kConfigError);
  EXPECT_EQ(invoke({"lab", "--tabular", "--rank-deficient"}).code, cli::kConfigError);
}

// ------------------------------------------------------------------ envs

TEST(Envs, ListNamesEveryEnvironment) {
  const auto r = invoke({"envs", "list"});
  ASSERT_EQ(r.code, cli::kOk);
  for (const char* name : {"grid_sparse", "grid_dense", "pendulum_c", "bandit_d", "chain_sparse"})
    EXPECT_NE(r.out.find(name), std::string::npos) << name;
  const auto j = invoke({"envs", "list", "--json"});
  ASSERT_EQ(j.code, cli::kOk);
  EXPECT_EQ(nlohmann::json::parse(j.out).size(), 5u);
}
