#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aidroid/cli.hpp"
#include "test_util.hpp"

namespace aidroid {
namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "aidroid");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> small_synth(const std::string& dir, const std::string& seed = "7") {
  return {"synth", "--seed", seed, "--out", dir, "--apps-per-class", "40", "--n-api", "40",
          "--n-imei", "60", "--n-sig", "20", "--n-aff", "20"};
}

const std::vector<std::string> kSmallPipeline = {"--walks-per-node", "3", "--walk-length", "12", "--dim", "8",
                                                 "--budget", "5,10", "--dnn-epochs", "1"};

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"synth", "--seed", "1"}).code, 1);  // --out missing
  testing::TempDir dir("cli_usage");
  auto args = small_synth(dir.path().string());
  args.push_back("--bogus-flag");
  EXPECT_EQ(run(args).code, 1);
}

TEST(Cli, SynthIsDeterministic) {
  testing::TempDir a("cli_synth_a"), b("cli_synth_b");
  const auto ra = run(small_synth(a.path().string()));
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(run(small_synth(b.path().string())).code, 0);
  for (const char* f : {"edges.tsv", "labels.tsv", "split.tsv", "manifest.json"}) {
    EXPECT_FALSE(testing::slurp(a.path() / f).empty()) << f;
    EXPECT_EQ(testing::slurp(a.path() / f), testing::slurp(b.path() / f)) << f;
  }
  EXPECT_EQ(nlohmann::json::parse(testing::slurp(a.path() / "manifest.json")).at("seed"), 7);
  // The resolved configuration is logged as one JSON line.
  const auto first_line = ra.err.substr(0, ra.err.find('\n'));
  EXPECT_EQ(nlohmann::json::parse(first_line).at("command"), "synth");
}

TEST(Cli, InvalidSynthConfigIsADataError) {
  testing::TempDir dir("cli_bad");
  auto args = small_synth(dir.path().string());
  args.insert(args.end(), {"--p-inter", "0.95"});
  EXPECT_EQ(run(args).code, 2);
}

TEST(Cli, EvalWithMismatchedLengthsExitsTwo) {
  testing::TempDir dir("cli_eval");
  {
    std::ofstream p(dir.file("p.csv"));
    p << "app_key,score,label\na0,0.9,1\na1,0.2,0\n";
    std::ofstream t(dir.file("t.tsv"));
    t << "a0\t1\n";
  }
  const auto r = run({"eval", "--pred", dir.file("p.csv"), "--truth", dir.file("t.tsv")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error"), std::string::npos);
}

TEST(Cli, EvalComputesMetrics) {
  testing::TempDir dir("cli_eval_ok");
  {
    std::ofstream p(dir.file("p.csv"));
    p << "app_key,score,label\na0,0.9,1\na1,0.2,0\na2,0.6,1\na3,0.1,0\n";
    std::ofstream t(dir.file("t.tsv"));
    t << "a0\t1\na1\t0\na2\t0\na3\t0\n";
  }
  const auto r = run({"eval", "--pred", dir.file("p.csv"), "--truth", dir.file("t.tsv"), "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = nlohmann::json::parse(testing::slurp(dir.path() / "metrics.json"));
  EXPECT_EQ(m.at("tp"), 1);
  EXPECT_EQ(m.at("fp"), 1);
  EXPECT_DOUBLE_EQ(m.at("accuracy").get<double>(), 0.75);
  EXPECT_FALSE(testing::slurp(dir.path() / "roc.csv").empty());
}

TEST(Cli, MissingInputFileIsADataError) {
  testing::TempDir dir("cli_missing");
  EXPECT_EQ(run({"walk", "--edges", dir.file("nope.tsv"), "--out", dir.file("c.txt"), "--seed", "1"}).code, 2);
}

TEST(Cli, WalkEmbedImgChain) {
  testing::TempDir dir("cli_chain");
  const std::string d = dir.path().string();
  ASSERT_EQ(run(small_synth(d)).code, 0);
  const auto w = run({"walk", "--edges", dir.file("edges.tsv"), "--out", dir.file("corpus.txt"), "--seed", "3",
                      "--walks-per-node", "2", "--walk-length", "10"});
  ASSERT_EQ(w.code, 0) << w.err;
  const auto e = run({"embed", "--edges", dir.file("edges.tsv"), "--corpus", dir.file("corpus.txt"), "--out",
                      dir.file("emb.txt"), "--seed", "3", "--dim", "6"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto i = run({"img", "--edges", dir.file("edges.tsv"), "--embeddings", dir.file("emb.txt"), "--app", "app0",
                      "--budget", "4,8"});
  ASSERT_EQ(i.code, 0) << i.err;
  const auto j = nlohmann::json::parse(i.out);
  EXPECT_EQ(j.at("t"), 13);
  EXPECT_EQ(j.at("d"), 6);
  const auto b = run({"img", "--edges", dir.file("edges.tsv"), "--embeddings", dir.file("emb.txt"), "--app", "app0",
                      "--budget", "4,8", "--format", "binary", "--out", dir.file("m.bin")});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(testing::slurp(dir.path() / "m.bin").size(), 8u + 13 * 6 * sizeof(double));
  EXPECT_EQ(run({"img", "--edges", dir.file("edges.tsv"), "--embeddings", dir.file("emb.txt"), "--app", "ghost"}).code,
            2);
}

TEST(Cli, FitThenPredictWritesMetrics) {
  testing::TempDir dir("cli_fit");
  ASSERT_EQ(run(small_synth(dir.path().string())).code, 0);
  std::vector<std::string> fit = {"fit",   "--edges", dir.file("edges.tsv"), "--labels", dir.file("labels.tsv"),
                                  "--split", dir.file("split.tsv"), "--out", dir.file("model"), "--seed", "5"};
  fit.insert(fit.end(), kSmallPipeline.begin(), kSmallPipeline.end());
  const auto f = run(fit);
  ASSERT_EQ(f.code, 0) << f.err;
  for (const char* name : {"embeddings.txt", "model.bin", "config.json", "split.tsv"})
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "model" / name)) << name;

  for (const char* arrival : {"single", "batch"}) {
    const auto p = run({"predict", "--model", dir.file("model"), "--edges", dir.file("edges.tsv"), "--labels",
                        dir.file("labels.tsv"), "--out", dir.file("pred.csv"), "--arrival", arrival});
    ASSERT_EQ(p.code, 0) << p.err;
    const auto metrics = nlohmann::json::parse(testing::slurp(dir.path() / "metrics.json"));
    EXPECT_EQ(metrics.at("tp").get<int>() + metrics.at("tn").get<int>() + metrics.at("fp").get<int>() +
                  metrics.at("fn").get<int>(),
              16);  // 20% of 80 apps
    const auto csv = testing::slurp(dir.path() / "pred.csv");
    EXPECT_EQ(csv.rfind("app_key,score,label\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 17);

    const auto e = run({"eval", "--pred", dir.file("pred.csv"), "--truth", dir.file("labels.tsv")});
    // The truth file lists every app, so counts differ from the predictions.
    EXPECT_EQ(e.code, 2);
  }
  // Fitting twice with the same seed gives identical artifacts.
  fit[fit.size() - kSmallPipeline.size() - 3] = dir.file("model2");
  ASSERT_EQ(run(fit).code, 0);
  for (const char* name : {"embeddings.txt", "model.bin", "config.json"})
    EXPECT_EQ(testing::slurp(dir.path() / "model" / name), testing::slurp(dir.path() / "model2" / name)) << name;
}

TEST(Cli, BenchOosReportsRows) {
  const auto r = run({"bench-oos", "--seed", "1", "--sizes", "300,600", "--probes", "5", "--repeats", "1",
                      "--walks-per-node", "1", "--walk-length", "5", "--dim", "8"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j.at("rows").size(), 2u);
  EXPECT_GT(j.at("rows")[0].at("median_ms").get<double>(), 0.0);
  EXPECT_TRUE(j.contains("median_ratio_last_to_first"));
}

}  // namespace
}  // namespace aidroid
