#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "test_util.hpp"

using nlohmann::json;
using testutil::TempDir;

namespace {

struct Run {
  int code;
  std::string out, err;
  json doc() const { return json::parse(out); }
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = ckalign::cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// Writes a small noiseless corpus under dir and returns its prefix.
std::string synth_corpus(const TempDir& dir, int count = 120) {
  write_text(dir.file("spec.json"), R"({"latent_dim": 8, "dim_left": 16, "dim_right": 24, "count": )" +
                                        std::to_string(count) + R"(, "noise_sigma": 0.0, "seed": 1})");
  const auto prefix = dir.file("c");
  const auto r = run({"synth", "--spec", dir.file("spec.json"), "--out-prefix", prefix});
  EXPECT_EQ(r.code, 0) << r.err;
  return prefix;
}

}  // namespace

TEST(Cli, CkaOfAFileWithItselfIsOne) {
  TempDir dir;
  const auto p = synth_corpus(dir);
  const auto r = run({"cka", p + "_left.emb", p + "_left.emb", "--no-timestamp"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(r.doc()["metrics"]["cka"].get<double>(), 1.0, 1e-12);
  EXPECT_EQ(r.doc()["metrics"]["n"], 120.0);
  EXPECT_FALSE(r.doc().contains("timestamp"));
  EXPECT_FALSE(r.doc().contains("wall_time_ms"));
  const auto cross = run({"cka", p + "_left.emb", p + "_right.emb", "--manifest", p + "_manifest.json"});
  ASSERT_EQ(cross.code, 0) << cross.err;
  EXPECT_NEAR(cross.doc()["metrics"]["cka"].get<double>(), 1.0, 1e-9);
  EXPECT_TRUE(cross.doc().contains("timestamp"));
}

TEST(Cli, SynthThenBlindMatchRecoversEverything) {
  TempDir dir;
  const auto p = synth_corpus(dir);
  const auto r = run({"match", "qap", p + "_left.emb", p + "_right.emb", "--m", "0", "--no-stretch", "--no-timestamp"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = r.doc();
  EXPECT_EQ(doc["metrics"]["matching_accuracy"], 1.0);
  EXPECT_EQ(doc["matching"].size(), 120u);
  for (const auto& pair : doc["matching"]) EXPECT_EQ(pair[0], pair[1]);
  EXPECT_TRUE(doc["anchors"].empty());
  EXPECT_EQ(doc["run"]["command"], "match qap");
}

TEST(Cli, OtherMatchMethods) {
  TempDir dir;
  const auto p = synth_corpus(dir);
  for (std::string method : {"local", "relative", "linear"}) {
    const auto r = run({"match", method, p + "_left.emb", p + "_right.emb", "--m", "30", "--n", "50"});
    ASSERT_EQ(r.code, 0) << method << ": " << r.err;
    EXPECT_EQ(r.doc()["metrics"]["matching_accuracy"], 1.0) << method;
    EXPECT_EQ(r.doc()["anchors"].size(), 30u);
  }
}

TEST(Cli, RetrieveWritesRankingAndScores) {
  TempDir dir;
  const auto p = synth_corpus(dir);
  const auto r = run({"retrieve", "local", p + "_left.emb", p + "_right.emb", "--m", "30", "--n", "40", "--k", "3",
                      "--scores-out", dir.file("scores.emb")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = r.doc();
  EXPECT_EQ(doc["metrics"]["top1"], 1.0);
  EXPECT_EQ(doc["metrics"]["top3"], 1.0);
  EXPECT_EQ(doc["ranked"].size(), 40u);
  for (const auto& [id, row] : doc["ranked"].items()) {
    EXPECT_EQ(row.size(), 3u);
    EXPECT_EQ(row[0], id);
  }
  const auto scores = ckalign::load_embeddings(dir.file("scores.emb"));
  EXPECT_EQ(scores.data.rows(), 40);
  EXPECT_EQ(scores.data.cols(), 40);
  EXPECT_EQ(run({"retrieve", "qap", p + "_left.emb", p + "_right.emb"}).code, 2);
  EXPECT_EQ(run({"retrieve", "local", p + "_left.emb", p + "_right.emb", "--m", "30", "--k", "0"}).code, 2);
}

TEST(Cli, ClassifyFromSynthClasses) {
  TempDir dir;
  write_text(dir.file("spec.json"), R"({"latent_dim": 16, "dim_left": 32, "dim_right": 32, "count": 300,
      "noise_sigma": 0.0, "n_classes": 10, "class_spread": 0.25, "seed": 2})");
  const auto p = dir.file("k");
  const auto s = run({"synth", "--spec", dir.file("spec.json"), "--out-prefix", p});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(s.doc()["outputs"].size(), 4u);
  const auto r = run({"classify", p + "_left.emb", p + "_class_texts.emb", "--anchors-left", p + "_left.emb",
                      "--anchors-right", p + "_right.emb", "--m", "60"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.doc()["metrics"]["top1"], 1.0);
  const auto missing = run({"classify", p + "_left.emb", p + "_class_texts.emb"});
  EXPECT_EQ(missing.code, 2);
}

TEST(Cli, EvalSubcommands) {
  TempDir dir;
  const auto p = synth_corpus(dir, 80);
  const auto l = p + "_left.emb", r = p + "_right.emb";
  auto shuffle = run({"eval", "shuffle-curve", l, r, "--fractions", "0,0.5,1", "--seeds", "2"});
  ASSERT_EQ(shuffle.code, 0) << shuffle.err;
  EXPECT_NEAR(shuffle.doc()["metrics"]["cka@0"].get<double>(), 1.0, 1e-9);
  auto noise = run({"eval", "noise-sweep", l, r, "--method", "relative", "--m", "20", "--sigmas", "0,0.5", "--seeds", "2"});
  ASSERT_EQ(noise.code, 0) << noise.err;
  EXPECT_TRUE(noise.doc()["metrics"].contains("accuracy@sigma=0.5"));
  auto size = run({"eval", "size-sweep", l, r, "--method", "linear", "--vary", "base", "--values", "10,20,40",
                   "--fixed-other", "30", "--seeds", "2"});
  ASSERT_EQ(size.code, 0) << size.err;
  EXPECT_TRUE(size.doc()["metrics"].contains("spearman"));
  auto ablation = run({"eval", "ablation", l, r, "--m", "20", "--n", "30", "--seeds", "1"});
  ASSERT_EQ(ablation.code, 0) << ablation.err;
  EXPECT_EQ(ablation.doc()["metrics"].size(), 24u);
}

TEST(Cli, ErrorsAndExitCodes) {
  TempDir dir;
  const auto missing = dir.file("nope.emb");
  const auto r = run({"cka", missing, missing});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(missing), std::string::npos);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"cka", "--bogus", missing, missing}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  const auto p = synth_corpus(dir);
  EXPECT_EQ(run({"match", "qap", p + "_left.emb", p + "_right.emb", "--m", "500"}).code, 2);
  write_text(dir.file("bad.json"), "{ not json");
  EXPECT_EQ(run({"synth", "--spec", dir.file("bad.json"), "--out-prefix", dir.file("x")}).code, 2);
  const auto help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("match"), std::string::npos);
}

TEST(Cli, RerunsAreByteIdenticalAndThreadCountDoesNotMatter) {
  TempDir dir;
  const auto p = synth_corpus(dir);
  std::vector<std::string> base{"match", "qap", p + "_left.emb", p + "_right.emb", "--m", "10", "--seed", "4",
                                "--no-timestamp"};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };
  const auto a = with({"--threads", "1"}), b = with({"--threads", "1"}), c = with({"--threads", "4"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out, c.out);
  EXPECT_FALSE(a.doc()["run"].contains("threads"));
  ASSERT_EQ(with({"--out", dir.file("report.json")}).code, 0);
  EXPECT_EQ(read_text(dir.file("report.json")), a.out);
}

TEST(Cli, PrettyOutput) {
  TempDir dir;
  const auto p = synth_corpus(dir);
  const auto r = run({"cka", p + "_left.emb", p + "_right.emb", "--pretty", "--no-timestamp"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("task    cka"), std::string::npos);
  EXPECT_NE(r.out.find("cka  "), std::string::npos);
  EXPECT_THROW(json::parse(r.out), json::parse_error);
}
