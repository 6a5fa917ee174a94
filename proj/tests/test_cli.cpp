#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "ser/commands.hpp"
#include "ser/dataset.hpp"
#include "ser/runtime.hpp"

using namespace ser;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

config::RunConfig tiny_run(std::size_t classes) {
  config::RunConfig c;
  c.model.alfb_filters = {8, 8, 8, 4};
  c.model.gfb_units = {8, 8};
  c.model.dense_units = 8;
  c.model.n_classes = classes;
  c.train.epochs = 2;
  c.split.k = 3;
  c.propagate_seed();
  return c;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("ser_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    manifest_ = cli::cmd_synth({.n_per_class = 4, .classes = 3, .seed = 5, .duration_s = 0.5, .out_dir = root_ / "synth"});
    auto cfg = tiny_run(3);
    cfg.augment_enabled = false;
    cli::cmd_features(manifest_, cfg, root_ / "plain.csv");
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static inline fs::path root_;
  static inline fs::path manifest_;
};

}  // namespace

TEST_F(CliTest, SynthWritesManifestAndIsReproducible) {
  const auto again = cli::cmd_synth({.n_per_class = 4, .classes = 3, .seed = 5, .duration_s = 0.5, .out_dir = root_ / "synth2"});
  EXPECT_EQ(slurp(manifest_), slurp(again));
  std::size_t wavs = 0;
  for (const auto& e : fs::directory_iterator(root_ / "synth" / "wav")) {
    ++wavs;
    EXPECT_EQ(slurp(e.path()), slurp(root_ / "synth2" / "wav" / e.path().filename())) << e.path();
  }
  EXPECT_EQ(wavs, 12u);
  EXPECT_EQ(audio::read_manifest(manifest_).entries.size(), 12u);
  EXPECT_THROW(cli::cmd_synth({.n_per_class = 1, .classes = 8, .out_dir = root_ / "bad"}), std::invalid_argument);
}

TEST_F(CliTest, FeaturesWithoutAugmentationGiveOneRowPerClip) {
  const auto ds = data::read_feature_csv(root_ / "plain.csv");
  EXPECT_EQ(ds.size(), 12u);
  EXPECT_EQ(ds.width, 150u);
  EXPECT_EQ(std::set<std::string>(ds.groups.begin(), ds.groups.end()).size(), 12u);
  auto cfg = tiny_run(3);
  cfg.augment_enabled = false;
  cli::cmd_features(manifest_, cfg, root_ / "plain_again.csv");
  EXPECT_EQ(slurp(root_ / "plain.csv"), slurp(root_ / "plain_again.csv"));
}

TEST_F(CliTest, FeaturesWithAugmentationGiveSixRowsPerClip) {
  const auto run = cli::cmd_features(manifest_, tiny_run(3), root_ / "aug.csv");
  EXPECT_EQ(run.inputs, 12u);
  EXPECT_EQ(run.rows, 72u);
  const auto ds = data::read_feature_csv(root_ / "aug.csv");
  EXPECT_EQ(ds.size(), 72u);
  EXPECT_EQ(std::set<std::string>(ds.groups.begin(), ds.groups.end()).size(), 12u);
}

TEST_F(CliTest, UnreadableFileIsSkippedAndReported) {
  auto manifest = audio::read_manifest(manifest_);
  std::vector<audio::ManifestEntry> entries(manifest.entries.begin(), manifest.entries.end());
  for (auto& e : entries) e.path = fs::path("synth") / e.path;
  entries.push_back({fs::path("missing.wav"), entries.front().label});
  audio::write_manifest(audio::make_manifest(entries), root_ / "broken.csv");
  auto cfg = tiny_run(3);
  cfg.augment_enabled = false;
  const auto run = cli::cmd_features(root_ / "broken.csv", cfg, root_ / "broken_features.csv");
  EXPECT_EQ(run.rows, 12u);
  ASSERT_EQ(run.failures.size(), 1u);
  EXPECT_NE(run.failures[0].find("missing.wav"), std::string::npos);
}

TEST_F(CliTest, TrainWritesOutputsAndEvaluateReloads) {
  const auto dir = root_ / "train";
  const auto report = cli::cmd_train(root_ / "plain.csv", tiny_run(3), dir);
  for (const char* f : {"report.json", "confusion.csv", "roc.csv", "curves.csv", "model.ckpt", "config.json"}) {
    EXPECT_GT(fs::file_size(dir / f), 0u) << f;
  }
  EXPECT_TRUE(config::read_json(dir / "report.json").contains(cli::kTimestampField));
  EXPECT_FALSE(config::read_json(dir / "config.json")["model"].contains("seed"));
  const auto eval = cli::cmd_evaluate(dir / "model.ckpt", root_ / "plain.csv", tiny_run(3), root_ / "eval");
  EXPECT_EQ(eval.n_samples, 12u);
  auto other = tiny_run(3);
  other.model.dense_units = 4;
  EXPECT_THROW(cli::cmd_evaluate(dir / "model.ckpt", root_ / "plain.csv", other, root_ / "eval2"), std::invalid_argument);
  (void)report;
}

TEST_F(CliTest, KFoldOutputsAreReproducible) {
  const auto a = root_ / "kfold_a", b = root_ / "kfold_b";
  cli::cmd_kfold(root_ / "plain.csv", tiny_run(3), a);
  cli::cmd_kfold(root_ / "plain.csv", tiny_run(3), b);
  auto ja = config::read_json(a / "summary.json"), jb = config::read_json(b / "summary.json");
  ja.erase(cli::kTimestampField);
  jb.erase(cli::kTimestampField);
  EXPECT_EQ(ja, jb);
  for (int f = 1; f <= 3; ++f) {
    const auto fold = "fold_" + std::to_string(f);
    EXPECT_EQ(slurp(a / fold / "confusion.csv"), slurp(b / fold / "confusion.csv"));
    EXPECT_EQ(slurp(a / fold / "curves.csv"), slurp(b / fold / "curves.csv"));
  }
}

TEST_F(CliTest, FeatureShapeMismatchNamesField) {
  try {
    cli::cmd_train(root_ / "plain.csv", tiny_run(4), root_ / "mismatch");
    FAIL();
  } catch (const config::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.n_classes"), std::string::npos);
  }
}

TEST(Params, DefaultTableEndsWithTotal) {
  const auto table = cli::cmd_params({});
  EXPECT_NE(table.find("alfb1    2562\n"), std::string::npos);
  EXPECT_TRUE(table.ends_with("total    9137711\n"));
}

TEST(RunConfig, RoundTripsThroughJson) {
  auto c = tiny_run(3);
  c.seed = 17;
  c.train.lr = 3e-4;
  c.split.augment_scope = eval::AugmentScope::paper_faithful;
  c.propagate_seed();
  const auto back = config::run_config_from_json(config::to_json(c));
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.train, c.train);
  EXPECT_EQ(back.split.augment_scope, c.split.augment_scope);
  EXPECT_EQ(back.seed, 17u);
  EXPECT_EQ(back.augment.rng_seed, 17u);
}

TEST(RunConfig, ErrorsNameTheField) {
  const auto expect_field = [](const char* text, const std::string& field) {
    try {
      config::run_config_from_json(config::Json::parse(text));
      FAIL() << text;
    } catch (const config::ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  expect_field(R"({"model": {"bogus": 1}})", "model.bogus");
  expect_field(R"({"train": {"epochs": "ten"}})", "train.epochs");
  expect_field(R"({"train": {"seed": 3}})", "train.seed");
  expect_field(R"({"split": {"augment_scope": "sometimes"}})", "split.augment_scope");
  expect_field(R"({"model": {"input_len": 100}})", "input_len");
}

TEST(Runtime, AllocatorTuningIsHarmless) { EXPECT_NO_THROW(configure_allocator()); }
