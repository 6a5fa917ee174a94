#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <random>

#include "ser/train.hpp"

using namespace ser;
using namespace ser::train;

namespace {

// Three Gaussian blobs in 30 dimensions, two rows per source group.
data::Dataset blobs(std::size_t per_class, std::uint64_t seed, double spread = 0.5) {
  data::Dataset ds;
  ds.width = 30;
  ds.label_names = {"a", "b", "c"};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  std::vector<double> row(30);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t j = 0; j < 30; ++j) row[j] = (j % 3 == c ? 1.0 : 0.0) + noise(rng);
      ds.add_row(row, c, "g" + std::to_string(c) + "_" + std::to_string(i / 2));
    }
  }
  return ds;
}

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.input_len = 30;
  c.alfb_filters = {8, 8, 8, 4};
  c.gfb_units = {8, 8};
  c.gfb_dropout = {0.0, 0.0};
  c.dense_units = 8;
  c.n_classes = 3;
  return c;
}

TrainConfig quick(std::size_t epochs, double lr) {
  TrainConfig t;
  t.epochs = epochs;
  t.lr = lr;
  t.batch_size = 16;
  return t;
}

}  // namespace

TEST(Train, ZeroLearningRateLeavesWeightsAndLossUnchanged) {
  const auto ds = blobs(10, 1);
  model::Network net(tiny_model());
  const auto before = net.named_parameters();
  std::vector<std::vector<double>> values;
  for (const auto& p : before) values.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  auto cfg = quick(3, 0.0);
  cfg.batch_size = 64;  // one batch holding every row
  const auto curves = train::train(net, ds, {}, cfg);
  ASSERT_EQ(curves.size(), 3u);
  for (const auto& e : curves) EXPECT_NEAR(e.train_loss, curves[0].train_loss, 1e-12);
  const auto after = net.named_parameters();
  for (std::size_t i = 0; i < after.size(); ++i) {
    EXPECT_TRUE(std::equal(values[i].begin(), values[i].end(), after[i].tensor.data().begin())) << after[i].name;
  }
}

TEST(Train, LearnsSeparableBlobs) {
  const auto train_set = blobs(20, 2), val_set = blobs(10, 3);
  model::Network net(tiny_model());
  auto cfg = quick(40, 1e-2);
  cfg.batch_size = 8;
  const auto curves = train::train(net, train_set, val_set, cfg);
  EXPECT_LT(curves.back().train_loss, 0.5 * curves.front().train_loss);
  EXPECT_GE(score(net, train_set).second, 0.9);
  EXPECT_GT(score(net, val_set).second, 0.5);
}

TEST(Train, SameSeedSameCurves) {
  const auto train_set = blobs(8, 4), val_set = blobs(4, 5);
  auto cfg = tiny_model();
  cfg.gfb_dropout = {0.2, 0.2};
  model::Network a(cfg), b(cfg);
  const auto ca = train::train(a, train_set, val_set, quick(2, 1e-3)), cb = train::train(b, train_set, val_set, quick(2, 1e-3));
  for (std::size_t i = 0; i < ca.size(); ++i) {
    EXPECT_EQ(ca[i].train_loss, cb[i].train_loss);
    EXPECT_EQ(ca[i].val_loss, cb[i].val_loss);
  }
  auto other = quick(2, 1e-3);
  other.seed = 7;
  model::Network c(cfg);
  EXPECT_NE(train::train(c, train_set, val_set, other)[0].train_loss, ca[0].train_loss);
}

TEST(Train, EpochCallbackSeesEveryEpoch) {
  const auto ds = blobs(4, 6);
  model::Network net(tiny_model());
  std::vector<std::size_t> epochs;
  train::train(net, ds, ds, quick(3, 1e-3), [&](const eval::EpochRecord& r) { epochs.push_back(r.epoch); });
  EXPECT_EQ(epochs, (std::vector<std::size_t>{1, 2, 3}));
}

TEST(Train, NonFiniteLossAborts) {
  const auto ds = blobs(10, 7);
  model::Network net(tiny_model());
  try {
    train::train(net, ds, {}, quick(5, 1e250));
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
  }
}

TEST(Train, ConfigValidation) {
  auto cfg = quick(1, 1e-3);
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = quick(0, 1e-3);
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = quick(1, -1.0);
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Predict, ProbabilitiesAndScoreAgree) {
  const auto ds = blobs(5, 8);
  model::Network net(tiny_model());
  const auto p = predict(net, ds, 4);
  ASSERT_EQ(p.size(), ds.size() * 3);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_NEAR(p[3 * i] + p[3 * i + 1] + p[3 * i + 2], 1.0, 1e-12);
  const auto chunked = predict(net, ds, 256);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], chunked[i], 1e-12);
  EXPECT_NEAR(score(net, ds).second, evaluate(net, ds).accuracy, 1e-12);
}

TEST(Jobs, DistinctDeterministicSeeds) {
  const auto base = tiny_model();
  EXPECT_EQ(job_model_config(base, 1).seed, job_model_config(base, 1).seed);
  EXPECT_NE(job_model_config(base, 0).seed, job_model_config(base, 1).seed);
  EXPECT_NE(job_train_config(quick(1, 1e-3), 0).seed, job_train_config(quick(1, 1e-3), 1).seed);
}

TEST(KFoldRun, EverySampleEvaluatedOnceAndJobsDoNotMatter) {
  const auto ds = blobs(10, 9);
  eval::SplitPlan plan;
  plan.k = 3;
  const auto one = kfold_run(ds, tiny_model(), plan, quick(1, 1e-3), 1);
  const auto two = kfold_run(ds, tiny_model(), plan, quick(1, 1e-3), 2);
  ASSERT_EQ(one.folds.size(), 3u);
  std::size_t total = 0;
  for (std::size_t f = 0; f < 3; ++f) {
    total += one.folds[f].n_samples;
    EXPECT_EQ(one.folds[f].accuracy, two.folds[f].accuracy);
    EXPECT_EQ(one.folds[f].confusion, two.folds[f].confusion);
  }
  EXPECT_EQ(total, ds.size());
  EXPECT_EQ(one.mean_accuracy, two.mean_accuracy);
}

TEST(Holdout, RunReportsOnTestPart) {
  const auto ds = blobs(10, 10);
  eval::SplitPlan plan;
  plan.mode = eval::SplitMode::holdout;
  model::Network net(tiny_model());
  const auto r = run_holdout(net, ds, plan, quick(2, 1e-3));
  EXPECT_EQ(r.test_report.n_samples, r.split.test.size());
  EXPECT_EQ(r.curves.size(), 2u);
  EXPECT_EQ(r.split.train.size() + r.split.val.size() + r.split.test.size(), ds.size());
}

TEST(Ablation, OneAccuracyPerRepeat) {
  const auto ds = blobs(10, 11);
  eval::SplitPlan plan;
  plan.mode = eval::SplitMode::holdout;
  const auto runs =
      run_ablation(ds, tiny_model(), {model::Variant::full, model::Variant::no_gfb}, 3, plan, quick(1, 1e-3), 2);
  ASSERT_EQ(runs.size(), 2u);
  for (const auto& r : runs) {
    ASSERT_EQ(r.test_accuracy.size(), 3u);
    EXPECT_EQ(r.median, median(r.test_accuracy));
  }
}

TEST(Median, OddEvenAndEmpty) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(ParallelFor, RunsAllAndRethrows) {
  std::atomic<int> count{0};
  parallel_for(10, 3, [&](std::size_t) { ++count; });
  EXPECT_EQ(count.load(), 10);
  EXPECT_THROW(parallel_for(4, 2, [](std::size_t i) {
                 if (i == 2) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}
