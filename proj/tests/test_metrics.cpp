#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ser/metrics.hpp"

using namespace ser::eval;

namespace {

// Probability that a random positive outranks a random negative; ties count half.
double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& positive) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (!positive[i] || positive[j]) continue;
      pairs += 1.0;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST(Metrics, PerfectPredictions) {
  const std::vector<std::size_t> y{0, 1, 2, 2, 1, 0, 2};
  const auto r = classification_report(y, y, 3);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  EXPECT_DOUBLE_EQ(r.f1, 1.0);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < 3; ++p) EXPECT_EQ(r.confusion[c][p], c == p ? std::count(y.begin(), y.end(), c) : 0);
  }
}

TEST(Metrics, BinaryCountsGiveHandComputedScores) {
  // Class 1 as positive: TP 8, FP 2, FN 4, TN 6.
  std::vector<std::size_t> truth, pred;
  auto push = [&](std::size_t t, std::size_t p, int n) {
    for (int i = 0; i < n; ++i) {
      truth.push_back(t);
      pred.push_back(p);
    }
  };
  push(1, 1, 8);
  push(0, 1, 2);
  push(1, 0, 4);
  push(0, 0, 6);
  const auto m = class_metrics(confusion_matrix(truth, pred, 2));
  EXPECT_NEAR(m[1].precision, 0.8, 1e-12);
  EXPECT_NEAR(m[1].recall, 8.0 / 12.0, 1e-12);
  EXPECT_NEAR(m[1].f1, 2 * 0.8 * (2.0 / 3.0) / (0.8 + 2.0 / 3.0), 1e-12);
  EXPECT_NEAR(m[1].f1, 0.7272727272727273, 1e-12);
  EXPECT_EQ(m[1].support, 12u);
}

TEST(Metrics, ZeroSupportClassScoresZero) {
  const std::vector<std::size_t> truth{0, 0, 1}, pred{0, 1, 1};
  const auto r = classification_report(truth, pred, 3);
  EXPECT_EQ(r.per_class[2].support, 0u);
  EXPECT_EQ(r.per_class[2].precision, 0.0);
  EXPECT_EQ(r.per_class[2].recall, 0.0);
  EXPECT_EQ(r.per_class[2].f1, 0.0);
}

TEST(Metrics, IdentitiesHoldOnRandomPredictions) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<std::size_t> cls(0, 6);
    std::vector<std::size_t> truth(40), pred(40);
    for (auto& v : truth) v = cls(rng);
    for (auto& v : pred) v = cls(rng);
    const auto r = classification_report(truth, pred, 7);
    std::size_t trace = 0, total = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      trace += r.confusion[c][c];
      total += std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), std::size_t{0});
      EXPECT_GE(r.per_class[c].f1, std::min(r.per_class[c].precision, r.per_class[c].recall) - 1e-12);
      EXPECT_LE(r.per_class[c].f1, std::max(r.per_class[c].precision, r.per_class[c].recall) + 1e-12);
    }
    EXPECT_EQ(total, 40u);
    EXPECT_NEAR(r.accuracy, static_cast<double>(trace) / 40.0, 1e-12);
    EXPECT_NEAR(r.accuracy, r.recall, 1e-12);
    EXPECT_NO_THROW(check_identities(r));
  }
}

TEST(Metrics, CheckIdentitiesRejectsInconsistentReport) {
  const std::vector<std::size_t> y{0, 1, 1};
  auto r = classification_report(y, y, 2);
  r.accuracy = 0.5;
  EXPECT_THROW(check_identities(r), std::logic_error);
}

TEST(Metrics, ArgmaxTakesFirstMaximum) {
  const std::vector<double> row{0.1, 0.7, 0.7, 0.2};
  EXPECT_EQ(argmax(row), 1u);
}

TEST(Roc, SeparableScoresGiveUnitArea) {
  const std::vector<double> scores{0.9, 0.1, 0.8, 0.2, 0.3, 0.7, 0.2, 0.8};  // [4, 2]
  const std::vector<std::size_t> truth{0, 0, 1, 1};
  const auto roc = roc_auc(scores, truth, 2);
  for (const auto& c : roc) {
    ASSERT_TRUE(c.defined);
    EXPECT_DOUBLE_EQ(c.auc, 1.0);
    EXPECT_EQ(c.fpr.front(), 0.0);
    EXPECT_EQ(c.tpr.back(), 1.0);
  }
}

TEST(Roc, AverageOverLabelPermutationsIsOneHalf) {
  // Every arrangement of two positives among four distinct scores.
  const std::vector<double> s{0.1, 0.4, 0.6, 0.9};
  std::vector<int> pos{0, 0, 1, 1};
  double total = 0.0;
  int count = 0;
  do {
    std::vector<double> scores;
    std::vector<std::size_t> truth;
    for (std::size_t i = 0; i < 4; ++i) {
      scores.push_back(1.0 - s[i]);
      scores.push_back(s[i]);
      truth.push_back(static_cast<std::size_t>(pos[i]));
    }
    total += roc_auc(scores, truth, 2)[1].auc;
    ++count;
  } while (std::next_permutation(pos.begin(), pos.end()));
  EXPECT_EQ(count, 6);
  EXPECT_NEAR(total / count, 0.5, 1e-12);
}

TEST(Roc, MatchesPairwiseOracleWithTies) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> coarse(0, 5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 25;
    std::vector<double> scores(n * 3);
    std::vector<std::size_t> truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = i % 3;
      for (std::size_t c = 0; c < 3; ++c) scores[i * 3 + c] = coarse(rng) / 5.0;
    }
    const auto roc = roc_auc(scores, truth, 3);
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<double> col;
      std::vector<int> positive;
      for (std::size_t i = 0; i < n; ++i) {
        col.push_back(scores[i * 3 + c]);
        positive.push_back(truth[i] == c);
      }
      EXPECT_NEAR(roc[c].auc, pairwise_auc(col, positive), 1e-12);
    }
  }
}

TEST(Roc, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> scores(60), squashed(60);
  std::vector<std::size_t> truth(30);
  for (std::size_t i = 0; i < 30; ++i) truth[i] = i % 2;
  for (std::size_t i = 0; i < 60; ++i) {
    scores[i] = u(rng);
    squashed[i] = std::exp(3.0 * scores[i]) - 7.0;
  }
  const auto a = roc_auc(scores, truth, 2), b = roc_auc(squashed, truth, 2);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(a[c].auc, b[c].auc, 1e-12);
}

TEST(Roc, DegenerateClassIsUndefined) {
  const std::vector<double> scores{0.6, 0.3, 0.1, 0.5, 0.4, 0.1};
  const std::vector<std::size_t> truth{0, 0};
  const auto roc = roc_auc(scores, truth, 3);
  EXPECT_FALSE(roc[0].defined);  // no negatives
  EXPECT_FALSE(roc[1].defined);  // no positives
  EXPECT_FALSE(roc[2].defined);
}

TEST(Roc, CurveIsMonotone) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> scores(100);
  std::vector<std::size_t> truth(50);
  for (auto& v : scores) v = u(rng);
  for (std::size_t i = 0; i < 50; ++i) truth[i] = i % 2;
  for (const auto& c : roc_auc(scores, truth, 2)) {
    EXPECT_TRUE(std::is_sorted(c.fpr.begin(), c.fpr.end()));
    EXPECT_TRUE(std::is_sorted(c.tpr.begin(), c.tpr.end()));
    EXPECT_GE(c.auc, 0.0);
    EXPECT_LE(c.auc, 1.0);
  }
}

TEST(Folds, MeanOfFoldAccuracies) {
  std::vector<EvalReport> folds;
  for (double acc : {0.9984, 0.9968, 0.9968, 0.9952, 0.9952}) {
    EvalReport r;
    r.accuracy = acc;
    folds.push_back(r);
  }
  const auto s = summarize_folds(folds);
  EXPECT_NEAR(s.mean_accuracy, 0.99648, 1e-12);
  EXPECT_EQ(s.folds.size(), 5u);
  EXPECT_THROW(mean(std::vector<double>{}), std::invalid_argument);
}
