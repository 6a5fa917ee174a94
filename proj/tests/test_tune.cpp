#include <gtest/gtest.h>

#include <set>

#include "ser/tune.hpp"

using namespace ser;
using namespace ser::tune;

namespace {

double constant(const Candidate&, std::size_t) { return 0.5; }

}  // namespace

TEST(Tune, BudgetOneRunsOneTrial) {
  const auto r = tune::tune(SearchSpace{}, model::ModelConfig{}, 1, 42, constant);
  ASSERT_EQ(r.trials.size(), 1u);
  EXPECT_EQ(r.best, 0u);
  EXPECT_EQ(r.trials[0].score, 0.5);
}

TEST(Tune, SamplesStayInsideTheSpace) {
  const SearchSpace space;
  const model::ModelConfig base;
  Rng rng(3);
  std::set<std::size_t> first_filters;
  for (int i = 0; i < 200; ++i) {
    const auto c = sample(space, base, rng);
    EXPECT_TRUE(space.contains(c.model, c.lr));
    EXPECT_EQ(c.model.input_len, base.input_len);
    EXPECT_EQ(c.model.n_classes, base.n_classes);
    for (const auto& p : c.model.alfb_pools) EXPECT_EQ(p.stride, 2u);
    EXPECT_NO_THROW(c.model.validate());
    first_filters.insert(c.model.alfb_filters[0]);
  }
  EXPECT_EQ(first_filters, (std::set<std::size_t>{256, 512}));
}

TEST(Tune, EmptyChoiceListThrows) {
  SearchSpace space;
  space.gfb_units.clear();
  EXPECT_THROW(space.validate(), std::invalid_argument);
  EXPECT_THROW(tune::tune(space, {}, 3, 1, constant), std::invalid_argument);
  EXPECT_THROW(tune::tune(SearchSpace{}, {}, 0, 1, constant), std::invalid_argument);
}

TEST(Tune, FindsPlantedOptimum) {
  // Score peaks when every ALFB kernel is 5 and the rate is 1e-3.
  const auto planted = [](const Candidate& c, std::size_t) {
    double s = 0.0;
    for (std::size_t k : c.model.alfb_kernels) s += k == 5 ? 1.0 : 0.0;
    return s + (c.lr == 1e-3 ? 0.5 : 0.0);
  };
  const auto r = tune::tune(SearchSpace{}, model::ModelConfig{}, 200, 11, planted);
  const auto& best = r.trials[r.best];
  EXPECT_EQ(best.candidate.model.alfb_kernels, (std::vector<std::size_t>(4, 5)));
  EXPECT_EQ(best.candidate.lr, 1e-3);
  for (const auto& t : r.trials) EXPECT_LE(t.score, best.score);
}

TEST(Tune, TiesGoToFewerParameters) {
  const auto r = tune::tune(SearchSpace{}, model::ModelConfig{}, 12, 5, constant);
  for (const auto& t : r.trials) {
    EXPECT_GE(t.parameters, r.trials[r.best].parameters);
    EXPECT_EQ(t.parameters, model::Network(t.candidate.model).count_parameters().total);
  }
}

TEST(Tune, DeterministicAndIndependentOfJobs) {
  const auto score = [](const Candidate& c, std::size_t trial) {
    return static_cast<double>(c.model.dense_units) + 0.01 * static_cast<double>(trial % 3);
  };
  const auto a = tune::tune(SearchSpace{}, {}, 8, 9, score, 1), b = tune::tune(SearchSpace{}, {}, 8, 9, score, 3);
  ASSERT_EQ(a.trials.size(), b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    EXPECT_EQ(a.trials[i].candidate.model, b.trials[i].candidate.model);
    EXPECT_EQ(a.trials[i].score, b.trials[i].score);
  }
  EXPECT_EQ(a.best, b.best);
}
