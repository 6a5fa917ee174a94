#include "ser/tune.hpp"

#include <algorithm>
#include <memory>
#include <stdexcept>

namespace ser::tune {

namespace {

template <typename T>
const T& pick(const std::vector<T>& choices, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, choices.size() - 1);
  return choices[dist(rng)];
}

template <typename T>
bool has(const std::vector<T>& choices, const T& v) {
  return std::find(choices.begin(), choices.end(), v) != choices.end();
}

}  // namespace

void SearchSpace::validate() const {
  auto require = [](bool ok, const char* field) {
    if (!ok) throw std::invalid_argument(std::string("search space: '") + field + "' has no choices");
  };
  require(alfb_filters.size() == 4, "alfb_filters (need 4 blocks)");
  for (const auto& f : alfb_filters) require(!f.empty(), "alfb_filters");
  require(!alfb_kernels.empty(), "alfb_kernels");
  require(!alfb_pools.empty(), "alfb_pools");
  require(!gfb_units.empty(), "gfb_units");
  require(!gfb_dropout.empty(), "gfb_dropout");
  require(!dense_units.empty(), "dense_units");
  require(!lr.empty(), "lr");
}

bool SearchSpace::contains(const model::ModelConfig& config, double rate) const {
  for (std::size_t i = 0; i < 4; ++i) {
    if (!has(alfb_filters[i], config.alfb_filters[i]) || !has(alfb_kernels, config.alfb_kernels[i]) ||
        !has(alfb_pools, config.alfb_pools[i].pool)) {
      return false;
    }
  }
  for (std::size_t j = 0; j < config.gfb_units.size(); ++j) {
    if (!has(gfb_units, config.gfb_units[j]) || !has(gfb_dropout, config.gfb_dropout[j])) return false;
  }
  return has(dense_units, config.dense_units) && has(lr, rate);
}

Candidate sample(const SearchSpace& space, const model::ModelConfig& base, Rng& rng) {
  Candidate c{base, 0.0};
  for (std::size_t i = 0; i < 4; ++i) {
    c.model.alfb_filters[i] = pick(space.alfb_filters[i], rng);
    c.model.alfb_kernels[i] = pick(space.alfb_kernels, rng);
    c.model.alfb_pools[i].pool = pick(space.alfb_pools, rng);
  }
  for (std::size_t j = 0; j < c.model.gfb_units.size(); ++j) {
    c.model.gfb_units[j] = pick(space.gfb_units, rng);
    c.model.gfb_dropout[j] = pick(space.gfb_dropout, rng);
  }
  c.model.dense_units = pick(space.dense_units, rng);
  c.lr = pick(space.lr, rng);
  return c;
}

TrialObjective training_objective(const data::Dataset& dataset, const eval::SplitPlan& plan,
                                  const train::TrainConfig& config) {
  auto split = std::make_shared<eval::HoldoutSplit>(eval::holdout_split(dataset.labels, dataset.groups, plan));
  auto train_set = std::make_shared<data::Dataset>(dataset.subset(split->train));
  auto val_set = std::make_shared<data::Dataset>(dataset.subset(split->val.empty() ? split->test : split->val));
  return [=](const Candidate& c, std::size_t trial) {
    model::Network net(train::job_model_config(c.model, trial));
    auto tc = train::job_train_config(config, trial);
    tc.lr = c.lr;
    train::train(net, *train_set, *val_set, tc);
    return train::score(net, *val_set).second;
  };
}

TuneResult tune(const SearchSpace& space, const model::ModelConfig& base, std::size_t budget, std::uint64_t seed,
                const TrialObjective& objective, std::size_t jobs) {
  space.validate();
  base.validate();
  if (budget < 1) throw std::invalid_argument("tune: budget must be at least 1");

  Rng rng(derive_seed(seed, "tune"));
  TuneResult result;
  for (std::size_t t = 0; t < budget; ++t) {
    Trial trial;
    trial.index = t;
    trial.candidate = sample(space, base, rng);
    trial.parameters = model::Network(trial.candidate.model).count_parameters().total;
    result.trials.push_back(std::move(trial));
  }
  train::parallel_for(budget, jobs, [&](std::size_t t) {
    result.trials[t].score = objective(result.trials[t].candidate, t);
  });

  for (std::size_t t = 1; t < budget; ++t) {
    const auto& a = result.trials[t];
    const auto& b = result.trials[result.best];
    if (a.score > b.score || (a.score == b.score && a.parameters < b.parameters)) result.best = t;
  }
  return result;
}

}  // namespace ser::tune
