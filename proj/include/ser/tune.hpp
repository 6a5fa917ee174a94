#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ser/dataset.hpp"
#include "ser/model.hpp"
#include "ser/split.hpp"
#include "ser/train.hpp"

namespace ser::tune {

/// Discrete choices sampled independently per block.
struct SearchSpace {
  std::vector<std::vector<std::size_t>> alfb_filters{{256, 512}, {128, 256, 512}, {64, 128, 256}, {32, 64, 128}};
  std::vector<std::size_t> alfb_kernels{2, 3, 5};
  std::vector<std::size_t> alfb_pools{2, 3, 5};
  std::vector<std::size_t> gfb_units{128, 256, 512};
  std::vector<double> gfb_dropout{0.1, 0.2};
  std::vector<std::size_t> dense_units{8, 16, 32};
  std::vector<double> lr{1e-2, 1e-3, 1e-4};

  /// Throws std::invalid_argument if any choice list is empty.
  void validate() const;
  bool contains(const model::ModelConfig& config, double lr) const;
};

struct Candidate {
  model::ModelConfig model;
  double lr = 0.0;
};

/// Draws a candidate; fields outside the space (input_len, n_classes, eca_mode,
/// variant, pool strides) are taken from `base`.
Candidate sample(const SearchSpace& space, const model::ModelConfig& base, Rng& rng);

/// Validation score of a candidate; larger is better.
using TrialObjective = std::function<double(const Candidate& candidate, std::size_t trial)>;

/// Trains each candidate on the training part of a holdout split for `config.epochs`
/// epochs and returns the validation accuracy.
TrialObjective training_objective(const data::Dataset& dataset, const eval::SplitPlan& plan,
                                  const train::TrainConfig& config);

struct Trial {
  std::size_t index = 0;
  Candidate candidate;
  double score = 0.0;
  std::size_t parameters = 0;
};

struct TuneResult {
  std::vector<Trial> trials;  // in sampling order
  std::size_t best = 0;       // index into trials
};

/// Seeded random search. Candidates are drawn up front, so the log does not
/// depend on `jobs`. Ranking: higher score, then fewer parameters, then earlier trial.
TuneResult tune(const SearchSpace& space, const model::ModelConfig& base, std::size_t budget, std::uint64_t seed,
                const TrialObjective& objective, std::size_t jobs = 1);

}  // namespace ser::tune
