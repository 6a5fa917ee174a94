#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ser/dataset.hpp"
#include "ser/metrics.hpp"
#include "ser/model.hpp"
#include "ser/split.hpp"

namespace ser::train {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  double lr = 1e-4;
  std::uint64_t seed = 42;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Raised when the loss becomes NaN or infinite; names epoch and batch.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const eval::EpochRecord&)>;

/// Fits the input standardization on `train_set`, then runs `epochs` passes of
/// shuffled minibatch Adam. After every epoch the validation set (if non-empty)
/// is scored in infer mode. No early stopping.
std::vector<eval::EpochRecord> train(model::Network& net, const data::Dataset& train_set,
                                     const data::Dataset& val_set, const TrainConfig& config,
                                     const EpochCallback& on_epoch = {});

/// Class probabilities [n, classes] in infer mode, computed in chunks.
std::vector<double> predict(model::Network& net, const data::Dataset& set, std::size_t chunk = 256);

/// Mean cross-entropy and accuracy in infer mode.
std::pair<double, double> score(model::Network& net, const data::Dataset& set, std::size_t chunk = 256);

eval::EvalReport evaluate(model::Network& net, const data::Dataset& test_set);

/// Seeds for the job-th independent run (fold, trial, repeat) under a master seed.
model::ModelConfig job_model_config(model::ModelConfig config, std::size_t job);
TrainConfig job_train_config(TrainConfig config, std::size_t job);

struct HoldoutResult {
  eval::HoldoutSplit split;
  std::vector<eval::EpochRecord> curves;
  eval::EvalReport test_report;
};

/// Splits by `plan` (holdout mode), trains on the training part with the
/// validation part for curves, and evaluates on the test part.
HoldoutResult run_holdout(model::Network& net, const data::Dataset& dataset, const eval::SplitPlan& plan,
                          const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Each fold is held out once for evaluation while a fresh model trains on the
/// rest. Folds run on up to `jobs` threads; results do not depend on `jobs`.
eval::FoldSummary kfold_run(const data::Dataset& dataset, const model::ModelConfig& model_config,
                            const eval::SplitPlan& plan, const TrainConfig& config, std::size_t jobs = 1);

struct AblationRun {
  model::Variant variant;
  std::vector<double> test_accuracy;  // one per repeat
  double median = 0.0;
};

/// Holdout accuracy of each variant over `repeats` seeds. Repeat r of every
/// variant shares the split and the seeds, so variants see the same data.
std::vector<AblationRun> run_ablation(const data::Dataset& dataset, const model::ModelConfig& model_config,
                                      const std::vector<model::Variant>& variants, std::size_t repeats,
                                      const eval::SplitPlan& plan, const TrainConfig& config, std::size_t jobs = 1);

double median(std::vector<double> values);

/// Runs task(i) for i in [0, n) on up to `jobs` threads. The first exception is rethrown.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task);

}  // namespace ser::train
