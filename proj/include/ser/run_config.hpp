#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "ser/augment.hpp"
#include "ser/dsp_features.hpp"
#include "ser/metrics.hpp"
#include "ser/model.hpp"
#include "ser/split.hpp"
#include "ser/train.hpp"
#include "ser/tune.hpp"

namespace ser::config {

using Json = nlohmann::ordered_json;

/// Settings shared by all subcommands. One master seed feeds every random
/// stream (init, shuffle, dropout, split, augment, tune).
struct RunConfig {
  std::uint64_t seed = 42;
  std::size_t jobs = 1;
  bool augment_enabled = true;
  model::ModelConfig model;
  train::TrainConfig train;
  eval::SplitPlan split;
  augment::AugmentationPlan augment;
  dsp::ExtractionSettings extraction;
  tune::SearchSpace search;
  std::size_t tune_budget = 20;
  std::size_t tune_epochs = 10;

  /// Copies `seed` into every section.
  void propagate_seed();
  /// Validates every section; messages name the offending field.
  void validate() const;
};

/// Thrown for malformed or unknown configuration fields.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Json to_json(const RunConfig& config);
Json to_json(const model::ModelConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const Json& j);
model::ModelConfig model_config_from_json(const Json& j, model::ModelConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);

Json to_json(const eval::EvalReport& report);
Json to_json(const eval::FoldSummary& summary);
Json to_json(const tune::TuneResult& result);

/// Pretty JSON with a trailing newline.
void write_json(const Json& j, const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

}  // namespace ser::config
