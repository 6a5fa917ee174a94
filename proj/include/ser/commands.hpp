#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ser/run_config.hpp"

namespace ser::cli {

namespace fs = std::filesystem;

struct SynthOptions {
  std::size_t n_per_class = 20;
  std::size_t classes = 7;
  std::uint64_t seed = 42;
  double duration_s = 1.0;
  fs::path out_dir;
};

/// Writes classes x n_per_class WAVs under out_dir/wav and out_dir/manifest.csv.
/// Returns the manifest path.
fs::path cmd_synth(const SynthOptions& options);

struct FeatureRun {
  std::size_t inputs = 0;
  std::size_t rows = 0;
  std::vector<std::string> failures;  // "path: reason"
};

/// One feature row per clip, or per augmented variant when augmentation is
/// enabled. Unreadable files are reported and skipped; fails only if none load.
FeatureRun cmd_features(const fs::path& manifest, const config::RunConfig& config, const fs::path& out_csv);

/// Writes the six variants of every manifest clip as WAVs plus a new manifest.
FeatureRun cmd_augment(const fs::path& manifest, const config::RunConfig& config, const fs::path& out_dir);

/// Holdout training: checkpoint, curves, test report, confusion and ROC files.
eval::EvalReport cmd_train(const fs::path& features, const config::RunConfig& config, const fs::path& out_dir);

/// k-fold run: per-fold reports under fold_<i>/ and summary.json.
eval::FoldSummary cmd_kfold(const fs::path& features, const config::RunConfig& config, const fs::path& out_dir);

/// Scores a saved checkpoint on a feature file.
eval::EvalReport cmd_evaluate(const fs::path& checkpoint, const fs::path& features, const config::RunConfig& config,
                              const fs::path& out_dir);

/// Per-block parameter table ending in "total <n>".
std::string cmd_params(const model::ModelConfig& config);

/// Random search; writes trials.csv, tune.json and best_config.json.
tune::TuneResult cmd_tune(const fs::path& features, const config::RunConfig& config, const fs::path& out_dir);

/// Name of the timestamp field in report and summary JSON; excluded from
/// reproducibility comparisons.
inline constexpr const char* kTimestampField = "generated_at";

}  // namespace ser::cli
