#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ser/tensor.hpp"

namespace ser::data {

/// Row-major feature table with integer labels and a source group per row.
/// Rows that share a group (augmented copies of one recording) must land on the
/// same side of a split when leakage matters.
struct Dataset {
  std::size_t width = 0;
  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::vector<std::string> groups;
  std::vector<std::string> label_names;

  std::size_t size() const { return labels.size(); }
  std::size_t n_classes() const { return label_names.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * width, width}; }

  void add_row(std::span<const double> features, std::size_t label, std::string group);
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Features of `indices` as a [n, width] tensor.
  ad::Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
  void validate() const;
};

/// Feature CSV: header `f0,...,f{w-1},label`, one row per vector, the label
/// written by name. Groups go to a sidecar file next to it (see groups_path).
void write_feature_csv(const Dataset& dataset, const std::filesystem::path& path);
/// Reads the CSV and, when present, its groups sidecar. Without a sidecar every
/// row is its own group. Class indices follow the sorted set of label names.
Dataset read_feature_csv(const std::filesystem::path& path);
std::filesystem::path groups_path(const std::filesystem::path& csv_path);

/// Column means and standard deviations; constant columns get a deviation of 1.
std::pair<std::vector<double>, std::vector<double>> column_stats(const Dataset& dataset);

}  // namespace ser::data
