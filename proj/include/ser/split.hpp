#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ser::eval {

enum class SplitMode { holdout, kfold };

/// train_only: rows sharing a source group stay on one side of every split.
/// paper_faithful: every row is split independently, as if augmentation came first.
enum class AugmentScope { train_only, paper_faithful };

std::string to_string(SplitMode mode);
std::string to_string(AugmentScope scope);
SplitMode parse_split_mode(const std::string& s);
AugmentScope parse_augment_scope(const std::string& s);

struct SplitPlan {
  SplitMode mode = SplitMode::kfold;
  std::array<std::size_t, 3> ratios{60, 25, 15};  // train, validation, test
  std::size_t k = 5;
  bool stratified = true;
  std::uint64_t seed = 42;
  AugmentScope augment_scope = AugmentScope::train_only;

  void validate() const;
};

struct HoldoutSplit {
  std::vector<std::size_t> train, val, test;
};

/// Stratified holdout: each class is shuffled and spread evenly over [0, 1), then
/// all units are cut at the global ratio boundaries (largest-remainder rounding).
HoldoutSplit holdout_split(std::span<const std::size_t> labels, std::span<const std::string> groups,
                           const SplitPlan& plan);

/// Stratified k folds: each class is shuffled and dealt round-robin, continuing
/// the deal across classes, so per-class fold sizes differ by at most one.
std::vector<std::vector<std::size_t>> kfold_split(std::span<const std::size_t> labels,
                                                  std::span<const std::string> groups, const SplitPlan& plan);

/// All indices not in `fold`, ascending.
std::vector<std::size_t> complement(std::size_t n, std::span<const std::size_t> fold);

}  // namespace ser::eval
