#include "ser/split.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <tuple>

#include "ser/rng.hpp"

namespace ser::eval {

namespace {

struct Unit {
  std::size_t label;
  std::vector<std::size_t> members;
};

// Splitting units: source groups in train_only scope, single rows otherwise.
// Returned per stratum, in first-appearance order.
std::vector<std::vector<Unit>> strata(std::span<const std::size_t> labels, std::span<const std::string> groups,
                                      const SplitPlan& plan) {
  if (labels.empty()) throw std::invalid_argument("split: empty dataset");
  if (groups.size() != labels.size()) throw std::invalid_argument("split: groups do not match labels");

  std::vector<Unit> units;
  if (plan.augment_scope == AugmentScope::train_only) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto [it, fresh] = index.emplace(groups[i], units.size());
      if (fresh) units.push_back({labels[i], {}});
      if (units[it->second].label != labels[i]) {
        throw std::invalid_argument("split: group '" + groups[i] + "' mixes labels");
      }
      units[it->second].members.push_back(i);
    }
  } else {
    for (std::size_t i = 0; i < labels.size(); ++i) units.push_back({labels[i], {i}});
  }

  const std::size_t n_strata = plan.stratified ? *std::max_element(labels.begin(), labels.end()) + 1 : 1;
  std::vector<std::vector<Unit>> out(n_strata);
  for (auto& u : units) out[plan.stratified ? u.label : 0].push_back(std::move(u));

  Rng rng(derive_seed(plan.seed, "split"));
  for (auto& s : out) std::shuffle(s.begin(), s.end(), rng);
  return out;
}

void require_members(const std::vector<std::vector<Unit>>& strata, std::size_t minimum) {
  for (std::size_t c = 0; c < strata.size(); ++c) {
    if (!strata[c].empty() && strata[c].size() < minimum) {
      throw std::invalid_argument("split: class " + std::to_string(c) + " has " + std::to_string(strata[c].size()) +
                                  " units, need at least " + std::to_string(minimum) + " to stratify");
    }
  }
}

}  // namespace

std::string to_string(SplitMode mode) { return mode == SplitMode::holdout ? "holdout" : "kfold"; }
std::string to_string(AugmentScope scope) { return scope == AugmentScope::train_only ? "train_only" : "paper_faithful"; }

SplitMode parse_split_mode(const std::string& s) {
  if (s == "holdout") return SplitMode::holdout;
  if (s == "kfold") return SplitMode::kfold;
  throw std::invalid_argument("unknown split mode '" + s + "' (expected holdout or kfold)");
}

AugmentScope parse_augment_scope(const std::string& s) {
  if (s == "train_only") return AugmentScope::train_only;
  if (s == "paper_faithful") return AugmentScope::paper_faithful;
  throw std::invalid_argument("unknown augment scope '" + s + "' (expected train_only or paper_faithful)");
}

void SplitPlan::validate() const {
  if (ratios[0] + ratios[1] + ratios[2] != 100) throw std::invalid_argument("split.ratios: must sum to 100");
  if (ratios[0] == 0) throw std::invalid_argument("split.ratios: training share must be positive");
  if (k < 2) throw std::invalid_argument("split.k: must be at least 2");
}

HoldoutSplit holdout_split(std::span<const std::size_t> labels, std::span<const std::string> groups,
                           const SplitPlan& plan) {
  plan.validate();
  const auto units = strata(labels, groups, plan);
  if (plan.stratified) require_members(units, 3);

  // (position in [0,1), stratum, rank) orders units so that any prefix is
  // close to class-proportional.
  std::vector<std::tuple<double, std::size_t, std::size_t>> keys;
  for (std::size_t c = 0; c < units.size(); ++c) {
    const double n = static_cast<double>(units[c].size());
    for (std::size_t j = 0; j < units[c].size(); ++j) keys.emplace_back((static_cast<double>(j) + 0.5) / n, c, j);
  }
  std::sort(keys.begin(), keys.end());

  const std::size_t total = keys.size();
  std::array<std::size_t, 3> counts{};
  std::array<std::size_t, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    counts[s] = total * plan.ratios[s] / 100;
    remainders[s] = total * plan.ratios[s] % 100;
    assigned += counts[s];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[order[i % 3]];

  HoldoutSplit out;
  std::array<std::vector<std::size_t>*, 3> sides{&out.train, &out.val, &out.test};
  std::size_t pos = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < counts[s]; ++k, ++pos) {
      const auto& [key, c, j] = keys[pos];
      const auto& members = units[c][j].members;
      sides[s]->insert(sides[s]->end(), members.begin(), members.end());
    }
    std::sort(sides[s]->begin(), sides[s]->end());
  }
  return out;
}

std::vector<std::vector<std::size_t>> kfold_split(std::span<const std::size_t> labels,
                                                  std::span<const std::string> groups, const SplitPlan& plan) {
  plan.validate();
  const auto units = strata(labels, groups, plan);
  if (plan.stratified) require_members(units, plan.k);
  else if (units[0].size() < plan.k) throw std::invalid_argument("split: fewer units than folds");

  std::vector<std::vector<std::size_t>> folds(plan.k);
  std::size_t deal = 0;
  for (const auto& stratum : units) {
    for (const auto& u : stratum) {
      auto& f = folds[deal++ % plan.k];
      f.insert(f.end(), u.members.begin(), u.members.end());
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::size_t> complement(std::size_t n, std::span<const std::size_t> fold) {
  std::vector<bool> taken(n, false);
  for (std::size_t i : fold) taken.at(i) = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!taken[i]) out.push_back(i);
  }
  return out;
}

}  // namespace ser::eval
