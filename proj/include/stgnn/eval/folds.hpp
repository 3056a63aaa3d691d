#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stgnn/prep/types.hpp"

namespace stgnn::eval {

struct SubjectSummary {
  std::string id;
  int label = 0;
  std::size_t samples = 0;
};

// Subjects in order of first appearance; ContractError if a subject's samples
// disagree on the label.
std::vector<SubjectSummary> summarize_subjects(std::span<const prep::GraphSample> samples);

enum class Role { test, inner_train, validation };

struct FoldPlan {
  std::size_t folds = 0;
  std::vector<SubjectSummary> subjects;
  std::vector<std::size_t> fold_of;              // per subject
  std::vector<std::vector<std::uint8_t>> is_validation;  // [fold][subject], for non-test subjects

  Role role(std::size_t fold, std::size_t subject) const;
  std::vector<std::string> subjects_with(std::size_t fold, Role role) const;
  // Sample indices (into the planning sample list) for one role of one fold.
  std::vector<std::size_t> sample_indices(std::span<const prep::GraphSample> samples, std::size_t fold,
                                          Role role) const;
};

// Whole subjects are dealt to folds greedily: within each class, subjects are
// shuffled, then placed largest first into the fold holding the fewest
// subjects of that class (ties: fewest samples, then lowest index). For every
// fold, one fifth of each class among the remaining subjects (at least one)
// is held out for inner validation.
// ConfigError when k < 2 or k exceeds the subjects available in a class.
FoldPlan plan_folds(const std::vector<SubjectSummary>& subjects, std::size_t k, std::uint64_t seed);
FoldPlan plan_folds(std::span<const prep::GraphSample> samples, std::size_t k, std::uint64_t seed);

// HarnessError if any subject sits in two roles of the same fold, in two
// outer folds, or in no fold.
void check_fold_plan(const FoldPlan& plan);

}  // namespace stgnn::eval
