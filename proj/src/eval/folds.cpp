#include "stgnn/eval/folds.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "stgnn/errors.hpp"

namespace stgnn::eval {

std::vector<SubjectSummary> summarize_subjects(std::span<const prep::GraphSample> samples) {
  std::vector<SubjectSummary> out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& s : samples) {
    const auto& w = s.window;
    auto [it, inserted] = index.emplace(w.subject_id, out.size());
    if (inserted) {
      out.push_back({w.subject_id, w.label, 0});
    } else if (out[it->second].label != w.label) {
      throw ContractError("subject " + w.subject_id + " has samples with different labels");
    }
    ++out[it->second].samples;
  }
  return out;
}

Role FoldPlan::role(std::size_t fold, std::size_t subject) const {
  if (fold_of[subject] == fold) return Role::test;
  return is_validation[fold][subject] ? Role::validation : Role::inner_train;
}

std::vector<std::string> FoldPlan::subjects_with(std::size_t fold, Role r) const {
  std::vector<std::string> out;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    if (role(fold, s) == r) out.push_back(subjects[s].id);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::sample_indices(std::span<const prep::GraphSample> samples,
                                                  std::size_t fold, Role r) const {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t s = 0; s < subjects.size(); ++s) index.emplace(subjects[s].id, s);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto it = index.find(samples[i].window.subject_id);
    if (it == index.end()) throw HarnessError("sample from unplanned subject " + samples[i].window.subject_id);
    if (role(fold, it->second) == r) out.push_back(i);
  }
  return out;
}

FoldPlan plan_folds(const std::vector<SubjectSummary>& subjects, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("need at least 2 folds, got " + std::to_string(k));
  std::vector<std::size_t> by_class[2];
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const int label = subjects[s].label;
    if (label != 0 && label != 1) throw ContractError("labels must be 0 or 1");
    by_class[label].push_back(s);
  }
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < k) {
      throw ConfigError(std::to_string(k) + " folds need at least " + std::to_string(k) +
                        " subjects per class; class " + std::to_string(c) + " has " +
                        std::to_string(by_class[c].size()));
    }
  }

  FoldPlan plan;
  plan.folds = k;
  plan.subjects = subjects;
  plan.fold_of.assign(subjects.size(), 0);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> total(k, 0);
  for (int c = 0; c < 2; ++c) {
    std::vector<std::size_t> members = by_class[c];
    std::shuffle(members.begin(), members.end(), rng);
    std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return subjects[a].samples > subjects[b].samples;
    });
    std::vector<std::size_t> in_class(k, 0);
    for (std::size_t s : members) {
      std::size_t best = 0;
      for (std::size_t f = 1; f < k; ++f) {
        if (std::tie(in_class[f], total[f]) < std::tie(in_class[best], total[best])) best = f;
      }
      plan.fold_of[s] = best;
      ++in_class[best];
      total[best] += subjects[s].samples;
    }
  }

  plan.is_validation.assign(k, std::vector<std::uint8_t>(subjects.size(), 0));
  for (std::size_t f = 0; f < k; ++f) {
    std::mt19937_64 inner(seed ^ (0x9e3779b97f4a7c15ULL * (f + 1)));
    for (int c = 0; c < 2; ++c) {
      std::vector<std::size_t> pool;
      for (std::size_t s : by_class[c]) {
        if (plan.fold_of[s] != f) pool.push_back(s);
      }
      if (pool.size() < 2) {
        throw ConfigError("fold " + std::to_string(f) + " leaves fewer than 2 training subjects in class " +
                          std::to_string(c));
      }
      std::shuffle(pool.begin(), pool.end(), inner);
      const auto held = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(pool.size() / 5.0)));
      for (std::size_t i = 0; i < held; ++i) plan.is_validation[f][pool[i]] = 1;
    }
  }
  check_fold_plan(plan);
  return plan;
}

FoldPlan plan_folds(std::span<const prep::GraphSample> samples, std::size_t k, std::uint64_t seed) {
  return plan_folds(summarize_subjects(samples), k, seed);
}

void check_fold_plan(const FoldPlan& plan) {
  const std::size_t n = plan.subjects.size();
  if (plan.fold_of.size() != n || plan.is_validation.size() != plan.folds) {
    throw HarnessError("fold plan tables are inconsistent");
  }
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t s = 0; s < n; ++s) {
    if (!seen.emplace(plan.subjects[s].id, s).second) {
      throw HarnessError("subject " + plan.subjects[s].id + " is listed twice");
    }
    if (plan.fold_of[s] >= plan.folds) throw HarnessError("subject " + plan.subjects[s].id + " has no fold");
  }
  for (std::size_t f = 0; f < plan.folds; ++f) {
    if (plan.is_validation[f].size() != n) throw HarnessError("fold plan tables are inconsistent");
    std::size_t test = 0, train = 0, val = 0;
    for (std::size_t s = 0; s < n; ++s) {
      if (plan.fold_of[s] == f && plan.is_validation[f][s]) {
        throw HarnessError("subject " + plan.subjects[s].id + " is both test and validation in fold " +
                           std::to_string(f));
      }
      switch (plan.role(f, s)) {
        case Role::test: ++test; break;
        case Role::inner_train: ++train; break;
        case Role::validation: ++val; break;
      }
    }
    if (test == 0 || train == 0 || val == 0) {
      throw HarnessError("fold " + std::to_string(f) + " has an empty test, train or validation set");
    }
  }
}

}  // namespace stgnn::eval
