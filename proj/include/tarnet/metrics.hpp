#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tarnet/data.hpp"
#include "tarnet/model.hpp"

namespace tarnet {

/// Fraction of items whose true label is among the k highest scores.
/// Ties rank the lower class index first; k larger than the class count
/// clamps to it.
double topk_accuracy(const std::vector<std::vector<double>>& scores,
                     const std::vector<int>& labels, int k);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Per-class precision/recall/F1 weighted by true-class support. Classes
/// never predicted contribute zero precision.
Prf weighted_prf(const std::vector<int>& truth, const std::vector<int>& pred);

struct ArResult {
  double observed = 0.0;
  double p_value = 1.0;
  int n_permutations = 0;
  uint64_t seed = 0;
};

/// Approximate-randomization paired significance test: the observed statistic
/// is |mean(a) - mean(b)|; each round swaps every pair independently with
/// probability 1/2; two-sided p = (#{perm >= observed} + 1) / (n_perm + 1).
ArResult approx_randomization(const std::vector<double>& scores_a,
                              const std::vector<double>& scores_b, int n_perm,
                              uint64_t seed);

struct UtteranceEval {
  int true_label = 0;
  std::vector<int> ranked;  // top-5 (or fewer) class indices, best first
  bool top1_correct = false;
  bool top5_correct = false;
};

struct EvalReport {
  std::vector<UtteranceEval> utterances;
  double top1 = 0.0;
  double top5 = 0.0;
  Prf prf;

  std::vector<double> top1_correctness() const;
  std::string table() const;
  static std::string csv_header();
  std::string csv_row(const std::string& tag) const;
};

/// Runs the model over full-length utterances and aggregates the metric
/// suite. `jobs` <= 0 uses all hardware threads.
EvalReport evaluate_model(const TarnetModel& model, const Corpus& corpus,
                          const FrontendConfig& fe, int jobs = 1);

}  // namespace tarnet
