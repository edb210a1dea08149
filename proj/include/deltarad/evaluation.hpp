#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "deltarad/models.hpp"
#include "deltarad/selection.hpp"
#include "deltarad/table.hpp"

namespace deltarad {

struct CvPlan {
  int n_folds = 5;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8};
  bool stratified = true;
};

/// Fold id per sample: deterministic shuffled round-robin within each class.
std::vector<int> stratified_folds(const std::vector<int>& y, int n_folds,
                                  std::uint64_t seed);

double accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred);

/// Mann-Whitney AUC by exact pair counting; ties contribute one half.
double auc(const std::vector<int>& y_true, const std::vector<double>& scores);

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double p = 1.0;          // two-sided
  int n_used = 0;          // pairs remaining after zero-difference removal
  bool comparable = false; // false when every difference is zero
  bool exact = false;      // exact enumeration (n<=20) vs normal approximation
};

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b);

// --- experiment protocol -----------------------------------------------------

struct FoldFit {
  PreprocessState preprocess;
  SelectionResult selection;
  TrainedModel model;
  std::size_t chosen_k = 0;
};

/// Fit on training rows only: the selection size k is tuned by accuracy on a
/// deterministic inner 80/20 split, then everything is refitted on the full
/// training set with the winning k.
FoldFit fit_fold(const FeatureTable& train_rows, const std::string& selector,
                 const ModelConfig& model_cfg, const std::vector<std::size_t>& k_grid,
                 std::uint64_t seed);

struct EvalCell {
  std::string variant, selector, model;
  std::uint64_t seed = 0;
  int fold = 0;
  std::size_t k = 0;
  double accuracy = 0.0, auc = 0.0;
};

struct VariantSummary {
  std::string variant, selector, model;
  double accuracy_mean = 0, accuracy_std = 0;
  double auc_mean = 0, auc_std = 0;
};

struct PairedTest {
  std::string variant_a, variant_b, selector, model, metric;
  WilcoxonResult test;
  bool significant = false;  // p < 0.05
};

struct EvalReport {
  CvPlan plan;
  std::vector<EvalCell> cells;
  std::vector<VariantSummary> summaries;
  std::vector<PairedTest> paired;

  std::string to_json() const;
  std::string cells_csv() const;
  /// Per-model comparison table in the style of the longitudinal results
  /// tables (accuracy and AUC, paired variants side by side, p value).
  std::string render_table(const std::string& variant_a,
                           const std::string& variant_b) const;
};

struct ExperimentSpec {
  CvPlan plan;
  std::vector<std::string> selectors = {"rfe", "rf", "chi2"};
  std::vector<ModelConfig> models;
  std::vector<std::size_t> k_grid = {5, 10, 15, 20};
  /// Variant name pairs to compare with the signed-rank test.
  std::vector<std::pair<std::string, std::string>> pairings;
};

/// Runs the full protocol over named feature tables (all must hold the same
/// patients in the same order). Every fit sees training rows only.
EvalReport run_experiment(const std::map<std::string, FeatureTable>& variants,
                          const ExperimentSpec& spec);

}  // namespace deltarad
