#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deltarad/table.hpp"

namespace deltarad {

/// Per-feature statistics fitted on training rows only: train median for
/// imputation, then min-max scaling to [0,1]. Features whose observed train
/// values are all in {0,1} (the binary clinical covariates) pass through
/// unscaled.
struct PreprocessState {
  std::vector<std::string> feature_names;
  std::vector<double> min, max, median;
  std::vector<std::uint8_t> passthrough;
};

PreprocessState fit_preprocess(const FeatureTable& train);

/// Impute missing cells with the train median, scale, and clamp to [0,1]
/// (passthrough features are only imputed).
FeatureTable apply_preprocess(const PreprocessState& state, const FeatureTable& t);

/// chi-squared association of each non-negative feature with the label:
/// observed class sums vs sums expected from class priors.
std::vector<double> chi2_scores(const FeatureTable& t);

/// Normalized mean-impurity-decrease importances from a 100-tree forest.
std::vector<double> rf_importance_scores(const FeatureTable& t, std::uint64_t seed);

struct SelectionResult {
  std::string method;
  std::vector<std::string> names;       // selected, in rank order
  std::vector<std::size_t> indices;     // columns in the input table
  std::vector<double> scores;           // per selected feature
};

/// Recursive feature elimination driven by |LR coefficient|, one drop per
/// refit until k remain. LR non-convergence is surfaced as an error.
SelectionResult rfe(const FeatureTable& t, std::size_t k, std::uint64_t seed);

/// method in {"chi2", "rf", "rfe"}; chi2/rf take the top-k by score with
/// ties broken by schema order.
SelectionResult select(const std::string& method, const FeatureTable& t,
                       std::size_t k, std::uint64_t seed);

std::string selection_to_json(const SelectionResult& r);

}  // namespace deltarad
