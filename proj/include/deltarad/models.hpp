#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deltarad/table.hpp"

namespace deltarad {

enum class ModelKind { rf, lr, ksvm, mlp };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

enum class SvmKernel { rbf, poly, linear };

/// Tuned hyperparameters; defaults are the values used throughout.
struct ModelConfig {
  ModelKind kind = ModelKind::lr;

  struct Rf {
    int n_trees = 100;
    int max_depth = 20;
    int min_samples_leaf = 4;
    int min_samples_split = 4;
  } rf;

  struct Lr {
    double l2_weight = 0.4;  // coefficient on the summed-loss-scale penalty, bias exempt
    int max_iter = 7000;
    double tol = 1e-8;
  } lr;

  struct Svm {
    double c = 10.0;
    SvmKernel kernel = SvmKernel::rbf;
    int degree = 3;
    int max_iter = 15000;
  } svm;

  struct Mlp {
    std::vector<int> hidden = {100, 100, 100};
    double alpha = 1e-4;       // L2 on weights
    double learning_rate = 1e-3;
    int max_iter = 15000;
  } mlp;
};

struct LrModel {
  std::vector<double> weights;
  double bias = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct TreeNode {
  int feature = -1;        // -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  int leaf_class = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  int predict(const double* x) const;
};

struct RfModel {
  std::vector<DecisionTree> trees;
  /// Per-feature mean impurity decrease, normalized to sum 1.
  std::vector<double> importances;
};

struct SvmModel {
  SvmKernel kernel = SvmKernel::rbf;
  int degree = 3;
  double gamma = 1.0;
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> dual_coef;  // alpha_i * y_i
  double intercept = 0.0;
  double platt_a = 0.0, platt_b = 0.0;
  double decision_value(const double* x, std::size_t d) const;
};

struct MlpModel {
  std::vector<int> layer_sizes;            // input, hidden..., 1
  std::vector<std::vector<double>> weights;  // weights[l]: fan_out x fan_in
  std::vector<std::vector<double>> biases;
  double forward(const double* x) const;   // probability of class 1
};

struct TrainedModel {
  ModelKind kind = ModelKind::lr;
  std::vector<std::string> schema;
  LrModel lr;
  RfModel rf;
  SvmModel svm;
  MlpModel mlp;
};

/// Deterministic training given (cfg, data, seed). Throws on single-class
/// labels or non-finite inputs.
TrainedModel train(const ModelConfig& cfg, const FeatureTable& table,
                   std::uint64_t seed);

/// Per-row probability of class 1. The table schema must match training.
std::vector<double> predict_proba(const TrainedModel& m, const FeatureTable& table);

/// Hard labels: p >= 0.5, except RF which counts votes with ties to class 0.
std::vector<int> predict_label(const TrainedModel& m, const FeatureTable& table);

std::string serialize_model(const TrainedModel& m);
TrainedModel deserialize_model(const std::string& text);

// --- objective internals (exposed for gradient verification) ----------------

/// LR objective: mean log-loss + (l2/2)||w||^2 with unpenalized bias. params
/// = [w..., b]. Returns the loss; writes the gradient when grad is non-null.
double lr_objective(const std::vector<double>& params, const FeatureTable& table,
                    double l2_weight, std::vector<double>* grad);

/// MLP objective: mean log-loss + (alpha/2)*sum||W||^2 / n. Parameters and
/// gradient use the flat layout [W0, b0, W1, b1, ...].
double mlp_objective(const std::vector<double>& params,
                     const std::vector<int>& layer_sizes,
                     const FeatureTable& table, double alpha,
                     std::vector<double>* grad);

}  // namespace deltarad
