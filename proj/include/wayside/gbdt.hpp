#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "wayside/common.hpp"

namespace wayside::gbdt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Tuning intervals follow the reference ranges; defaults sit mid-range.
struct GbdtConfig {
  double alpha = 0.05;            // L1 on leaf weights, [0.01, 0.1]
  double colsample_bytree = 0.9;  // [0.5, 1.0]
  double subsample = 0.9;         // [0.5, 1.0]
  double learning_rate = 0.15;    // [0.01, 0.3]
  int max_depth = 4;              // [3, 10]
  double min_child_weight = 1.0;  // [1, 6]
  int n_estimators = 80;          // [50, 200]
  double lambda = 1.0;            // L2 on leaf weights (not tuned)
  std::uint64_t seed = 1;

  void validate() const;
};

struct TreeNode {
  int feature = -1;       // -1 marks a leaf
  double threshold = 0.0; // x[feature] < threshold goes left
  int left = -1;
  int right = -1;
  double leaf_value = 0.0;  // learning-rate scaled
};

struct Tree {
  std::vector<TreeNode> nodes;  // node 0 is the root
  double predict(const VectorXd& x) const;
  int depth() const;
};

struct GbdtModel {
  std::vector<Tree> trees;
  double base_score = 0.0;  // log-odds
  GbdtConfig config;
  int n_features = 0;

  double predict_margin(const VectorXd& x) const;
  double predict_proba(const VectorXd& x) const;
};

// p - y and p(1-p): first/second-order terms of the logistic loss.
double logistic_gradient(double p, double y);
double logistic_hessian(double p);
double sigmoid(double z);

struct TrainReport {
  std::vector<double> train_loss;  // weighted mean logistic loss after each round
  int rejected_rows = 0;           // rows dropped for non-finite features
};

GbdtModel train_gbdt(const MatrixXd& features, const VectorXd& labels, const GbdtConfig& cfg,
                     const VectorXd* sample_weights = nullptr, TrainReport* report = nullptr);

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc_roc;  // empty when only one class is present
};

Metrics evaluate(const GbdtModel& model, const MatrixXd& features, const VectorXd& labels,
                 double threshold = 0.5);

Metrics metrics_from_scores(const VectorXd& scores, const VectorXd& labels,
                            double threshold = 0.5);

// Rank-statistic AUC with average-rank tie handling.
double auc_roc(const VectorXd& scores, const VectorXd& labels);

// ---------------------------------------------------------------------------
// Random-search tuning with k-fold cross-validation
// ---------------------------------------------------------------------------

struct Trial {
  GbdtConfig config;
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0.0;
};

struct SearchResult {
  GbdtConfig best;
  double best_accuracy = 0.0;
  std::vector<Trial> trials;
};

GbdtConfig sample_config(Rng& rng);

SearchResult random_search(const MatrixXd& features, const VectorXd& labels, int n_trials,
                           std::uint64_t seed, int folds = 5);

}  // namespace wayside::gbdt
