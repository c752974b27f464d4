#include "wayside/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wayside::gbdt {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double logistic_gradient(double p, double y) { return p - y; }
double logistic_hessian(double p) { return p * (1.0 - p); }

void GbdtConfig::validate() const {
  const bool ok = alpha >= 0.01 && alpha <= 0.1 && colsample_bytree >= 0.5 &&
                  colsample_bytree <= 1.0 && subsample >= 0.5 && subsample <= 1.0 &&
                  learning_rate >= 0.01 && learning_rate <= 0.3 && max_depth >= 3 &&
                  max_depth <= 10 && min_child_weight >= 1.0 && min_child_weight <= 6.0 &&
                  n_estimators >= 50 && n_estimators <= 200;
  if (!ok) throw ConfigError("GbdtConfig: a field lies outside its tuning interval");
}

double Tree::predict(const VectorXd& x) const {
  int at = 0;
  while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
    const TreeNode& n = nodes[static_cast<std::size_t>(at)];
    at = x[n.feature] < n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(at)].leaf_value;
}

int Tree::depth() const {
  // breadth-first walk from the root
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    auto [at, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const TreeNode& n = nodes[static_cast<std::size_t>(at)];
    if (n.feature >= 0) {
      stack.push_back({n.left, d + 1});
      stack.push_back({n.right, d + 1});
    }
  }
  return deepest;
}

double GbdtModel::predict_margin(const VectorXd& x) const {
  if (x.size() != n_features) throw DomainError("predict: feature layout mismatch");
  double margin = base_score;
  for (const Tree& t : trees) margin += t.predict(x);
  return margin;
}

double GbdtModel::predict_proba(const VectorXd& x) const { return sigmoid(predict_margin(x)); }

namespace {

double soft_threshold(double g, double alpha) {
  if (g > alpha) return g - alpha;
  if (g < -alpha) return g + alpha;
  return 0.0;
}

double leaf_objective(double g, double h, double alpha, double lambda) {
  const double t = soft_threshold(g, alpha);
  return t * t / (h + lambda);
}

double leaf_weight(double g, double h, double alpha, double lambda) {
  return -soft_threshold(g, alpha) / (h + lambda);
}

struct Builder {
  const MatrixXd& x;
  const VectorXd& grad;
  const VectorXd& hess;
  const GbdtConfig& cfg;
  const std::vector<int>& features;
  Tree tree;

  int build(std::vector<int>& rows, int depth) {
    double g_sum = 0.0, h_sum = 0.0;
    for (int r : rows) {
      g_sum += grad[r];
      h_sum += hess[r];
    }

    int best_feature = -1;
    double best_threshold = 0.0, best_gain = 0.0;
    if (depth < cfg.max_depth && rows.size() >= 2) {
      const double parent_obj = leaf_objective(g_sum, h_sum, cfg.alpha, cfg.lambda);
      for (int f : features) {
        std::vector<int> order = rows;
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return x(a, f) < x(b, f); });
        double gl = 0.0, hl = 0.0;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
          gl += grad[order[i]];
          hl += hess[order[i]];
          if (x(order[i], f) == x(order[i + 1], f)) continue;  // no split between ties
          const double gr = g_sum - gl, hr = h_sum - hl;
          if (hl < cfg.min_child_weight || hr < cfg.min_child_weight) continue;
          const double gain = 0.5 * (leaf_objective(gl, hl, cfg.alpha, cfg.lambda) +
                                     leaf_objective(gr, hr, cfg.alpha, cfg.lambda) - parent_obj);
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = f;
            best_threshold = 0.5 * (x(order[i], f) + x(order[i + 1], f));
          }
        }
      }
    }

    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (best_feature < 0) {
      tree.nodes[static_cast<std::size_t>(node_id)].leaf_value =
          cfg.learning_rate * leaf_weight(g_sum, h_sum, cfg.alpha, cfg.lambda);
      return node_id;
    }

    std::vector<int> left_rows, right_rows;
    for (int r : rows) {
      (x(r, best_feature) < best_threshold ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int left_id = build(left_rows, depth + 1);
    const int right_id = build(right_rows, depth + 1);
    TreeNode& n = tree.nodes[static_cast<std::size_t>(node_id)];
    n.feature = best_feature;
    n.threshold = best_threshold;
    n.left = left_id;
    n.right = right_id;
    return node_id;
  }
};

}  // namespace

GbdtModel train_gbdt(const MatrixXd& features, const VectorXd& labels, const GbdtConfig& cfg,
                     const VectorXd* sample_weights, TrainReport* report) {
  if (features.rows() != labels.size())
    throw DomainError("train_gbdt: features/labels size mismatch");

  // Reject rows carrying non-finite features.
  std::vector<int> keep;
  for (int r = 0; r < features.rows(); ++r) {
    if (features.row(r).allFinite() && std::isfinite(labels[r]))
      keep.push_back(r);
  }
  const int rejected = static_cast<int>(features.rows()) - static_cast<int>(keep.size());
  if (report != nullptr) report->rejected_rows = rejected;
  if (keep.empty()) throw TrainingError("train_gbdt: no usable rows");

  MatrixXd x(static_cast<Eigen::Index>(keep.size()), features.cols());
  VectorXd y(static_cast<Eigen::Index>(keep.size()));
  VectorXd w(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = features.row(keep[i]);
    y[static_cast<Eigen::Index>(i)] = labels[keep[i]];
    w[static_cast<Eigen::Index>(i)] = sample_weights != nullptr ? (*sample_weights)[keep[i]] : 1.0;
  }
  const int n = static_cast<int>(x.rows());

  const double w_total = w.sum();
  const double pos_w = (y.array() * w.array()).sum();
  if (pos_w <= 0.0 || pos_w >= w_total)
    throw TrainingError("train_gbdt: training data contains a single class");

  GbdtModel model;
  model.config = cfg;
  model.n_features = static_cast<int>(x.cols());
  const double prior = std::clamp(pos_w / w_total, 1e-6, 1.0 - 1e-6);
  model.base_score = std::log(prior / (1.0 - prior));

  VectorXd margin = VectorXd::Constant(n, model.base_score);
  Rng rng(derive_seed(cfg.seed, 0x67626474ULL));

  const auto mean_loss = [&]() {
    double acc = 0.0;
    for (int r = 0; r < n; ++r) {
      const double p = std::clamp(sigmoid(margin[r]), 1e-12, 1.0 - 1e-12);
      acc += w[r] * -(y[r] * std::log(p) + (1.0 - y[r]) * std::log(1.0 - p));
    }
    return acc / w_total;
  };

  for (int round = 0; round < cfg.n_estimators; ++round) {
    VectorXd grad(n), hess(n);
    for (int r = 0; r < n; ++r) {
      const double p = sigmoid(margin[r]);
      grad[r] = w[r] * logistic_gradient(p, y[r]);
      hess[r] = w[r] * logistic_hessian(p);
    }

    // Row subsample (Bernoulli) and per-tree feature subsample.
    std::vector<int> rows;
    for (int r = 0; r < n; ++r) {
      if (cfg.subsample >= 1.0 || rng.uniform() < cfg.subsample) rows.push_back(r);
    }
    if (rows.empty()) rows.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n))));

    std::vector<int> features_pool(static_cast<std::size_t>(x.cols()));
    std::iota(features_pool.begin(), features_pool.end(), 0);
    const int n_feats = std::max(
        1, static_cast<int>(std::ceil(cfg.colsample_bytree * static_cast<double>(x.cols()))));
    if (n_feats < static_cast<int>(x.cols())) {
      for (int i = 0; i < n_feats; ++i) {
        const auto j = i + static_cast<int>(rng.uniform_int(
                               static_cast<std::uint64_t>(features_pool.size() - i)));
        std::swap(features_pool[static_cast<std::size_t>(i)],
                  features_pool[static_cast<std::size_t>(j)]);
      }
      features_pool.resize(static_cast<std::size_t>(n_feats));
      std::sort(features_pool.begin(), features_pool.end());
    }

    Builder builder{x, grad, hess, cfg, features_pool, {}};
    builder.build(rows, 0);
    for (int r = 0; r < n; ++r) margin[r] += builder.tree.predict(x.row(r).transpose());
    model.trees.push_back(std::move(builder.tree));
    if (report != nullptr) report->train_loss.push_back(mean_loss());
  }
  return model;
}

double auc_roc(const VectorXd& scores, const VectorXd& labels) {
  const int n = static_cast<int>(scores.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] < scores[b]; });

  // average ranks over tied scores
  std::vector<double> rank(static_cast<std::size_t>(n));
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && scores[order[static_cast<std::size_t>(j + 1)]] ==
                            scores[order[static_cast<std::size_t>(i)]])
      ++j;
    const double avg = 0.5 * (i + j) + 1.0;
    for (int k = i; k <= j; ++k) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = avg;
    i = j + 1;
  }

  double pos = 0.0, rank_sum = 0.0;
  for (int r = 0; r < n; ++r) {
    if (labels[r] > 0.5) {
      pos += 1.0;
      rank_sum += rank[static_cast<std::size_t>(r)];
    }
  }
  const double neg = n - pos;
  if (pos == 0.0 || neg == 0.0) throw DomainError("auc_roc: needs both classes");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

Metrics metrics_from_scores(const VectorXd& scores, const VectorXd& labels, double threshold) {
  Metrics m;
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (int r = 0; r < scores.size(); ++r) {
    const bool pred = scores[r] >= threshold;
    const bool truth = labels[r] > 0.5;
    if (pred && truth) ++tp;
    else if (pred && !truth) ++fp;
    else if (!pred && truth) ++fn;
    else ++tn;
  }
  const double n = tp + fp + fn + tn;
  m.accuracy = n > 0 ? (tp + tn) / n : 0.0;
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                    : 0.0;
  try {
    m.auc_roc = auc_roc(scores, labels);
  } catch (const DomainError&) {
    m.auc_roc = std::nullopt;  // single-class dataset: AUC undefined
  }
  return m;
}

Metrics evaluate(const GbdtModel& model, const MatrixXd& features, const VectorXd& labels,
                 double threshold) {
  if (features.rows() != labels.size()) throw DomainError("evaluate: size mismatch");
  VectorXd scores(features.rows());
  for (int r = 0; r < features.rows(); ++r)
    scores[r] = model.predict_proba(features.row(r).transpose());
  return metrics_from_scores(scores, labels, threshold);
}

GbdtConfig sample_config(Rng& rng) {
  GbdtConfig c;
  c.alpha = rng.uniform(0.01, 0.1);
  c.colsample_bytree = rng.uniform(0.5, 1.0);
  c.subsample = rng.uniform(0.5, 1.0);
  c.learning_rate = rng.uniform(0.01, 0.3);
  c.max_depth = 3 + static_cast<int>(rng.uniform_int(8));        // 3..10
  c.min_child_weight = 1.0 + static_cast<double>(rng.uniform_int(6));  // 1..6
  c.n_estimators = 50 + static_cast<int>(rng.uniform_int(151));  // 50..200
  return c;
}

SearchResult random_search(const MatrixXd& features, const VectorXd& labels, int n_trials,
                           std::uint64_t seed, int folds) {
  if (n_trials < 1) throw DomainError("random_search: n_trials must be >= 1");
  const int n = static_cast<int>(features.rows());
  if (n < folds) throw DomainError("random_search: dataset smaller than fold count");

  Rng rng(derive_seed(seed, 0x736561726368ULL));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);

  SearchResult result;
  for (int trial = 0; trial < n_trials; ++trial) {
    Rng trial_rng = rng.split(static_cast<std::uint64_t>(trial) + 1);
    Trial t;
    t.config = sample_config(trial_rng);
    t.config.seed = derive_seed(seed, 0x100 + static_cast<std::uint64_t>(trial));

    for (int fold = 0; fold < folds; ++fold) {
      const int lo = fold * n / folds;
      const int hi = (fold + 1) * n / folds;
      std::vector<int> train_rows, val_rows;
      for (int i = 0; i < n; ++i) {
        (i >= lo && i < hi ? val_rows : train_rows).push_back(order[static_cast<std::size_t>(i)]);
      }
      MatrixXd xt(static_cast<Eigen::Index>(train_rows.size()), features.cols());
      VectorXd yt(static_cast<Eigen::Index>(train_rows.size()));
      for (std::size_t i = 0; i < train_rows.size(); ++i) {
        xt.row(static_cast<Eigen::Index>(i)) = features.row(train_rows[i]);
        yt[static_cast<Eigen::Index>(i)] = labels[train_rows[i]];
      }
      MatrixXd xv(static_cast<Eigen::Index>(val_rows.size()), features.cols());
      VectorXd yv(static_cast<Eigen::Index>(val_rows.size()));
      for (std::size_t i = 0; i < val_rows.size(); ++i) {
        xv.row(static_cast<Eigen::Index>(i)) = features.row(val_rows[i]);
        yv[static_cast<Eigen::Index>(i)] = labels[val_rows[i]];
      }
      double acc;
      try {
        const GbdtModel m = train_gbdt(xt, yt, t.config);
        acc = evaluate(m, xv, yv).accuracy;
      } catch (const TrainingError&) {
        acc = 0.0;  // degenerate fold (single class)
      }
      t.fold_accuracies.push_back(acc);
    }
    t.mean_accuracy = std::accumulate(t.fold_accuracies.begin(), t.fold_accuracies.end(), 0.0) /
                      static_cast<double>(t.fold_accuracies.size());
    result.trials.push_back(t);
    if (trial == 0 || t.mean_accuracy > result.best_accuracy) {
      result.best = t.config;
      result.best_accuracy = t.mean_accuracy;
    }
  }
  return result;
}

}  // namespace wayside::gbdt
