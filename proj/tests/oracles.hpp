// Independent oracles for the test suites. Everything here is written
// straight from the defining formulas, separately from the library code paths
// it checks.
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

namespace oracles {

inline long double flat_depth(long double length_mm, long double radius_mm) {
  return length_mm * length_mm / (16.0L * radius_mm);
}

inline long double poly_wavelength(int harmonic, long double radius_mm) {
  const long double pi = 3.14159265358979323846L;
  return 2.0L * pi * radius_mm / harmonic;
}

inline long double poly_amplitude_um(long double level_db) {
  return std::sqrt(2.0L) * std::pow(10.0L, level_db / 20.0L);
}

// Contour prominence via explicit base searches on each side.
inline double prominence(const Eigen::ArrayXd& x, int peak) {
  int left_bound = 0;
  for (int j = peak - 1; j >= 0; --j) {
    if (x[j] > x[peak]) {
      left_bound = j + 1;
      break;
    }
  }
  int right_bound = static_cast<int>(x.size()) - 1;
  for (int j = peak + 1; j < x.size(); ++j) {
    if (x[j] > x[peak]) {
      right_bound = j - 1;
      break;
    }
  }
  double left_min = x[peak];
  for (int j = left_bound; j < peak; ++j) left_min = std::min(left_min, x[j]);
  double right_min = x[peak];
  for (int j = peak + 1; j <= right_bound; ++j) right_min = std::min(right_min, x[j]);
  return x[peak] - std::max(left_min, right_min);
}

inline std::vector<int> strict_local_maxima(const Eigen::ArrayXd& x, double floor) {
  std::vector<int> out;
  for (int i = 1; i + 1 < x.size(); ++i) {
    if (x[i] > x[i - 1] && x[i] > x[i + 1] && x[i] > floor) out.push_back(i);
  }
  return out;
}

// Transfer metrics, literal 1-based formulas. r has N+1 rows and N columns.
inline long double fwt(const Eigen::MatrixXd& r) {
  const int n = static_cast<int>(r.cols());
  if (n <= 1) return 0.0L;
  long double acc = 0.0L;
  for (int i = 1; i <= n - 1; ++i) acc += static_cast<long double>(r(0, i - 1)) - r(i, i - 1);
  return acc / (n - 1);
}

inline long double bwt(const Eigen::MatrixXd& r) {
  const int n = static_cast<int>(r.cols());
  if (n <= 1) return 0.0L;
  long double acc = 0.0L;
  for (int i = 1; i <= n - 1; ++i) {
    for (int j = i + 1; j <= n; ++j)
      acc += static_cast<long double>(r(j, i - 1)) - r(i, i - 1);
  }
  return acc / (static_cast<long double>(n) * (n - 1));
}

inline long double im(const Eigen::MatrixXd& r, const Eigen::VectorXd& joint) {
  const int n = static_cast<int>(r.cols());
  long double acc = 0.0L;
  for (int i = 1; i <= n; ++i) acc += static_cast<long double>(joint(i - 1)) - r(i, i - 1);
  return acc / n;
}

inline long double kgr_diagonal(const Eigen::MatrixXd& r) {
  const int n = static_cast<int>(r.cols());
  long double acc = 0.0L;
  for (int i = 1; i <= n; ++i)
    acc += static_cast<long double>(r(n, i - 1)) / r(i, i - 1);
  return acc / n;
}

// Average-rank Friedman statistic straight from the rank-sum formula
// (tie-free tables only).
inline double friedman_statistic(const Eigen::MatrixXd& scores) {
  const int n = static_cast<int>(scores.rows());
  const int k = static_cast<int>(scores.cols());
  std::vector<double> rank_sums(static_cast<std::size_t>(k), 0.0);
  for (int b = 0; b < n; ++b) {
    for (int j = 0; j < k; ++j) {
      double rank = 1.0;
      for (int o = 0; o < k; ++o) {
        if (scores(b, o) < scores(b, j)) rank += 1.0;
        else if (scores(b, o) == scores(b, j) && o < j) rank += 1.0;  // tie-free inputs
      }
      rank_sums[static_cast<std::size_t>(j)] += rank;
    }
  }
  double sum_sq = 0.0;
  for (double rj : rank_sums) sum_sq += rj * rj;
  return 12.0 / (n * k * (k + 1.0)) * sum_sq - 3.0 * n * (k + 1.0);
}

// Exact tail probability P(S >= observed) under uniformly random rankings,
// full enumeration over (k!)^n tables.
inline double friedman_exact_tail(int n, int k, double observed) {
  std::vector<std::vector<int>> perms;
  std::vector<int> base(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) base[static_cast<std::size_t>(i)] = i + 1;
  std::sort(base.begin(), base.end());
  do {
    perms.push_back(base);
  } while (std::next_permutation(base.begin(), base.end()));

  const std::size_t p = perms.size();
  std::size_t total = 1;
  for (int b = 0; b < n; ++b) total *= p;

  std::size_t hits = 0;
  std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rem = code;
    std::vector<double> rank_sums(static_cast<std::size_t>(k), 0.0);
    for (int b = 0; b < n; ++b) {
      const auto& perm = perms[rem % p];
      rem /= p;
      for (int j = 0; j < k; ++j) rank_sums[static_cast<std::size_t>(j)] += perm[static_cast<std::size_t>(j)];
    }
    double sum_sq = 0.0;
    for (double rj : rank_sums) sum_sq += rj * rj;
    const double stat = 12.0 / (n * k * (k + 1.0)) * sum_sq - 3.0 * n * (k + 1.0);
    if (stat >= observed - 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

// Pairwise-comparison AUC with half credit for ties.
inline double auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  double wins = 0.0, pairs = 0.0;
  for (int i = 0; i < scores.size(); ++i) {
    if (labels[i] < 0.5) continue;
    for (int j = 0; j < scores.size(); ++j) {
      if (labels[j] > 0.5) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

inline long double kl_closed_form(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar) {
  long double acc = 0.0L;
  for (int i = 0; i < mu.size(); ++i) {
    acc += 1.0L + static_cast<long double>(logvar[i]) -
           static_cast<long double>(mu[i]) * mu[i] - std::exp(static_cast<long double>(logvar[i]));
  }
  return -0.5L * acc;
}

}  // namespace oracles
