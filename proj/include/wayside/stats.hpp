#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "wayside/common.hpp"

namespace wayside::stats {

using Eigen::MatrixXd;

// Regularized incomplete gamma functions, series + Lentz continued fraction,
// relative error below 1e-10 over the tested range.
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Upper tail of the chi-square distribution.
double chi2_sf(double x, double df);

// Upper tail of the standard normal.
double normal_sf(double z);

// ---------------------------------------------------------------------------
// Rank tables: blocks x treatments scores ranked within each block with
// average-rank tie handling.
// ---------------------------------------------------------------------------

MatrixXd rank_blocks(const MatrixXd& scores);

struct FriedmanResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int blocks = 0;
  int treatments = 0;
};

// Tie-corrected Friedman statistic; reduces to
// 12/(n k (k+1)) * sum R_j^2 - 3 n (k+1) without ties. Fully tied tables are
// degenerate and rejected.
FriedmanResult friedman(const MatrixXd& scores);

struct ShafferResult {
  MatrixXd raw_p;       // k x k symmetric, diagonal 1
  MatrixXd adjusted_p;  // Shaffer static step-down
  std::vector<double> mean_ranks;
};

// Possible counts of simultaneously true pairwise-equality hypotheses among k
// treatments (Shaffer's S(k)).
std::vector<int> shaffer_truth_counts(int k);

ShafferResult shaffer_posthoc(const MatrixXd& scores);

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;  // 1.96 * s / sqrt(n)

  std::string format(int decimals = 2) const;  // "0.93 ± 0.01"
};

ConfidenceInterval confidence_interval(const std::vector<double>& samples);

}  // namespace wayside::stats
