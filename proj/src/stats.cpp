#include "wayside/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace wayside::stats {

namespace {

// Regularized lower incomplete gamma by its power series; converges fast for
// x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < 1000; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma by Lentz's modified continued fraction;
// converges fast for x >= a + 1.
double gamma_q_cf(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw DomainError("gamma_p: requires a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  return x < a + 1.0 ? gamma_p_series(a, x) : 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw DomainError("gamma_q: requires a > 0, x >= 0");
  if (x == 0.0) return 1.0;
  return x < a + 1.0 ? 1.0 - gamma_p_series(a, x) : gamma_q_cf(a, x);
}

double chi2_sf(double x, double df) {
  if (df <= 0.0) throw DomainError("chi2_sf: df must be positive");
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * df, 0.5 * x);
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

MatrixXd rank_blocks(const MatrixXd& scores) {
  const int n = static_cast<int>(scores.rows());
  const int k = static_cast<int>(scores.cols());
  MatrixXd ranks(n, k);
  std::vector<int> order(static_cast<std::size_t>(k));
  for (int b = 0; b < n; ++b) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return scores(b, i) < scores(b, j); });
    int i = 0;
    while (i < k) {
      int j = i;
      while (j + 1 < k &&
             scores(b, order[static_cast<std::size_t>(j + 1)]) ==
                 scores(b, order[static_cast<std::size_t>(i)]))
        ++j;
      const double avg = 0.5 * (i + j) + 1.0;  // average rank, 1-based
      for (int t = i; t <= j; ++t) ranks(b, order[static_cast<std::size_t>(t)]) = avg;
      i = j + 1;
    }
  }
  return ranks;
}

FriedmanResult friedman(const MatrixXd& scores) {
  const int n = static_cast<int>(scores.rows());
  const int k = static_cast<int>(scores.cols());
  if (n < 2) throw DomainError("friedman: need at least 2 blocks");
  if (k < 3) throw DomainError("friedman: need at least 3 treatments");

  const MatrixXd ranks = rank_blocks(scores);
  const double a = ranks.array().square().sum();
  const double correction = n * k * (k + 1.0) * (k + 1.0) / 4.0;
  const double denom = a - correction;
  if (denom <= 0.0)
    throw DegenerateDataError("friedman: every block is fully tied, ranks carry no information");

  double num = 0.0;
  for (int j = 0; j < k; ++j) {
    const double rj = ranks.col(j).sum();
    const double centered = rj - n * (k + 1.0) / 2.0;
    num += centered * centered;
  }
  FriedmanResult res;
  res.blocks = n;
  res.treatments = k;
  res.statistic = (k - 1.0) * num / denom;
  res.p_value = chi2_sf(res.statistic, k - 1.0);
  return res;
}

// ---------------------------------------------------------------------------
// Shaffer post-hoc
// ---------------------------------------------------------------------------

std::vector<int> shaffer_truth_counts(int k) {
  if (k < 1) throw DomainError("shaffer_truth_counts: k must be >= 1");
  // S(k) = union over j of { C(j,2) + s : s in S(k - j) }
  std::vector<std::vector<int>> s(static_cast<std::size_t>(k) + 1);
  s[0] = {0};
  for (int kk = 1; kk <= k; ++kk) {
    std::vector<int> acc;
    for (int j = 1; j <= kk; ++j) {
      const int pairs = j * (j - 1) / 2;
      for (int tail : s[static_cast<std::size_t>(kk - j)]) acc.push_back(pairs + tail);
    }
    std::sort(acc.begin(), acc.end());
    acc.erase(std::unique(acc.begin(), acc.end()), acc.end());
    s[static_cast<std::size_t>(kk)] = std::move(acc);
  }
  return s[static_cast<std::size_t>(k)];
}

ShafferResult shaffer_posthoc(const MatrixXd& scores) {
  const int n = static_cast<int>(scores.rows());
  const int k = static_cast<int>(scores.cols());
  if (k < 3) throw DomainError("shaffer_posthoc: need at least 3 treatments");
  if (n < 2) throw DomainError("shaffer_posthoc: need at least 2 blocks");

  const MatrixXd ranks = rank_blocks(scores);
  ShafferResult res;
  res.mean_ranks.resize(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) res.mean_ranks[static_cast<std::size_t>(j)] = ranks.col(j).mean();

  const double se = std::sqrt(k * (k + 1.0) / (6.0 * n));
  const int m = k * (k - 1) / 2;

  struct Pair {
    int a, b;
    double raw;
  };
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(m));
  res.raw_p = MatrixXd::Ones(k, k);
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      const double z = std::abs(res.mean_ranks[static_cast<std::size_t>(a)] -
                                res.mean_ranks[static_cast<std::size_t>(b)]) / se;
      const double p = std::min(1.0, 2.0 * normal_sf(z));
      res.raw_p(a, b) = res.raw_p(b, a) = p;
      pairs.push_back({a, b, p});
    }
  }

  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Pair& x, const Pair& y) { return x.raw < y.raw; });

  const std::vector<int> possible = shaffer_truth_counts(k);
  res.adjusted_p = MatrixXd::Ones(k, k);
  double running_max = 0.0;
  for (int i = 0; i < m; ++i) {
    // max number of hypotheses that can still be simultaneously true once i
    // have been rejected
    const int cap = m - i;
    int t_i = 1;
    for (int s : possible) {
      if (s <= cap) t_i = std::max(t_i, s);
    }
    const double adj = std::min(1.0, t_i * pairs[static_cast<std::size_t>(i)].raw);
    running_max = std::max(running_max, adj);  // enforce step-down monotonicity
    res.adjusted_p(pairs[static_cast<std::size_t>(i)].a, pairs[static_cast<std::size_t>(i)].b) =
        running_max;
    res.adjusted_p(pairs[static_cast<std::size_t>(i)].b, pairs[static_cast<std::size_t>(i)].a) =
        running_max;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Confidence intervals
// ---------------------------------------------------------------------------

ConfidenceInterval confidence_interval(const std::vector<double>& samples) {
  if (samples.size() < 2) throw DomainError("confidence_interval: need at least 2 samples");
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean, 1.96 * sd / std::sqrt(n)};
}

std::string ConfidenceInterval::format(int decimals) const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << mean << " ± " << half_width;
  return os.str();
}

}  // namespace wayside::stats
