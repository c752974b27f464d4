#include "wayside/peaks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wayside/dsp.hpp"

namespace wayside::peaks {

namespace {

// Local maximum allowing a plateau: strictly above the left neighbour, and the
// run of equal values to the right ends with a strictly smaller value.
bool is_plateau_left_max(const ArrayXd& x, int i) {
  const int n = static_cast<int>(x.size());
  if (i <= 0 || i >= n - 1) return false;
  if (!(x[i] > x[i - 1])) return false;
  int j = i;
  while (j + 1 < n && x[j + 1] == x[j]) ++j;
  return j + 1 < n && x[j + 1] < x[j];
}

// Prominence without the strict-local-max precondition (used for plateau
// candidates coming out of the detectors).
double prominence_unchecked(const ArrayXd& x, int i) {
  const double peak = x[i];
  double left_min = peak;
  for (int j = i - 1; j >= 0; --j) {
    if (x[j] > peak) break;
    left_min = std::min(left_min, x[j]);
  }
  double right_min = peak;
  for (int j = i + 1; j < x.size(); ++j) {
    if (x[j] > peak) break;
    right_min = std::min(right_min, x[j]);
  }
  return peak - std::max(left_min, right_min);
}

PeakSet make_peak_set(const ArrayXd& x, std::vector<int> indices, Algorithm algo,
                      double sensitivity) {
  PeakSet ps;
  ps.algorithm = algo;
  ps.sensitivity = sensitivity;
  ps.indices = std::move(indices);
  ps.amplitudes.reserve(ps.indices.size());
  for (int i : ps.indices) ps.amplitudes.push_back(x[i]);
  return ps;
}

}  // namespace

Algorithm algorithm_by_name(const std::string& name) {
  if (name == "tb") return Algorithm::TB;
  if (name == "pd") return Algorithm::PD;
  if (name == "dp") return Algorithm::DP;
  if (name == "sd") return Algorithm::SD;
  throw ConfigError("unknown peak detection algorithm: " + name);
}

std::string to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::TB: return "tb";
    case Algorithm::PD: return "pd";
    case Algorithm::DP: return "dp";
    case Algorithm::SD: return "sd";
  }
  return "?";
}

double prominence(const ArrayXd& signal, int peak_index) {
  const int n = static_cast<int>(signal.size());
  if (peak_index <= 0 || peak_index >= n - 1 ||
      !(signal[peak_index] > signal[peak_index - 1]) ||
      !(signal[peak_index] > signal[peak_index + 1]))
    throw DomainError("prominence: index is not a strict local maximum");
  return prominence_unchecked(signal, peak_index);
}

PeakSet detect_tb(const ArrayXd& signal, double threshold) {
  if (signal.size() == 0) throw DomainError("detect_tb: empty signal");
  const double rms = dsp::rms(signal);
  PeakSet ps;
  ps.algorithm = Algorithm::TB;
  if (rms <= 0.0) return ps;  // all-zero signal: nothing to detect
  std::vector<int> idx;
  for (int i = 1; i + 1 < signal.size(); ++i) {
    if (signal[i] > signal[i - 1] && signal[i] > signal[i + 1] &&
        signal[i] * signal[i] / rms > threshold)
      idx.push_back(i);
  }
  return make_peak_set(signal, std::move(idx), Algorithm::TB, 0.0);
}

PdResult detect_pd(const ArrayXd& signal, int lookahead, double delta) {
  if (lookahead < 1) throw ConfigError("detect_pd: lookahead must be >= 1");
  if (lookahead >= signal.size()) throw ConfigError("detect_pd: lookahead >= signal length");
  if (delta < 0.0) throw DomainError("detect_pd: delta must be non-negative");

  PdResult res;
  std::vector<int> maxima;
  const double inf = std::numeric_limits<double>::infinity();
  double mx = -inf, mn = inf;
  int mxpos = 0, mnpos = 0;
  bool looking_for_max = true;

  for (int i = 0; i < signal.size(); ++i) {
    const double a = signal[i];
    if (looking_for_max) {
      if (a > mx) {
        mx = a;
        mxpos = i;
      }
      if (a < mx - delta && i - mxpos <= lookahead) {
        // Guard against re-armed candidates sitting on a slope.
        if (is_plateau_left_max(signal, mxpos)) maxima.push_back(mxpos);
        mn = a;
        mnpos = i;
        looking_for_max = false;
      } else if (i - mxpos > lookahead) {
        mx = a;  // candidate expired unconfirmed
        mxpos = i;
      }
    } else {
      if (a < mn) {
        mn = a;
        mnpos = i;
      }
      if (a > mn + delta && i - mnpos <= lookahead) {
        res.minima.push_back(mnpos);
        mx = a;
        mxpos = i;
        looking_for_max = true;
      } else if (i - mnpos > lookahead) {
        mn = a;
        mnpos = i;
      }
    }
  }
  res.maxima = make_peak_set(signal, std::move(maxima), Algorithm::PD, 0.0);
  return res;
}

PeakSet detect_dp(const ArrayXd& signal, double min_amplitude) {
  if (signal.size() < 3) throw DomainError("detect_dp: signal length must be >= 3");
  std::vector<int> idx;
  for (int i : dsp::plateau_local_maxima(signal)) {
    if (signal[i] >= min_amplitude) idx.push_back(i);
  }
  return make_peak_set(signal, std::move(idx), Algorithm::DP, 0.0);
}

PeakSet detect_sd(const ArrayXd& signal, double min_prominence) {
  if (signal.size() < 3) throw DomainError("detect_sd: signal length must be >= 3");
  std::vector<int> idx;
  for (int i : dsp::plateau_local_maxima(signal)) {
    if (prominence_unchecked(signal, i) >= min_prominence) idx.push_back(i);
  }
  return make_peak_set(signal, std::move(idx), Algorithm::SD, 0.0);
}

PeakSet detect(Algorithm algo, const ArrayXd& signal, double sensitivity, int pd_lookahead) {
  if (!(sensitivity > 0.0 && sensitivity <= 1.0))
    throw DomainError("sensitivity must lie in (0, 1]");
  if (signal.size() == 0) throw DomainError("detect: empty signal");
  const double frac = 1.0 - sensitivity;  // higher sensitivity -> lower threshold
  PeakSet ps;
  switch (algo) {
    case Algorithm::TB: {
      const double rms = dsp::rms(signal);
      if (rms <= 0.0) {
        ps.algorithm = Algorithm::TB;
        break;
      }
      // frac^2 keeps the implied amplitude cutoff proportional to (1 - s),
      // as in the other detectors, despite the squared power ratio.
      const double peak_ratio = signal.square().maxCoeff() / rms;
      ps = detect_tb(signal, frac * frac * peak_ratio);
      break;
    }
    case Algorithm::PD: {
      const double range = signal.maxCoeff() - signal.minCoeff();
      ps = detect_pd(signal, pd_lookahead, frac * range).maxima;
      break;
    }
    case Algorithm::DP:
      ps = detect_dp(signal, frac * signal.maxCoeff());
      break;
    case Algorithm::SD: {
      const double range = signal.maxCoeff() - signal.minCoeff();
      ps = detect_sd(signal, frac * range);
      break;
    }
  }
  ps.sensitivity = sensitivity;
  return ps;
}

// ---------------------------------------------------------------------------
// Semantics
// ---------------------------------------------------------------------------

SemanticFeatures extract_semantics(const PeakSet& peaks, double sample_rate_hz) {
  if (sample_rate_hz <= 0.0) throw DomainError("extract_semantics: bad sample rate");
  SemanticFeatures sem;
  sem.wheel_count = static_cast<int>(peaks.size());
  sem.times_s.reserve(peaks.size());
  for (int i : peaks.indices) sem.times_s.push_back(i / sample_rate_hz);
  sem.deformations = peaks.amplitudes;
  return sem;
}

std::vector<int> group_sizes(const std::vector<double>& times_s, double grouping_coef) {
  if (times_s.empty()) return {};
  if (times_s.size() == 1) return {1};
  std::vector<double> gaps;
  for (std::size_t i = 1; i < times_s.size(); ++i) gaps.push_back(times_s[i] - times_s[i - 1]);
  std::vector<double> sorted = gaps;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  const double median = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  const double threshold = grouping_coef * median;

  std::vector<int> groups{1};
  for (double g : gaps) {
    if (g < threshold)
      ++groups.back();
    else
      groups.push_back(1);
  }
  return groups;
}

AxleAccuracy axle_count_accuracy(const SemanticFeatures& detected, const synth::TrainType& truth,
                                 double grouping_coef) {
  AxleAccuracy acc;
  acc.count_match = detected.wheel_count == truth.expected_wheel_count;
  acc.grouping_match = group_sizes(detected.times_s, grouping_coef) == truth.expected_grouping;
  return acc;
}

double estimate_speed(const PeakSet& peaks, double sample_rate_hz,
                      const synth::TrainType& train) {
  if (peaks.size() < 2) throw InsufficientDataError("estimate_speed: fewer than 2 peaks");
  if (static_cast<int>(peaks.size()) != train.expected_wheel_count)
    throw InsufficientDataError("estimate_speed: detected count does not match the layout");
  std::vector<double> speeds;
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    const double spacing_m = train.axle_positions_m[i] - train.axle_positions_m[i - 1];
    const double dt_s = (peaks.indices[i] - peaks.indices[i - 1]) / sample_rate_hz;
    speeds.push_back(spacing_m / dt_s);
  }
  std::sort(speeds.begin(), speeds.end());
  const std::size_t m = speeds.size();
  const double v = m % 2 == 1 ? speeds[m / 2] : 0.5 * (speeds[m / 2 - 1] + speeds[m / 2]);
  return v * 3.6;
}

SpeedDirection estimate_speed_direction(const PeakSet& peaks_a, const PeakSet& peaks_b,
                                        double sample_rate_hz, double sensor_gap_m) {
  if (peaks_a.size() == 0 || peaks_b.size() == 0)
    throw InsufficientDataError("estimate_speed_direction: a sensor saw no peaks");
  const double lag_s = (peaks_b.indices[0] - peaks_a.indices[0]) / sample_rate_hz;
  if (lag_s == 0.0)
    throw InsufficientDataError("estimate_speed_direction: zero lag between sensors");
  SpeedDirection sd;
  sd.speed_kmh = sensor_gap_m / std::abs(lag_s) * 3.6;
  sd.direction = lag_s > 0.0 ? 1 : -1;
  return sd;
}

// ---------------------------------------------------------------------------
// Sensitivity tuning
// ---------------------------------------------------------------------------

namespace {
std::size_t argmax_weighted(const std::vector<double>& ac, const std::vector<double>& ad,
                            double ad_weight) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ac.size(); ++i) {
    const double score = ad_weight * ad[i] + (1.0 - ad_weight) * ac[i];
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}
}  // namespace

SensitivityChoice select_sensitivity(const std::vector<double>& sensitivities,
                                     const std::vector<double>& ac_scores,
                                     const std::vector<double>& ad_scores) {
  if (sensitivities.empty()) throw DomainError("select_sensitivity: empty grid");
  if (ac_scores.size() != sensitivities.size() || ad_scores.size() != sensitivities.size())
    throw DomainError("select_sensitivity: score arrays must align with the grid");
  const std::size_t equal_idx = argmax_weighted(ac_scores, ad_scores, 0.5);
  const std::size_t ad_idx = argmax_weighted(ac_scores, ad_scores, 0.8);
  SensitivityChoice choice;
  choice.equal_weight = sensitivities[equal_idx];
  choice.ad_weighted = sensitivities[ad_idx];
  choice.selected = sensitivities[ad_idx];  // disagreements resolve to the AD-heavy pick
  return choice;
}

}  // namespace wayside::peaks
