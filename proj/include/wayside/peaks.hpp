#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "wayside/common.hpp"
#include "wayside/synth.hpp"

namespace wayside::peaks {

using Eigen::ArrayXd;

enum class Algorithm { TB, PD, DP, SD };

Algorithm algorithm_by_name(const std::string& name);
std::string to_string(Algorithm algo);

struct PeakSet {
  std::vector<int> indices;        // strictly increasing
  std::vector<double> amplitudes;  // input values at the indices
  Algorithm algorithm = Algorithm::SD;
  double sensitivity = 0.0;

  std::size_t size() const { return indices.size(); }
};

// Contour-based prominence: walk outward from the peak until terrain higher
// than the peak (or the signal edge), take the minimum on each side, and
// subtract the higher of the two minima from the peak value.
double prominence(const ArrayXd& signal, int peak_index);

// The four detectors share one scalar sensitivity in (0, 1]: higher
// sensitivity lowers the internal threshold. Internally TB maps it to a
// power-ratio threshold, PD to delta, DP to a minimum amplitude, SD to a
// minimum prominence.
PeakSet detect(Algorithm algo, const ArrayXd& signal, double sensitivity,
               int pd_lookahead = 50);

// RMS-normalized power-ratio detector.
PeakSet detect_tb(const ArrayXd& signal, double threshold);

struct PdResult {
  PeakSet maxima;
  std::vector<int> minima;
};

// Alternating extremum tracker: a candidate is confirmed once the signal moves
// past it by `delta` within `lookahead` samples.
PdResult detect_pd(const ArrayXd& signal, int lookahead, double delta);

// First-order-difference sign changes, plateaus reported at their leftmost
// sample, filtered by a minimum amplitude.
PeakSet detect_dp(const ArrayXd& signal, double min_amplitude);

// Local maxima filtered by prominence.
PeakSet detect_sd(const ArrayXd& signal, double min_prominence);

// ---------------------------------------------------------------------------
// Axle semantics
// ---------------------------------------------------------------------------

struct SemanticFeatures {
  int wheel_count = 0;             // Z
  std::vector<double> times_s;     // X
  std::vector<double> deformations;  // Y (um/m)
  std::optional<double> context_load_t;
  std::optional<double> context_speed_kmh;
};

SemanticFeatures extract_semantics(const PeakSet& peaks, double sample_rate_hz);

struct AxleAccuracy {
  bool count_match = false;
  bool grouping_match = false;
};

// Grouping clusters consecutive wheels whose gap is below
// `grouping_coef * median(gaps)`.
AxleAccuracy axle_count_accuracy(const SemanticFeatures& detected, const synth::TrainType& truth,
                                 double grouping_coef = 0.4);

std::vector<int> group_sizes(const std::vector<double>& times_s, double grouping_coef = 0.4);

// Single-sensor speed from the known axle layout: median of spacing/dt over
// consecutive peak pairs. Requires the detected count to match the layout.
double estimate_speed(const PeakSet& peaks, double sample_rate_hz, const synth::TrainType& train);

struct SpeedDirection {
  double speed_kmh = 0.0;
  int direction = 0;  // +1: sensor A first, -1: sensor B first
};

SpeedDirection estimate_speed_direction(const PeakSet& peaks_a, const PeakSet& peaks_b,
                                        double sample_rate_hz, double sensor_gap_m);

// ---------------------------------------------------------------------------
// Sensitivity tuning
// ---------------------------------------------------------------------------

struct SensitivityChoice {
  double equal_weight;   // argmax of 0.5*AD + 0.5*AC
  double ad_weighted;    // argmax of 0.8*AD + 0.2*AC
  double selected;       // the ad-weighted pick whenever the two disagree
};

SensitivityChoice select_sensitivity(const std::vector<double>& sensitivities,
                                     const std::vector<double>& ac_scores,
                                     const std::vector<double>& ad_scores);

}  // namespace wayside::peaks
