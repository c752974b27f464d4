#pragma once

#include <Eigen/Core>
#include <complex>
#include <vector>

#include "wayside/common.hpp"

namespace wayside::dsp {

using Eigen::ArrayXd;

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse = false);

// Magnitude spectrum of a real signal zero-padded to the next power of two.
// Returns |X_k| for k = 0 .. n/2 (inclusive of Nyquist bin).
ArrayXd magnitude_spectrum(const ArrayXd& x);

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

// Linear-interpolation resampling of x onto `target_len` points spanning the
// same interval.
ArrayXd resample_linear(const ArrayXd& x, int target_len);

double rms(const ArrayXd& x);

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;     // population
  double skewness = 0.0;   // 0 by convention when variance is 0
  double kurtosis = 0.0;   // m4 / m2^2, 0 by convention when variance is 0
};

Moments moments(const ArrayXd& x);

// Strict local maxima of x (x[i] > both neighbours). `min_height` drops peaks
// at or below the threshold; pass -inf to keep everything.
std::vector<int> strict_local_maxima(const ArrayXd& x, double min_height);

// Local maxima where plateaus count once, reported at their leftmost sample.
std::vector<int> plateau_local_maxima(const ArrayXd& x);

}  // namespace wayside::dsp
