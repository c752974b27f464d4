#include "wayside/dsp.hpp"

#include <algorithm>
#include <cmath>

namespace wayside::dsp {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw DomainError("fft: size must be a power of two");
  if (n <= 1) return;

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

ArrayXd magnitude_spectrum(const ArrayXd& x) {
  const std::size_t n = next_power_of_two(static_cast<std::size_t>(x.size()));
  std::vector<std::complex<double>> buf(n);
  for (int i = 0; i < x.size(); ++i) buf[static_cast<std::size_t>(i)] = x[i];
  fft(buf);
  ArrayXd mag(static_cast<Eigen::Index>(n / 2 + 1));
  for (std::size_t k = 0; k <= n / 2; ++k) mag[static_cast<Eigen::Index>(k)] = std::abs(buf[k]);
  return mag;
}

ArrayXd resample_linear(const ArrayXd& x, int target_len) {
  if (x.size() == 0 || target_len <= 0)
    throw DomainError("resample_linear: empty input or non-positive target length");
  ArrayXd out(target_len);
  if (x.size() == 1) {
    out.setConstant(x[0]);
    return out;
  }
  const double step = static_cast<double>(x.size() - 1) / (target_len > 1 ? target_len - 1 : 1);
  for (int i = 0; i < target_len; ++i) {
    const double pos = i * step;
    const int lo = std::min<int>(static_cast<int>(pos), static_cast<int>(x.size()) - 2);
    const double frac = pos - lo;
    out[i] = x[lo] * (1.0 - frac) + x[lo + 1] * frac;
  }
  return out;
}

double rms(const ArrayXd& x) {
  if (x.size() == 0) return 0.0;
  return std::sqrt(x.square().mean());
}

Moments moments(const ArrayXd& x) {
  Moments m;
  if (x.size() == 0) return m;
  m.mean = x.mean();
  const ArrayXd d = x - m.mean;
  const double m2 = d.square().mean();
  m.stddev = std::sqrt(m2);
  // zero-variance convention, with head-room for summation round-off on
  // constant-valued windows
  if (m.stddev <= 1e-12 * std::max(1.0, std::abs(m.mean))) {
    m.stddev = std::sqrt(std::max(0.0, m2));
    m.skewness = 0.0;
    m.kurtosis = 0.0;
    return m;
  }
  const double m3 = d.cube().mean();
  const double m4 = d.square().square().mean();
  m.skewness = m3 / (m2 * m.stddev);
  m.kurtosis = m4 / (m2 * m2);
  return m;
}

std::vector<int> strict_local_maxima(const ArrayXd& x, double min_height) {
  std::vector<int> out;
  for (int i = 1; i + 1 < x.size(); ++i) {
    if (x[i] > x[i - 1] && x[i] > x[i + 1] && x[i] > min_height) out.push_back(i);
  }
  return out;
}

std::vector<int> plateau_local_maxima(const ArrayXd& x) {
  std::vector<int> out;
  const int n = static_cast<int>(x.size());
  int i = 1;
  while (i + 1 < n + 1 && i < n) {
    if (x[i] > x[i - 1]) {
      int j = i;
      while (j + 1 < n && x[j + 1] == x[j]) ++j;
      if (j + 1 < n && x[j + 1] < x[j]) {
        out.push_back(i);  // leftmost sample of the plateau
        i = j + 1;
        continue;
      }
      i = j + 1;
      continue;
    }
    ++i;
  }
  return out;
}

}  // namespace wayside::dsp
