#include <doctest.h>

#include <cmath>

#include "wayside/dsp.hpp"

using namespace wayside;
using Eigen::ArrayXd;

TEST_CASE("fft inverts itself") {
  Rng rng(11);
  std::vector<std::complex<double>> a(64);
  for (auto& v : a) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  auto b = a;
  dsp::fft(b);
  dsp::fft(b, true);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("fft picks out a single tone") {
  const int n = 256;
  ArrayXd x(n);
  for (int i = 0; i < n; ++i) x[i] = std::sin(2.0 * M_PI * 17.0 * i / n);
  const ArrayXd mag = dsp::magnitude_spectrum(x);
  int best = 0;
  for (int k = 1; k < mag.size(); ++k)
    if (mag[k] > mag[best]) best = k;
  CHECK(best == 17);
}

TEST_CASE("fft rejects non power-of-two sizes") {
  std::vector<std::complex<double>> a(63);
  CHECK_THROWS_AS(dsp::fft(a), DomainError);
}

TEST_CASE("resample keeps endpoints and is exact on linear ramps") {
  ArrayXd x(5);
  x << 0, 1, 2, 3, 4;
  const ArrayXd y = dsp::resample_linear(x, 9);
  CHECK(y[0] == doctest::Approx(0.0));
  CHECK(y[8] == doctest::Approx(4.0));
  CHECK(y[4] == doctest::Approx(2.0));
}

TEST_CASE("moments of a constant series") {
  const auto m = dsp::moments(ArrayXd::Constant(32, 3.5));
  CHECK(m.mean == doctest::Approx(3.5));
  CHECK(m.stddev == doctest::Approx(0.0));
  CHECK(m.skewness == 0.0);
  CHECK(m.kurtosis == 0.0);
}

TEST_CASE("plateau maxima are reported once, leftmost") {
  ArrayXd x(4);
  x << 0, 1, 1, 0;
  const auto idx = dsp::plateau_local_maxima(x);
  REQUIRE(idx.size() == 1);
  CHECK(idx[0] == 1);
}
