#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "wayside/dsp.hpp"
#include "wayside/synth.hpp"

using namespace wayside;
using namespace wayside::synth;
using Eigen::ArrayXd;

namespace {
constexpr double kTwoPi = 2.0 * M_PI;

SynthConfig noiseless() {
  SynthConfig cfg;
  cfg.strain_noise_ue = 0.0;
  cfg.accel_snr_db.reset();
  return cfg;
}

int count_pulse_maxima(const ArrayXd& strain) {
  return static_cast<int>(
      oracles::strict_local_maxima(strain, 0.05 * strain.maxCoeff()).size());
}
}  // namespace

TEST_CASE("flat_depth matches hand evaluations") {
  CHECK(flat_depth(50, 500) == doctest::Approx(0.3125).epsilon(1e-12));
  CHECK(flat_depth(100, 500) == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(flat_depth(1e-6, 500) < 1e-12);  // zero-length limit
  CHECK_THROWS_AS(flat_depth(0, 500), DomainError);
  CHECK_THROWS_AS(flat_depth(50, 0), DomainError);
  CHECK_THROWS_AS(flat_depth(-3, 500), DomainError);
}

TEST_CASE("flat_depth monotone in length, antitone in radius") {
  double prev = 0.0;
  for (double l = 10; l <= 100; l += 5) {
    const double d = flat_depth(l, 460);
    CHECK(d > prev);
    prev = d;
  }
  prev = 1e9;
  for (double r = 300; r <= 600; r += 20) {
    const double d = flat_depth(50, r);
    CHECK(d < prev);
    prev = d;
  }
}

TEST_CASE("flat_profile window geometry") {
  const double length = 50, radius = 500;
  const double circumference = kTwoPi * radius;
  const double depth = flat_depth(length, radius);
  CHECK(flat_profile(0.0, length, radius) == 0.0);  // far from the flat
  CHECK(flat_profile(circumference - length, length, radius) ==
        doctest::Approx(0.0).epsilon(1e-12));  // continuity at window start
  CHECK(flat_profile(circumference - 0.5 * length, length, radius) ==
        doctest::Approx(-depth).epsilon(1e-12));  // centre reaches -D_w
  CHECK(flat_profile(circumference, length, radius) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_THROWS_AS(flat_profile(-1.0, length, radius), DomainError);
  CHECK_THROWS_AS(flat_profile(circumference + 1.0, length, radius), DomainError);
}

TEST_CASE("poly_wavelength matches the formula") {
  CHECK(poly_wavelength(1, 500) == doctest::Approx(3141.592653589793).epsilon(1e-12));
  CHECK(poly_wavelength(2, 500) == doctest::Approx(1570.7963267948965).epsilon(1e-12));
  CHECK(poly_wavelength(8, 460) == doctest::Approx(361.2831551628262).epsilon(1e-9));
  CHECK_THROWS_AS(poly_wavelength(0, 500), DomainError);
}

TEST_CASE("poly_amplitude dB mapping") {
  CHECK(poly_amplitude(0.0) == doctest::Approx(1.4142135623730951).epsilon(1e-12));
  CHECK(poly_amplitude(20.0) == doctest::Approx(14.142135623730951).epsilon(1e-12));
  CHECK(poly_amplitude(-20.0) == doctest::Approx(0.14142135623730951).epsilon(1e-12));
  CHECK_THROWS_AS(poly_amplitude(std::nan("")), DomainError);
}

TEST_CASE("poly_profile single-harmonic cases") {
  WheelDefect d;
  d.kind = DefectKind::Polygonization;
  d.wheel_radius_mm = 500;
  d.poly_levels_db.fill(-1e9);  // amplitude ~ 0
  CHECK(poly_profile(123.0, d) == doctest::Approx(0.0).epsilon(1e-15));

  // single harmonic theta=6 with unit-µm amplitude: level solves sqrt(2)*10^(L/20) = 1
  d.poly_levels_db[5] = 20.0 * std::log10(1.0 / std::sqrt(2.0));
  d.poly_phases_rad[5] = 0.0;
  CHECK(poly_profile(0.0, d) == doctest::Approx(0.0).epsilon(1e-12));
  const double quarter = poly_wavelength(6, 500) / 4.0;
  CHECK(poly_profile(quarter, d) * 1e3 == doctest::Approx(1.0).epsilon(1e-9));  // 1 µm
}

TEST_CASE("poly_profile equals the analytic single sine on random harmonics") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    WheelDefect d;
    d.kind = DefectKind::Polygonization;
    d.wheel_radius_mm = rng.uniform(300, 600);
    d.poly_levels_db.fill(-1e9);
    const int h = 1 + static_cast<int>(rng.uniform_int(20));
    const double level = rng.uniform(-10, 50);
    const double phase = rng.uniform(0, kTwoPi);
    d.poly_levels_db[h - 1] = level;
    d.poly_phases_rad[h - 1] = phase;
    const double x = rng.uniform(0, kTwoPi * d.wheel_radius_mm);
    const double expected = static_cast<double>(oracles::poly_amplitude_um(level)) * 1e-3 *
                            std::sin(kTwoPi / poly_wavelength(h, d.wheel_radius_mm) * x + phase);
    CHECK(poly_profile(x, d) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("track irregularity determinism, bounds, and band confinement") {
  IrregularityConfig cfg;
  const ArrayXd a = gen_track_irregularity(7, cfg);
  const ArrayXd b = gen_track_irregularity(7, cfg);
  CHECK((a - b).abs().maxCoeff() == 0.0);  // bit-identical per seed

  CHECK(a.abs().maxCoeff() <= cfg.amplitude_bound_mm + 1e-12);

  IrregularityConfig zero = cfg;
  zero.amplitude_bound_mm = 0.0;
  CHECK(gen_track_irregularity(7, zero).abs().maxCoeff() == 0.0);

  IrregularityConfig bad = cfg;
  bad.max_wavelength_m = bad.min_wavelength_m;
  CHECK_THROWS_AS(gen_track_irregularity(7, bad), DomainError);

  // Spectral check on a power-of-two grid: the synthesis snaps modes to the
  // DFT grid of the profile length, so in-band energy should be ~100%.
  IrregularityConfig pow2 = cfg;
  pow2.length_m = 131.072;
  pow2.dx_m = 0.001;
  const ArrayXd p = gen_track_irregularity(21, pow2);
  REQUIRE(p.size() == 131072);
  const ArrayXd mag = dsp::magnitude_spectrum(p);
  const double df = 1.0 / pow2.length_m;  // cycles per metre per bin
  double in_band = 0.0, total = 0.0;
  for (int k = 1; k < mag.size(); ++k) {
    const double f = k * df;
    const double e = mag[k] * mag[k];
    total += e;
    if (f >= 1.0 / 30.0 - 1e-9 && f <= 1.0 + 1e-9) in_band += e;
  }
  CHECK(in_band / total >= 0.99);
}

TEST_CASE("train types satisfy their invariants") {
  for (const TrainType* t : {&TrainType::laagrss(), &TrainType::alfa()}) {
    for (std::size_t i = 1; i < t->axle_positions_m.size(); ++i)
      CHECK(t->axle_positions_m[i] > t->axle_positions_m[i - 1]);
    CHECK(static_cast<int>(t->axle_positions_m.size()) == t->expected_wheel_count);
    int total = 0;
    for (int g : t->expected_grouping) total += g;
    CHECK(total == t->expected_wheel_count);
  }
  CHECK(TrainType::laagrss().expected_wheel_count == 10);
  CHECK(TrainType::laagrss().expected_grouping == std::vector<int>{1, 2, 2, 2, 2, 1});
}

TEST_CASE("load schemes carry the fixed tonnages") {
  CHECK(LoadScheme::get(LoadName::Empty).left_tonnes == 0.0);
  CHECK(LoadScheme::get(LoadName::Half).left_tonnes == 7.5);
  CHECK(LoadScheme::get(LoadName::Half).right_tonnes == 7.5);
  CHECK(LoadScheme::get(LoadName::Full).left_tonnes == 15.0);
  CHECK(LoadScheme::get(LoadName::Unbalance1).right_tonnes == 7.5);
  CHECK(LoadScheme::get(LoadName::Unbalance2).right_tonnes == 3.0);
  CHECK(LoadScheme::get(LoadName::Unbalance3).right_tonnes == 0.0);
}

TEST_CASE("passage speed limits are enforced per train type") {
  PassageSpec spec;
  spec.train = TrainName::Laagrss;
  spec.speed_kmh = 150.0;  // beyond the freight limit
  CHECK_THROWS_AS(spec.validate(), DomainError);
  spec.train = TrainName::Alfa;
  spec.speed_kmh = 150.0;
  CHECK_NOTHROW(spec.validate());
  spec.speed_kmh = 230.0;
  CHECK_THROWS_AS(spec.validate(), DomainError);
}

TEST_CASE("clean passages show exactly one strain peak per wheel") {
  for (TrainName train : {TrainName::Laagrss, TrainName::Alfa}) {
    const TrainType& t = TrainType::by_name(train);
    for (double frac : {0.0, 0.5, 1.0}) {
      for (LoadName load : LoadScheme::all()) {
        PassageSpec spec;
        spec.train = train;
        spec.speed_kmh = t.min_speed_kmh + frac * (t.max_speed_kmh - t.min_speed_kmh);
        spec.load = load;
        spec.irregularity_seed = 5;
        const WaysideRecording rec = synthesize_passage(spec, noiseless());
        CHECK(count_pulse_maxima(rec.strain) == t.expected_wheel_count);
      }
    }
  }
}

TEST_CASE("doubling speed halves the inter-peak gaps") {
  PassageSpec slow;
  slow.speed_kmh = 60;
  slow.irregularity_seed = 3;
  PassageSpec fast = slow;
  fast.speed_kmh = 120;
  const WaysideRecording a = synthesize_passage(slow, noiseless());
  const WaysideRecording b = synthesize_passage(fast, noiseless());
  for (std::size_t i = 1; i < a.wheel_pass_times_s.size(); ++i) {
    const double ga = a.wheel_pass_times_s[i] - a.wheel_pass_times_s[i - 1];
    const double gb = b.wheel_pass_times_s[i] - b.wheel_pass_times_s[i - 1];
    CHECK(ga / gb == doctest::Approx(2.0).epsilon(1e-9));
  }
}

TEST_CASE("a flat strictly increases accel RMS") {
  PassageSpec base;
  base.speed_kmh = 90;
  base.load = LoadName::Full;
  base.irregularity_seed = 17;
  PassageSpec with_flat = base;
  Rng rng(4);
  with_flat.defects.push_back(
      sample_defect(DefectKind::Flat, kFlatL2, rng, TrainType::laagrss()));
  const WaysideRecording a = synthesize_passage(base, noiseless());
  const WaysideRecording b = synthesize_passage(with_flat, noiseless());
  CHECK(dsp::rms(b.accel) > dsp::rms(a.accel));
}

TEST_CASE("synthesis is deterministic") {
  PassageSpec spec;
  spec.speed_kmh = 77;
  spec.irregularity_seed = 123;
  Rng rng(8);
  spec.defects.push_back(
      sample_defect(DefectKind::Polygonization, kPolyEnvelope, rng, TrainType::laagrss()));
  const WaysideRecording a = synthesize_passage(spec);
  const WaysideRecording b = synthesize_passage(spec);
  CHECK((a.strain - b.strain).abs().maxCoeff() == 0.0);
  CHECK((a.accel - b.accel).abs().maxCoeff() == 0.0);
}

TEST_CASE("too low a sample rate is a configuration error") {
  PassageSpec spec;
  spec.speed_kmh = 120;
  spec.sample_rate_hz = 40.0;  // cannot resolve the 1.8 m axle pair
  CHECK_THROWS_AS(synthesize_passage(spec), ConfigError);
}

TEST_CASE("heavy side sees larger strain pulses on unbalanced loads") {
  for (LoadName load : {LoadName::Unbalance1, LoadName::Unbalance2, LoadName::Unbalance3}) {
    PassageSpec spec;
    spec.load = load;
    spec.speed_kmh = 80;
    spec.irregularity_seed = 9;
    SynthConfig left = noiseless();
    left.sensor_side = RailSide::Left;
    SynthConfig right = noiseless();
    right.sensor_side = RailSide::Right;
    const WaysideRecording heavy = synthesize_passage(spec, left);
    const WaysideRecording light = synthesize_passage(spec, right);
    CHECK(heavy.strain.maxCoeff() > light.strain.maxCoeff());
  }
}

TEST_CASE("sample_defect respects severity intervals and derives depth") {
  Rng rng(31);
  const TrainType& train = TrainType::laagrss();
  for (int i = 0; i < 200; ++i) {
    const WheelDefect d = sample_defect(DefectKind::Flat, kFlatL1, rng, train, 500.0);
    CHECK(d.flat_length_mm >= 25.0);
    CHECK(d.flat_length_mm <= 50.0);
    CHECK(d.flat_depth_mm() >= 0.078124);
    CHECK(d.flat_depth_mm() <= 0.312501);
    CHECK(d.wagon_index == 3);
    CHECK(d.side == RailSide::Left);
  }
  CHECK_THROWS_AS(sample_defect(DefectKind::Flat, SeverityInterval{5.0, 50.0}, rng, train),
                  DomainError);
  CHECK_THROWS_AS(sample_defect(DefectKind::Polygonization, SeverityInterval{0.1, 0.5}, rng, train),
                  DomainError);
}

TEST_CASE("polygonization defects land in the severity band with 6-8 dominant") {
  Rng rng(77);
  const TrainType& train = TrainType::laagrss();
  for (int i = 0; i < 20; ++i) {
    const WheelDefect d = sample_defect(DefectKind::Polygonization, kPolyEnvelope, rng, train);
    CHECK(d.wagon_index == 1);
    CHECK(d.side == RailSide::Right);
    double peak = 0.0;
    const double circumference = kTwoPi * d.wheel_radius_mm;
    for (int g = 0; g < 4096; ++g)
      peak = std::max(peak, std::abs(poly_profile(g * circumference / 4096, d)));
    CHECK(peak >= 0.8 - 1e-6);
    CHECK(peak <= 1.2 + 1e-6);
    double dominant = -1e12, rest = -1e12;
    for (int h = 1; h <= kPolyHarmonics; ++h) {
      if (h >= 6 && h <= 8)
        dominant = std::max(dominant, d.poly_levels_db[h - 1]);
      else
        rest = std::max(rest, d.poly_levels_db[h - 1]);
    }
    CHECK(dominant > rest);
  }
}

TEST_CASE("sampled polygonization phases are uniform on [0, 2pi)") {
  Rng rng(123);
  const TrainType& train = TrainType::laagrss();
  std::vector<double> phases;
  while (phases.size() < 10000) {
    const WheelDefect d = sample_defect(DefectKind::Polygonization, kPolyEnvelope, rng, train);
    for (double p : d.poly_phases_rad) phases.push_back(p);
  }
  phases.resize(10000);
  std::sort(phases.begin(), phases.end());
  // Kolmogorov-Smirnov against U[0, 2pi), alpha = 0.01
  double d_stat = 0.0;
  const double n = static_cast<double>(phases.size());
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const double cdf = phases[i] / kTwoPi;
    const double hi = (static_cast<double>(i) + 1.0) / n - cdf;
    const double lo = cdf - static_cast<double>(i) / n;
    d_stat = std::max({d_stat, hi, lo});
  }
  const double critical = 1.6276 / std::sqrt(n);
  CHECK(d_stat < critical);
}

TEST_CASE("dual strain sensors disagree by the travel lag") {
  PassageSpec spec;
  spec.speed_kmh = 100;
  spec.irregularity_seed = 2;
  SynthConfig cfg = noiseless();
  const auto [a, b] = synthesize_dual_strain(spec, 5.0, 1, cfg);
  REQUIRE(a.size() == b.size());
  const auto pa = oracles::strict_local_maxima(a, 0.05 * a.maxCoeff());
  const auto pb = oracles::strict_local_maxima(b, 0.05 * b.maxCoeff());
  REQUIRE(pa.size() == pb.size());
  const double lag_s = (pb[0] - pa[0]) / spec.sample_rate_hz;
  const double v = 5.0 / lag_s * 3.6;
  CHECK(v == doctest::Approx(100.0).epsilon(0.02));
}
