#include "wayside/synth.hpp"

#include "wayside/dsp.hpp"

#include <algorithm>
#include <cmath>

namespace wayside::synth {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

std::vector<double> wagon_axles(int wagons, double wagon_pitch_m, double axle_gap_m) {
  std::vector<double> pos;
  for (int w = 0; w < wagons; ++w) {
    pos.push_back(w * wagon_pitch_m);
    pos.push_back(w * wagon_pitch_m + axle_gap_m);
  }
  return pos;
}
}  // namespace

// ---------------------------------------------------------------------------
// TrainType
// ---------------------------------------------------------------------------

const TrainType& TrainType::laagrss() {
  // Five coupled 2-axle freight wagons. Close-coupled neighbouring axles pair
  // up in the wayside signature: one isolated wheel at each end, pairs between.
  static const TrainType t{
      TrainName::Laagrss, wagon_axles(5, 10.8, 9.0), 2, 10, {1, 2, 2, 2, 2, 1}, 40.0, 120.0};
  return t;
}

const TrainType& TrainType::alfa() {
  // Seven passenger cars with widely spaced axles inside each car and close
  // couplings between cars: same end-isolated signature, longer consist.
  static const TrainType t{
      TrainName::Alfa, wagon_axles(7, 19.2, 16.4), 2, 14, {1, 2, 2, 2, 2, 2, 2, 1}, 40.0, 220.0};
  return t;
}

const TrainType& TrainType::by_name(TrainName name) {
  return name == TrainName::Laagrss ? laagrss() : alfa();
}

const TrainType& TrainType::by_name(const std::string& name) {
  if (name == "laagrss" || name == "Laagrss") return laagrss();
  if (name == "alfa" || name == "Alfa") return alfa();
  throw ConfigError("unknown train type: " + name);
}

int TrainType::wheel_index(int wagon_index, WheelPosition position) const {
  const int slot = static_cast<int>(position);
  if (wagon_index < 1 || wagon_index > wagon_count())
    throw DomainError("wheel_index: wagon " + std::to_string(wagon_index) + " out of range");
  if (slot >= axles_per_wagon)
    throw DomainError("wheel_index: wheel slot out of range for this wagon");
  return (wagon_index - 1) * axles_per_wagon + slot;
}

std::string to_string(TrainName name) {
  return name == TrainName::Laagrss ? "laagrss" : "alfa";
}

// ---------------------------------------------------------------------------
// LoadScheme
// ---------------------------------------------------------------------------

LoadScheme LoadScheme::get(LoadName name) {
  switch (name) {
    case LoadName::Empty:      return {name, 0.0, 0.0};
    case LoadName::Half:       return {name, 7.5, 7.5};
    case LoadName::Full:       return {name, 15.0, 15.0};
    case LoadName::Unbalance1: return {name, 15.0, 7.5};
    case LoadName::Unbalance2: return {name, 15.0, 3.0};
    case LoadName::Unbalance3: return {name, 15.0, 0.0};
  }
  throw DomainError("unknown load scheme");
}

LoadScheme LoadScheme::by_name(const std::string& name) {
  for (LoadName n : all()) {
    if (to_string(n) == name) return get(n);
  }
  throw ConfigError("unknown load scheme: " + name);
}

const std::array<LoadName, 6>& LoadScheme::all() {
  static const std::array<LoadName, 6> a{LoadName::Empty,      LoadName::Half,
                                         LoadName::Full,       LoadName::Unbalance1,
                                         LoadName::Unbalance2, LoadName::Unbalance3};
  return a;
}

std::string to_string(LoadName name) {
  switch (name) {
    case LoadName::Empty:      return "empty";
    case LoadName::Half:       return "half";
    case LoadName::Full:       return "full";
    case LoadName::Unbalance1: return "unbalance1";
    case LoadName::Unbalance2: return "unbalance2";
    case LoadName::Unbalance3: return "unbalance3";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Defect geometry
// ---------------------------------------------------------------------------

double flat_depth(double flat_length_mm, double wheel_radius_mm) {
  if (flat_length_mm <= 0.0 || wheel_radius_mm <= 0.0)
    throw DomainError("flat_depth: lengths must be positive");
  return flat_length_mm * flat_length_mm / (16.0 * wheel_radius_mm);
}

double WheelDefect::flat_depth_mm() const {
  return flat_depth(flat_length_mm, wheel_radius_mm);
}

double flat_profile(double x_w_mm, double flat_length_mm, double wheel_radius_mm) {
  const double circumference = kTwoPi * wheel_radius_mm;
  if (x_w_mm < 0.0 || x_w_mm > circumference)
    throw DomainError("flat_profile: coordinate outside one circumference");
  if (flat_length_mm > circumference)
    throw DomainError("flat_profile: flat longer than the circumference");
  const double depth = flat_depth(flat_length_mm, wheel_radius_mm);
  const double window_start = circumference - flat_length_mm;
  if (x_w_mm < window_start) return 0.0;
  const double local = x_w_mm - window_start;
  return -0.5 * depth * (1.0 - std::cos(kTwoPi * local / flat_length_mm));
}

double poly_wavelength(int harmonic, double wheel_radius_mm) {
  if (harmonic < 1) throw DomainError("poly_wavelength: harmonic order must be >= 1");
  if (wheel_radius_mm <= 0.0) throw DomainError("poly_wavelength: radius must be positive");
  return kTwoPi * wheel_radius_mm / harmonic;
}

double poly_amplitude(double level_db) {
  if (!std::isfinite(level_db)) throw DomainError("poly_amplitude: level must be finite");
  return std::sqrt(2.0) * std::pow(10.0, level_db / 20.0);  // micrometres
}

double poly_profile(double x_w_mm, const WheelDefect& defect) {
  double w_um = 0.0;
  for (int h = 1; h <= kPolyHarmonics; ++h) {
    const double amp = poly_amplitude(defect.poly_levels_db[h - 1]);
    if (amp == 0.0) continue;
    const double lambda = poly_wavelength(h, defect.wheel_radius_mm);
    w_um += amp * std::sin(kTwoPi / lambda * x_w_mm + defect.poly_phases_rad[h - 1]);
  }
  return w_um * 1e-3;  // millimetres
}

// ---------------------------------------------------------------------------
// Track irregularity
// ---------------------------------------------------------------------------

double TrackIrregularity::eval_mm(double x_m) const {
  double v = 0.0;
  for (const Mode& m : modes) v += m.amp_mm * std::sin(kTwoPi * m.freq_cpm * x_m + m.phase_rad);
  return v;
}

double TrackIrregularity::second_derivative_mm(double x_m) const {
  double v = 0.0;
  for (const Mode& m : modes) {
    const double w = kTwoPi * m.freq_cpm;
    v -= m.amp_mm * w * w * std::sin(w * x_m + m.phase_rad);
  }
  return v;
}

TrackIrregularity make_track_irregularity(std::uint64_t seed, const IrregularityConfig& cfg) {
  if (cfg.min_wavelength_m <= 0.0 || cfg.max_wavelength_m <= cfg.min_wavelength_m)
    throw DomainError("make_track_irregularity: empty wavelength band");
  if (cfg.length_m <= 0.0) throw DomainError("make_track_irregularity: length must be positive");

  const double f_lo = 1.0 / cfg.max_wavelength_m;
  const double f_hi = 1.0 / cfg.min_wavelength_m;
  // Snap mode frequencies to the DFT grid of this length: integer cycles over
  // the profile keep all spectral energy exactly inside the band.
  const long k_lo = static_cast<long>(std::ceil(f_lo * cfg.length_m));
  const long k_hi = static_cast<long>(std::floor(f_hi * cfg.length_m));
  if (k_hi < k_lo || k_lo < 1)
    throw DomainError("make_track_irregularity: band too narrow for this length");

  Rng rng(derive_seed(seed, 0x7261696cULL));
  TrackIrregularity irr;
  irr.length_m = cfg.length_m;
  irr.modes.reserve(static_cast<std::size_t>(cfg.mode_count));
  for (int m = 0; m < cfg.mode_count; ++m) {
    const double f_draw = rng.uniform(f_lo, f_hi);
    long k = static_cast<long>(std::llround(f_draw * cfg.length_m));
    k = std::clamp(k, k_lo, k_hi);
    const double f = static_cast<double>(k) / cfg.length_m;
    const double amp = rng.uniform(0.5, 1.0) / f;  // long wavelengths dominate
    const double phase = rng.uniform(0.0, kTwoPi);
    irr.modes.push_back({f, amp, phase});
  }

  // Normalize the sampled peak to the amplitude bound (a plain clip would
  // leak energy outside the band).
  const auto n = static_cast<long>(std::llround(cfg.length_m / cfg.dx_m));
  double peak = 0.0;
  for (long i = 0; i < n; ++i) peak = std::max(peak, std::abs(irr.eval_mm(i * cfg.dx_m)));
  const double scale = peak > 0.0 ? cfg.amplitude_bound_mm / peak : 0.0;
  for (auto& m : irr.modes) m.amp_mm *= scale;
  return irr;
}

ArrayXd gen_track_irregularity(std::uint64_t seed, const IrregularityConfig& cfg) {
  const TrackIrregularity irr = make_track_irregularity(seed, cfg);
  const auto n = static_cast<Eigen::Index>(std::llround(cfg.length_m / cfg.dx_m));
  ArrayXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = irr.eval_mm(i * cfg.dx_m);
  return out;
}

// ---------------------------------------------------------------------------
// Passage synthesis
// ---------------------------------------------------------------------------

void PassageSpec::validate() const {
  const TrainType& t = TrainType::by_name(train);
  if (speed_kmh < t.min_speed_kmh || speed_kmh > t.max_speed_kmh)
    throw DomainError("passage speed " + std::to_string(speed_kmh) + " km/h outside [" +
                      std::to_string(t.min_speed_kmh) + ", " + std::to_string(t.max_speed_kmh) +
                      "] for " + to_string(train));
  if (sample_rate_hz <= 0.0) throw ConfigError("sample_rate_hz must be positive");
  for (const WheelDefect& d : defects) {
    t.wheel_index(d.wagon_index, d.wheel_position);  // throws if the slot is absent
    if (d.kind == DefectKind::Flat && d.flat_length_mm <= 0.0)
      throw DomainError("flat defect with non-positive length");
  }
}

namespace {

struct Timing {
  double v_ms;
  double duration_s;
  int samples;
  std::vector<double> pass_times_s;
};

// Real consists never load every wagon identically; cargo per wagon varies
// around the scheme value. Factors are seeded off the passage.
std::vector<double> wagon_cargo_factors(const PassageSpec& spec, const TrainType& train,
                                        const SynthConfig& cfg) {
  Rng rng(derive_seed(spec.irregularity_seed, 0x776772ULL));
  std::vector<double> f(static_cast<std::size_t>(train.wagon_count()));
  for (double& v : f) v = 1.0 + cfg.wagon_load_scatter * rng.uniform(-1.0, 1.0);
  return f;
}

Timing passage_timing(const PassageSpec& spec, const TrainType& train, const SynthConfig& cfg,
                      double extra_lead_out_m = 0.0) {
  Timing tm;
  tm.v_ms = spec.speed_kmh / 3.6;
  const double train_len = train.axle_positions_m.back();
  tm.duration_s = (cfg.lead_in_m + train_len + cfg.lead_out_m + extra_lead_out_m) / tm.v_ms;
  tm.samples = static_cast<int>(std::ceil(tm.duration_s * spec.sample_rate_hz)) + 1;
  // Trains brake or accelerate slightly over the section. The linear speed
  // profile is anchored so the mid-train segment runs at the nominal speed;
  // gap patterns stretch front-to-back by up to +/- drift.
  Rng drift_rng(derive_seed(spec.irregularity_seed, 0x647266ULL));
  const double drift = cfg.speed_drift_frac * drift_rng.uniform(-1.0, 1.0);
  const double x_mid = cfg.lead_in_m + 0.5 * train_len;
  const double scale_len = std::max(1.0, train_len);
  for (double p : train.axle_positions_m) {
    const double x = cfg.lead_in_m + p;
    double t;
    if (std::abs(drift) < 1e-9) {
      t = x / tm.v_ms;
    } else {
      const double a = drift / scale_len;  // v(x) = v0 * (1 + a (x - x_mid))
      t = std::log((1.0 + a * (x - x_mid)) / (1.0 - a * x_mid)) / (tm.v_ms * a);
    }
    tm.pass_times_s.push_back(t);
  }
  return tm;
}

// Gaussian deflection pulses, one per wheel, plus the defect-induced strain
// ripple while the defective wheel sits on the bowl.
void add_strain(ArrayXd& strain, const PassageSpec& spec, const TrainType& train,
                const SynthConfig& cfg, const Timing& tm, double time_shift_s) {
  const double fs = spec.sample_rate_hz;
  const LoadScheme load = LoadScheme::get(spec.load);
  const std::vector<double> cargo = wagon_cargo_factors(spec, train, cfg);
  const double sigma_t = cfg.strain_sigma_m / tm.v_ms;

  for (std::size_t i = 0; i < tm.pass_times_s.size(); ++i) {
    const double factor = cargo[i / static_cast<std::size_t>(train.axles_per_wagon)];
    const double per_wheel_t =
        cfg.tare_per_wheel_t +
        factor * load.side_tonnes(cfg.sensor_side) / train.axles_per_wagon;
    const double amp = cfg.strain_per_tonne * per_wheel_t;
    const double tc = tm.pass_times_s[i] + time_shift_s;
    const int lo = std::max(0, static_cast<int>(std::floor((tc - 6.0 * sigma_t) * fs)));
    const int hi = std::min<int>(strain.size() - 1,
                                 static_cast<int>(std::ceil((tc + 6.0 * sigma_t) * fs)));
    for (int n = lo; n <= hi; ++n) {
      const double dt = n / fs - tc;
      strain[n] += amp * std::exp(-0.5 * dt * dt / (sigma_t * sigma_t));
    }
  }

  for (const WheelDefect& d : spec.defects) {
    const int g = train.wheel_index(d.wagon_index, d.wheel_position);
    const double tc = tm.pass_times_s[static_cast<std::size_t>(g)] + time_shift_s;
    const double circumference_m = kTwoPi * d.wheel_radius_mm * 1e-3;
    if (d.kind == DefectKind::Polygonization) {
      // Quasi-static ripple of the tread deviation riding on the deflection bowl.
      const int lo = std::max(0, static_cast<int>(std::floor((tc - 6.0 * sigma_t) * fs)));
      const int hi = std::min<int>(strain.size() - 1,
                                   static_cast<int>(std::ceil((tc + 6.0 * sigma_t) * fs)));
      for (int n = lo; n <= hi; ++n) {
        const double t = n / fs;
        const double dt = t - tc;
        const double x_w_mm = std::fmod(tm.v_ms * t, circumference_m) / 1e-3;
        strain[n] += cfg.strain_defect_coupling * poly_profile(x_w_mm, d) *
                     (0.4 + 0.6 * tm.v_ms / 30.0) *
                     std::exp(-0.5 * dt * dt / (sigma_t * sigma_t));
      }
    } else {
      // One impact per revolution while the wheel sits on the bowl: a damped
      // ring-down whose amplitude grows with depth and speed.
      const double center_m = circumference_m - 0.5 * d.flat_length_mm * 1e-3;
      const double amp =
          cfg.strain_impact_coupling * d.flat_depth_mm() * (0.4 + 0.6 * tm.v_ms / 30.0);
      const double window_s = 6.0 * sigma_t;
      const long r_lo = static_cast<long>(std::floor((tm.v_ms * (tc - window_s) - center_m) /
                                                     circumference_m));
      const long r_hi = static_cast<long>(std::ceil((tm.v_ms * (tc + window_s) - center_m) /
                                                    circumference_m));
      for (long r = std::max(0L, r_lo); r <= r_hi; ++r) {
        const double t_hit = (r * circumference_m + center_m) / tm.v_ms;
        if (t_hit < tc - window_s || t_hit > tc + window_s) continue;
        const double bowl = std::exp(-0.5 * (t_hit - tc) * (t_hit - tc) / (sigma_t * sigma_t));
        const int lo = std::max(0, static_cast<int>(std::ceil(t_hit * fs)));
        const int hi = std::min<int>(strain.size() - 1,
                                     static_cast<int>((t_hit + 5.0 * cfg.impact_decay_s) * fs));
        for (int n = lo; n <= hi; ++n) {
          const double dt = n / fs - t_hit;
          strain[n] += amp * bowl * std::exp(-dt / cfg.impact_decay_s) *
                       std::sin(kTwoPi * cfg.impact_freq_hz * dt);
        }
      }
    }
  }
}

void add_noise(ArrayXd& x, double snr_db, Rng& rng) {
  const double clean_rms = dsp::rms(x);
  if (clean_rms <= 0.0) return;
  const double sigma = clean_rms * std::pow(10.0, -snr_db / 20.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += rng.normal(0.0, sigma);
}

}  // namespace

WaysideRecording synthesize_passage(const PassageSpec& spec, const SynthConfig& cfg) {
  spec.validate();
  const TrainType& train = TrainType::by_name(spec.train);
  const Timing tm = passage_timing(spec, train, cfg);
  const double fs = spec.sample_rate_hz;
  const double train_len = train.axle_positions_m.back();

  // Resolvability of the closest axle pair at this sample rate.
  double min_gap_m = train_len;
  for (std::size_t i = 1; i < train.axle_positions_m.size(); ++i)
    min_gap_m = std::min(min_gap_m, train.axle_positions_m[i] - train.axle_positions_m[i - 1]);
  if (min_gap_m / tm.v_ms * fs < cfg.min_gap_samples)
    throw ConfigError("sample rate too low to resolve the closest axle pair");

  WaysideRecording rec;
  rec.sample_rate_hz = fs;
  rec.truth = spec;
  rec.wheel_pass_times_s = tm.pass_times_s;
  rec.strain = ArrayXd::Zero(tm.samples);
  rec.accel = ArrayXd::Zero(tm.samples);

  // Track-irregularity response: each wheel excites the wayside sensor while
  // inside the pickup envelope, proportionally to v^2 * eta''(contact).
  IrregularityConfig irr_cfg = cfg.irregularity;
  irr_cfg.length_m = cfg.lead_in_m + 2.0 * train_len + cfg.lead_out_m + 1.0;
  irr_cfg.dx_m = cfg.profile_grid_dx_m;  // normalization scan at the lookup pitch
  const TrackIrregularity irr = make_track_irregularity(spec.irregularity_seed, irr_cfg);

  const auto grid_n = static_cast<std::size_t>(
      std::ceil(irr_cfg.length_m / cfg.profile_grid_dx_m)) + 2;
  std::vector<double> eta2(grid_n);
  for (std::size_t i = 0; i < grid_n; ++i)
    eta2[i] = irr.second_derivative_mm(static_cast<double>(i) * cfg.profile_grid_dx_m);
  const auto eta2_at = [&](double x_m) {
    const double pos = std::clamp(x_m / cfg.profile_grid_dx_m, 0.0,
                                  static_cast<double>(grid_n - 2));
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    return eta2[lo] * (1.0 - frac) + eta2[lo + 1] * frac;
  };

  const double sigma_env_t = cfg.envelope_sigma_m / tm.v_ms;
  const double v2 = tm.v_ms * tm.v_ms;
  for (std::size_t i = 0; i < tm.pass_times_s.size(); ++i) {
    const double tc = tm.pass_times_s[i];
    const double p_i = train.axle_positions_m[i];
    const int lo = std::max(0, static_cast<int>(std::floor((tc - 4.0 * sigma_env_t) * fs)));
    const int hi = std::min<int>(tm.samples - 1,
                                 static_cast<int>(std::ceil((tc + 4.0 * sigma_env_t) * fs)));
    for (int n = lo; n <= hi; ++n) {
      const double t = n / fs;
      const double dt = t - tc;
      const double env = std::exp(-0.5 * dt * dt / (sigma_env_t * sigma_env_t));
      const double contact_m = tm.v_ms * t - p_i + train_len;
      rec.accel[n] += cfg.track_coupling * v2 * eta2_at(contact_m) * 1e-3 * env;
    }
  }

  // Defect-induced vibration: second derivative of the tread deviation at the
  // moving contact point, gated by the same pickup envelope. Impact severity
  // grows with speed beyond the kinematic v^2 and with the static wheel load.
  const LoadScheme load_scheme = LoadScheme::get(spec.load);
  const std::vector<double> cargo_factors = wagon_cargo_factors(spec, train, cfg);
  for (const WheelDefect& d : spec.defects) {
    const double wheel_load_t =
        cfg.tare_per_wheel_t +
        cargo_factors[static_cast<std::size_t>(d.wagon_index - 1)] *
            load_scheme.side_tonnes(d.side) / train.axles_per_wagon;
    const double severity =
        (0.4 + 0.6 * tm.v_ms / 30.0) * (0.3 + 0.7 * wheel_load_t / 10.5);
    const int g = train.wheel_index(d.wagon_index, d.wheel_position);
    const double tc = tm.pass_times_s[static_cast<std::size_t>(g)];
    const double radius_m = d.wheel_radius_mm * 1e-3;
    const double circumference_m = kTwoPi * radius_m;
    const int lo = std::max(0, static_cast<int>(std::floor((tc - 4.0 * sigma_env_t) * fs)));
    const int hi = std::min<int>(tm.samples - 1,
                                 static_cast<int>(std::ceil((tc + 4.0 * sigma_env_t) * fs)));
    if (d.kind == DefectKind::Flat) {
      const double length_m = d.flat_length_mm * 1e-3;
      const double depth_m = d.flat_depth_mm() * 1e-3;
      const double window_start = circumference_m - length_m;
      for (int n = lo; n <= hi; ++n) {
        const double t = n / fs;
        const double x = std::fmod(tm.v_ms * t, circumference_m);
        if (x < window_start) continue;
        const double u = kTwoPi * (x - window_start) / length_m;
        const double d2 = -0.5 * depth_m * (kTwoPi / length_m) * (kTwoPi / length_m) * std::cos(u);
        const double dt = t - tc;
        const double env = std::exp(-0.5 * dt * dt / (sigma_env_t * sigma_env_t));
        rec.accel[n] += cfg.flat_coupling * severity * v2 * d2 * env;
      }
    } else {
      for (int n = lo; n <= hi; ++n) {
        const double t = n / fs;
        const double x_mm = std::fmod(tm.v_ms * t, circumference_m) / 1e-3;
        double d2_per_m = 0.0;  // w''(x) with w in metres, x in metres
        for (int h = 1; h <= kPolyHarmonics; ++h) {
          const double amp_m = poly_amplitude(d.poly_levels_db[h - 1]) * 1e-6;
          if (amp_m == 0.0) continue;
          const double lambda_m = poly_wavelength(h, d.wheel_radius_mm) * 1e-3;
          const double w = kTwoPi / lambda_m;
          d2_per_m -= amp_m * w * w *
                      std::sin(w * (x_mm * 1e-3) + d.poly_phases_rad[h - 1]);
        }
        const double dt = t - tc;
        const double env = std::exp(-0.5 * dt * dt / (sigma_env_t * sigma_env_t));
        rec.accel[n] += cfg.poly_coupling * severity * v2 * d2_per_m * env;
      }
    }
  }

  // Background bursts: isolated ring-downs at random instants, present on
  // every passage regardless of wheel condition.
  if (cfg.background_impact_rate > 0.0) {
    Rng bg_rng(derive_seed(spec.irregularity_seed, 0x6a6f696e74ULL));
    const auto n_bursts =
        bg_rng.uniform_int(static_cast<std::uint64_t>(2.0 * cfg.background_impact_rate) + 1);
    const double speed_scale = (tm.v_ms / 30.0) * (tm.v_ms / 30.0);
    for (std::uint64_t b = 0; b < n_bursts; ++b) {
      const double t_hit = bg_rng.uniform(0.0, tm.duration_s);
      const double amp =
          bg_rng.uniform(0.25, 1.5) * cfg.background_impact_amp * speed_scale *
          (bg_rng.bernoulli(0.5) ? 1.0 : -1.0);
      const double freq = bg_rng.uniform(120.0, 420.0);
      const double decay = bg_rng.uniform(0.004, 0.012);
      const int lo = std::max(0, static_cast<int>(std::ceil(t_hit * fs)));
      const int hi = std::min<int>(tm.samples - 1, static_cast<int>((t_hit + 5.0 * decay) * fs));
      for (int n = lo; n <= hi; ++n) {
        const double dt = n / fs - t_hit;
        rec.accel[n] += amp * std::exp(-dt / decay) * std::sin(kTwoPi * freq * dt);
      }
    }
  }

  // Deflection pulses plus defect ring-downs, with a bleed of the rail
  // vibration into the strain gauge.
  add_strain(rec.strain, spec, train, cfg, tm, 0.0);
  if (cfg.strain_accel_coupling > 0.0) rec.strain += cfg.strain_accel_coupling * rec.accel;

  if (cfg.strain_noise_ue > 0.0) {
    Rng strain_rng(derive_seed(spec.irregularity_seed, 0x73747261696eULL));
    for (Eigen::Index i = 0; i < rec.strain.size(); ++i)
      rec.strain[i] += strain_rng.normal(0.0, cfg.strain_noise_ue);
  }
  if (cfg.accel_snr_db) {
    Rng accel_rng(derive_seed(spec.irregularity_seed, 0x616363656cULL));
    add_noise(rec.accel, *cfg.accel_snr_db, accel_rng);
  }
  return rec;
}

std::pair<ArrayXd, ArrayXd> synthesize_dual_strain(const PassageSpec& spec, double sensor_gap_m,
                                                   int direction_sign, const SynthConfig& cfg) {
  spec.validate();
  if (sensor_gap_m <= 0.0) throw DomainError("sensor gap must be positive");
  const TrainType& train = TrainType::by_name(spec.train);
  const Timing tm = passage_timing(spec, train, cfg, sensor_gap_m);
  const double lag_s = sensor_gap_m / tm.v_ms;

  ArrayXd a = ArrayXd::Zero(tm.samples);
  ArrayXd b = ArrayXd::Zero(tm.samples);
  const double shift_a = direction_sign >= 0 ? 0.0 : lag_s;
  const double shift_b = direction_sign >= 0 ? lag_s : 0.0;
  add_strain(a, spec, train, cfg, tm, shift_a);
  add_strain(b, spec, train, cfg, tm, shift_b);
  if (cfg.strain_noise_ue > 0.0) {
    Rng rng_a(derive_seed(spec.irregularity_seed, 0xA1ULL));
    Rng rng_b(derive_seed(spec.irregularity_seed, 0xB2ULL));
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += rng_a.normal(0.0, cfg.strain_noise_ue);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] += rng_b.normal(0.0, cfg.strain_noise_ue);
  }
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Defect sampling
// ---------------------------------------------------------------------------

WheelDefect sample_defect(DefectKind kind, SeverityInterval severity, Rng& rng,
                          const TrainType& train, double wheel_radius_mm) {
  WheelDefect d;
  d.kind = kind;
  d.wheel_radius_mm = wheel_radius_mm;
  if (kind == DefectKind::Flat) {
    if (severity.lo < kFlatEnvelope.lo || severity.hi > kFlatEnvelope.hi ||
        severity.lo >= severity.hi)
      throw DomainError("flat severity interval outside the admissible envelope");
    d.flat_length_mm = rng.uniform(severity.lo, severity.hi);
    // Table-2 default location: 3rd wagon, left side. The reference wagons
    // carry two left wheels, so the flat lands on one of them.
    d.wagon_index = 3;
    d.side = RailSide::Left;
    const int slot = static_cast<int>(rng.uniform_int(
        static_cast<std::uint64_t>(std::min(train.axles_per_wagon, 2))));
    d.wheel_position = slot == 0 ? WheelPosition::First : WheelPosition::Second;
  } else {
    if (severity.lo < kPolyEnvelope.lo || severity.hi > kPolyEnvelope.hi ||
        severity.lo >= severity.hi)
      throw DomainError("polygonization severity interval outside the admissible envelope");
    d.wagon_index = 1;
    d.side = RailSide::Right;
    d.wheel_position = WheelPosition::First;
    const double target_peak_mm = rng.uniform(severity.lo, severity.hi);
    // Harmonic levels with orders 6..8 dominant, phases uniform on [0, 2pi).
    for (int h = 1; h <= kPolyHarmonics; ++h) {
      const bool dominant = h >= 6 && h <= 8;
      d.poly_levels_db[h - 1] = dominant ? rng.uniform(40.0, 46.0) : rng.uniform(15.0, 30.0);
      d.poly_phases_rad[h - 1] = rng.uniform(0.0, kTwoPi);
    }
    // Shift all levels by a common dB offset so the profile peak hits the
    // drawn severity exactly; relative dominance is preserved.
    const double circumference = kTwoPi * wheel_radius_mm;
    double peak = 0.0;
    constexpr int kGrid = 2048;
    for (int i = 0; i < kGrid; ++i)
      peak = std::max(peak, std::abs(poly_profile(i * circumference / kGrid, d)));
    if (peak > 0.0) {
      const double offset_db = 20.0 * std::log10(target_peak_mm / peak);
      for (double& level : d.poly_levels_db) level += offset_db;
    }
  }
  return d;
}

}  // namespace wayside::synth
