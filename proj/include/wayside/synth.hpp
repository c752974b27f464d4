#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "wayside/common.hpp"

namespace wayside::synth {

using Eigen::ArrayXd;

// ---------------------------------------------------------------------------
// Rolling stock
// ---------------------------------------------------------------------------

enum class TrainName { Laagrss, Alfa };

enum class RailSide { Left, Right };

// Wheel slot within a wagon, counted from the wagon head on one rail.
enum class WheelPosition { First, Second, Third, Fourth };

struct TrainType {
  TrainName name;
  std::vector<double> axle_positions_m;  // from train head, strictly increasing
  int axles_per_wagon;
  int expected_wheel_count;
  std::vector<int> expected_grouping;
  double min_speed_kmh;
  double max_speed_kmh;

  int wagon_count() const { return expected_wheel_count / axles_per_wagon; }

  // Global wheel index (0-based) for a wagon/slot pair; throws DomainError if
  // the slot does not exist on this train.
  int wheel_index(int wagon_index, WheelPosition position) const;

  static const TrainType& laagrss();
  static const TrainType& alfa();
  static const TrainType& by_name(TrainName name);
  static const TrainType& by_name(const std::string& name);
};

std::string to_string(TrainName name);

// ---------------------------------------------------------------------------
// Load schemes (tonnes per wagon side); the first element is the left rail.
// ---------------------------------------------------------------------------

enum class LoadName { Empty, Half, Full, Unbalance1, Unbalance2, Unbalance3 };

struct LoadScheme {
  LoadName name;
  double left_tonnes;
  double right_tonnes;

  double side_tonnes(RailSide side) const {
    return side == RailSide::Left ? left_tonnes : right_tonnes;
  }

  static LoadScheme get(LoadName name);
  static LoadScheme by_name(const std::string& name);
  static const std::array<LoadName, 6>& all();
};

std::string to_string(LoadName name);

// ---------------------------------------------------------------------------
// Wheel defects
// ---------------------------------------------------------------------------

constexpr int kPolyHarmonics = 20;

enum class DefectKind { Flat, Polygonization };

struct WheelDefect {
  DefectKind kind = DefectKind::Flat;
  int wagon_index = 1;  // 1-based
  WheelPosition wheel_position = WheelPosition::First;
  RailSide side = RailSide::Left;
  double wheel_radius_mm = 460.0;

  // Flat
  double flat_length_mm = 0.0;

  // Polygonization, harmonic orders 1..20
  std::array<double, kPolyHarmonics> poly_levels_db{};
  std::array<double, kPolyHarmonics> poly_phases_rad{};

  double flat_depth_mm() const;
};

// D_w = L_w^2 / (16 R_w), millimetres.
double flat_depth(double flat_length_mm, double wheel_radius_mm);

// Vertical tread deviation of a flat at circumferential coordinate x_w
// (mm, 0 <= x_w <= 2*pi*R_w). The cosine is evaluated in the local coordinate
// of the flat window [2*pi*R_w - L_w, 2*pi*R_w], so the profile is 0 at both
// window edges and -D_w at the window centre.
double flat_profile(double x_w_mm, double flat_length_mm, double wheel_radius_mm);

// lambda_theta = 2*pi*R_w / theta, millimetres.
double poly_wavelength(int harmonic, double wheel_radius_mm);

// A_theta = sqrt(2) * 10^(L_theta/20) * 1um, in micrometres.
double poly_amplitude(double level_db);

// Radial tread irregularity w(x_w) of a polygonized wheel, millimetres.
double poly_profile(double x_w_mm, const WheelDefect& defect);

// ---------------------------------------------------------------------------
// Track irregularity: band-limited sum of sinusoids. Mode frequencies are
// snapped to the DFT grid of the requested length so a length-matched DFT
// sees no leakage outside the band.
// ---------------------------------------------------------------------------

struct TrackIrregularity {
  struct Mode {
    double freq_cpm;   // cycles per metre
    double amp_mm;
    double phase_rad;
  };
  std::vector<Mode> modes;
  double length_m = 0.0;

  double eval_mm(double x_m) const;              // periodic in length_m
  double second_derivative_mm(double x_m) const; // d^2/dx^2, mm per m^2
};

struct IrregularityConfig {
  double length_m = 100.0;
  double min_wavelength_m = 1.0;
  double max_wavelength_m = 30.0;
  double amplitude_bound_mm = 2.0;
  double dx_m = 0.001;
  int mode_count = 48;
};

TrackIrregularity make_track_irregularity(std::uint64_t seed, const IrregularityConfig& cfg);

// Sampled profile on the dx grid (the spec'd operation surface).
ArrayXd gen_track_irregularity(std::uint64_t seed, const IrregularityConfig& cfg);

// ---------------------------------------------------------------------------
// Passages
// ---------------------------------------------------------------------------

struct PassageSpec {
  TrainName train = TrainName::Laagrss;
  double speed_kmh = 80.0;
  LoadName load = LoadName::Full;
  std::vector<WheelDefect> defects;
  std::uint64_t irregularity_seed = 0;
  double sample_rate_hz = 2000.0;

  void validate() const;  // speed range per train type, defect slots
};

struct SynthConfig {
  double wheel_radius_mm = 460.0;
  double tare_per_wheel_t = 3.0;       // wagon self-weight share per wheel
  double wagon_load_scatter = 0.07;    // per-wagon cargo variation, fraction of the scheme load
  double speed_drift_frac = 0.03;     // traction drift across the passage, +/- fraction
  double strain_per_tonne = 18.0;      // um/m of rail strain per tonne of wheel load
  double strain_sigma_m = 0.45;        // half-width of the deflection bowl
  double envelope_sigma_m = 3.0;       // accel pickup zone around the sensor
  double track_coupling = 0.05;        // irregularity-to-wayside-accel factor
  double flat_coupling = 0.004;
  double poly_coupling = 0.02;
  double strain_defect_coupling = 60.0;  // um/m of strain ripple per mm of tread deviation (poly)
  double strain_impact_coupling = 400.0;  // um/m per mm of flat depth at 30 m/s
  double impact_freq_hz = 60.0;         // ring-down of a flat impact in the strain channel
  double impact_decay_s = 0.025;
  // Sparse background bursts (joints, turnouts, debris) in the accel channel;
  // amplitude scales with (v/30)^2 like the rest of the response.
  double background_impact_rate = 6.0;   // expected bursts per passage
  double background_impact_amp = 8.0;    // m/s^2 at 30 m/s
  double lead_in_m = 10.0;
  double lead_out_m = 10.0;
  double strain_noise_ue = 0.0;                // absolute interrogator floor, 0 = off
  double strain_accel_coupling = 0.0;          // um/m per m/s^2 of rail vibration bleed
  std::optional<double> accel_snr_db = 20.0;   // nullopt = noiseless channel
  RailSide sensor_side = RailSide::Left;
  double profile_grid_dx_m = 0.01;      // eta'' lookup grid for the accel path
  IrregularityConfig irregularity;
  int min_gap_samples = 8;              // closest-axle resolvability floor
};

struct WaysideRecording {
  ArrayXd strain;  // um/m
  ArrayXd accel;   // m/s^2
  double sample_rate_hz = 0.0;
  PassageSpec truth;
  std::vector<double> wheel_pass_times_s;
};

WaysideRecording synthesize_passage(const PassageSpec& spec, const SynthConfig& cfg = {});

// Two strain channels from sensors `sensor_gap_m` apart, for speed/direction
// estimation. direction_sign +1 runs train head past sensor A first.
std::pair<ArrayXd, ArrayXd> synthesize_dual_strain(const PassageSpec& spec,
                                                   double sensor_gap_m,
                                                   int direction_sign = 1,
                                                   const SynthConfig& cfg = {});

// ---------------------------------------------------------------------------
// Defect sampling (Table-2 style severity intervals)
// ---------------------------------------------------------------------------

struct SeverityInterval {
  double lo = 0.0;
  double hi = 0.0;
};

// Flat length interval bounds (mm) admissible for sampling.
constexpr SeverityInterval kFlatEnvelope{10.0, 100.0};
constexpr SeverityInterval kFlatL1{25.0, 50.0};
constexpr SeverityInterval kFlatL2{50.0, 100.0};
// Polygonization severity: peak radial deviation of the synthesized profile (mm).
constexpr SeverityInterval kPolyEnvelope{0.8, 1.2};

WheelDefect sample_defect(DefectKind kind, SeverityInterval severity, Rng& rng,
                          const TrainType& train, double wheel_radius_mm = 460.0);

}  // namespace wayside::synth
