#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wayside/embed.hpp"
#include "wayside/fuse.hpp"
#include "wayside/gbdt.hpp"
#include "wayside/peaks.hpp"
#include "wayside/replay.hpp"
#include "wayside/stats.hpp"
#include "wayside/synth.hpp"

namespace wayside::experiment {

using nlohmann::json;

constexpr const char* kToolVersion = "0.3.0";

// ---------------------------------------------------------------------------
// Desk-scale experiment configuration. Every knob is overridable from a JSON
// config; unknown keys are rejected.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::uint64_t master_seed = 42;
  std::string output_dir = "out";
  int jobs = 1;

  // synth
  synth::SynthConfig synth;
  double sample_rate_hz = 2000.0;

  // peaks
  std::vector<double> sensitivity_grid{0.55, 0.65, 0.75, 0.85, 0.92, 0.97};
  int pd_lookahead = 50;

  // embed
  embed::VaeConfig vae;  // grid runs default to fewer epochs than the reference config
  int window_length = 1024;

  // fuse
  int max_wheels = 48;

  // clf
  int tuning_trials = 8;
  int cv_folds = 5;

  // anomaly-detection grid
  int ad_passages = 360;
  int ad_seeds = 3;
  double ad_anomaly_rate = 0.5;

  // continual-learning grid
  int cl_passages_per_domain = 120;
  int cl_seeds = 3;
  double cl_beta = 1.0;
  std::string cl_strategy = "s-wd";
  peaks::Algorithm cl_detector = peaks::Algorithm::SD;
  double cl_sensitivity = 0.85;
  gbdt::GbdtConfig cl_classifier;
  std::vector<replay::DomainId> scenario_order;

  ExperimentConfig();
  static ExperimentConfig from_json(const json& j);
  json to_json() const;
  std::uint64_t config_hash() const;
};

// ---------------------------------------------------------------------------
// Mixed-EOV passage corpus for the anomaly-detection experiments
// ---------------------------------------------------------------------------

std::vector<synth::WaysideRecording> sample_mixed_corpus(const ExperimentConfig& cfg,
                                                         int passages, double anomaly_rate,
                                                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Anomaly-detection grid: 4 detectors x 10 strategy variants
// ---------------------------------------------------------------------------

struct AdCell {
  int seed_index = 0;
  peaks::Algorithm detector = peaks::Algorithm::SD;
  fuse::FusionStrategy strategy;
  double sensitivity = 0.0;
  double mean_cv_accuracy = 0.0;  // across tuning trials
  double ci95 = 0.0;
  double best_cv_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> trial_accuracies;
  std::map<std::string, double> by_type;   // keys: "p", "f", "fp", "none"
  std::map<std::string, double> by_count;  // keys: "0".."3"
};

struct SweepPoint {
  int seed_index = 0;
  peaks::Algorithm detector = peaks::Algorithm::SD;
  double sensitivity = 0.0;
  double ac_score = 0.0;
  double ad_score = 0.0;
};

struct AdGridResult {
  std::vector<AdCell> cells;
  std::vector<SweepPoint> sweep;
  std::map<std::string, double> chosen_sensitivity;  // detector name -> sensitivity
};

AdGridResult run_ad_grid(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Continual-learning grid: {baseline, rs, prs, lb, plb} x {200, 800} x seeds
// ---------------------------------------------------------------------------

struct ClCell {
  replay::ReplayPolicy policy = replay::ReplayPolicy::RS;
  std::size_t memory = 200;
  int seed_index = 0;
  double fwt = 0.0;
  double bwt = 0.0;
  double im = 0.0;
  double kgr = 0.0;
  Eigen::MatrixXd r_matrix;
};

struct ClGridResult {
  std::vector<ClCell> cells;
};

ClGridResult run_cl_grid(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Statistics over the AD grid (Friedman + Shaffer per detector)
// ---------------------------------------------------------------------------

struct StatsRow {
  std::string detector;
  bool starred = false;
  double statistic = 0.0;
  double p_value = 1.0;
};

struct StatsResult {
  std::vector<StatsRow> friedman_rows;
  // per detector: pair name -> (raw, adjusted, significant)
  struct PairRow {
    std::string detector;
    bool starred = false;
    std::string a, b;
    double raw_p = 1.0;
    double adjusted_p = 1.0;
    bool significant = false;
  };
  std::vector<PairRow> shaffer_rows;
};

StatsResult run_stats(const AdGridResult& ad, int seeds, int trials);

// ---------------------------------------------------------------------------
// Persistence: CSV emission, manifest, report
// ---------------------------------------------------------------------------

struct StageClock {
  std::string stage;
  double seconds = 0.0;
};

struct Manifest {
  std::string tool_version = kToolVersion;
  std::string config_hash;
  std::map<std::string, std::uint64_t> stage_seeds;
  std::vector<StageClock> wall_clock;
  std::map<std::string, std::string> files;  // relative path -> checksum

  json to_json() const;
};

void write_ad_csvs(const std::filesystem::path& dir, const AdGridResult& ad);
void write_cl_csvs(const std::filesystem::path& dir, const ClGridResult& cl);
void write_stats_csvs(const std::filesystem::path& dir, const StatsResult& st);
void emit_report(const std::filesystem::path& out_dir);

// Full pipeline; returns the manifest it wrote.
Manifest run_all(const ExperimentConfig& cfg);

// Simple work pool: runs fn(i) for i in [0, n) on `jobs` threads; results must
// be written to pre-sized slots so ordering never matters.
void parallel_for(int jobs, int n, const std::function<void(int)>& fn);

}  // namespace wayside::experiment
