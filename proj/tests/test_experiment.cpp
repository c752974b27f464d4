#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "wayside/experiment.hpp"
#include "wayside/io.hpp"

using namespace wayside;
using namespace wayside::experiment;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const std::string& out) {
  ExperimentConfig cfg;
  cfg.output_dir = out;
  cfg.master_seed = 7;
  cfg.ad_passages = 48;
  cfg.ad_seeds = 1;
  cfg.tuning_trials = 2;
  cfg.cv_folds = 3;
  cfg.sensitivity_grid = {0.7, 0.9};
  cfg.vae.epochs = 4;
  cfg.window_length = 128;
  cfg.vae.latent_dim = 4;
  cfg.cl_passages_per_domain = 30;
  cfg.cl_seeds = 1;
  cfg.cl_classifier.n_estimators = 50;
  cfg.cl_classifier.max_depth = 3;
  cfg.sample_rate_hz = 1000.0;
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config json round trip rejects unknown keys") {
  ExperimentConfig cfg;
  const json j = cfg.to_json();
  CHECK_NOTHROW(ExperimentConfig::from_json(j));

  json bad = j;
  bad["typo_section"] = 1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);

  json bad_nested = j;
  bad_nested["embed"]["latent"] = 10;  // wrong key name
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad_nested), ConfigError);

  json bad_enum = j;
  bad_enum["replay"]["strategy"] = "w-xy";
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad_enum), ConfigError);

  CHECK(cfg.config_hash() == ExperimentConfig::from_json(j).config_hash());
}

TEST_CASE("ad grid covers 4 detectors x 10 strategies") {
  ExperimentConfig cfg = tiny_config("unused");
  const AdGridResult ad = run_ad_grid(cfg);
  CHECK(ad.cells.size() == 40);  // one seed
  std::set<std::string> combos;
  for (const auto& c : ad.cells)
    combos.insert(peaks::to_string(c.detector) + "/" + c.strategy.name());
  CHECK(combos.size() == 40);
  for (const auto& c : ad.cells) {
    CHECK(c.trial_accuracies.size() == 2);
    CHECK(c.mean_cv_accuracy >= 0.0);
    CHECK(c.mean_cv_accuracy <= 1.0);
  }
  // sweep: one row per (seed, algorithm, sensitivity)
  CHECK(ad.sweep.size() == 4 * cfg.sensitivity_grid.size());

  // anomaly-type breakdown covers each test passage exactly once: group
  // accuracies exist and every cell carries both partitions
  for (const auto& c : ad.cells) {
    CHECK_FALSE(c.by_type.empty());
    CHECK_FALSE(c.by_count.empty());
  }
}

TEST_CASE("cl grid emits the 10-cell metric table") {
  ExperimentConfig cfg = tiny_config("unused");
  const ClGridResult cl = run_cl_grid(cfg);
  CHECK(cl.cells.size() == 10);  // 5 policies x 2 memories x 1 seed
  for (const auto& c : cl.cells) {
    CHECK(c.r_matrix.rows() == 6);
    CHECK(c.r_matrix.cols() == 5);
    CHECK((c.r_matrix.array() >= 0.0).all());
    CHECK((c.r_matrix.array() <= 1.0).all());
    CHECK(std::isfinite(c.fwt));
    CHECK(std::isfinite(c.bwt));
    CHECK(std::isfinite(c.im));
    CHECK(std::isfinite(c.kgr));
  }
}

TEST_CASE("emit_report writes a no-results section for empty directories") {
  const fs::path dir = fresh_dir("wayside_empty_report");
  emit_report(dir);
  const std::string report = io::read_file(dir / "report.md");
  CHECK(report.find("No results") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("run_all is deterministic and fully manifested") {
  const fs::path dir_a = fresh_dir("wayside_runall_a");
  const fs::path dir_b = fresh_dir("wayside_runall_b");

  ExperimentConfig cfg = tiny_config(dir_a.string());
  const Manifest ma = run_all(cfg);
  cfg.output_dir = dir_b.string();
  const Manifest mb = run_all(cfg);

  // every produced file appears in the manifest
  int files_seen = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir_a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), dir_a);
    if (rel == "manifest.json") continue;
    ++files_seen;
    CHECK(ma.files.count(rel.string()) == 1);
  }
  CHECK(files_seen == static_cast<int>(ma.files.size()));

  // byte-identical result CSVs across reruns with the same master seed
  for (const auto& [rel, sum] : ma.files) {
    if (rel.size() < 4 || rel.substr(rel.size() - 4) != ".csv") continue;
    REQUIRE(mb.files.count(rel) == 1);
    CHECK(sum == mb.files.at(rel));
  }

  // the report references every csv by checksum
  const std::string report = io::read_file(dir_a / "report.md");
  for (const auto& [rel, sum] : ma.files) {
    if (rel.size() < 4 || rel.substr(rel.size() - 4) != ".csv") continue;
    CHECK(report.find(sum) != std::string::npos);
  }

  // sweep CSV schema: one row per (algorithm, sensitivity) pair (single seed)
  const std::string sweep = io::read_file(dir_a / "ad" / "sensitivity_sweep.csv");
  int lines = 0;
  for (char ch : sweep)
    if (ch == '\n') ++lines;
  CHECK(lines == 1 + 4 * static_cast<int>(cfg.sensitivity_grid.size()));

  // cl_metrics schema
  const std::string cl = io::read_file(dir_a / "cl" / "cl_metrics.csv");
  CHECK(cl.rfind("strategy,memory,seed,fwt,bwt,im,kgr\n", 0) == 0);

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("waveform and passage files round trip") {
  synth::PassageSpec spec;
  spec.speed_kmh = 88;
  spec.irregularity_seed = 5;
  Rng rng(2);
  spec.defects.push_back(synth::sample_defect(synth::DefectKind::Flat, synth::kFlatL1, rng,
                                              synth::TrainType::laagrss()));
  spec.defects.push_back(synth::sample_defect(synth::DefectKind::Polygonization,
                                              synth::kPolyEnvelope, rng,
                                              synth::TrainType::laagrss()));
  const json j = io::passage_to_json(spec);
  const synth::PassageSpec back = io::passage_from_json(j);
  CHECK(back.train == spec.train);
  CHECK(back.speed_kmh == spec.speed_kmh);
  CHECK(back.load == spec.load);
  CHECK(back.defects.size() == 2);
  CHECK(back.defects[0].flat_length_mm == spec.defects[0].flat_length_mm);
  CHECK(back.defects[1].poly_levels_db == spec.defects[1].poly_levels_db);

  json bad = j;
  bad["mystery"] = true;
  CHECK_THROWS_AS(io::passage_from_config(bad, nullptr), ConfigError);

  const synth::WaysideRecording rec = synth::synthesize_passage(spec);
  const fs::path path = fs::temp_directory_path() / "wayside_waveform.csv";
  io::write_waveform_csv(path, rec);
  const io::Waveform w = io::read_waveform_csv(path);
  REQUIRE(w.strain.size() == rec.strain.size());
  CHECK((w.strain - rec.strain).abs().maxCoeff() == 0.0);
  CHECK((w.accel - rec.accel).abs().maxCoeff() == 0.0);
  CHECK(w.sample_rate_hz == doctest::Approx(rec.sample_rate_hz).epsilon(1e-9));
  fs::remove(path);
}

TEST_CASE("vae model file round trips bit-exactly") {
  embed::VaeConfig cfg;
  cfg.input_dim = 32;
  cfg.latent_dim = 4;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  Eigen::MatrixXd windows(32, 24);
  Rng rng(9);
  for (int c = 0; c < 24; ++c)
    for (int r = 0; r < 32; ++r) windows(r, c) = rng.normal();
  const embed::TrainedVae model = embed::train_vae(windows, cfg);
  const fs::path path = fs::temp_directory_path() / "wayside_vae.bin";
  io::save_vae(path, model);
  const embed::TrainedVae back = io::load_vae(path);
  CHECK(back.params.input_dim == 32);
  CHECK(back.val_loss == model.val_loss);
  Eigen::VectorXd x(32);
  for (int i = 0; i < 32; ++i) x[i] = rng.normal();
  CHECK((embed::encode(x, back.params).fused() - embed::encode(x, model.params).fused())
            .norm() == 0.0);
  fs::remove(path);
}
