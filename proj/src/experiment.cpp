#include "wayside/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "wayside/io.hpp"

namespace wayside::experiment {

namespace fs = std::filesystem;

namespace {

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key '" + key + "' in " + where);
  }
}

// Stage stream ids for the counter-based seed split.
enum Stage : std::uint64_t {
  kSeedSynthSample = 1,
  kSeedAdCorpus = 100,
  kSeedAdSplit = 200,
  kSeedAdVae = 300,
  kSeedAdTrials = 400,
  kSeedClDomains = 500,
  kSeedClWarmup = 600,
  kSeedClVae = 700,
  kSeedClStream = 800,
  kSeedClSplit = 900,
};

}  // namespace

void parallel_for(int jobs, int n, const std::function<void(int)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int workers = std::min(jobs, n);
  pool.reserve(static_cast<std::size_t>(workers));
  std::atomic<bool> failed{false};
  std::string error_message;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(error_mutex);
          failed = true;
          if (error_message.empty()) error_message = e.what();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failed) throw Error("parallel stage failed: " + error_message);
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

ExperimentConfig::ExperimentConfig() {
  vae.epochs = 40;  // grid default; the reference training config is pinned in tests
  vae.input_dim = window_length;
  scenario_order = {replay::DomainId::Peak, replay::DomainId::OffPeak,
                    replay::DomainId::SummerBoom, replay::DomainId::WinterBust,
                    replay::DomainId::Balanced};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig cfg;
  reject_unknown(j, {"master_seed", "output_dir", "jobs", "synth", "peaks", "embed", "fuse",
                     "clf", "replay", "stats", "ad"},
                 "config");
  cfg.master_seed = j.value("master_seed", cfg.master_seed);
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  cfg.jobs = j.value("jobs", cfg.jobs);

  if (j.contains("synth")) {
    const json& s = j.at("synth");
    reject_unknown(s,
                   {"sample_rate_hz", "snr_db", "strain_noise_ue", "accel_snr_db",
                    "wheel_radius_mm", "tare_per_wheel_t", "strain_per_tonne", "strain_sigma_m",
                    "envelope_sigma_m", "track_coupling", "flat_coupling", "poly_coupling",
                    "lead_in_m", "lead_out_m", "sensor_side"},
                   "synth");
    cfg.sample_rate_hz = s.value("sample_rate_hz", cfg.sample_rate_hz);
    if (s.contains("snr_db")) {  // accel channel; null silences it
      if (s.at("snr_db").is_null())
        cfg.synth.accel_snr_db.reset();
      else
        cfg.synth.accel_snr_db = s.at("snr_db").get<double>();
    }
    if (s.contains("accel_snr_db")) {
      if (s.at("accel_snr_db").is_null())
        cfg.synth.accel_snr_db.reset();
      else
        cfg.synth.accel_snr_db = s.at("accel_snr_db").get<double>();
    }
    cfg.synth.strain_noise_ue = s.value("strain_noise_ue", cfg.synth.strain_noise_ue);
    cfg.synth.wheel_radius_mm = s.value("wheel_radius_mm", cfg.synth.wheel_radius_mm);
    cfg.synth.tare_per_wheel_t = s.value("tare_per_wheel_t", cfg.synth.tare_per_wheel_t);
    cfg.synth.strain_per_tonne = s.value("strain_per_tonne", cfg.synth.strain_per_tonne);
    cfg.synth.strain_sigma_m = s.value("strain_sigma_m", cfg.synth.strain_sigma_m);
    cfg.synth.envelope_sigma_m = s.value("envelope_sigma_m", cfg.synth.envelope_sigma_m);
    cfg.synth.track_coupling = s.value("track_coupling", cfg.synth.track_coupling);
    cfg.synth.flat_coupling = s.value("flat_coupling", cfg.synth.flat_coupling);
    cfg.synth.poly_coupling = s.value("poly_coupling", cfg.synth.poly_coupling);
    cfg.synth.lead_in_m = s.value("lead_in_m", cfg.synth.lead_in_m);
    cfg.synth.lead_out_m = s.value("lead_out_m", cfg.synth.lead_out_m);
    if (s.contains("sensor_side")) {
      const std::string side = s.at("sensor_side").get<std::string>();
      if (side != "left" && side != "right") throw ConfigError("sensor_side must be left/right");
      cfg.synth.sensor_side = side == "left" ? synth::RailSide::Left : synth::RailSide::Right;
    }
  }
  if (j.contains("peaks")) {
    const json& p = j.at("peaks");
    reject_unknown(p, {"sensitivity_grid", "pd_lookahead"}, "peaks");
    if (p.contains("sensitivity_grid"))
      cfg.sensitivity_grid = p.at("sensitivity_grid").get<std::vector<double>>();
    cfg.pd_lookahead = p.value("pd_lookahead", cfg.pd_lookahead);
  }
  if (j.contains("embed")) {
    const json& e = j.at("embed");
    reject_unknown(e,
                   {"window_length", "latent_dim", "depth", "learning_rate", "epochs",
                    "batch_size", "beta"},
                   "embed");
    cfg.window_length = e.value("window_length", cfg.window_length);
    cfg.vae.latent_dim = e.value("latent_dim", cfg.vae.latent_dim);
    cfg.vae.depth = e.value("depth", cfg.vae.depth);
    cfg.vae.learning_rate = e.value("learning_rate", cfg.vae.learning_rate);
    cfg.vae.epochs = e.value("epochs", cfg.vae.epochs);
    cfg.vae.batch_size = e.value("batch_size", cfg.vae.batch_size);
    cfg.vae.beta = e.value("beta", cfg.vae.beta);
  }
  if (j.contains("fuse")) {
    reject_unknown(j.at("fuse"), {"max_wheels"}, "fuse");
    cfg.max_wheels = j.at("fuse").value("max_wheels", cfg.max_wheels);
  }
  if (j.contains("clf")) {
    reject_unknown(j.at("clf"), {"tuning_trials", "cv_folds"}, "clf");
    cfg.tuning_trials = j.at("clf").value("tuning_trials", cfg.tuning_trials);
    cfg.cv_folds = j.at("clf").value("cv_folds", cfg.cv_folds);
  }
  if (j.contains("ad")) {
    reject_unknown(j.at("ad"), {"passages", "seeds", "anomaly_rate"}, "ad");
    cfg.ad_passages = j.at("ad").value("passages", cfg.ad_passages);
    cfg.ad_seeds = j.at("ad").value("seeds", cfg.ad_seeds);
    cfg.ad_anomaly_rate = j.at("ad").value("anomaly_rate", cfg.ad_anomaly_rate);
  }
  if (j.contains("replay")) {
    const json& r = j.at("replay");
    reject_unknown(r,
                   {"passages_per_domain", "seeds", "beta", "strategy", "detector",
                    "sensitivity", "scenario_order", "n_estimators", "max_depth"},
                   "replay");
    cfg.cl_passages_per_domain = r.value("passages_per_domain", cfg.cl_passages_per_domain);
    cfg.cl_seeds = r.value("seeds", cfg.cl_seeds);
    cfg.cl_beta = r.value("beta", cfg.cl_beta);
    cfg.cl_strategy = r.value("strategy", cfg.cl_strategy);
    if (r.contains("detector"))
      cfg.cl_detector = peaks::algorithm_by_name(r.at("detector").get<std::string>());
    cfg.cl_sensitivity = r.value("sensitivity", cfg.cl_sensitivity);
    cfg.cl_classifier.n_estimators = r.value("n_estimators", cfg.cl_classifier.n_estimators);
    cfg.cl_classifier.max_depth = r.value("max_depth", cfg.cl_classifier.max_depth);
    if (r.contains("scenario_order")) {
      cfg.scenario_order.clear();
      for (const auto& name : r.at("scenario_order"))
        cfg.scenario_order.push_back(replay::domain_by_name(name.get<std::string>()));
    }
  }
  if (j.contains("stats")) reject_unknown(j.at("stats"), {}, "stats");

  fuse::FusionStrategy::by_name(cfg.cl_strategy);  // validate the enum early
  cfg.vae.input_dim = cfg.window_length;
  return cfg;
}

json ExperimentConfig::to_json() const {
  json j;
  j["master_seed"] = master_seed;
  j["output_dir"] = output_dir;
  j["jobs"] = jobs;
  j["synth"] = {{"sample_rate_hz", sample_rate_hz},
                {"wheel_radius_mm", synth.wheel_radius_mm},
                {"tare_per_wheel_t", synth.tare_per_wheel_t},
                {"strain_per_tonne", synth.strain_per_tonne},
                {"sensor_side", synth.sensor_side == synth::RailSide::Left ? "left" : "right"}};
  j["synth"]["strain_noise_ue"] = synth.strain_noise_ue;
  if (synth.accel_snr_db)
    j["synth"]["accel_snr_db"] = *synth.accel_snr_db;
  else
    j["synth"]["accel_snr_db"] = nullptr;
  j["peaks"] = {{"sensitivity_grid", sensitivity_grid}, {"pd_lookahead", pd_lookahead}};
  j["embed"] = {{"window_length", window_length}, {"latent_dim", vae.latent_dim},
                {"depth", vae.depth},             {"learning_rate", vae.learning_rate},
                {"epochs", vae.epochs},           {"batch_size", vae.batch_size},
                {"beta", vae.beta}};
  j["fuse"] = {{"max_wheels", max_wheels}};
  j["clf"] = {{"tuning_trials", tuning_trials}, {"cv_folds", cv_folds}};
  j["ad"] = {{"passages", ad_passages}, {"seeds", ad_seeds}, {"anomaly_rate", ad_anomaly_rate}};
  json order = json::array();
  for (auto id : scenario_order) order.push_back(replay::to_string(id));
  j["replay"] = {{"passages_per_domain", cl_passages_per_domain},
                 {"seeds", cl_seeds},
                 {"beta", cl_beta},
                 {"strategy", cl_strategy},
                 {"detector", peaks::to_string(cl_detector)},
                 {"sensitivity", cl_sensitivity},
                 {"scenario_order", order}};
  return j;
}

std::uint64_t ExperimentConfig::config_hash() const { return fnv1a(to_json().dump()); }

// ---------------------------------------------------------------------------
// Corpora
// ---------------------------------------------------------------------------

std::vector<synth::WaysideRecording> sample_mixed_corpus(const ExperimentConfig& cfg,
                                                         int passages, double anomaly_rate,
                                                         std::uint64_t seed) {
  replay::DomainScenario mixed;
  mixed.id = replay::DomainId::Balanced;
  mixed.speed_lo_frac = 0.0;
  mixed.speed_hi_frac = 1.0;
  for (synth::LoadName l : synth::LoadScheme::all()) mixed.loads.push_back(l);
  mixed.alfa_probability = 0.5;
  mixed.anomaly_rate = anomaly_rate;

  Rng rng(seed);
  std::vector<synth::WaysideRecording> out;
  out.reserve(static_cast<std::size_t>(passages));
  for (int i = 0; i < passages; ++i) {
    const synth::PassageSpec spec = replay::sample_passage(mixed, rng, cfg.sample_rate_hz);
    out.push_back(synth::synthesize_passage(spec, cfg.synth));
  }
  return out;
}

// ---------------------------------------------------------------------------
// AD grid
// ---------------------------------------------------------------------------

namespace {

struct SplitCorpus {
  std::vector<synth::WaysideRecording> train;
  std::vector<synth::WaysideRecording> test;
};

SplitCorpus split_corpus(std::vector<synth::WaysideRecording> all, double test_fraction,
                         Rng& rng) {
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(i)]);
  SplitCorpus sc;
  const auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(all.size()));
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_test ? sc.test : sc.train).push_back(std::move(all[order[i]]));
  }
  return sc;
}

Eigen::MatrixXd window_matrix(const std::vector<synth::WaysideRecording>& recs, int length) {
  Eigen::MatrixXd m(length, static_cast<Eigen::Index>(recs.size()));
  for (std::size_t i = 0; i < recs.size(); ++i)
    m.col(static_cast<Eigen::Index>(i)) =
        embed::SignalWindow::from_signal(recs[i].accel, length).values;
  return m;
}

std::string anomaly_type_key(const synth::PassageSpec& spec) {
  bool flat = false, poly = false;
  for (const auto& d : spec.defects) {
    if (d.kind == synth::DefectKind::Flat) flat = true;
    else poly = true;
  }
  if (flat && poly) return "fp";
  if (flat) return "f";
  if (poly) return "p";
  return "none";
}

double axle_counting_score(const std::vector<synth::WaysideRecording>& recs,
                           peaks::Algorithm algo, double sensitivity, int pd_lookahead) {
  double score = 0.0;
  int n = 0;
  for (const auto& rec : recs) {
    const synth::TrainType& train = synth::TrainType::by_name(rec.truth.train);
    try {
      const peaks::PeakSet ps = peaks::detect(algo, rec.strain, sensitivity, pd_lookahead);
      const peaks::SemanticFeatures sem = peaks::extract_semantics(ps, rec.sample_rate_hz);
      const peaks::AxleAccuracy acc = peaks::axle_count_accuracy(sem, train);
      score += 0.5 * (acc.count_match ? 1.0 : 0.0) + 0.5 * (acc.grouping_match ? 1.0 : 0.0);
    } catch (const Error&) {
      // counts as zero
    }
    ++n;
  }
  return n > 0 ? score / n : 0.0;
}

}  // namespace

AdGridResult run_ad_grid(const ExperimentConfig& cfg) {
  AdGridResult result;
  const std::vector<peaks::Algorithm> detectors{peaks::Algorithm::TB, peaks::Algorithm::PD,
                                                peaks::Algorithm::DP, peaks::Algorithm::SD};
  const std::vector<fuse::FusionStrategy> strategies = fuse::FusionStrategy::all_variants();

  for (int seed_idx = 0; seed_idx < cfg.ad_seeds; ++seed_idx) {
    const std::uint64_t s = static_cast<std::uint64_t>(seed_idx);
    auto corpus = sample_mixed_corpus(cfg, cfg.ad_passages, cfg.ad_anomaly_rate,
                                      derive_seed(cfg.master_seed, kSeedAdCorpus + s));
    Rng split_rng(derive_seed(cfg.master_seed, kSeedAdSplit + s));
    SplitCorpus sc = split_corpus(std::move(corpus), 0.25, split_rng);

    embed::VaeConfig vae_cfg = cfg.vae;
    vae_cfg.input_dim = cfg.window_length;
    vae_cfg.seed = derive_seed(cfg.master_seed, kSeedAdVae + s);
    const embed::TrainedVae vae = embed::train_vae(window_matrix(sc.train, cfg.window_length),
                                                   vae_cfg);

    // Sensitivity tuning per detector: axle-counting score on the training
    // passages, anomaly-detection score from a quick fixed classifier.
    const std::size_t tune_n = std::min<std::size_t>(sc.train.size(), 120);
    std::vector<synth::WaysideRecording> tune(sc.train.begin(),
                                              sc.train.begin() + static_cast<long>(tune_n));
    const std::size_t tune_split = tune_n * 7 / 10;
    std::vector<synth::WaysideRecording> tune_train(tune.begin(),
                                                    tune.begin() + static_cast<long>(tune_split));
    std::vector<synth::WaysideRecording> tune_val(tune.begin() + static_cast<long>(tune_split),
                                                  tune.end());

    std::map<peaks::Algorithm, double> chosen;
    for (peaks::Algorithm algo : detectors) {
      std::vector<double> ac, ad;
      for (double sens : cfg.sensitivity_grid) {
        const double ac_score = axle_counting_score(tune, algo, sens, cfg.pd_lookahead);
        fuse::PipelineConfig pc;
        pc.detector = algo;
        pc.sensitivity = sens;
        pc.pd_lookahead = cfg.pd_lookahead;
        pc.fuse.max_wheels = cfg.max_wheels;
        pc.window_length = cfg.window_length;
        const fuse::FusionStrategy quick{fuse::StrategyCode::IWD, false};
        double ad_score = 0.0;
        try {
          const fuse::Dataset dtr = fuse::build_dataset(tune_train, quick, pc, nullptr);
          const fuse::Dataset dva = fuse::build_dataset(tune_val, quick, pc, nullptr);
          gbdt::GbdtConfig qc;
          qc.seed = derive_seed(cfg.master_seed, 0x9100 + s);
          Eigen::VectorXd ytr(static_cast<Eigen::Index>(dtr.rows.size()));
          for (std::size_t i = 0; i < dtr.rows.size(); ++i)
            ytr[static_cast<Eigen::Index>(i)] = dtr.rows[i].label;
          Eigen::VectorXd yva(static_cast<Eigen::Index>(dva.rows.size()));
          for (std::size_t i = 0; i < dva.rows.size(); ++i)
            yva[static_cast<Eigen::Index>(i)] = dva.rows[i].label;
          const gbdt::GbdtModel qm = gbdt::train_gbdt(dtr.matrix(), ytr, qc);
          ad_score = gbdt::evaluate(qm, dva.matrix(), yva).accuracy;
        } catch (const Error&) {
          ad_score = 0.0;
        }
        ac.push_back(ac_score);
        ad.push_back(ad_score);
        result.sweep.push_back({seed_idx, algo, sens, ac_score, ad_score});
      }
      const peaks::SensitivityChoice choice =
          peaks::select_sensitivity(cfg.sensitivity_grid, ac, ad);
      chosen[algo] = choice.selected;
      if (seed_idx == 0) result.chosen_sensitivity[peaks::to_string(algo)] = choice.selected;
    }

    // Grid cells for this seed
    const int n_cells = static_cast<int>(detectors.size() * strategies.size());
    std::vector<AdCell> cells(static_cast<std::size_t>(n_cells));
    const std::uint64_t trial_seed = derive_seed(cfg.master_seed, kSeedAdTrials + s);
    parallel_for(cfg.jobs, n_cells, [&](int cell_idx) {
      const peaks::Algorithm algo = detectors[static_cast<std::size_t>(cell_idx) /
                                              strategies.size()];
      const fuse::FusionStrategy strategy =
          strategies[static_cast<std::size_t>(cell_idx) % strategies.size()];

      fuse::PipelineConfig pc;
      pc.detector = algo;
      pc.sensitivity = chosen.at(algo);
      pc.pd_lookahead = cfg.pd_lookahead;
      pc.fuse.max_wheels = cfg.max_wheels;
      pc.window_length = cfg.window_length;
      const embed::VaeParams* vp = strategy.uses_embedding() ? &vae.params : nullptr;

      AdCell cell;
      cell.seed_index = seed_idx;
      cell.detector = algo;
      cell.strategy = strategy;
      cell.sensitivity = pc.sensitivity;

      const fuse::Dataset train_ds = fuse::build_dataset(sc.train, strategy, pc, vp);
      const fuse::Dataset test_ds = fuse::build_dataset(sc.test, strategy, pc, vp);
      Eigen::VectorXd ytr(static_cast<Eigen::Index>(train_ds.rows.size()));
      for (std::size_t i = 0; i < train_ds.rows.size(); ++i)
        ytr[static_cast<Eigen::Index>(i)] = train_ds.rows[i].label;
      Eigen::VectorXd yte(static_cast<Eigen::Index>(test_ds.rows.size()));
      for (std::size_t i = 0; i < test_ds.rows.size(); ++i)
        yte[static_cast<Eigen::Index>(i)] = test_ds.rows[i].label;

      // Shared trial seed across cells: the same hyperparameter draws are
      // evaluated everywhere, making trials valid rank blocks.
      const gbdt::SearchResult search =
          gbdt::random_search(train_ds.matrix(), ytr, cfg.tuning_trials, trial_seed,
                              cfg.cv_folds);
      for (const auto& t : search.trials) cell.trial_accuracies.push_back(t.mean_accuracy);
      const stats::ConfidenceInterval ci = stats::confidence_interval(cell.trial_accuracies);
      cell.mean_cv_accuracy = ci.mean;
      cell.ci95 = ci.half_width;
      cell.best_cv_accuracy = search.best_accuracy;

      const gbdt::GbdtModel best = gbdt::train_gbdt(train_ds.matrix(), ytr, search.best);
      cell.test_accuracy = gbdt::evaluate(best, test_ds.matrix(), yte).accuracy;

      // Breakdowns by anomaly type and count on the test passages.
      std::map<std::string, std::vector<synth::WaysideRecording>> by_type, by_count;
      for (const auto& rec : sc.test) {
        by_type[anomaly_type_key(rec.truth)].push_back(rec);
        by_count[std::to_string(rec.truth.defects.size())].push_back(rec);
      }
      const auto subgroup_accuracy = [&](const std::vector<synth::WaysideRecording>& recs) {
        const fuse::Dataset ds = fuse::build_dataset(recs, strategy, pc, vp);
        if (ds.rows.empty()) return 0.0;
        int correct = 0;
        for (const auto& fv : ds.rows)
          correct += (best.predict_proba(fv.masked_values()) >= 0.5 ? 1 : 0) == fv.label;
        return static_cast<double>(correct) / static_cast<double>(ds.rows.size());
      };
      for (const auto& [key, recs] : by_type) cell.by_type[key] = subgroup_accuracy(recs);
      for (const auto& [key, recs] : by_count) cell.by_count[key] = subgroup_accuracy(recs);
      cells[static_cast<std::size_t>(cell_idx)] = std::move(cell);
    });
    for (auto& c : cells) result.cells.push_back(std::move(c));
  }
  return result;
}

// ---------------------------------------------------------------------------
// CL grid
// ---------------------------------------------------------------------------

ClGridResult run_cl_grid(const ExperimentConfig& cfg) {
  ClGridResult result;
  const std::vector<replay::ReplayPolicy> policies{
      replay::ReplayPolicy::Baseline, replay::ReplayPolicy::RS, replay::ReplayPolicy::PRS,
      replay::ReplayPolicy::LB, replay::ReplayPolicy::PLB};
  const std::vector<std::size_t> memories{200, 800};
  const fuse::FusionStrategy strategy = fuse::FusionStrategy::by_name(cfg.cl_strategy);

  for (int seed_idx = 0; seed_idx < cfg.cl_seeds; ++seed_idx) {
    const auto s = static_cast<std::uint64_t>(seed_idx);

    // Domain corpora (shared across policies of this seed)
    std::vector<std::vector<synth::WaysideRecording>> domain_recs;
    for (std::size_t d = 0; d < cfg.scenario_order.size(); ++d) {
      replay::DomainScenario scenario = replay::DomainScenario::get(cfg.scenario_order[d]);
      scenario.order_index = static_cast<int>(d);
      Rng rng(derive_seed(cfg.master_seed, kSeedClDomains + s * 16 + d));
      std::vector<synth::WaysideRecording> recs;
      for (int i = 0; i < cfg.cl_passages_per_domain; ++i)
        recs.push_back(
            synth::synthesize_passage(replay::sample_passage(scenario, rng, cfg.sample_rate_hz),
                                      cfg.synth));
      domain_recs.push_back(std::move(recs));
    }

    // Pre-stream history: an even mix over the scenarios, twice one domain's
    // volume so the initial model is competent everywhere.
    std::vector<synth::WaysideRecording> warmup_recs;
    {
      Rng rng(derive_seed(cfg.master_seed, kSeedClWarmup + s));
      for (int i = 0; i < 2 * cfg.cl_passages_per_domain; ++i) {
        replay::DomainScenario scenario = replay::DomainScenario::get(
            cfg.scenario_order[static_cast<std::size_t>(i) % cfg.scenario_order.size()]);
        warmup_recs.push_back(synth::synthesize_passage(
            replay::sample_passage(scenario, rng, cfg.sample_rate_hz), cfg.synth));
      }
    }

    // Representation frozen before the stream: the VAE sees only the history.
    embed::VaeConfig vae_cfg = cfg.vae;
    vae_cfg.input_dim = cfg.window_length;
    vae_cfg.seed = derive_seed(cfg.master_seed, kSeedClVae + s);
    const embed::TrainedVae vae =
        embed::train_vae(window_matrix(warmup_recs, cfg.window_length), vae_cfg);

    fuse::PipelineConfig pc;
    pc.detector = cfg.cl_detector;
    pc.sensitivity = cfg.cl_sensitivity;
    pc.pd_lookahead = cfg.pd_lookahead;
    pc.fuse.max_wheels = cfg.max_wheels;
    pc.window_length = cfg.window_length;
    const embed::VaeParams* vp = strategy.uses_embedding() ? &vae.params : nullptr;

    std::vector<replay::DomainData> domains;
    Rng split_rng(derive_seed(cfg.master_seed, kSeedClSplit + s));
    for (std::size_t d = 0; d < domain_recs.size(); ++d) {
      SplitCorpus sc = split_corpus(std::move(domain_recs[d]), 0.2, split_rng);
      replay::DomainData dd;
      dd.train = fuse::build_dataset(sc.train, strategy, pc, vp, static_cast<int>(d));
      dd.test = fuse::build_dataset(sc.test, strategy, pc, vp, static_cast<int>(d));
      domains.push_back(std::move(dd));
    }
    const fuse::Dataset warmup = fuse::build_dataset(warmup_recs, strategy, pc, vp, -1);

    const int n_cells = static_cast<int>(policies.size() * memories.size());
    std::vector<ClCell> cells(static_cast<std::size_t>(n_cells));
    parallel_for(cfg.jobs, n_cells, [&](int cell_idx) {
      const replay::ReplayPolicy policy =
          policies[static_cast<std::size_t>(cell_idx) / memories.size()];
      const std::size_t memory = memories[static_cast<std::size_t>(cell_idx) % memories.size()];
      replay::StreamConfig stream_cfg;
      stream_cfg.policy = policy;
      stream_cfg.capacity = memory;
      stream_cfg.beta = cfg.cl_beta;
      stream_cfg.classifier = cfg.cl_classifier;
      stream_cfg.seed = derive_seed(cfg.master_seed, kSeedClStream + s);
      const replay::StreamResult sr = replay::run_domain_stream(domains, warmup, stream_cfg);

      ClCell cell;
      cell.policy = policy;
      cell.memory = memory;
      cell.seed_index = seed_idx;
      cell.fwt = replay::fwt(sr.matrix);
      cell.bwt = replay::bwt(sr.matrix);
      cell.im = replay::im(sr.matrix, sr.joint_diagonal);
      cell.kgr = replay::kgr(sr.matrix);
      cell.r_matrix = sr.matrix.r;
      cells[static_cast<std::size_t>(cell_idx)] = std::move(cell);
    });
    for (auto& c : cells) result.cells.push_back(std::move(c));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Statistics over the AD grid
// ---------------------------------------------------------------------------

StatsResult run_stats(const AdGridResult& ad, int seeds, int trials) {
  StatsResult out;
  const std::vector<std::string> detectors{"tb", "pd", "dp", "sd"};
  const auto codes = fuse::FusionStrategy::all_codes();

  for (const std::string& det : detectors) {
    for (bool starred : {false, true}) {
      // blocks = (seed, trial); treatments = the 5 strategy codes
      Eigen::MatrixXd scores(seeds * trials, static_cast<Eigen::Index>(codes.size()));
      bool complete = true;
      for (std::size_t c = 0; c < codes.size(); ++c) {
        const fuse::FusionStrategy strategy{codes[c], starred};
        for (int seed = 0; seed < seeds; ++seed) {
          const AdCell* cell = nullptr;
          for (const auto& candidate : ad.cells) {
            if (peaks::to_string(candidate.detector) == det &&
                candidate.strategy.code == strategy.code &&
                candidate.strategy.starred == strategy.starred && candidate.seed_index == seed) {
              cell = &candidate;
              break;
            }
          }
          if (cell == nullptr ||
              static_cast<int>(cell->trial_accuracies.size()) < trials) {
            complete = false;
            break;
          }
          for (int t = 0; t < trials; ++t)
            scores(seed * trials + t, static_cast<Eigen::Index>(c)) =
                cell->trial_accuracies[static_cast<std::size_t>(t)];
        }
        if (!complete) break;
      }
      if (!complete) continue;

      StatsRow row;
      row.detector = det;
      row.starred = starred;
      try {
        const stats::FriedmanResult fr = stats::friedman(scores);
        row.statistic = fr.statistic;
        row.p_value = fr.p_value;
      } catch (const DegenerateDataError&) {
        row.statistic = 0.0;
        row.p_value = 1.0;
      }
      out.friedman_rows.push_back(row);

      try {
        const stats::ShafferResult sh = stats::shaffer_posthoc(scores);
        for (std::size_t a = 0; a < codes.size(); ++a) {
          for (std::size_t b = a + 1; b < codes.size(); ++b) {
            StatsResult::PairRow pr;
            pr.detector = det;
            pr.starred = starred;
            pr.a = fuse::to_string(codes[a]);
            pr.b = fuse::to_string(codes[b]);
            pr.raw_p = sh.raw_p(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            pr.adjusted_p =
                sh.adjusted_p(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            pr.significant = pr.adjusted_p < 0.05;
            out.shaffer_rows.push_back(pr);
          }
        }
      } catch (const Error&) {
        // degenerate table: no pairwise rows
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

void write_ad_csvs(const fs::path& dir, const AdGridResult& ad) {
  {
    std::ostringstream os;
    os << "seed,detector,strategy,starred,sensitivity,mean_cv_accuracy,ci95,best_cv_accuracy,"
          "test_accuracy\n";
    for (const auto& c : ad.cells) {
      os << c.seed_index << ',' << peaks::to_string(c.detector) << ','
         << fuse::to_string(c.strategy.code) << ',' << (c.strategy.starred ? 1 : 0) << ','
         << fmt6(c.sensitivity) << ',' << fmt6(c.mean_cv_accuracy) << ',' << fmt6(c.ci95) << ','
         << fmt6(c.best_cv_accuracy) << ',' << fmt6(c.test_accuracy) << '\n';
    }
    io::write_file(dir / "ad_results.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "seed,detector,strategy,starred,anomaly_type,accuracy\n";
    for (const auto& c : ad.cells) {
      for (const auto& [key, acc] : c.by_type) {
        os << c.seed_index << ',' << peaks::to_string(c.detector) << ','
           << fuse::to_string(c.strategy.code) << ',' << (c.strategy.starred ? 1 : 0) << ','
           << key << ',' << fmt6(acc) << '\n';
      }
    }
    io::write_file(dir / "ad_by_type.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "seed,detector,strategy,starred,anomaly_count,accuracy\n";
    for (const auto& c : ad.cells) {
      for (const auto& [key, acc] : c.by_count) {
        os << c.seed_index << ',' << peaks::to_string(c.detector) << ','
           << fuse::to_string(c.strategy.code) << ',' << (c.strategy.starred ? 1 : 0) << ','
           << key << ',' << fmt6(acc) << '\n';
      }
    }
    io::write_file(dir / "ad_by_count.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "seed,algorithm,sensitivity,ac_score,ad_score\n";
    for (const auto& p : ad.sweep) {
      os << p.seed_index << ',' << peaks::to_string(p.detector) << ',' << fmt6(p.sensitivity)
         << ',' << fmt6(p.ac_score) << ',' << fmt6(p.ad_score) << '\n';
    }
    io::write_file(dir / "sensitivity_sweep.csv", os.str());
  }
}

void write_cl_csvs(const fs::path& dir, const ClGridResult& cl) {
  {
    std::ostringstream os;
    os << "strategy,memory,seed,fwt,bwt,im,kgr\n";
    for (const auto& c : cl.cells) {
      os << replay::to_string(c.policy) << ',' << c.memory << ',' << c.seed_index << ','
         << fmt6(c.fwt) << ',' << fmt6(c.bwt) << ',' << fmt6(c.im) << ',' << fmt6(c.kgr) << '\n';
    }
    io::write_file(dir / "cl_metrics.csv", os.str());
  }
  for (const auto& c : cl.cells) {
    std::ostringstream os;
    for (int r = 0; r < c.r_matrix.rows(); ++r) {
      for (int col = 0; col < c.r_matrix.cols(); ++col) {
        if (col) os << ',';
        os << fmt6(c.r_matrix(r, col));
      }
      os << '\n';
    }
    io::write_file(dir / ("r_" + replay::to_string(c.policy) + "_" + std::to_string(c.memory) +
                          "_seed" + std::to_string(c.seed_index) + ".csv"),
                   os.str());
  }
  {
    // Per-domain accuracy after each stream step, long format for plotting.
    std::ostringstream os;
    os << "strategy,memory,seed,step,domain,accuracy\n";
    for (const auto& c : cl.cells) {
      for (int r = 0; r < c.r_matrix.rows(); ++r) {
        for (int col = 0; col < c.r_matrix.cols(); ++col) {
          os << replay::to_string(c.policy) << ',' << c.memory << ',' << c.seed_index << ',' << r
             << ',' << col << ',' << fmt6(c.r_matrix(r, col)) << '\n';
        }
      }
    }
    io::write_file(dir / "cl_timeline.csv", os.str());
  }
}

void write_stats_csvs(const fs::path& dir, const StatsResult& st) {
  {
    std::ostringstream os;
    os << "detector,starred,statistic,p_value\n";
    for (const auto& r : st.friedman_rows) {
      os << r.detector << ',' << (r.starred ? 1 : 0) << ',' << fmt6(r.statistic) << ','
         << io::fmt(r.p_value) << '\n';
    }
    io::write_file(dir / "friedman.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "detector,starred,strategy_a,strategy_b,raw_p,adjusted_p,significant\n";
    for (const auto& r : st.shaffer_rows) {
      os << r.detector << ',' << (r.starred ? 1 : 0) << ',' << r.a << ',' << r.b << ','
         << fmt6(r.raw_p) << ',' << fmt6(r.adjusted_p) << ',' << (r.significant ? 1 : 0) << '\n';
    }
    io::write_file(dir / "shaffer.csv", os.str());
  }
}

// ---------------------------------------------------------------------------
// Report + manifest
// ---------------------------------------------------------------------------

void emit_report(const fs::path& out_dir) {
  std::ostringstream os;
  os << "# Wayside experiment report\n\n";

  std::vector<fs::path> csvs;
  if (fs::exists(out_dir)) {
    for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv")
        csvs.push_back(fs::relative(entry.path(), out_dir));
    }
  }
  std::sort(csvs.begin(), csvs.end());

  if (csvs.empty()) {
    os << "## No results\n\nNo result CSVs were found in `" << out_dir.string() << "`.\n";
  } else {
    os << "## Result files\n\n| file | checksum |\n|---|---|\n";
    for (const auto& p : csvs)
      os << "| " << p.string() << " | " << io::checksum(out_dir / p) << " |\n";
    os << "\nSensitivity sweeps are in `sensitivity_sweep.csv` (one row per algorithm and"
          " sensitivity), anomaly-type and anomaly-count breakdowns in `ad_by_type.csv` /"
          " `ad_by_count.csv`, and continual-learning timelines in `cl_timeline.csv`.\n";
  }
  io::write_file(out_dir / "report.md", os.str());
}

json Manifest::to_json() const {
  json j;
  j["tool_version"] = tool_version;
  j["config_hash"] = config_hash;
  j["stage_seeds"] = stage_seeds;
  j["wall_clock_s"] = json::object();
  for (const auto& c : wall_clock) j["wall_clock_s"][c.stage] = c.seconds;
  j["files"] = files;
  return j;
}

Manifest run_all(const ExperimentConfig& cfg) {
  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);

  Manifest manifest;
  manifest.config_hash = to_hex(cfg.config_hash());
  manifest.stage_seeds["synth_sample"] = derive_seed(cfg.master_seed, kSeedSynthSample);
  manifest.stage_seeds["ad_corpus"] = derive_seed(cfg.master_seed, kSeedAdCorpus);
  manifest.stage_seeds["cl_domains"] = derive_seed(cfg.master_seed, kSeedClDomains);

  const auto timed = [&](const std::string& stage, const std::function<void()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    manifest.wall_clock.push_back({stage, dt.count()});
  };

  timed("synth_sample", [&]() {
    // A small example batch: metadata plus one waveform file per passage.
    auto recs = sample_mixed_corpus(cfg, 3, 0.5, derive_seed(cfg.master_seed, kSeedSynthSample));
    json meta = json::array();
    for (std::size_t i = 0; i < recs.size(); ++i) {
      json m = io::passage_to_json(recs[i].truth);
      m["waveform"] = "passage_" + std::to_string(i) + ".csv";
      m["wheel_pass_times_s"] = recs[i].wheel_pass_times_s;
      meta.push_back(m);
      io::write_waveform_csv(out_dir / "synth" / ("passage_" + std::to_string(i) + ".csv"),
                             recs[i]);
    }
    io::write_file(out_dir / "synth" / "passages.json", meta.dump(2));
  });

  AdGridResult ad;
  timed("ad_grid", [&]() {
    ad = run_ad_grid(cfg);
    write_ad_csvs(out_dir / "ad", ad);
  });

  ClGridResult cl;
  timed("cl_grid", [&]() {
    cl = run_cl_grid(cfg);
    write_cl_csvs(out_dir / "cl", cl);
  });

  timed("stats", [&]() {
    const StatsResult st = run_stats(ad, cfg.ad_seeds, cfg.tuning_trials);
    write_stats_csvs(out_dir / "stats", st);
  });

  timed("report", [&]() { emit_report(out_dir); });

  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), out_dir);
    if (rel == "manifest.json") continue;
    manifest.files[rel.string()] = io::checksum(entry.path());
  }
  io::write_file(out_dir / "manifest.json", manifest.to_json().dump(2));
  return manifest;
}

}  // namespace wayside::experiment
